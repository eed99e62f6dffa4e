//! Versioned text model format.
//!
//! ```text
//! ter-model v1
//! layout 1 12
//! feature phi1_support 0.25
//! ...
//! param c 10
//! ...
//! prior <type id> <hits>
//! fingerprint <sha256 hex>
//! ```
//!
//! Floats use the shortest representation that parses back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::catalog::{Catalog, TypePriorTable};
use crate::error::{Error, Result};

use super::features::{FEATURE_NAMES, NUM_FEATURES};
use super::{DiscHyperParams, Model, Schedule};

const HEADER: &str = "ter-model v1";

pub fn render_model(model: &Model, catalog: &Catalog) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "layout {} {}", model.layout_version, model.lambda.len());
    for (name, w) in FEATURE_NAMES.iter().zip(&model.lambda) {
        let _ = writeln!(s, "feature {name} {w}");
    }
    let hp = &model.hp;
    let params: [(&str, String); 11] = [
        ("c", hp.c.to_string()),
        ("mode", hp.mode.to_string()),
        ("negative_latents", hp.negative_latents.to_string()),
        ("d0", hp.schedule.d0.to_string()),
        ("decay", hp.schedule.decay.to_string()),
        ("outer_iters", hp.schedule.outer_iters.to_string()),
        ("neg_cap", hp.neg_cap.to_string()),
        ("beta", hp.beta.to_string()),
        ("gamma", hp.gamma.to_string()),
        ("partition_mode", hp.partition_mode.to_string()),
        ("seed", hp.seed.to_string()),
    ];
    for (k, v) in params {
        let _ = writeln!(s, "param {k} {v}");
    }
    for t in catalog.type_ids() {
        let n = model.priors.hits(t);
        if n > 0 {
            let _ = writeln!(s, "prior {} {n}", catalog.type_name(t));
        }
    }
    let _ = writeln!(s, "fingerprint {}", model.fingerprint);
    s
}

pub fn write_model(model: &Model, catalog: &Catalog, path: &Path) -> Result<()> {
    fs::write(path, render_model(model, catalog)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path, catalog: &Catalog) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, catalog)
}

fn num<T: std::str::FromStr>(line: usize, what: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::ModelFormat(format!("line {line}: bad {what} value `{v}`")))
}

pub fn parse_model(text: &str, catalog: &Catalog) -> Result<Model> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, HEADER)) => {}
        _ => return Err(Error::ModelFormat(format!("missing `{HEADER}` header"))),
    }
    let mut layout = None;
    let mut lambda = Vec::new();
    let mut hp = DiscHyperParams {
        schedule: Schedule::default(),
        ..Default::default()
    };
    let mut hits = vec![0u32; catalog.num_types()];
    let mut fingerprint = None;
    for (ln, line) in lines {
        let parts: Vec<&str> = line.split(' ').collect();
        match parts.as_slice() {
            [] | [""] => {}
            ["layout", v, n] => {
                let v: u32 = num(ln, "layout", v)?;
                let n: usize = num(ln, "layout", n)?;
                layout = Some((v, n));
            }
            ["feature", name, w] => {
                let i = lambda.len();
                if FEATURE_NAMES.get(i) != Some(name) {
                    return Err(Error::ModelFormat(format!(
                        "line {ln}: expected feature `{}`, found `{name}`",
                        FEATURE_NAMES.get(i).unwrap_or(&"<end>")
                    )));
                }
                lambda.push(num(ln, "weight", w)?);
            }
            ["param", key, v] => match *key {
                "c" => hp.c = num(ln, key, v)?,
                "mode" => hp.mode = v.parse()?,
                "negative_latents" => hp.negative_latents = v.parse()?,
                "d0" => hp.schedule.d0 = num(ln, key, v)?,
                "decay" => hp.schedule.decay = num(ln, key, v)?,
                "outer_iters" => hp.schedule.outer_iters = num(ln, key, v)?,
                "neg_cap" => hp.neg_cap = num(ln, key, v)?,
                "beta" => hp.beta = num(ln, key, v)?,
                "gamma" => hp.gamma = num(ln, key, v)?,
                "partition_mode" => hp.partition_mode = v.parse()?,
                "seed" => hp.seed = num(ln, key, v)?,
                other => return Err(Error::ModelFormat(format!("line {ln}: unknown param `{other}`"))),
            },
            ["prior", t, n] => {
                let t = catalog
                    .type_id(t)
                    .ok_or_else(|| Error::ModelFormat(format!("line {ln}: unknown type `{t}`")))?;
                hits[t.index()] = num(ln, "prior", n)?;
            }
            ["fingerprint", f] => fingerprint = Some(f.to_string()),
            _ => return Err(Error::ModelFormat(format!("line {ln}: unrecognized `{line}`"))),
        }
    }
    let (version, n) = layout.ok_or_else(|| Error::ModelFormat("missing layout line".into()))?;
    if version != super::LAYOUT_VERSION || n != NUM_FEATURES {
        return Err(Error::LayoutMismatch {
            found: version,
            expected: super::LAYOUT_VERSION,
        });
    }
    if lambda.len() != n {
        return Err(Error::ModelFormat(format!("expected {n} features, found {}", lambda.len())));
    }
    hp.validate()?;
    Ok(Model {
        layout_version: version,
        lambda,
        priors: TypePriorTable::from_raw(hits, hp.gamma),
        hp,
        fingerprint: fingerprint.unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogBuilder;

    #[test]
    fn round_trip() {
        let mut b = CatalogBuilder::new();
        b.add_type("Entity", &[]).add_type("team", &["Entity"]).add_lemma("team", "team");
        let c = b.build().unwrap();
        let mut priors = TypePriorTable::new(&c, 0.1).unwrap();
        priors.record(c.type_id("team").unwrap()).unwrap();
        let lambda: Vec<f64> = (0..NUM_FEATURES).map(|i| (i as f64 - 4.0) / 3.0).collect();
        let mut m = Model::with_lambda(lambda, DiscHyperParams::default(), priors);
        m.fingerprint = "abc".into();
        let text = render_model(&m, &c);
        let back = parse_model(&text, &c).unwrap();
        assert_eq!(back, m);
        assert_eq!(render_model(&back, &c), text);

        let bad = text.replace("layout 1 12", "layout 2 12");
        assert!(matches!(parse_model(&bad, &c), Err(Error::LayoutMismatch { found: 2, .. })));
        assert!(matches!(parse_model("nonsense", &c), Err(Error::ModelFormat(_))));
    }
}
