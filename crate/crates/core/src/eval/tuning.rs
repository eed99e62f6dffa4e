//! Query-level fold splits and grid selection.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::generative::GenHyperParams;

/// Splits query ids into `folds` disjoint, exhaustive parts whose sizes
/// differ by at most one. Ids are sorted, shuffled with `seed`, then dealt
/// round-robin; each fold lists positions into `qids`.
pub fn fold_split(qids: &[&str], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds == 0 || qids.len() < folds {
        return Err(Error::TooFewQueries {
            have: qids.len(),
            folds,
        });
    }
    let mut order: Vec<usize> = (0..qids.len()).collect();
    order.sort_by(|&a, &b| qids[a].cmp(qids[b]).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, q) in order.into_iter().enumerate() {
        out[i % folds].push(q);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Best `C` by score; ties go to the smaller `C`.
pub fn select_c(scored: &[(f64, f64)]) -> Option<f64> {
    scored
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .map(|(c, _)| c)
}

/// Best hyperparameter tuple by score; ties go to the larger smoothing
/// values (α, then β, then γ, then δ).
pub fn select_gen(scored: &[(GenHyperParams, f64)]) -> Option<GenHyperParams> {
    let key = |h: &GenHyperParams| [h.alpha, h.beta, h.gamma, h.delta];
    scored
        .iter()
        .copied()
        .reduce(|best, cur| {
            let more_smoothing = key(&cur.0)
                .iter()
                .zip(key(&best.0).iter())
                .find(|(a, b)| a != b)
                .is_some_and(|(a, b)| a > b);
            if cur.1 > best.1 || (cur.1 == best.1 && more_smoothing) {
                cur
            } else {
                best
            }
        })
        .map(|(h, _)| h)
}

/// Powers of ten strictly inside (0, 1): 0.0001 .. 0.1.
pub fn unit_powers_of_ten(min_exp: i32) -> Vec<f64> {
    (min_exp..=-1).map(|e| 10f64.powi(e)).collect()
}
