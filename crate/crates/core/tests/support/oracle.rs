//! Brute-force reference implementations computed from the raw fixture
//! records, not from the index.

use std::collections::BTreeSet;

use ter_core::catalog::{EntityId, TypeId};

use super::fixture::Fixture;

pub struct Reference<'a> {
    pub fx: &'a Fixture,
    /// Lowercased tokens per document.
    tokens: Vec<Vec<String>>,
    /// Per document, mentions sorted by start: `(start, end, entity index)`.
    mentions: Vec<Vec<(usize, usize, usize)>>,
}

/// Generative smoothing parameters `(α, β, γ, δ)`.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl<'a> Reference<'a> {
    pub fn new(fx: &'a Fixture) -> Self {
        let tokens = fx
            .docs
            .iter()
            .map(|d| d.tokens.iter().map(|t| t.to_lowercase()).collect())
            .collect();
        let mentions = fx
            .docs
            .iter()
            .map(|d| {
                let mut v: Vec<(usize, usize, usize)> = d
                    .mentions
                    .iter()
                    .map(|(s, e, name)| {
                        let ei = fx.entities.iter().position(|(n, _)| n == name).unwrap();
                        (*s as usize, *e as usize, ei)
                    })
                    .collect();
                v.sort();
                v
            })
            .collect();
        Reference { fx, tokens, mentions }
    }

    pub fn type_id(&self, t: usize) -> TypeId {
        self.fx.catalog.require_type(&self.fx.types[t].name).unwrap()
    }

    pub fn entity_id(&self, e: usize) -> EntityId {
        self.fx.catalog.require_entity(&self.fx.entities[e].0).unwrap()
    }

    pub fn type_index(&self, t: TypeId) -> usize {
        let name = self.fx.catalog.type_name(t);
        self.fx.types.iter().position(|s| s.name == name).unwrap()
    }

    /// `t` and everything reachable through parent edges.
    pub fn ancestors(&self, t: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![t];
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                stack.extend(self.fx.types[x].parents.iter().copied());
            }
        }
        seen
    }

    /// Types of an entity, ascending by catalog id.
    pub fn types_of(&self, e: usize) -> Vec<usize> {
        let mut all = BTreeSet::new();
        for &d in &self.fx.entities[e].1 {
            all.extend(self.ancestors(d));
        }
        let mut v: Vec<usize> = all.into_iter().collect();
        v.sort_by_key(|&t| self.type_id(t));
        v
    }

    pub fn is_instance(&self, e: usize, t: usize) -> bool {
        self.types_of(e).contains(&t)
    }

    pub fn member_count(&self, t: usize) -> usize {
        (0..self.fx.entities.len()).filter(|&e| self.is_instance(e, t)).count()
    }

    pub fn lemma_words(&self, t: usize) -> BTreeSet<String> {
        self.fx.types[t].lemmas.iter().flatten().cloned().collect()
    }

    /// Fraction of types having `w` in some lemma.
    pub fn type_fraction(&self, w: &str) -> f64 {
        let n = (0..self.fx.types.len()).filter(|&t| self.lemma_words(t).contains(w)).count();
        n as f64 / self.fx.types.len() as f64
    }

    pub fn num_docs(&self) -> usize {
        self.tokens.len()
    }

    pub fn doc_freq(&self, w: &str) -> usize {
        self.tokens.iter().filter(|d| d.iter().any(|t| t == w)).count()
    }

    pub fn idf(&self, w: &str) -> f64 {
        if self.num_docs() == 0 {
            return 0.0;
        }
        (self.num_docs() as f64 / self.doc_freq(w).max(1) as f64).ln()
    }

    pub fn background(&self, w: &str) -> f64 {
        if self.num_docs() == 0 {
            return 0.0;
        }
        self.doc_freq(w) as f64 / self.num_docs() as f64
    }

    /// Window `[lo, hi)` around a mention.
    pub fn window(&self, doc: usize, start: usize, end: usize) -> (usize, usize) {
        let lo = start.saturating_sub(self.fx.window);
        let hi = (end + self.fx.window).min(self.tokens[doc].len());
        (lo, hi)
    }

    /// Token windows of every mention of `e`, in corpus order.
    pub fn snippets(&self, e: usize) -> Vec<&[String]> {
        let mut out = Vec::new();
        for (d, ms) in self.mentions.iter().enumerate() {
            for &(s, t, x) in ms {
                if x == e {
                    let (lo, hi) = self.window(d, s, t);
                    out.push(&self.tokens[d][lo..hi]);
                }
            }
        }
        out
    }

    pub fn mention_count(&self, e: usize) -> usize {
        self.snippets(e).len()
    }

    pub fn total_mentions(&self) -> usize {
        self.mentions.iter().map(Vec::len).sum()
    }

    /// Snippets of `e` containing `w`.
    pub fn count_with(&self, e: usize, w: &str) -> usize {
        self.snippets(e).iter().filter(|s| s.iter().any(|t| t == w)).count()
    }

    /// `(N_t + γ) / Σ_{t' ∋ e} (N_t' + γ)`, summed in catalog id order.
    pub fn type_prior(&self, t: usize, e: usize, gamma: f64) -> f64 {
        let mut denom = 0.0;
        for u in self.types_of(e) {
            denom += self.fx.hits[u] as f64 + gamma;
        }
        (self.fx.hits[t] as f64 + gamma) / denom
    }

    fn word_given_type(&self, w: &str, lemma: &[String], beta: f64) -> f64 {
        let hit = if lemma.iter().any(|x| x == w) { 1.0 } else { 0.0 };
        (1.0 - beta) * hit + beta * self.type_fraction(w)
    }

    /// `Pr(h|t)`: best lemma, product over the lemma words of `t` and the
    /// query words.
    pub fn hint_prob(&self, hints: &BTreeSet<String>, slots: &[String], t: usize, beta: f64) -> f64 {
        let mut vocab: BTreeSet<String> = slots.iter().cloned().collect();
        vocab.extend(self.lemma_words(t));
        let mut best = 0.0f64;
        for l in &self.fx.types[t].lemmas {
            let mut p = 1.0;
            for w in &vocab {
                let pw = self.word_given_type(w, l, beta);
                p *= if hints.contains(w) { pw } else { 1.0 - pw };
            }
            best = best.max(p);
        }
        best
    }

    /// `p(w|e)`, falling back to the background for unmentioned entities.
    pub fn word_given_entity(&self, w: &str, e: usize, alpha: f64) -> f64 {
        let n = self.mention_count(e);
        if n == 0 {
            return self.background(w);
        }
        (1.0 - alpha) * (self.count_with(e, w) as f64 / n as f64) + alpha * self.background(w)
    }

    /// `Σ_t Σ_z Pr(e) Pr(t|e) Pr(z) Pr(h|t) Pr(s|e)` by full enumeration,
    /// in linear space.
    pub fn generative_mass(&self, words: &[String], e: usize, p: GenParams) -> f64 {
        let slots: Vec<String> = words.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let total = self.total_mentions();
        let pe = if total == 0 {
            0.0
        } else {
            self.mention_count(e) as f64 / total as f64
        };
        let n = words.len();
        let mut sum = 0.0;
        for mask in 0u32..1 << n {
            let hints: BTreeSet<String> = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| words[j].clone()).collect();
            let sels: BTreeSet<String> = (0..n).filter(|j| mask >> j & 1 == 0).map(|j| words[j].clone()).collect();
            let h = mask.count_ones() as i32;
            let pz = p.delta.powi(h) * (1.0 - p.delta).powi(n as i32 - h);
            let mut ps = 1.0;
            for w in &slots {
                let pw = self.word_given_entity(w, e, p.alpha);
                ps *= if sels.contains(w) { pw } else { 1.0 - pw };
            }
            for t in self.types_of(e) {
                let pt = self.type_prior(t, e, p.gamma);
                let ph = self.hint_prob(&hints, &slots, t, p.beta);
                sum += pe * pt * pz * ph * ps;
            }
        }
        sum
    }
}

/// The twelve discriminative features, recomputed from raw records.
pub struct FeatureReference<'r, 'a> {
    pub r: &'r Reference<'a>,
    pub words: Vec<String>,
    pub slots: Vec<String>,
    idf: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
}

impl<'r, 'a> FeatureReference<'r, 'a> {
    pub fn new(r: &'r Reference<'a>, words: &[String], beta: f64, gamma: f64) -> Self {
        let slots: Vec<String> = words.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let idf = slots.iter().map(|w| r.idf(w)).collect();
        FeatureReference {
            r,
            words: words.to_vec(),
            slots,
            idf,
            beta,
            gamma,
        }
    }

    fn idf_of(&self, mask: u32) -> f64 {
        let mut s = 0.0;
        for (i, v) in self.idf.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s += v;
            }
        }
        s
    }

    fn all(&self) -> u32 {
        (1u32 << self.slots.len()) - 1
    }

    fn norm(&self) -> f64 {
        (1u64 << self.words.len()) as f64 * self.idf_of(self.all())
    }

    fn slot_mask(&self, words: impl Iterator<Item = usize>) -> u32 {
        words.fold(0, |m, j| {
            let i = self.slots.iter().position(|s| *s == self.words[j]).unwrap();
            m | 1 << i
        })
    }

    /// Bit `i` set when slot `i` occurs in the snippet.
    fn snippet_masks(&self, e: usize) -> Vec<u32> {
        self.r
            .snippets(e)
            .iter()
            .map(|s| {
                self.slots
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| s.iter().any(|t| t == *w))
                    .fold(0, |m, (i, _)| m | 1 << i)
            })
            .collect()
    }

    /// φ(q, e, t, z) with `z` a hint mask over query positions.
    pub fn features(&self, e: usize, t: usize, z: u32) -> [f64; 12] {
        let n = self.words.len();
        let norm = self.norm();
        let masks = self.snippet_masks(e);

        let support = if norm == 0.0 {
            0.0
        } else {
            let mut s = 0.0;
            for &m in &masks {
                s += self.idf_of(m);
            }
            s / norm
        };
        let name: Vec<String> = self.r.fx.entities[e].0.split_whitespace().map(str::to_lowercase).collect();
        let self_mention = !name.is_empty() && name.iter().all(|w| self.slots.contains(w));

        let prior = self.r.type_prior(t, e, self.gamma);
        let generality = self.r.member_count(t) as f64 / self.r.fx.entities.len() as f64;

        let hint_positions: Vec<usize> = (0..n).filter(|j| z >> j & 1 == 1).collect();
        let hints: BTreeSet<String> = hint_positions.iter().map(|&j| self.words[j].clone()).collect();
        let lm = self.r.hint_prob(&hints, &self.slots, t, self.beta);
        let seq: Vec<&String> = hint_positions.iter().map(|&j| &self.words[j]).collect();
        let exact = !seq.is_empty()
            && self.r.fx.types[t]
                .lemmas
                .iter()
                .any(|l| l.len() == seq.len() && l.iter().zip(&seq).all(|(a, b)| a == *b));
        let k = hints.len();

        let sel = self.slot_mask((0..n).filter(|j| z >> j & 1 == 0));
        let (cover, subset, exact_full) = if masks.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let full = masks.iter().filter(|&&m| m == self.all()).count() as f64 / masks.len() as f64;
            if norm == 0.0 {
                (0.0, 0.0, full)
            } else {
                let mut covering = 0usize;
                let mut rest = 0.0;
                for &m in &masks {
                    if m & sel == sel {
                        covering += 1;
                    } else {
                        rest += self.idf_of(m);
                    }
                }
                (self.idf_of(sel) * covering as f64 / norm, rest / norm, full)
            }
        };
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [
            support,
            b(self_mention),
            prior,
            generality,
            lm,
            b(exact),
            b(k < 1),
            b(k < 2),
            b(k < 3),
            cover,
            subset,
            exact_full,
        ]
    }

    /// Best `(score, type index, hint mask)` over types ascending by id
    /// and masks ascending; the empty mask only with the root.
    pub fn infer(&self, e: usize, lambda: &[f64]) -> (f64, usize, u32) {
        let mut best: Option<(f64, usize, u32)> = None;
        for t in self.r.types_of(e) {
            for z in 0u32..1 << self.words.len() {
                if z == 0 && t != 0 {
                    continue;
                }
                let phi = self.features(e, t, z);
                let mut s = 0.0;
                for k in 0..12 {
                    s += lambda[k] * phi[k];
                }
                if best.is_none_or(|b| s > b.0) {
                    best = Some((s, t, z));
                }
            }
        }
        best.unwrap()
    }
}

/// A retrieval term: one word, or a phrase of several.
pub type Term = Vec<String>;

/// Every qualifying snippet as `(entity index, doc, start, end)`, by
/// scanning each in-type mention window.
pub fn naive_retrieve(r: &Reference, target: usize, terms: &[Term], theta: f64) -> BTreeSet<(usize, usize, usize, usize)> {
    let weights: Vec<f64> = terms
        .iter()
        .map(|t| {
            let mut s = 0.0;
            for w in t {
                s += r.idf(w);
            }
            s
        })
        .collect();
    let mut total = 0.0;
    for w in &weights {
        total += w;
    }
    let threshold = theta * total;
    let mut out = BTreeSet::new();
    for (d, ms) in r.mentions.iter().enumerate() {
        for &(s, t, e) in ms {
            if !r.is_instance(e, target) {
                continue;
            }
            let (lo, hi) = r.window(d, s, t);
            let win = &r.tokens[d][lo..hi];
            let mut matched = 0;
            let mut weight = 0.0;
            for (term, w) in terms.iter().zip(&weights) {
                let present = win.len() >= term.len() && win.windows(term.len()).any(|x| x == term.as_slice());
                if present {
                    matched += 1;
                    weight += w;
                }
            }
            if matched > 0 && weight >= threshold {
                out.insert((e, d, s, t));
            }
        }
    }
    out
}

/// Textbook metrics over a ranked id list.
pub mod metrics {
    use std::collections::BTreeSet;

    pub fn ap(ranked: &[u32], rel: &BTreeSet<u32>) -> f64 {
        let mut sum = 0.0;
        for (i, x) in ranked.iter().enumerate() {
            if rel.contains(x) {
                let above = ranked[..=i].iter().filter(|y| rel.contains(y)).count();
                sum += above as f64 / (i + 1) as f64;
            }
        }
        sum / rel.len() as f64
    }

    pub fn rr(ranked: &[u32], rel: &BTreeSet<u32>) -> f64 {
        for (i, x) in ranked.iter().enumerate() {
            if rel.contains(x) {
                return 1.0 / (i + 1) as f64;
            }
        }
        0.0
    }

    pub fn ndcg(ranked: &[u32], rel: &BTreeSet<u32>, k: usize) -> f64 {
        let mut dcg = 0.0;
        for (i, x) in ranked.iter().enumerate() {
            if i >= k {
                break;
            }
            if rel.contains(x) {
                dcg += 1.0 / ((i + 2) as f64).log2();
            }
        }
        let mut ideal = 0.0;
        for i in 0..k.min(rel.len()) {
            ideal += 1.0 / ((i + 2) as f64).log2();
        }
        if ideal > 0.0 {
            dcg / ideal
        } else {
            0.0
        }
    }
}

/// Maximizes `Σ u s + D H(u)` on the simplex by repeated pairwise mass
/// exchanges, each solved by bisection on its first-order condition.
pub fn simplex_maximize(scores: &[f64], d: f64) -> Vec<f64> {
    let n = scores.len();
    let mut u = vec![1.0 / n as f64; n];
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let m = u[i] + u[j];
                if m <= 0.0 {
                    continue;
                }
                // d/dt of si t + sj (m-t) + D(-t ln t - (m-t) ln(m-t)).
                let grad = |t: f64| scores[i] - scores[j] - d * t.ln() + d * (m - t).ln();
                let (mut lo, mut hi) = (0.0f64, m);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if grad(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t = 0.5 * (lo + hi);
                moved = moved.max((t - u[i]).abs());
                u[i] = t;
                u[j] = m - t;
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    u
}

pub fn entropy_objective(u: &[f64], scores: &[f64], d: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in u.iter().zip(scores) {
        s += x * y;
        if *x > 0.0 {
            s -= d * x * x.ln();
        }
    }
    s
}

/// Golden-section minimum of a convex function on `[lo, hi]`.
pub fn golden(mut lo: f64, mut hi: f64, iters: usize, f: &mut dyn FnMut(f64) -> f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// `½‖λ‖² + Σ_g w_g max(0, max_k b_k + a_k·λ)` over two coordinates.
pub fn grouped_hinge(groups: &[(f64, Vec<([f64; 2], f64)>)], l: [f64; 2]) -> f64 {
    let mut s = 0.5 * (l[0] * l[0] + l[1] * l[1]);
    for (w, pieces) in groups {
        let mut worst = 0.0f64;
        for (a, b) in pieces {
            worst = worst.max(b + a[0] * l[0] + a[1] * l[1]);
        }
        s += w * worst;
    }
    s
}

/// Nested golden-section minimizer of [`grouped_hinge`].
pub fn minimize_grouped_hinge(groups: &[(f64, Vec<([f64; 2], f64)>)]) -> ([f64; 2], f64) {
    let r = (2.0 * grouped_hinge(groups, [0.0, 0.0])).sqrt() + 1e-9;
    let mut inner = |x: f64| golden(-r, r, 120, &mut |y| grouped_hinge(groups, [x, y])).1;
    let (x, _) = golden(-r, r, 120, &mut inner);
    let (y, v) = golden(-r, r, 120, &mut |y| grouped_hinge(groups, [x, y]));
    ([x, y], v)
}
