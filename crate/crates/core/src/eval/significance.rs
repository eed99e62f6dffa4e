//! Paired randomization test on per-query metric differences.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// Two-sided sign-flip test of `mean(a - b) = 0`.
///
/// Each permutation flips the sign of every delta with probability ½;
/// `p = (1 + #{|mean_perm| ≥ |mean_obs|}) / (1 + permutations)`.
pub fn paired_randomization_test(pairs: &[(f64, f64)], permutations: usize, seed: u64) -> f64 {
    let deltas: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    if deltas.len() < 2 {
        return 1.0;
    }
    let n = deltas.len() as f64;
    let observed = (deltas.iter().sum::<f64>() / n).abs();
    let tol = 1e-12 * observed.max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..permutations {
        let s: f64 = deltas
            .iter()
            .map(|&d| if rng.random_bool(0.5) { d } else { -d })
            .sum();
        if (s / n).abs() >= observed - tol {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (permutations + 1) as f64
}
