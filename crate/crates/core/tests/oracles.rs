//! Library output against independently coded references.

mod support;

use support::checks;

#[test]
fn generative_matches_enumeration() {
    for seed in 0..60 {
        checks::generative(seed).unwrap();
    }
}

#[test]
fn discriminative_matches_enumeration() {
    for seed in 0..60 {
        checks::discriminative(seed).unwrap();
    }
}

#[test]
fn u_step_matches_numeric_maximizer() {
    for d in [0.01, 1.0, 10.0] {
        for seed in 0..30 {
            let (dev, gain) = checks::u_step_deviation(seed, d);
            assert!(dev <= 1e-6, "seed {seed} D {d}: deviation {dev}");
            assert!(gain <= 1e-12, "seed {seed} D {d}: numeric beats closed form by {gain}");
        }
    }
}

#[test]
fn retrieval_matches_scan() {
    for theta in [0.01, 0.5, 1.0] {
        for seed in 0..30 {
            checks::retrieval(seed, theta).unwrap();
        }
    }
}

#[test]
fn metrics_match_reference() {
    checks::metric_hand_cases().unwrap();
    for seed in 0..200 {
        checks::metric_case(seed).unwrap();
    }
}

#[test]
fn bn_scores_by_hand() {
    checks::bn_hand_case().unwrap();
}

#[test]
fn separable_training_reaches_zero_hinge() {
    checks::training_sanity().unwrap();
}

#[test]
fn lambda_step_matches_direct_minimization() {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use support::oracle::{grouped_hinge, minimize_grouped_hinge};
    use ter_core::discriminative::{lambda_step, Group, Piece, SolverOptions, NUM_FEATURES};

    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<(f64, Vec<([f64; 2], f64)>)> = (0..rng.random_range(1..=6))
            .map(|_| {
                let w = rng.random_range(0.1..5.0);
                let pieces = (0..rng.random_range(1..=3))
                    .map(|_| ([rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)], rng.random_range(-1.0..2.0)))
                    .collect();
                (w, pieces)
            })
            .collect();
        let groups: Vec<Group> = raw
            .iter()
            .map(|(w, ps)| Group {
                weight: *w,
                pieces: ps
                    .iter()
                    .map(|(a, b)| {
                        let mut full = [0.0; NUM_FEATURES];
                        full[0] = a[0];
                        full[1] = a[1];
                        Piece { a: full, b: *b }
                    })
                    .collect(),
            })
            .collect();
        let sol = lambda_step(&groups, None, SolverOptions::default()).unwrap();
        let (want, v) = minimize_grouped_hinge(&raw);
        assert!(sol.lambda[2..].iter().all(|&x| x.abs() < 1e-9), "seed {seed}: unused weights moved");
        let got = grouped_hinge(&raw, [sol.lambda[0], sol.lambda[1]]);
        assert!((got - v).abs() <= 1e-6 * v.max(1.0), "seed {seed}: objective {got} vs {v}");
        for k in 0..2 {
            assert!((sol.lambda[k] - want[k]).abs() <= 1e-4, "seed {seed}: λ {:?} vs {want:?}", &sol.lambda[..2]);
        }
    }
}
