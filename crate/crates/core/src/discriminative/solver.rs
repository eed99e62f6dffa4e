//! u-fixed λ problem:
//!
//! `min_λ ½‖λ‖² + Σ_g w_g · max(0, max_k (b_k + a_k·λ))`
//!
//! Each group's hinge is replaced by its log-sum-exp smoothing at width μ
//! (the zero branch included) and minimized by damped Newton steps; μ
//! shrinks tenfold per stage. At a smoothed minimizer the softmax weights
//! `α_gk = w_g p_gk` are dual feasible for
//! `max_α Σ α_gk b_gk − ½‖Σ α_gk a_gk‖²`, `α ≥ 0`, `Σ_k α_gk ≤ w_g`,
//! so every stage ends with an exact duality gap at `λ = −Σ α_gk a_gk`.

use crate::error::{Error, Result};

use super::constraints::Group;
use super::features::{dot, FeatureVector, NUM_FEATURES};

const N: usize = NUM_FEATURES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `primal − dual ≤ tol · max(1, primal)`.
    pub tol: f64,
    /// Newton steps allowed per smoothing stage.
    pub max_newton: usize,
    /// Smallest smoothing width tried before giving up.
    pub min_width: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_newton: 100,
            min_width: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSolution {
    pub lambda: Vec<f64>,
    /// Dual variables per group and piece.
    pub alphas: Vec<Vec<f64>>,
    pub objective: f64,
    pub hinge: f64,
    pub gap: f64,
    /// Newton steps over all stages.
    pub steps: usize,
}

/// Primal value `(objective, hinge)` at `λ`.
pub fn primal(groups: &[Group], lambda: &[f64]) -> (f64, f64) {
    let hinge: f64 = groups.iter().map(|g| g.loss(lambda)).sum();
    (0.5 * lambda.iter().map(|x| x * x).sum::<f64>() + hinge, hinge)
}

fn lambda_from(groups: &[Group], alphas: &[Vec<f64>]) -> FeatureVector {
    let mut lambda = [0.0; N];
    for (g, al) in groups.iter().zip(alphas) {
        for (p, &a) in g.pieces.iter().zip(al) {
            if a != 0.0 {
                for k in 0..N {
                    lambda[k] -= a * p.a[k];
                }
            }
        }
    }
    lambda
}

/// Dual value `Σ α_gk b_gk − ½‖λ(α)‖²`.
fn dual_value(groups: &[Group], alphas: &[Vec<f64>]) -> f64 {
    let lin: f64 = groups
        .iter()
        .zip(alphas)
        .map(|(g, al)| g.pieces.iter().zip(al).map(|(p, a)| a * p.b).sum::<f64>())
        .sum();
    let l = lambda_from(groups, alphas);
    lin - 0.5 * l.iter().map(|x| x * x).sum::<f64>()
}

/// Smoothed objective; with `derivs`, also gradient and Hessian.
struct Smoothed {
    value: f64,
    grad: FeatureVector,
    hess: [[f64; N]; N],
}

fn smoothed(groups: &[Group], lambda: &FeatureVector, mu: f64, derivs: bool, scratch: &mut Vec<f64>) -> Smoothed {
    let mut out = Smoothed {
        value: 0.5 * lambda.iter().map(|x| x * x).sum::<f64>(),
        grad: *lambda,
        hess: [[0.0; N]; N],
    };
    if derivs {
        for k in 0..N {
            out.hess[k][k] = 1.0;
        }
    }
    for g in groups {
        scratch.clear();
        scratch.extend(g.pieces.iter().map(|p| p.b + dot(lambda, &p.a)));
        let m = scratch.iter().copied().fold(0.0f64, f64::max);
        let mut z = (-m / mu).exp();
        for v in scratch.iter_mut() {
            *v = ((*v - m) / mu).exp();
            z += *v;
        }
        out.value += g.weight * (m + mu * z.ln());
        if !derivs {
            continue;
        }
        let mut mean = [0.0; N];
        for (p, &e) in g.pieces.iter().zip(scratch.iter()) {
            let pk = e / z;
            if pk < 1e-300 {
                continue;
            }
            for i in 0..N {
                mean[i] += pk * p.a[i];
            }
            let c = g.weight * pk / mu;
            for i in 0..N {
                if p.a[i] == 0.0 {
                    continue;
                }
                let ci = c * p.a[i];
                for j in 0..N {
                    out.hess[i][j] += ci * p.a[j];
                }
            }
        }
        let c = g.weight / mu;
        for i in 0..N {
            out.grad[i] += g.weight * mean[i];
            if mean[i] == 0.0 {
                continue;
            }
            for j in 0..N {
                out.hess[i][j] -= c * mean[i] * mean[j];
            }
        }
    }
    out
}

/// Softmax weights of the smoothed hinge, scaled to dual variables.
fn soft_alphas(groups: &[Group], lambda: &FeatureVector, mu: f64) -> Vec<Vec<f64>> {
    groups
        .iter()
        .map(|g| {
            let ls: Vec<f64> = g.pieces.iter().map(|p| p.b + dot(lambda, &p.a)).collect();
            let m = ls.iter().copied().fold(0.0f64, f64::max);
            let es: Vec<f64> = ls.iter().map(|&l| ((l - m) / mu).exp()).collect();
            let z = (-m / mu).exp() + es.iter().sum::<f64>();
            es.iter().map(|e| g.weight * e / z).collect()
        })
        .collect()
}

/// Solves `H x = r` for symmetric positive definite `H`.
fn cholesky_solve(h: &[[f64; N]; N], r: &FeatureVector) -> Option<FeatureVector> {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = h[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; N];
    for i in 0..N {
        let mut s = r[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; N];
    for i in (0..N).rev() {
        let mut s = y[i];
        for k in i + 1..N {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Damped Newton on the width-`mu` objective; returns steps taken.
fn newton(groups: &[Group], lambda: &mut FeatureVector, mu: f64, max_steps: usize, scratch: &mut Vec<f64>) -> usize {
    for step in 0..max_steps {
        let s = smoothed(groups, lambda, mu, true, scratch);
        let neg_grad = s.grad.map(|x| -x);
        let Some(d) = cholesky_solve(&s.hess, &neg_grad) else {
            return step;
        };
        let slope = dot(&s.grad, &d);
        if -slope <= 1e-15 * s.value.abs().max(1.0) {
            return step;
        }
        let mut t = 1.0;
        loop {
            let mut trial = *lambda;
            for k in 0..N {
                trial[k] += t * d[k];
            }
            let v = smoothed(groups, &trial, mu, false, scratch).value;
            if v <= s.value + 1e-4 * t * slope {
                *lambda = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return step + 1;
            }
        }
    }
    max_steps
}

/// Solves the u-fixed problem to the requested duality gap, starting from
/// `warm` when given. The gap pairs the best primal iterate with the best
/// dual point seen over all stages.
pub fn lambda_step(groups: &[Group], warm: Option<&[f64]>, opts: SolverOptions) -> Result<LambdaSolution> {
    let mut lambda = [0.0; N];
    if let Some(w) = warm.filter(|w| w.len() == N) {
        lambda.copy_from_slice(w);
    }
    let mut scratch = Vec::new();
    let mut steps = 0;
    let mut mu = 1.0;
    let (mut best_p, mut best_hinge) = primal(groups, &lambda);
    let mut best_lambda = lambda;
    let mut best_d = f64::NEG_INFINITY;
    let mut best_alphas: Vec<Vec<f64>> = groups.iter().map(|g| vec![0.0; g.pieces.len()]).collect();
    while mu >= opts.min_width {
        steps += newton(groups, &mut lambda, mu, opts.max_newton, &mut scratch);
        let alphas = soft_alphas(groups, &lambda, mu);
        let dual_lambda = lambda_from(groups, &alphas);
        for cand in [lambda, dual_lambda] {
            let (p, h) = primal(groups, &cand);
            if p < best_p {
                best_p = p;
                best_hinge = h;
                best_lambda = cand;
            }
        }
        let d = dual_value(groups, &alphas);
        if d > best_d {
            best_d = d;
            best_alphas = alphas;
        }
        let gap = (best_p - best_d).max(0.0);
        if gap <= opts.tol * best_p.abs().max(1.0) {
            return Ok(LambdaSolution {
                lambda: best_lambda.to_vec(),
                alphas: best_alphas,
                objective: best_p,
                hinge: best_hinge,
                gap,
                steps,
            });
        }
        mu *= 0.1;
    }
    Err(Error::NonConvergence {
        iterations: steps,
        objective: best_p,
    })
}
