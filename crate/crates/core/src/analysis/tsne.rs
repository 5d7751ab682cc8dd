//! Exact t-SNE: per-point Gaussian bandwidths found by bisection,
//! symmetrized affinities, Student-t output kernel, gradient descent with
//! momentum, adaptive gains and early exaggeration.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::preprocess::rng;

pub const MAX_POINTS: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// `None` scales with size: `max(n / (4 * exaggeration), 50)`.
    pub learning_rate: Option<f64>,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: None,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub coordinates: Vec<[f64; 2]>,
    /// KL(P || Q) after each iteration, always against the unexaggerated P.
    pub kl_trace: Vec<f64>,
    pub seed: u64,
}

fn squared_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let rows: Vec<usize> = (0..n).collect();
    par::map(&rows, |&i| {
        let a = x.row(i);
        (0..n)
            .map(|j| a.iter().zip(x.row(j)).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Conditional affinities of one point with entropy `ln(perplexity)`.
fn conditional_row(d: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let mut p = vec![0.0; d.len()];
    for _ in 0..200 {
        // shift by the nearest neighbour so the largest weight is 1
        let dmin = d.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            p[j] = if j == i { 0.0 } else { (-(dj - dmin) * beta).exp() };
            sum += p[j];
        }
        let mut entropy = 0.0;
        for (j, pj) in p.iter_mut().enumerate() {
            *pj /= sum;
            if j != i && *pj > 0.0 {
                entropy -= *pj * pj.ln();
            }
        }
        let diff = entropy - target;
        if diff.abs() < 1e-10 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    p
}

fn joint_affinities(x: &Matrix, perplexity: f64) -> Vec<f64> {
    let n = x.rows();
    let d = squared_distances(x);
    let rows: Vec<usize> = (0..n).collect();
    let cond = par::map(&rows, |&i| conditional_row(&d[i * n..(i + 1) * n], i, perplexity)).concat();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

/// Unnormalized Student-t kernel and its sum.
fn output_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut w = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            w[i * n + j] = v;
            w[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (w, z)
}

/// KL(P || Q) by direct summation over pairs with positive affinity.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let (w, z) = output_kernel(y);
    let mut kl = 0.0;
    for (i, (&pij, &wij)) in p.iter().zip(&w).enumerate() {
        if pij > 0.0 && i / y.len() != i % y.len() {
            kl += pij * (pij / (wij / z).max(f64::MIN_POSITIVE)).ln();
        }
    }
    kl.max(0.0)
}

pub fn tsne(codes: &Matrix, cfg: &TsneConfig) -> Result<ProjectionResult> {
    let n = codes.rows();
    if n > MAX_POINTS {
        return Err(Error::invalid(format!(
            "exact projection is limited to {MAX_POINTS} points, got {n}; subsample the codes first"
        )));
    }
    if !(cfg.perplexity > 0.0) || (n as f64) < 3.0 * cfg.perplexity {
        return Err(Error::invalid(format!(
            "{n} points is too few for perplexity {}; need at least three times the perplexity",
            cfg.perplexity
        )));
    }
    if codes.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("projection input contains non-finite values"));
    }
    let p = joint_affinities(codes, cfg.perplexity);

    let mut r = rng(cfg.seed);
    let init = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut r), init.sample(&mut r)]).collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(cfg.iterations);
    let rows: Vec<usize> = (0..n).collect();
    let learning_rate = cfg.learning_rate.unwrap_or((n as f64 / (4.0 * cfg.exaggeration)).max(50.0));

    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iterations;
        let exaggeration = if early { cfg.exaggeration } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };
        let (w, z) = output_kernel(&y);
        let grad = par::map(&rows, |&i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let wij = w[i * n + j];
                let f = (exaggeration * p[i * n + j] - wij / z) * wij;
                g[0] += f * (y[i][0] - y[j][0]);
                g[1] += f * (y[i][1] - y[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        });
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (velocity[i][d] > 0.0);
                gains[i][d] = if same_sign { (gains[i][d] * 0.8).max(0.01) } else { gains[i][d] + 0.2 };
                velocity[i][d] = momentum * velocity[i][d] - learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        let cx = y.iter().map(|v| v[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|v| v[1]).sum::<f64>() / n as f64;
        for v in y.iter_mut() {
            v[0] -= cx;
            v[1] -= cy;
        }
        kl_trace.push(kl_divergence(&p, &y));
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(Error::invalid("projection diverged to non-finite coordinates"));
    }
    Ok(ProjectionResult {
        coordinates: y,
        kl_trace,
        seed: cfg.seed,
    })
}
