//! Pearson correlation with percentile bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::rng;

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} x values for {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 pairs"));
    }
    let r = pearson_unchecked(x, y);
    r.ok_or_else(|| Error::invalid("correlation of a constant series is undefined"))
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCorrelation {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_boot: usize,
    /// Resamples that came out constant and were drawn again.
    pub redrawn: usize,
}

/// Percentile value at `q` of sorted data, linearly interpolated.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pearson r with a 95% percentile interval over `n_boot` paired resamples.
pub fn pearson_bootstrap(x: &[f64], y: &[f64], n_boot: usize, seed: u64) -> Result<BootstrapCorrelation> {
    let r = pearson(x, y)?;
    if n_boot == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    let n = x.len();
    let mut rng = rng(seed);
    let mut stats = Vec::with_capacity(n_boot);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let mut redrawn = 0;
    while stats.len() < n_boot {
        for k in 0..n {
            let i = rng.random_range(0..n);
            bx[k] = x[i];
            by[k] = y[i];
        }
        match pearson_unchecked(&bx, &by) {
            Some(v) => stats.push(v),
            None => {
                redrawn += 1;
                if redrawn > 100 * n_boot {
                    return Err(Error::invalid("resamples are almost always constant"));
                }
            }
        }
    }
    stats.sort_by(f64::total_cmp);
    Ok(BootstrapCorrelation {
        r,
        ci_low: percentile(&stats, 0.025),
        ci_high: percentile(&stats, 0.975),
        n_boot,
        redrawn,
    })
}
