//! Rebalancing, stratified splits and folds, median imputation and z-scores.
//! Every statistic is fit on training rows only.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::matrix::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rebalanced {
    /// Retained row indices, ascending.
    pub indices: Vec<usize>,
    pub warning: Option<String>,
}

/// Keeps every positive and samples `floor(n_pos / target_ratio)` negatives
/// without replacement.
pub fn rebalance(labels: &[bool], target_ratio: f64, seed: u64) -> Result<Rebalanced> {
    if !(target_ratio > 0.0) {
        return Err(Error::invalid("target ratio must be positive"));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() {
        return Err(Error::invalid("rebalancing needs at least one positive"));
    }
    // the epsilon keeps 110 / 1.1 at exactly 100
    let wanted = (pos.len() as f64 / target_ratio + 1e-9).floor() as usize;
    let warning = if neg.len() < wanted {
        Some(format!(
            "only {} negatives available, {} wanted; keeping all",
            neg.len(),
            wanted
        ))
    } else {
        neg.shuffle(&mut rng(seed));
        neg.truncate(wanted);
        None
    };
    let mut indices = pos;
    indices.extend(neg);
    indices.sort_unstable();
    Ok(Rebalanced { indices, warning })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    #[serde(default)]
    pub folds: Option<Vec<Vec<usize>>>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

/// Label-stratified train/test split with `round(test_fraction * n)` test rows.
pub fn split_stratified(labels: &[bool], test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid("test fraction must lie in [0, 1)"));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::invalid(format!(
            "stratified split needs at least 2 rows per class (have {} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let n_test = round_half_up(test_fraction * labels.len() as f64);
    let n_test_pos = round_half_up(test_fraction * pos.len() as f64).min(n_test);
    let n_test_neg = (n_test - n_test_pos).min(neg.len());
    let mut r = rng(seed);
    pos.shuffle(&mut r);
    neg.shuffle(&mut r);
    let mut test: Vec<usize> = pos[..n_test_pos].iter().chain(&neg[..n_test_neg]).copied().collect();
    let mut train: Vec<usize> = pos[n_test_pos..].iter().chain(&neg[n_test_neg..]).copied().collect();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        folds: None,
    })
}

/// `k` disjoint folds over positions `0..labels.len()` with class counts per
/// fold within one of the exact proportion.
///
/// Positives are dealt round-robin first, then negatives continue from the
/// next fold so fold sizes also differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > labels.len() {
        return Err(Error::invalid(format!(
            "k = {k} folds needs 2 <= k <= {} rows",
            labels.len()
        )));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let mut r = rng(seed);
    pos.shuffle(&mut r);
    neg.shuffle(&mut r);
    let mut folds = vec![Vec::new(); k];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        folds[slot % k].push(i);
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

impl SplitPlan {
    /// Adds stratified folds over the training rows, as original row indices.
    pub fn with_folds(mut self, labels: &[bool], k: usize, seed: u64) -> Result<Self> {
        let train_labels: Vec<bool> = self.train_indices.iter().map(|&i| labels[i]).collect();
        let folds = stratified_kfold(&train_labels, k, seed)?;
        self.folds = Some(
            folds
                .into_iter()
                .map(|f| f.into_iter().map(|p| self.train_indices[p]).collect())
                .collect(),
        );
        Ok(self)
    }
}

pub const PARAMS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessorParams {
    pub version: u32,
    pub columns: Vec<String>,
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    /// Population standard deviation after imputation.
    pub stddevs: Vec<f64>,
    pub constant: Vec<bool>,
    pub fitted_on: String,
    pub seed: u64,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Fits medians, means and standard deviations on the given (training) rows.
pub fn fit_preprocessor(train: &FeatureMatrix, fitted_on: &str, seed: u64) -> Result<PreprocessorParams> {
    let (rows, cols) = (train.rows(), train.cols());
    let mut medians = Vec::with_capacity(cols);
    let mut means = Vec::with_capacity(cols);
    let mut stddevs = Vec::with_capacity(cols);
    let mut constant = Vec::with_capacity(cols);
    for c in 0..cols {
        let mut observed: Vec<f64> = (0..rows).filter_map(|r| train.get(r, c)).collect();
        let med = median(&mut observed).ok_or_else(|| Error::AllMissingColumn {
            column: train.names[c].clone(),
        })?;
        let filled: Vec<f64> = (0..rows).map(|r| train.get(r, c).unwrap_or(med)).collect();
        let mean = filled.iter().sum::<f64>() / rows as f64;
        let var = filled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
        let sd = var.sqrt();
        let is_const = !(sd > 1e-12 * mean.abs().max(1.0));
        medians.push(med);
        means.push(mean);
        stddevs.push(if is_const { 0.0 } else { sd });
        constant.push(is_const);
    }
    Ok(PreprocessorParams {
        version: PARAMS_VERSION,
        columns: train.names.clone(),
        medians,
        means,
        stddevs,
        constant,
        fitted_on: fitted_on.to_owned(),
        seed,
    })
}

/// Imputes with training medians and standardizes with training moments.
/// Constant columns become zeros.
pub fn apply_preprocessor(params: &PreprocessorParams, m: &FeatureMatrix) -> Result<Matrix> {
    if params.columns != m.names {
        return Err(Error::invalid("feature columns differ from the fitted columns"));
    }
    let cols = m.cols();
    let mut data = Vec::with_capacity(m.rows() * cols);
    for r in 0..m.rows() {
        for c in 0..cols {
            let v = m.get(r, c).unwrap_or(params.medians[c]);
            data.push(if params.constant[c] {
                0.0
            } else {
                (v - params.means[c]) / params.stddevs[c]
            });
        }
    }
    Ok(Matrix::new(m.rows(), cols, data))
}

impl PreprocessorParams {
    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self).expect("params serialize");
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: PreprocessorParams = serde_json::from_str(&body)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        if p.version != PARAMS_VERSION {
            return Err(Error::invalid(format!(
                "{}: preprocessor version {} unsupported",
                path.display(),
                p.version
            )));
        }
        Ok(p)
    }
}
