use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const EPS_CLAMP: f64 = 1e-10;

/// Predicts `polarity` when `x[feature] > threshold`, `-polarity` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub alpha: f64,
    pub weighted_error: f64,
}

impl Stump {
    pub fn vote(&self, row: &[f64]) -> f64 {
        let p = self.polarity as f64;
        if row[self.feature] > self.threshold {
            p
        } else {
            -p
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StumpEnsemble {
    pub stumps: Vec<Stump>,
    /// Alpha-weighted Gini decrease per feature, normalized to sum to 1.
    pub feature_importances: Vec<f64>,
}

impl StumpEnsemble {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.stumps.iter().map(|s| s.alpha * s.vote(row)).sum()
    }

    /// Logistic link on the margin, the usual probability reading of boosting.
    pub fn score(&self, row: &[f64]) -> f64 {
        super::net::sigmoid(2.0 * self.decision(row))
    }
}

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    polarity: i8,
    error: f64,
    left_w: f64,
    left_pos: f64,
}

fn best_stump(x: &Matrix, y: &[bool], w: &[f64], sorted: &[Vec<usize>]) -> Split {
    let total_pos: f64 = (0..y.len()).filter(|&i| y[i]).map(|i| w[i]).sum();
    let total: f64 = w.iter().sum();
    let total_neg = total - total_pos;
    let mut best: Option<Split> = None;
    for (j, order) in sorted.iter().enumerate() {
        let (mut left_pos, mut left_neg) = (0.0, 0.0);
        let mut k = 0;
        while k < order.len() {
            let v = x.get(order[k], j);
            while k < order.len() && x.get(order[k], j) == v {
                let i = order[k];
                if y[i] {
                    left_pos += w[i];
                } else {
                    left_neg += w[i];
                }
                k += 1;
            }
            if k == order.len() {
                break;
            }
            let threshold = 0.5 * (v + x.get(order[k], j));
            for (polarity, error) in [(1i8, left_pos + (total_neg - left_neg)), (-1, left_neg + (total_pos - left_pos))] {
                if best.as_ref().is_none_or(|b| error < b.error) {
                    best = Some(Split {
                        feature: j,
                        threshold,
                        polarity,
                        error,
                        left_w: left_pos + left_neg,
                        left_pos,
                    });
                }
            }
        }
    }
    // no feature varies: a constant vote for the heavier class
    best.unwrap_or(Split {
        feature: 0,
        threshold: f64::MAX,
        polarity: if total_pos >= total_neg { -1 } else { 1 },
        error: total_pos.min(total_neg),
        left_w: total,
        left_pos: total_pos,
    })
}

/// Discrete AdaBoost over depth-1 stumps.
pub fn adaboost_fit(x: &Matrix, labels: &[bool], rounds: usize) -> Result<StumpEnsemble> {
    let n = x.rows();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), n)));
    }
    if rounds == 0 {
        return Err(Error::invalid("boosting needs at least one round"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    if pos == 0 || pos == n {
        return Err(Error::invalid("boosting needs both classes"));
    }
    if x.cols() == 0 {
        return Err(Error::invalid("boosting needs at least one feature"));
    }
    let sorted: Vec<Vec<usize>> = (0..x.cols())
        .map(|j| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)));
            o
        })
        .collect();
    let mut w = vec![1.0 / n as f64; n];
    let mut stumps = Vec::with_capacity(rounds);
    let mut importance = vec![0.0; x.cols()];
    for _ in 0..rounds {
        let s = best_stump(x, labels, &w, &sorted);
        let eps = s.error.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
        let alpha = 0.5 * ((1.0 - eps) / eps).ln();
        let total_pos: f64 = (0..n).filter(|&i| labels[i]).map(|i| w[i]).sum();
        let right_w = 1.0 - s.left_w;
        let decrease =
            gini(total_pos, 1.0) - s.left_w * gini(s.left_pos, s.left_w) - right_w * gini(total_pos - s.left_pos, right_w);
        let stump = Stump {
            feature: s.feature,
            threshold: s.threshold,
            polarity: s.polarity,
            alpha: alpha.max(0.0),
            weighted_error: s.error,
        };
        importance[s.feature] += stump.alpha * decrease.max(0.0);
        let mut z = 0.0;
        for i in 0..n {
            let y = if labels[i] { 1.0 } else { -1.0 };
            w[i] *= (-stump.alpha * y * stump.vote(x.row(i))).exp();
            z += w[i];
        }
        w.iter_mut().for_each(|v| *v /= z);
        stumps.push(stump);
        if eps >= 0.5 {
            break;
        }
    }
    let total: f64 = importance.iter().sum();
    let feature_importances = if total > 0.0 {
        importance.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / x.cols() as f64; x.cols()]
    };
    Ok(StumpEnsemble {
        stumps,
        feature_importances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn separable_line() {
        let x = Matrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let y = [false, false, true, true];
        let e = adaboost_fit(&x, &y, 5).unwrap();
        let first = &e.stumps[0];
        assert!(first.threshold > 2.0 && first.threshold < 3.0);
        assert_eq!(first.weighted_error, 0.0);
        let clamp_alpha = 0.5 * ((1.0 - 1e-10) / 1e-10f64).ln();
        assert_eq!(first.alpha, clamp_alpha);
        for (r, &label) in y.iter().enumerate() {
            assert_eq!(e.decision(x.row(r)) > 0.0, label);
        }
        assert_eq!(e.feature_importances, vec![1.0]);
    }

    // every (feature, midpoint, polarity) triple scored directly
    #[test]
    fn first_stump_matches_exhaustive_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(4..30);
            let d = rng.random_range(1..4);
            let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(0..6) as f64).collect();
            let x = Matrix::new(n, d, data);
            let y: Vec<bool> = (0..n).map(|i| i % 3 == 0 || rng.random_bool(0.3)).collect();
            if y.iter().all(|v| *v) || y.iter().all(|v| !*v) {
                continue;
            }
            let mut best = f64::INFINITY;
            for j in 0..d {
                let mut vals: Vec<f64> = x.column(j);
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                for t in vals.windows(2).map(|w| 0.5 * (w[0] + w[1])) {
                    for p in [1.0, -1.0] {
                        let err = (0..n)
                            .filter(|&i| {
                                let h = if x.get(i, j) > t { p } else { -p };
                                (h > 0.0) != y[i]
                            })
                            .count() as f64
                            / n as f64;
                        best = best.min(err);
                    }
                }
            }
            let e = adaboost_fit(&x, &y, 1).unwrap();
            assert!((e.stumps[0].weighted_error - best).abs() < 1e-12);
        }
    }

    #[test]
    fn single_feature_ensemble_has_full_importance() {
        let x = Matrix::new(6, 3, vec![0.0, 5.0, 1.0, 1.0, 5.0, 1.0, 2.0, 5.0, 1.0, 3.0, 5.0, 1.0, 4.0, 5.0, 1.0, 5.0, 5.0, 1.0]);
        let y = [false, true, false, true, true, true];
        let e = adaboost_fit(&x, &y, 20).unwrap();
        assert!(e.stumps.iter().all(|s| s.feature == 0));
        assert_eq!(e.feature_importances, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn planted_two_feature_rule() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (n, d) = (400, 8);
        let data: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x = Matrix::new(n, d, data);
        let y: Vec<bool> = (0..n).map(|i| x.get(i, 2) + x.get(i, 5) > 0.0).collect();
        let e = adaboost_fit(&x, &y, 200).unwrap();
        let share = e.feature_importances[2] + e.feature_importances[5];
        assert!(share >= 0.9, "{share} {:?}", e.feature_importances);
        assert!((e.feature_importances.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_an_error() {
        let x = Matrix::new(3, 1, vec![1.0, 2.0, 3.0]);
        assert!(adaboost_fit(&x, &[true, true, true], 3).is_err());
        assert!(adaboost_fit(&x, &[true, false, true], 0).is_err());
    }
}
