use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point of a threshold sweep: `(threshold, x, y)`.
/// ROC: x = false-positive rate, y = true-positive rate.
/// PR: x = recall, y = precision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(with = "ext_float")]
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// JSON has no infinities; they travel as strings.
pub(crate) mod ext_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number `{other}`"))),
            },
        }
    }
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|l| **l).count() as u64;
    Ok((pos, labels.len() as u64 - pos))
}

/// Indices by descending score; equal scores keep their original order.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Mann-Whitney AUROC with half credit for ties, plus the ROC curve over
/// distinct score thresholds.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(f64, Vec<CurvePoint>)> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUROC needs both classes"));
    }
    let order = ranked(scores);
    let mut curve = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    // twice the Mann-Whitney U, kept integral
    let mut u2: u128 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // positives in this group beat every negative still below, tie the group's
        u2 += gp as u128 * (2 * (neg - fp - gn) + gn) as u128;
        tp += gp;
        fp += gn;
        curve.push(CurvePoint {
            threshold: s,
            x: fp as f64 / neg as f64,
            y: tp as f64 / pos as f64,
        });
    }
    Ok((u2 as f64 / (2 * pos as u128 * neg as u128) as f64, curve))
}

pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    roc_auc(scores, labels).map(|r| r.0)
}

/// Step-interpolated average precision: the mean over ranked positives of
/// precision at that rank. Ties are ranked by original index.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<(f64, Vec<CurvePoint>)> {
    let (pos, _) = class_counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::invalid("average precision needs at least one positive"));
    }
    let order = ranked(scores);
    let mut curve = Vec::with_capacity(order.len());
    let mut sum = 0.0;
    let mut tp = 0u64;
    for (k, &i) in order.iter().enumerate() {
        let precision_den = (k + 1) as f64;
        if labels[i] {
            tp += 1;
            sum += tp as f64 / precision_den;
        }
        curve.push(CurvePoint {
            threshold: scores[i],
            x: tp as f64 / pos as f64,
            y: tp as f64 / precision_den,
        });
    }
    Ok((sum / pos as f64, curve))
}

pub fn ap(scores: &[f64], labels: &[bool]) -> Result<f64> {
    average_precision(scores, labels).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Exhaustive pair counting, in half units.
    fn pairwise_auc(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0u128, 0u128);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 2;
                    num += if s[i] > s[j] {
                        2
                    } else if s[i] == s[j] {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        num as f64 / den as f64
    }

    fn rank_by_rank_ap(s: &[f64], l: &[bool]) -> f64 {
        let rank = |i: usize| (0..s.len()).filter(|&j| s[j] > s[i] || (s[j] == s[i] && j < i)).count() + 1;
        let mut positives: Vec<(usize, usize)> = (0..s.len()).filter(|&i| l[i]).map(|i| (rank(i), i)).collect();
        positives.sort_unstable();
        let mut sum = 0.0;
        for (hits, (r, _)) in positives.iter().enumerate() {
            sum += (hits + 1) as f64 / *r as f64;
        }
        sum / positives.len() as f64
    }

    #[test]
    fn examples() {
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());

        let a = ap(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((a - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(ap(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert!(ap(&[0.9], &[false]).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let (_, roc) = roc_auc(&[0.3, 0.3, 0.9, 0.1], &[true, false, true, false]).unwrap();
        assert_eq!((roc[0].x, roc[0].y), (0.0, 0.0));
        let last = roc.last().unwrap();
        assert_eq!((last.x, last.y), (1.0, 1.0));
        let (_, pr) = average_precision(&[0.3, 0.3, 0.9, 0.1], &[true, false, true, false]).unwrap();
        assert!(pr.windows(2).all(|w| w[0].x <= w[1].x));
        assert_eq!(pr.last().unwrap().x, 1.0);
    }

    #[test]
    fn random_ap_is_near_prevalence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, p) = (200, 40);
        let labels: Vec<bool> = (0..n).map(|i| i < p).collect();
        let mut total = 0.0;
        for _ in 0..1000 {
            let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            total += ap(&scores, &labels).unwrap();
        }
        let mean = total / 1000.0;
        assert!((mean - p as f64 / n as f64).abs() < 0.02, "{mean}");
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..12).prop_map(|v| v as f64 / 4.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_oracles((s, l) in instance()) {
            let pos = l.iter().filter(|b| **b).count();
            prop_assume!(pos > 0 && pos < l.len());
            prop_assert_eq!(auroc(&s, &l).unwrap(), pairwise_auc(&s, &l));
            prop_assert_eq!(ap(&s, &l).unwrap(), rank_by_rank_ap(&s, &l));
        }

        #[test]
        fn monotone_transform_invariance((s, l) in instance()) {
            let pos = l.iter().filter(|b| **b).count();
            prop_assume!(pos > 0 && pos < l.len());
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auroc(&s, &l).unwrap(), auroc(&t, &l).unwrap());
            prop_assert_eq!(ap(&s, &l).unwrap(), ap(&t, &l).unwrap());
        }

        #[test]
        fn auroc_permutation_invariance((s, l) in instance(), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let pos = l.iter().filter(|b| **b).count();
            prop_assume!(pos > 0 && pos < l.len());
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let s2: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let l2: Vec<bool> = idx.iter().map(|&i| l[i]).collect();
            prop_assert_eq!(auroc(&s, &l).unwrap(), auroc(&s2, &l2).unwrap());
        }
    }
}
