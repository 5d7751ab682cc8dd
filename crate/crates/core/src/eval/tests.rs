use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{PaperId, YearMonth};
use crate::embed::{FlatMatrix, FLAT_DIM};
use crate::features::{numeric_column_names, FeatureMatrix};
use crate::models::{ModelKind, ModelSpec, TrainedModel};
use crate::preprocess::fit_preprocessor;

fn ids(n: usize) -> Vec<PaperId> {
    (0..n).map(|i| PaperId::new(format!("p{i}"))).collect()
}

fn dataset(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Dataset {
    let n = rows.len();
    Dataset {
        x: FeatureSet {
            features: FeatureMatrix {
                names,
                paper_ids: ids(n),
                data: rows.into_iter().flatten().map(Some).collect(),
            },
            flats: None,
        },
        labels,
        dates: Vec::new(),
        fields: Vec::new(),
    }
}

/// Full-layout features (numeric block plus 3 field columns), noise
/// everywhere except `reference_count`, which carries `meta_signal`.
fn layout_dataset(n: usize, seed: u64, meta_signal: f64, text_signal: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = numeric_column_names();
    names.extend(["field=a", "field=b", "field=c"].map(String::from));
    let signal_col = names.iter().position(|c| c == "reference_count").unwrap();
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let mut rows = Vec::with_capacity(n);
    let mut flats = FlatMatrix::default();
    for (i, &y) in labels.iter().enumerate() {
        let sign = if y { 1.0 } else { -1.0 };
        let mut row: Vec<f64> = (0..names.len()).map(|_| rng.random::<f64>()).collect();
        row[signal_col] = meta_signal * sign + rng.random::<f64>();
        rows.push(row);
        let mut flat = vec![0f32; FLAT_DIM];
        for slot in 0..3 {
            for _ in 0..16 {
                flat[slot * 768 + rng.random_range(0..768)] = rng.random::<f32>() - 0.5;
            }
        }
        let band = if y { 0 } else { 8 };
        for d in band..band + 8 {
            flat[d] += text_signal as f32;
        }
        flats.ids.push(PaperId::new(format!("p{i}")));
        flats.data.extend_from_slice(&flat);
    }
    let mut ds = dataset(names, rows, labels);
    ds.x.flats = Some(flats);
    ds
}

fn planted(n: usize, seed: u64, shuffled: bool) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            let noise: f64 = rng.random();
            let signal = if y { 1.0 } else { 0.0 } + 0.01 * rng.random::<f64>();
            if shuffled {
                vec![noise, rng.random()]
            } else {
                vec![signal, noise]
            }
        })
        .collect();
    dataset(vec!["signal".into(), "noise".into()], rows, labels)
}

fn logistic() -> ModelConfig {
    let mut c = ModelConfig::new("logistic", ModelKind::Logistic, ColumnSelection::All);
    c.spec.optimizer.epochs = 50;
    c.spec.optimizer.learning_rate = 0.1;
    c.spec.optimizer.batch_size = 16;
    c
}

#[test]
fn cv_on_a_perfect_feature() {
    let ds = planted(200, 1, false);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let r = cross_validate(&logistic(), &ds, &rows, 10, 3).unwrap();
    assert_eq!(r.slices.len(), 10);
    assert!(r.summary.unwrap().mean_auroc >= 0.99, "{:?}", r.summary);
}

#[test]
fn cv_on_shuffled_labels_is_chance() {
    let ds = planted(400, 2, true);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let r = cross_validate(&logistic(), &ds, &rows, 10, 3).unwrap();
    let m = r.summary.unwrap().mean_auroc;
    assert!((0.4..=0.6).contains(&m), "{m}");
}

#[test]
fn two_folds_on_four_rows() {
    let ds = dataset(
        vec!["v".into()],
        vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
        vec![false, true, false, true],
    );
    let r = cross_validate(&logistic(), &ds, &[0, 1, 2, 3], 2, 0).unwrap();
    assert_eq!(r.slices.len(), 2);
    assert_eq!(r.slices[0].key, SliceKey::Fold(0));
    assert_eq!(r.slices[1].key, SliceKey::Fold(1));
}

#[test]
fn cv_is_deterministic() {
    let ds = planted(120, 4, false);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let a = cross_validate(&logistic(), &ds, &rows, 5, 9).unwrap();
    let b = cross_validate(&logistic(), &ds, &rows, 5, 9).unwrap();
    assert_eq!(a, b);
}

fn dated(dates: &[(i32, u8)], fields: Vec<Vec<String>>) -> Dataset {
    let n = dates.len();
    let mut ds = dataset(
        vec!["v".into()],
        (0..n).map(|i| vec![i as f64]).collect(),
        (0..n).map(|i| i % 2 == 0).collect(),
    );
    ds.dates = dates.iter().map(|&(y, m)| YearMonth::new(y, m).unwrap()).collect();
    ds.fields = fields;
    ds
}

#[test]
fn window_boundary() {
    let ds = dated(&[(2013, 12), (2014, 1), (1989, 12), (2018, 1)], Vec::new());
    let cfg = TemporalConfig {
        rebalance_ratio: None,
        ..TemporalConfig::default()
    };
    let s = temporal_split(&ds, &cfg, 0).unwrap();
    assert_eq!(s.train, vec![0]);
    assert_eq!(s.test, vec![1]);
}

#[test]
fn overlapping_windows_are_rejected() {
    let ds = dated(&[(2013, 12)], Vec::new());
    let cfg = TemporalConfig {
        train_end: YearMonth::new(2014, 1).unwrap(),
        ..TemporalConfig::default()
    };
    assert!(matches!(temporal_split(&ds, &cfg, 0), Err(crate::Error::Config(_))));
}

#[test]
fn top_fields_match_a_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 3000;
    let fields: Vec<Vec<String>> = (0..n)
        .map(|_| {
            // Zipf-like draw over 43 fields, one to three tags per row
            let k = rng.random_range(1..=3);
            (0..k)
                .map(|_| {
                    let u: f64 = rng.random();
                    format!("f{}", ((43.0f64).powf(u) - 1.0) as usize)
                })
                .collect()
        })
        .collect();
    let rows: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for &r in &rows {
        let mut tags = fields[r].clone();
        tags.sort();
        tags.dedup();
        for t in tags {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut oracle: Vec<(String, usize)> = counts.into_iter().collect();
    oracle.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    oracle.truncate(8);
    assert_eq!(top_fields(&fields, &rows, 8), oracle);
}

#[test]
fn temporal_report_structure() {
    let mut dates = Vec::new();
    let mut fields = Vec::new();
    for i in 0..400usize {
        let year = if i < 300 { 1995 + (i % 19) as i32 } else { 2014 + (i % 3) as i32 };
        dates.push((year, 1 + (i % 12) as u8));
        fields.push(vec![format!("f{}", i % 5)]);
    }
    let mut ds = dated(&dates, fields);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for r in 0..ds.len() {
        let y = if ds.labels[r] { 1.0 } else { 0.0 };
        ds.x.features.data[r] = Some(y + rng.random::<f64>());
    }
    let cfg = TemporalConfig {
        rebalance_ratio: None,
        ..TemporalConfig::default()
    };
    let r = temporal_protocol(&logistic(), &ds, &cfg, 1).unwrap();
    let keys: Vec<String> = r.slices.iter().map(|s| s.key.to_string()).collect();
    assert_eq!(keys[0], "overall");
    assert_eq!(&keys[1..4], &["year=2014", "year=2015", "year=2016"]);
    assert_eq!(keys.len(), 1 + 3 + 5);
    assert!(r.notes.iter().any(|n| n.contains("year=2017") && n.contains("empty")));
    r.validate().unwrap();
}

fn small_nets(mut spec: ModelSpec) -> ModelSpec {
    spec.mlp_hidden = vec![16, 8];
    spec.optimizer.epochs = 30;
    spec.optimizer.batch_size = 32;
    spec
}

fn ablation_aurocs(ds: &Dataset) -> BTreeMap<String, f64> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    let test: Vec<usize> = rows.iter().copied().filter(|r| r % 5 == 0).collect();
    let train: Vec<usize> = rows.iter().copied().filter(|r| r % 5 != 0).collect();
    let configs = ablation_configs(&small_nets(ModelSpec::default()));
    let r = ablation_protocol(&configs, ds, &train, &test, 2).unwrap();
    assert_eq!(r.slices.len(), 5);
    r.slices
        .iter()
        .map(|s| match &s.key {
            SliceKey::Ablation(name) => (name.clone(), s.auroc),
            other => panic!("unexpected slice {other}"),
        })
        .collect()
}

#[test]
fn ablation_follows_the_planted_channel() {
    let meta = ablation_aurocs(&layout_dataset(400, 21, 1.0, 0.0));
    assert!(meta["hybrid"] >= 0.85, "{meta:?}");
    assert!(meta["metadata"] >= 0.85, "{meta:?}");
    assert!((0.3..=0.7).contains(&meta["embeddings_only"]), "{meta:?}");

    let text = ablation_aurocs(&layout_dataset(400, 22, 0.0, 0.5));
    assert!(text["embeddings_only"] >= 0.85, "{text:?}");
    assert!(text["hybrid"] >= 0.85, "{text:?}");
    assert!((0.3..=0.7).contains(&text["metadata"]), "{text:?}");
}

#[test]
fn embeddings_only_sees_no_columns() {
    let ds = layout_dataset(40, 3, 1.0, 0.5);
    let cfg = ModelConfig::embeddings_only();
    assert!(cfg.columns.resolve(&ds.x.features).unwrap().is_empty());
    let mut cfg = cfg.with_training(&small_nets(ModelSpec::default()));
    cfg.spec.optimizer.epochs = 1;
    let rows: Vec<usize> = (0..40).collect();
    let fitted = fit(&cfg, &ds, &rows, 0).unwrap();
    assert!(fitted.columns.is_empty() && fitted.preprocessor.is_none());
    assert_eq!(fitted.score(&ds.x, &rows).unwrap().len(), 40);
}

#[test]
fn transfer_with_a_saturated_model() {
    let ds = planted(30, 6, false);
    let mut model = TrainedModel::initial(&ModelSpec::new(ModelKind::Logistic, 2)).unwrap();
    let last = model.params.len() - 1;
    model.params[last] = 1e3;
    let fitted = FittedModel {
        name: "always".into(),
        columns: vec!["signal".into(), "noise".into()],
        preprocessor: Some(fit_preprocessor(&ds.x.features, "all", 0).unwrap()),
        text_scale: None,
        model,
    };
    let rows: Vec<usize> = (0..30).collect();
    let (t, report) = transfer_eval(&fitted, &ds, &rows, 0.5).unwrap();
    assert_eq!(t.retrieved, t.total);
    assert_eq!(t.auroc, Some(0.5));
    assert_eq!(report.retrieval.unwrap().n_predicted_positive, 30);
}

#[test]
fn transfer_on_the_holdout_matches_the_holdout_report() {
    let ds = planted(200, 7, false);
    let train: Vec<usize> = (0..150).collect();
    let test: Vec<usize> = (150..200).collect();
    let (h, fitted) = holdout(&logistic(), &ds, &train, &test, 4).unwrap();
    let (t, _) = transfer_eval(&fitted, &ds, &test, 0.5).unwrap();
    assert_eq!(t.auroc, Some(h.slices[0].auroc));
}

#[test]
fn transfer_on_a_single_class_has_no_auroc() {
    let ds = planted(100, 8, false);
    let (_, fitted) = holdout(&logistic(), &ds, &(0..80).collect::<Vec<_>>(), &(80..100).collect::<Vec<_>>(), 0).unwrap();
    let positives: Vec<usize> = (0..100).filter(|&i| ds.labels[i]).collect();
    let (t, r) = transfer_eval(&fitted, &ds, &positives, 0.5).unwrap();
    assert_eq!(t.auroc, None);
    assert!(r.slices.is_empty() && !r.notes.is_empty());
    assert!(t.retrieved as f64 >= 0.9 * t.total as f64);
}

#[test]
fn scoring_ignores_labels() {
    let ds = planted(100, 9, false);
    let rows: Vec<usize> = (0..100).collect();
    let fitted = fit(&logistic(), &ds, &rows, 1).unwrap();
    let mut flipped = ds.clone();
    flipped.labels.iter_mut().for_each(|l| *l = !*l);
    assert_eq!(fitted.score(&ds.x, &rows).unwrap(), fitted.score(&flipped.x, &rows).unwrap());
}

#[test]
fn grid_search_prefers_trained_points() {
    let ds = planted(100, 10, false);
    let rows: Vec<usize> = (0..100).collect();
    let mut grid = BTreeMap::new();
    grid.insert("optimizer.epochs".to_string(), vec![serde_json::json!(0), serde_json::json!(50)]);
    let (g, chosen) = grid_search(&logistic(), &grid, &ds, &rows, 4, 0).unwrap();
    assert_eq!(g.points.len(), 2);
    assert!(g.points[1].1 >= 0.99);
    assert!(g.points.iter().all(|p| p.1 <= g.points[g.best].1));
    assert_eq!(serde_json::json!(chosen.spec.optimizer.epochs), g.points[g.best].0["optimizer.epochs"]);
}

#[test]
fn named_columns_must_exist() {
    let ds = planted(20, 11, false);
    let cfg = ModelConfig::citation_baseline();
    assert!(fit(&cfg, &ds, &(0..20).collect::<Vec<_>>(), 0).is_err());
}

#[test]
fn text_scale_ignores_padding_slots() {
    let mut flats = FlatMatrix::default();
    flats.ids.push(PaperId::new("p"));
    let mut row = vec![0f32; FLAT_DIM];
    row[..768].fill(0.5);
    flats.data.extend_from_slice(&row);
    assert!((text_scale(&flats) - TEXT_RMS / 0.5).abs() < 1e-12);
    flats.data.fill(0.0);
    assert_eq!(text_scale(&flats), 1.0);
}
