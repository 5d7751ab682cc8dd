use std::fs;
use std::path::Path;

use transforecast::config::PipelineConfig;
use transforecast::pipeline::{manifest_sha256, run_pipeline, run_stages, Manifest, Stage, LOCK_FILE, MANIFEST_FILE};
use transforecast::synth::{generate_synthetic, SyntheticSpec};

fn small_corpus(dir: &Path) {
    let spec = SyntheticSpec {
        n_papers: 1500,
        n_journals: 20,
        patent_rate: 0.12,
        guideline_rate: 0.03,
        laureate_papers: 15,
        seed: 3,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, dir).unwrap();
}

fn config(data: &Path, out: &str) -> PipelineConfig {
    let text = format!(
        r#"
version = 1
seed = 11
[paths]
papers = "papers.jsonl"
vocab = "vocab.jsonl"
mentions = "mentions.jsonl"
patents = "patents.jsonl"
guidelines = "guidelines.jsonl"
external_ids = "laureates.txt"
out = "{out}"
[train]
models = ["citations_per_year", "metadata", "hybrid"]
overrides = {{ "optimizer.epochs" = 2, "mlp_hidden" = [16, 8] }}
[evaluate]
cv_folds = 3
[evaluate.temporal]
model = "metadata"
top_fields = 3
[analyze]
adaboost_rounds = 10
bootstrap = 50
[analyze.sbm]
mcmc_sweeps = 5
restarts = 1
[analyze.projection]
max_rows = 60
autoencoder_epochs = 2
perplexity = 5.0
iterations = 100
[rank]
min_papers = 5
"#
    );
    PipelineConfig::from_toml(&text, data).unwrap()
}

#[test]
fn full_run_is_reproducible_and_records_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    small_corpus(tmp.path());
    let cfg = config(tmp.path(), "out");

    let first = run_pipeline(&cfg).unwrap();
    let names: Vec<&str> = first.stages.keys().map(String::as_str).collect();
    for s in Stage::ALL {
        assert!(names.contains(&s.name()), "missing stage {s}");
    }
    assert!(first.notes().any(|n| n.contains("fallback embedder")));
    assert!(!cfg.paths.out.join(LOCK_FILE).exists());
    for rec in first.stages.values() {
        for a in &rec.artifacts {
            assert!(cfg.paths.out.join(&a.path).is_file(), "{} not written", a.path);
        }
    }
    let evaluate = &first.stages["evaluate"];
    for stem in ["holdout_hybrid", "cv_metadata", "ablation", "transfer_hybrid", "temporal_metadata", "summary"] {
        assert!(
            evaluate.artifacts.iter().any(|a| a.path.contains(stem)),
            "no evaluate artifact for {stem}"
        );
    }
    let hash = manifest_sha256(&cfg.paths.out).unwrap();

    fs::remove_dir_all(&cfg.paths.out).unwrap();
    run_pipeline(&cfg).unwrap();
    assert_eq!(manifest_sha256(&cfg.paths.out).unwrap(), hash);

    // a single stage rerun keeps the other records and reproduces its own
    let again = run_stages(&cfg, &[Stage::Rank]).unwrap();
    assert_eq!(again, Manifest::read(&cfg.paths.out.join(MANIFEST_FILE)).unwrap());
    assert_eq!(manifest_sha256(&cfg.paths.out).unwrap(), hash);
}

#[test]
fn stage_seeds_depend_on_the_run_seed() {
    use transforecast::pipeline::stage_seed;
    assert_ne!(stage_seed(1, Stage::Train), stage_seed(2, Stage::Train));
    assert_ne!(stage_seed(1, Stage::Train), stage_seed(1, Stage::Evaluate));
    assert_eq!(stage_seed(5, Stage::Link), stage_seed(5, Stage::Link));
}

#[test]
fn missing_inputs_and_held_lock_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    small_corpus(tmp.path());
    let cfg = config(tmp.path(), "out");

    let err = run_stages(&cfg, &[Stage::Train]).unwrap_err();
    assert_eq!(err.stage, Some(Stage::Train));
    assert_eq!(err.exit_code(), 3);

    fs::write(cfg.paths.out.join(LOCK_FILE), "1").unwrap();
    let err = run_stages(&cfg, &[Stage::Ingest]).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("another run"));

    fs::remove_file(cfg.paths.out.join(LOCK_FILE)).unwrap();
    fs::remove_file(tmp.path().join("papers.jsonl")).unwrap();
    let err = run_stages(&cfg, &[Stage::Ingest]).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn disabled_fallback_without_embeddings_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    small_corpus(tmp.path());
    let text = "version = 1\nseed = 11\n[paths]\npapers = \"papers.jsonl\"\nvocab = \"vocab.jsonl\"\npatents = \"patents.jsonl\"\nembeddings = \"none.temb\"\nout = \"out\"\n[embed]\nfallback = false\n";
    let cfg = PipelineConfig::from_toml(text, tmp.path()).unwrap();
    let err = run_stages(&cfg, &[Stage::Ingest, Stage::Link, Stage::Features, Stage::Preprocess, Stage::Embed]).unwrap_err();
    assert_eq!(err.stage, Some(Stage::Embed), "{err}");
    assert_eq!(err.exit_code(), 3);
}
