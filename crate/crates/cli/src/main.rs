use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use transforecast::config::PipelineConfig;
use transforecast::{init_threads_from_env, Error};
use transforecast::pipeline::{run_stages, Manifest, Stage};
use transforecast::synth::generate_synthetic;

const EXIT_CONFIG: u8 = 2;

/// Forecasts which papers will be taken up by patents or clinical
/// guidelines and policy documents.
#[derive(Parser)]
#[command(name = "transforecast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the run seed (the corpus seed for `synth`).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the output directory (the corpus directory for `synth`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, count mentions and filter the corpus.
    Ingest(Common),
    /// Attach patent and guideline/policy inclusions.
    Link(Common),
    /// Compute the per-paper feature table.
    Features(Common),
    /// Embed titles and abstract sentences of the selected papers.
    Embed(Common),
    /// Rebalance, split and fit the feature preprocessor.
    Preprocess(Common),
    /// Fit the configured models.
    Train(Common),
    /// Holdout, cross-validation, ablation, temporal and transfer reports.
    Evaluate(Common),
    /// Feature graphs, block structure, projections and correlations.
    Analyze(Common),
    /// Journal league tables.
    Rank(Common),
    /// Write a seeded synthetic corpus from the config's `[synth]` table.
    Synth(Common),
    /// Run every stage in order, or only the ones named with `--stage`.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "NAME")]
        stage: Vec<Stage>,
    },
}

impl Command {
    fn parts(&self) -> (&Common, Vec<Stage>) {
        match self {
            Command::Ingest(c) => (c, vec![Stage::Ingest]),
            Command::Link(c) => (c, vec![Stage::Link]),
            Command::Features(c) => (c, vec![Stage::Features]),
            Command::Embed(c) => (c, vec![Stage::Embed]),
            Command::Preprocess(c) => (c, vec![Stage::Preprocess]),
            Command::Train(c) => (c, vec![Stage::Train]),
            Command::Evaluate(c) => (c, vec![Stage::Evaluate]),
            Command::Analyze(c) => (c, vec![Stage::Analyze]),
            Command::Rank(c) => (c, vec![Stage::Rank]),
            Command::Synth(c) => (c, Vec::new()),
            Command::Pipeline { common, stage } if stage.is_empty() => (common, Stage::ALL.to_vec()),
            Command::Pipeline { common, stage } => (common, stage.clone()),
        }
    }
}

fn load_config(common: &Common, synth: bool) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        if synth {
            cfg.synth.seed = seed;
        } else {
            cfg.seed = seed;
        }
    }
    if let (Some(out), false) = (&common.out, synth) {
        cfg.paths.out = std::path::absolute(out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(cfg: &PipelineConfig, out: Option<&Path>) -> Result<(), Error> {
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => cfg.paths.papers.paths()[0]
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let (files, truth) = generate_synthetic(&cfg.synth, &dir)?;
    println!("synth: {} papers written to {}", truth.papers.len(), dir.display());
    for f in [&files.papers, &files.vocab, &files.mentions, &files.patents, &files.guidelines, &files.laureates, &files.truth] {
        println!("  {}", f.display());
    }
    Ok(())
}

fn report(manifest: &Manifest, stages: &[Stage]) {
    for s in stages {
        if let Some(rec) = manifest.stages.get(s.name()) {
            println!("{s}: {} artifacts (seed {})", rec.artifacts.len(), rec.seed);
            for n in &rec.notes {
                println!("  note: {n}");
            }
        }
    }
}

fn main() -> ExitCode {
    init_threads_from_env();
    let cli = Cli::parse();
    let (common, stages) = cli.command.parts();
    let is_synth = matches!(cli.command, Command::Synth(_));
    let cfg = match load_config(common, is_synth) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if is_synth {
        return match synth(&cfg, common.out.as_deref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    match run_stages(&cfg, &stages) {
        Ok(manifest) => {
            report(&manifest, &stages);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
