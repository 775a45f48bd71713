use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use binotab::experiment::{self, merged_table, table_header, table_row, REPORT_FILE};
use binotab::{checkpoint, evaluate, run_experiment, ArchitectureKind, ExperimentConfig, Manifest, RunReport};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "binotab", version, about = "Binomial-layer networks and neural ensembles for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every repetition of an experiment and write its report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory. Defaults to `runs/<dataset>-<arch>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Base seed; repetition r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        /// Architecture preset replacing the one in the config.
        #[arg(long)]
        arch: Option<ArchitectureKind>,
        /// Run repetitions one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Score a saved network on the test file of a manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Skip normalization, for networks trained on raw features.
        #[arg(long)]
        raw: bool,
    },
    /// Merge the mean rows of every report found under a directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            repetitions,
            seed,
            arch,
            sequential,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(kind) = arch {
                cfg = cfg.with_architecture(kind);
            }
            if let Some(n) = repetitions {
                cfg.training.repetitions = n;
            }
            if let Some(s) = seed {
                cfg.training.base_seed = s;
            }
            if sequential {
                cfg.training.parallel = false;
            }
            train(&cfg, out)
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            raw,
        } => evaluate_checkpoint(&checkpoint, &manifest, !raw),
        Command::Report { runs } => {
            let reports = find_reports(&runs)?;
            if reports.is_empty() {
                bail!("no {REPORT_FILE} under {}", runs.display());
            }
            print!("{}", merged_table(&reports));
            Ok(())
        }
    }
}

fn train(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<()> {
    log::info!(
        "training {} for {} repetitions of {} epochs",
        cfg.architecture.label(),
        cfg.training.repetitions,
        cfg.training.epochs
    );
    let output = run_experiment(cfg)?;
    let dir = out.unwrap_or_else(|| {
        Path::new("runs").join(format!("{}-{}", output.report.dataset, cfg.architecture.kind))
    });
    output
        .write(&dir)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    print!("{}", output.report.table());
    log::info!(
        "wrote {} in {:.1}s",
        dir.display(),
        output.report.wall_clock_seconds
    );
    Ok(())
}

fn evaluate_checkpoint(path: &Path, manifest: &Path, normalize: bool) -> Result<()> {
    let net = checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let manifest = Manifest::load(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let (train_raw, test_raw) = manifest.load_datasets()?;
    let (_, _, test) = experiment::preprocess(&train_raw, &test_raw, normalize)?;
    let metrics = evaluate(&net, &test)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    print!("{}{}", table_header(), table_row(&name, &metrics));
    Ok(())
}

fn find_reports(root: &Path) -> Result<Vec<RunReport>> {
    let mut stack = vec![root.to_path_buf()];
    let mut found = Vec::new();
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
        for entry in entries {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == REPORT_FILE) {
                let text = fs::read_to_string(&path)?;
                found.push(RunReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))?);
            }
        }
    }
    Ok(found)
}
