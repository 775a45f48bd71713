//! Architecture registry, training loop with validation-based selection, and
//! multi-repetition experiments.

mod arch;
mod config;
mod report;
mod seeds;
mod train;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use arch::{build_network, ArchitectureKind, ArchitectureSpec};
pub use config::{ArchitectureOverrides, DatasetConfig, ExperimentConfig, TrainingConfig};
pub use report::{merged_table, table_header, table_row, RepetitionReport, RunReport, REPORT_FILE, TABLE_FILE};
pub use seeds::{derive_seed, RunSeeds};
pub use train::{evaluate, predict_scores, train, EpochRecord, TrainOutcome};

use crate::checkpoint;
use crate::data::{impute, impute_and_normalize, split_train_val, Manifest, NormalizationStats, SplitSpec, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::nn::Network;

/// A finished experiment: the report plus the selected network of every
/// successful repetition.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub networks: Vec<Option<Network>>,
    /// Statistics fitted on the full training file, when normalizing.
    pub stats: Option<NormalizationStats>,
}

impl RunOutput {
    /// Writes the report files and one `rep_{r}.bntb` checkpoint per successful repetition.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.report.write(dir)?;
        for (r, net) in self.networks.iter().enumerate() {
            if let Some(net) = net {
                checkpoint::save(net, dir.join(format!("rep_{r}.bntb")))?;
            }
        }
        Ok(())
    }
}

/// Imputes both files and, when `normalize` is set, standardizes them with
/// statistics of the training file.
pub fn preprocess(
    train: &TabularDataset,
    test: &TabularDataset,
    normalize: bool,
) -> Result<(Option<NormalizationStats>, TabularDataset, TabularDataset)> {
    if normalize {
        let (stats, train, mut others) = impute_and_normalize(train, &[test])?;
        Ok((Some(stats), train, others.remove(0)))
    } else {
        Ok((None, impute(train), impute(test)))
    }
}

/// Loads the manifest named by `cfg` and runs every repetition.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let manifest = Manifest::load(&cfg.dataset.manifest)?;
    let (train, test) = manifest.load_datasets()?;
    run_on_datasets(cfg, &manifest.name, &train, &test)
}

/// Runs every repetition on in-memory raw train and test data.
pub fn run_on_datasets(
    cfg: &ExperimentConfig,
    dataset: &str,
    train_raw: &TabularDataset,
    test_raw: &TabularDataset,
) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let (stats, train_all, test) = preprocess(train_raw, test_raw, cfg.dataset.normalize)?;

    let run_one = |r: usize| -> (RepetitionReport, Option<Network>) {
        let seed = cfg.training.base_seed.wrapping_add(r as u64);
        match run_repetition(cfg, &train_all, &test, seed) {
            Ok((outcome, metrics)) => (
                RepetitionReport {
                    repetition: r,
                    seed,
                    test: Some(metrics),
                    selected_epoch: Some(outcome.selected_epoch),
                    steps: outcome.steps,
                    trace: outcome.trace,
                    error: None,
                },
                Some(outcome.network),
            ),
            Err(e) => {
                log::warn!("repetition {r} failed: {e}");
                (
                    RepetitionReport {
                        repetition: r,
                        seed,
                        test: None,
                        selected_epoch: None,
                        steps: 0,
                        trace: Vec::new(),
                        error: Some(e.to_string()),
                    },
                    None,
                )
            }
        }
    };
    let results: Vec<(RepetitionReport, Option<Network>)> = if cfg.training.parallel {
        (0..cfg.training.repetitions).into_par_iter().map(run_one).collect()
    } else {
        (0..cfg.training.repetitions).map(run_one).collect()
    };
    let (repetitions, networks): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let ok: Vec<Metrics> = repetitions.iter().filter_map(|r| r.test).collect();
    if ok.is_empty() {
        return Err(Error::AllRepetitionsFailed {
            count: repetitions.len(),
            first: repetitions[0].error.clone().unwrap_or_default(),
        });
    }
    let report = RunReport {
        label: cfg.architecture.label(),
        dataset: dataset.to_string(),
        config: cfg.clone(),
        mean: Metrics::mean(&ok),
        repetitions,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        report,
        networks,
        stats,
    })
}

fn run_repetition(
    cfg: &ExperimentConfig,
    train_all: &TabularDataset,
    test: &TabularDataset,
    seed: u64,
) -> Result<(TrainOutcome, Metrics)> {
    let seeds = RunSeeds::new(seed);
    let (train_part, val) = split_train_val(
        train_all,
        &SplitSpec {
            validation_fraction: cfg.training.validation_fraction,
            seed: seeds.split,
        },
    )?;
    let net = build_network(
        &cfg.architecture,
        train_all.feature_count(),
        seeds.init,
        cfg.training.max_neurons,
    )?;
    let outcome = train(net, &train_part, &val, cfg, &seeds)?;
    let metrics = evaluate(&outcome.network, test)?;
    Ok((outcome, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::BinaryLabel;
    use crate::tensor::Matrix;

    fn toy(n: usize, offset: f64) -> TabularDataset {
        let x: Vec<f64> = (0..n).flat_map(|i| [i as f64 + offset, (i % 7) as f64]).collect();
        let y = (0..n)
            .map(|i| BinaryLabel::from_score(i as f64 - n as f64 / 2.0 + 0.5))
            .collect();
        TabularDataset::from_parts(Matrix::from_vec(n, 2, x).unwrap(), y).unwrap()
    }

    fn small_cfg(reps: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new("unused", ArchitectureKind::Mlp);
        c.architecture.hidden_units = 8;
        c.training.epochs = 2;
        c.training.batch_size = 32;
        c.training.repetitions = reps;
        c
    }

    #[test]
    fn five_repetitions_give_five_rows_and_a_mean() {
        let out = run_on_datasets(&small_cfg(5), "toy", &toy(100, 0.0), &toy(40, 0.3)).unwrap();
        assert_eq!(out.report.repetitions.len(), 5);
        assert_eq!(out.report.table().lines().count(), 1 + 5 + 1);
        assert_eq!(out.networks.iter().flatten().count(), 5);
        let seeds: Vec<u64> = out.report.repetitions.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_repetition_mean_equals_run() {
        let out = run_on_datasets(&small_cfg(1), "toy", &toy(100, 0.0), &toy(40, 0.3)).unwrap();
        let r = &out.report;
        assert_eq!(r.mean.unwrap().accuracy, r.repetitions[0].test.unwrap().accuracy);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut cfg = small_cfg(3);
        let a = run_on_datasets(&cfg, "toy", &toy(100, 0.0), &toy(40, 0.3)).unwrap();
        cfg.training.parallel = false;
        let b = run_on_datasets(&cfg, "toy", &toy(100, 0.0), &toy(40, 0.3)).unwrap();
        assert_eq!(a.report.metrics_payload(), b.report.metrics_payload());
    }

    #[test]
    fn failures_are_recorded_until_all_fail() {
        // a single positive row lands in the validation slice for some seeds
        let x = Matrix::from_vec(10, 2, (0..20).map(f64::from).collect()).unwrap();
        let mut y = vec![BinaryLabel::Negative; 10];
        y[3] = BinaryLabel::Positive;
        let rare = TabularDataset::from_parts(x, y).unwrap();
        let mut cfg = small_cfg(10);
        cfg.training.batch_size = 4;
        let out = run_on_datasets(&cfg, "rare", &rare, &toy(40, 0.3)).unwrap();
        let failed = out.report.repetitions.iter().filter(|r| r.error.is_some()).count();
        assert!(failed > 0 && failed < 10, "{failed}");
        assert_eq!(out.report.succeeded().count(), 10 - failed);
        assert_eq!(out.networks.iter().flatten().count(), 10 - failed);
        assert!(out.report.table().contains("failed:"));

        let all_neg = TabularDataset::from_parts(
            Matrix::from_vec(10, 2, (0..20).map(f64::from).collect()).unwrap(),
            vec![BinaryLabel::Negative; 10],
        )
        .unwrap();
        let err = run_on_datasets(&small_cfg(2), "neg", &all_neg, &toy(40, 0.3)).unwrap_err();
        assert!(matches!(err, Error::AllRepetitionsFailed { count: 2, .. }));
    }

    #[test]
    fn output_files_and_checkpoints() {
        let out = run_on_datasets(&small_cfg(2), "toy", &toy(100, 0.0), &toy(40, 0.3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write(dir.path()).unwrap();
        for f in [REPORT_FILE, TABLE_FILE, "rep_0.bntb", "rep_1.bntb"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let net = checkpoint::load(dir.path().join("rep_1.bntb")).unwrap();
        let saved = out.networks[1].as_ref().unwrap();
        assert_eq!(net.parameters(), saved.parameters());
        assert_eq!(net.layers()[0].activation, saved.layers()[0].activation);
    }
}
