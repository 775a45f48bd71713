use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batches_per_epoch, BalancedSampler, TabularDataset};
use crate::error::{Error, Result};
use crate::losses::{aggregate_rows, ensemble_gradient, make_mask, Aggregation, BatchMask, BinaryLabel};
use crate::metrics::{compute_metrics, confusion, Metrics, SelectionMetric};
use crate::nn::{ForwardCache, Network};
use crate::optim::{step_network, AdamState};
use crate::tensor::Matrix;

use super::config::ExperimentConfig;
use super::seeds::RunSeeds;

const EVAL_CHUNK: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based epoch index.
    pub epoch: usize,
    #[serde(with = "crate::metrics::nan_f64")]
    pub monitor_loss: f64,
    pub validation: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Snapshot from the selected epoch.
    pub network: Network,
    pub selected_epoch: usize,
    pub trace: Vec<EpochRecord>,
    /// Optimizer steps taken over all epochs.
    pub steps: usize,
}

fn selection_key(m: &Metrics, which: SelectionMetric) -> f64 {
    let v = m.get(which);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Trains `net` with balanced batches and keeps the epoch snapshot with the
/// best validation metric. Ties keep the earlier epoch.
pub fn train(
    mut net: Network,
    train: &TabularDataset,
    validation: &TabularDataset,
    cfg: &ExperimentConfig,
    seeds: &RunSeeds,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.feature_count() != net.in_units() {
        return Err(Error::invalid(format!(
            "network expects {} features, training data has {}",
            net.in_units(),
            train.feature_count()
        )));
    }
    let loss_cfg = cfg.architecture.loss;
    let outputs = net.output_units();
    let batch = cfg.training.batch_size / 2 * 2;
    let steps_per_epoch = batches_per_epoch(train.rows(), cfg.training.batch_size);

    let mut sampler = BalancedSampler::new(train, seeds.sampler)?;
    let masking = loss_cfg.mask_rate > 0.0 && loss_cfg.aggregation != Aggregation::Single;
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seeds.mask.wrapping_add(loss_cfg.seed));
    let full_mask = BatchMask::keep_all(batch, outputs);
    let mut state = AdamState::for_network(&net);
    let mut cache = ForwardCache::new();

    let mut trace: Vec<EpochRecord> = Vec::with_capacity(cfg.training.epochs);
    let mut best: Option<(f64, usize, Network)> = None;
    let mut steps = 0;

    for epoch in 1..=cfg.training.epochs {
        let mut loss_sum = 0.0;
        for step in 0..steps_per_epoch {
            let (x, y) = sampler.sample(train, batch)?;
            let out = net.forward_into(&x, &mut cache)?;
            let mask = if masking {
                make_mask(batch, outputs, loss_cfg.mask_rate, mask_rng.next_u64())?
            } else {
                full_mask.clone()
            };
            let (grad, loss) = ensemble_gradient(out, &y, &loss_cfg, &mask)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    trace: trace.iter().map(|r| r.monitor_loss).collect(),
                });
            }
            loss_sum += loss;
            let grads = net.backward_params(&cache, &grad)?;
            step_network(&mut net, &grads, &mut state, &cfg.optimizer)?;
            steps += 1;
        }
        let validation = evaluate(&net, validation)?;
        let record = EpochRecord {
            epoch,
            monitor_loss: loss_sum / steps_per_epoch as f64,
            validation,
        };
        log::debug!(
            "epoch {epoch}: loss {:.5}, validation f1 {:.4}, accuracy {:.4}",
            record.monitor_loss,
            validation.f1,
            validation.accuracy
        );
        trace.push(record);
        let key = selection_key(&validation, cfg.training.selection_metric);
        if best.as_ref().map_or(true, |(b, _, _)| key > *b) {
            best = Some((key, epoch, net.clone()));
        }
    }

    let (_, selected_epoch, network) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        network,
        selected_epoch,
        trace,
        steps,
    })
}

/// Aggregated score per row, computed in chunks.
pub fn predict_scores(net: &Network, features: &Matrix) -> Result<Vec<f64>> {
    if features.cols() != net.in_units() {
        return Err(Error::invalid(format!(
            "network expects {} features, data has {}",
            net.in_units(),
            features.cols()
        )));
    }
    let cols = features.cols();
    let mut scores = Vec::with_capacity(features.rows());
    for chunk in features.as_slice().chunks(EVAL_CHUNK * cols) {
        let x = Matrix::from_vec(chunk.len() / cols, cols, chunk.to_vec())?;
        scores.extend(aggregate_rows(&net.predict(&x)?));
    }
    Ok(scores)
}

/// Test metrics with scores thresholded at zero.
pub fn evaluate(net: &Network, data: &TabularDataset) -> Result<Metrics> {
    let preds: Vec<BinaryLabel> = predict_scores(net, &data.features)?
        .into_iter()
        .map(BinaryLabel::from_score)
        .collect();
    compute_metrics(&confusion(&preds, &data.labels)?)
}
