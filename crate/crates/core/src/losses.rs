//! Gradient-form hinge and binary log losses and jointly trained ensemble heads.
//!
//! Both losses are expressed directly as their derivative with respect to the
//! network output, multiplied by a scale factor `sc`. When batch entries are
//! masked per output neuron, `sc` compensates for the number of entries that
//! survive so that every neuron sees a mask-invariant gradient magnitude.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Positive,
    Negative,
}

impl BinaryLabel {
    /// `+1.0` or `-1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            BinaryLabel::Positive => 1.0,
            BinaryLabel::Negative => -1.0,
        }
    }

    pub fn from_sign(value: f64) -> Result<Self> {
        if value == 1.0 {
            Ok(BinaryLabel::Positive)
        } else if value == -1.0 {
            Ok(BinaryLabel::Negative)
        } else {
            Err(Error::invalid(format!("label must be +1 or -1, got {value}")))
        }
    }

    /// Decision rule on an aggregated score: positive only when strictly above zero.
    #[inline]
    pub fn from_score(score: f64) -> Self {
        if score > 0.0 {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Hinge,
    BinaryLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Single,
    Bagging,
    Boosting,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleLossConfig {
    pub loss: LossKind,
    pub aggregation: Aggregation,
    /// Fraction of batch entries ignored per output neuron, in `[0, 1)`.
    pub mask_rate: f64,
    pub seed: u64,
}

impl Default for EnsembleLossConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Hinge,
            aggregation: Aggregation::Boosting,
            mask_rate: 0.0,
            seed: 0,
        }
    }
}

impl EnsembleLossConfig {
    pub fn single(loss: LossKind) -> Self {
        Self {
            loss,
            aggregation: Aggregation::Single,
            mask_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_rate) {
            return Err(Error::invalid(format!(
                "mask_rate must be in [0, 1), got {}",
                self.mask_rate
            )));
        }
        Ok(())
    }

    fn check_outputs(&self, m: usize) -> Result<()> {
        self.validate()?;
        match (self.aggregation, m) {
            (Aggregation::Single, 1) => Ok(()),
            (Aggregation::Single, _) => Err(Error::invalid(format!(
                "single aggregation needs exactly 1 output, got {m}"
            ))),
            (_, 1) => Err(Error::invalid(
                "bagging and boosting need more than one output neuron",
            )),
            _ => Ok(()),
        }
    }
}

#[inline]
pub fn hinge_gradient(out: f64, label: BinaryLabel, sc: f64) -> f64 {
    let gt = label.sign();
    if 1.0 - gt * out > 0.0 {
        -sc * gt
    } else {
        0.0
    }
}

#[inline]
pub fn binary_log_gradient(out: f64, label: BinaryLabel, sc: f64) -> f64 {
    let gt = label.sign();
    if gt > 0.0 {
        gt * sc * (sigmoid(out) - 1.0)
    } else {
        -gt * sc * sigmoid(out)
    }
}

/// `max(0, 1 - gt * s)`.
#[inline]
pub fn hinge_loss(score: f64, label: BinaryLabel) -> f64 {
    (1.0 - label.sign() * score).max(0.0)
}

/// `softplus(-gt * s) = ln(1 + exp(-gt * s))`.
#[inline]
pub fn binary_log_loss(score: f64, label: BinaryLabel) -> f64 {
    softplus(-label.sign() * score)
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl LossKind {
    #[inline]
    pub fn gradient(self, out: f64, label: BinaryLabel, sc: f64) -> f64 {
        match self {
            LossKind::Hinge => hinge_gradient(out, label, sc),
            LossKind::BinaryLog => binary_log_gradient(out, label, sc),
        }
    }

    #[inline]
    pub fn loss(self, score: f64, label: BinaryLabel) -> f64 {
        match self {
            LossKind::Hinge => hinge_loss(score, label),
            LossKind::BinaryLog => binary_log_loss(score, label),
        }
    }
}

/// `B x M` keep/ignore flags, one column per output neuron.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchMask {
    batch: usize,
    neurons: usize,
    keep: Vec<bool>,
}

impl BatchMask {
    pub fn keep_all(batch: usize, neurons: usize) -> Self {
        Self {
            batch,
            neurons,
            keep: vec![true; batch * neurons],
        }
    }

    pub fn from_keep(batch: usize, neurons: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != batch * neurons {
            return Err(Error::invalid("mask length does not equal batch * neurons"));
        }
        Ok(Self {
            batch,
            neurons,
            keep,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.batch, self.neurons)
    }

    #[inline]
    pub fn is_kept(&self, b: usize, m: usize) -> bool {
        self.keep[b * self.neurons + m]
    }

    pub fn kept_in_column(&self, m: usize) -> usize {
        (0..self.batch).filter(|&b| self.is_kept(b, m)).count()
    }
}

/// Keeps each entry with probability `1 - mask_rate`; an all-ignored column is redrawn.
pub fn make_mask(batch: usize, neurons: usize, mask_rate: f64, seed: u64) -> Result<BatchMask> {
    if !(0.0..1.0).contains(&mask_rate) {
        return Err(Error::invalid(format!(
            "mask_rate must be in [0, 1), got {mask_rate}"
        )));
    }
    if batch == 0 || neurons == 0 {
        return Err(Error::invalid("mask needs a non-empty batch and neurons"));
    }
    let mut mask = BatchMask::keep_all(batch, neurons);
    if mask_rate == 0.0 {
        return Ok(mask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep_p = 1.0 - mask_rate;
    let mut column = vec![false; batch];
    for m in 0..neurons {
        loop {
            for c in column.iter_mut() {
                *c = rng.random_bool(keep_p);
            }
            if column.iter().any(|&k| k) {
                break;
            }
        }
        for (b, &k) in column.iter().enumerate() {
            mask.keep[b * neurons + m] = k;
        }
    }
    Ok(mask)
}

/// Per-entry output gradients (mean-reduced over the batch) and the monitored loss.
pub fn ensemble_gradient(
    outputs: &Matrix,
    labels: &[BinaryLabel],
    cfg: &EnsembleLossConfig,
    mask: &BatchMask,
) -> Result<(Matrix, f64)> {
    let (batch, m) = outputs.shape();
    cfg.check_outputs(m)?;
    if labels.len() != batch {
        return Err(Error::invalid(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if mask.shape() != (batch, m) {
        return Err(Error::ShapeMismatch {
            op: "ensemble mask",
            left: outputs.shape(),
            right: mask.shape(),
        });
    }

    let b_f = batch as f64;
    let mut grad = outputs.zeros_like();

    if cfg.aggregation == Aggregation::Single {
        let mut loss = 0.0;
        for (b, &label) in labels.iter().enumerate() {
            let out = outputs.get(b, 0);
            grad.set(b, 0, cfg.loss.gradient(out, label, 1.0) / b_f);
            loss += cfg.loss.loss(out, label);
        }
        return Ok((grad, loss / b_f));
    }

    let scales: Vec<f64> = (0..m)
        .map(|j| {
            let kept = mask.kept_in_column(j);
            if kept == 0 {
                0.0
            } else {
                b_f / kept as f64
            }
        })
        .collect();

    let mut loss_sum = 0.0;
    let mut kept_total = 0usize;
    for (b, &label) in labels.iter().enumerate() {
        let row = outputs.row(b);
        let g = grad.row_mut(b);
        let mut running = 0.0;
        for (j, &out) in row.iter().enumerate() {
            running += out;
            if !mask.is_kept(b, j) {
                continue;
            }
            let probe = match cfg.aggregation {
                Aggregation::Boosting => running / (j + 1) as f64,
                _ => out,
            };
            g[j] = cfg.loss.gradient(probe, label, scales[j]) / b_f;
        }
        let kept_here = (0..m).filter(|&j| mask.is_kept(b, j)).count();
        if kept_here > 0 {
            let score = running / m as f64;
            loss_sum += kept_here as f64 * cfg.loss.loss(score, label);
            kept_total += kept_here;
        }
    }
    let monitor = if kept_total == 0 {
        0.0
    } else {
        loss_sum / kept_total as f64
    };
    Ok((grad, monitor))
}

/// Inference-time score of one output row: the raw output for a single
/// neuron, the member mean for ensembles.
pub fn aggregate_score(outputs: &Matrix, aggregation: Aggregation) -> Result<f64> {
    if outputs.rows() != 1 {
        return Err(Error::invalid("aggregate_score expects a single row"));
    }
    let m = outputs.cols();
    match (aggregation, m) {
        (Aggregation::Single, 1) => Ok(outputs.get(0, 0)),
        (Aggregation::Single, _) => Err(Error::invalid(format!(
            "single aggregation needs exactly 1 output, got {m}"
        ))),
        _ => Ok(row_mean(outputs.row(0))),
    }
}

/// Per-row aggregated score; ensembles of width `> 1` use the member mean.
pub fn aggregate_rows(outputs: &Matrix) -> Vec<f64> {
    outputs.iter_rows().map(row_mean).collect()
}

fn row_mean(row: &[f64]) -> f64 {
    row.iter().sum::<f64>() / row.len() as f64
}
