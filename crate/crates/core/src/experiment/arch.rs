use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::combinatorics;
use crate::error::{Error, Result};
use crate::losses::{Aggregation, EnsembleLossConfig, LossKind};
use crate::nn::{Activation, DenseLayer, Layer, Network};

use super::seeds::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    /// Binomial first layer (full, or prefix-truncated at the cap), one output.
    Proposed,
    /// Randomly sampled binomial first layer, one output.
    PropRnd,
    /// Xavier hidden layer feeding a linear-pair output ensemble.
    PropEns,
    /// Xavier hidden layer, one output.
    Mlp,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 4] = [
        ArchitectureKind::Proposed,
        ArchitectureKind::PropRnd,
        ArchitectureKind::PropEns,
        ArchitectureKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureKind::Proposed => "proposed",
            ArchitectureKind::PropRnd => "prop_rnd",
            ArchitectureKind::PropEns => "prop_ens",
            ArchitectureKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchitectureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown architecture {s:?}; expected one of proposed, prop_rnd, prop_ens, mlp"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    /// Hidden width for `mlp` and `prop_ens`.
    pub hidden_units: usize,
    /// Sampled neurons for `prop_rnd`; truncation cap for `proposed`.
    pub binomial_neurons: usize,
    /// Output ensemble width for `prop_ens`.
    pub ensemble_outputs: usize,
    pub hidden_activation: Activation,
    pub loss: EnsembleLossConfig,
}

impl ArchitectureSpec {
    pub fn preset(kind: ArchitectureKind) -> Self {
        let single = EnsembleLossConfig::single(LossKind::Hinge);
        let base = Self {
            kind,
            hidden_units: 256,
            binomial_neurons: 100_000,
            ensemble_outputs: 1024,
            hidden_activation: Activation::Relu,
            loss: single,
        };
        match kind {
            ArchitectureKind::Proposed | ArchitectureKind::Mlp => base,
            ArchitectureKind::PropRnd => Self {
                binomial_neurons: 20_000,
                ..base
            },
            ArchitectureKind::PropEns => Self {
                loss: EnsembleLossConfig::default(),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let ensemble = self.kind == ArchitectureKind::PropEns;
        match (ensemble, self.loss.aggregation) {
            (true, Aggregation::Single) => Err(Error::Config(
                "prop_ens needs bagging or boosting aggregation".into(),
            )),
            (false, Aggregation::Bagging | Aggregation::Boosting) => Err(Error::Config(format!(
                "{} has one output and needs single aggregation",
                self.kind
            ))),
            _ => Ok(()),
        }?;
        if self.hidden_units == 0 || self.binomial_neurons == 0 || self.ensemble_outputs == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Row label in result tables.
    pub fn label(&self) -> String {
        match self.kind {
            ArchitectureKind::Proposed => "Proposed".into(),
            ArchitectureKind::PropRnd => "Prop. RND".into(),
            ArchitectureKind::PropEns => "Prop. ENS".into(),
            ArchitectureKind::Mlp if self.hidden_units % 1000 == 0 => {
                format!("MLP {}k", self.hidden_units / 1000)
            }
            ArchitectureKind::Mlp => format!("MLP {}", self.hidden_units),
        }
    }
}

/// Builds the initialized network for `arch` on `feature_count` inputs.
///
/// Every layer is limited to `max_neurons` outputs. `proposed` falls back to
/// prefix truncation when the full enumeration would exceed its cap.
pub fn build_network(
    arch: &ArchitectureSpec,
    feature_count: usize,
    seed: u64,
    max_neurons: usize,
) -> Result<Network> {
    if feature_count == 0 {
        return Err(Error::NoFeatures);
    }
    arch.validate()?;
    let layer_seed = |i: usize| derive_seed(seed, &format!("layer{i}"));
    let hidden = arch.hidden_activation;
    let layers = match arch.kind {
        ArchitectureKind::Proposed => {
            let cap = arch.binomial_neurons.min(max_neurons);
            let first = match combinatorics::total_combinations_usize(feature_count)? {
                Some(total) if total <= cap => DenseLayer::binomial_full(feature_count, cap)?,
                _ => {
                    log::info!(
                        "{} features give {} combinations; truncating the binomial layer to the first {cap}",
                        feature_count,
                        combinatorics::total_combinations(feature_count)?
                    );
                    DenseLayer::binomial_prefix(feature_count, cap)?
                }
            };
            let width = first.out_units();
            vec![
                Layer::new(first, hidden),
                Layer::new(DenseLayer::xavier(width, 1, layer_seed(1))?, Activation::Identity),
            ]
        }
        ArchitectureKind::PropRnd => {
            let first =
                DenseLayer::binomial_random(feature_count, arch.binomial_neurons, layer_seed(0))?;
            vec![
                Layer::new(first, hidden),
                Layer::new(
                    DenseLayer::xavier(arch.binomial_neurons, 1, layer_seed(1))?,
                    Activation::Identity,
                ),
            ]
        }
        ArchitectureKind::PropEns => vec![
            Layer::new(
                DenseLayer::xavier(feature_count, arch.hidden_units, layer_seed(0))?,
                hidden,
            ),
            Layer::new(
                DenseLayer::linear_pair(arch.hidden_units, arch.ensemble_outputs)?,
                Activation::Identity,
            ),
        ],
        ArchitectureKind::Mlp => vec![
            Layer::new(
                DenseLayer::xavier(feature_count, arch.hidden_units, layer_seed(0))?,
                hidden,
            ),
            Layer::new(
                DenseLayer::xavier(arch.hidden_units, 1, layer_seed(1))?,
                Activation::Identity,
            ),
        ],
    };
    for layer in &layers {
        if layer.dense.out_units() > max_neurons {
            return Err(Error::NeuronCapExceeded {
                requested: layer.dense.out_units().to_string(),
                cap: max_neurons,
            });
        }
    }
    Network::new(layers)
}
