//! Binomially initialized dense layers and jointly trained neural ensembles
//! for tabular binary classification.
//!
//! A binomial layer has one neuron per non-empty subset of the input features,
//! with weight 1 on the subset and 0 elsewhere. The crate contains the dense
//! matrix kernel, subset ranking, the network and its backpropagation, the
//! ensemble losses, ADAM, tabular loading and preprocessing, metrics, and an
//! experiment runner.

pub mod checkpoint;
pub mod combinatorics;
pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod synthetic;
pub mod tensor;

pub use combinatorics::FeatureCombination;
pub use data::{BalancedSampler, Manifest, Schema, TabularDataset};
pub use error::{Error, Result};
pub use experiment::{
    build_network, evaluate, run_experiment, run_on_datasets, ArchitectureKind, ArchitectureSpec,
    ExperimentConfig, RunOutput, RunReport,
};
pub use losses::{Aggregation, BinaryLabel, EnsembleLossConfig, LossKind};
pub use metrics::{ConfusionCounts, Metrics, SelectionMetric};
pub use nn::{Activation, DenseLayer, Layer, Network};
pub use optim::{AdamConfig, AdamState};
pub use tensor::Matrix;
