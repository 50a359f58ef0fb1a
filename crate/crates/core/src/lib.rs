//! Complexity measures that predict the generalization gap of trained
//! feed-forward and convolutional networks, and a harness that scores such
//! measures against a zoo of trained models.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision. Reductions always accumulate in `f64`.

pub mod error;
pub mod eval;
pub mod io;
pub mod margin;
pub mod nn;
pub mod noise;
pub mod norm;
pub mod rng;
pub mod scalar;
pub mod zoo;

pub use error::{Error, Result};
pub use eval::{conditional_mi_score, generalization_gap, kendall_tau_b, rank_correlation, CmiScore, SubsetScore, ZooEntry};
pub use margin::{
    all_layer_margin, all_layer_margin_measure, input_layer_margin, input_layer_margin_measure, margin_jacobian,
    AllLayerMargin, MarginJacobian, MarginMeasure, MarginSolverConfig, SolverStatus, SubsampleConfig,
};
pub use nn::{forward, predict, vjp, LabeledDataset, Layer, Network, OutputMarginConfig, Shape, Wrt};
pub use noise::{NoiseConfig, NoiseMeasure, NoiseStabilityResult};
pub use norm::{fast_log_spec, spectral_norm, FastLogSpec, LinearOperator, PowerMethodConfig, PowerMethodResult};
pub use scalar::Scalar;

pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type Dataset32 = nn::LabeledDataset<f32>;
pub type Dataset64 = nn::LabeledDataset<f64>;
pub type Trace32 = nn::ActivationTrace<f32>;
pub type Trace64 = nn::ActivationTrace<f64>;
