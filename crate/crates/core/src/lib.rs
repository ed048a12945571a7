//! One-hidden-layer graph neural network with max-pooling aggregation,
//! trained by joint edge sampling and neuron magnitude pruning, plus the
//! instrumentation needed to check its generalization behaviour on
//! synthetic planted-pattern graphs.

// NaN must fail validation, so checks are written as `!(x >= 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Plain enum with snake_case text names for config files and CSV.
macro_rules! str_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
        pub enum $name { $(#[serde(rename = $text)] $variant),+ }

        impl std::str::FromStr for $name {
            type Err = $crate::Error;
            fn from_str(s: &str) -> $crate::Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err($crate::Error::InvalidParameter(format!(concat!("unknown ", stringify!($name), " `{}`"), s))),
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
    };
}

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use analysis::{detect_lucky, lucky_mask, LuckyReport};
pub use config::{AlphaNodes, Config, Profile};
pub use error::{Error, Result};
pub use experiments::{run_sweep, Arm, Experiment, Param, SweepResult, SweepSpec};
pub use graph::{
    load_graph, save_graph, validate_assumptions, LabeledSubset, PartitionTag, PatternMode,
    PatternSet, StructuredGraph, ValidationReport, Violation,
};
pub use model::{
    aggregate, empirical_risk, generalization_error, gradient, GenError, ModelState, NormMode,
    PatternHit,
};
pub use sampler::{
    alpha_bound_importance, alpha_bound_partial, alpha_bound_uniform, estimate_alpha,
    sample_neighbors, AlphaEstimate, ImportantSet, SampledNeighborhood, SamplerKind,
    SamplingStrategy,
};
pub use synth::{
    draw_noise, generate_graph, generate_patterns, GenConfig, GeneratedData, NoiseMode,
};
pub use trainer::{
    magnitude_prune, no_hook, pretrain, retrain, run_algorithm1, theorem_bounds, Phase,
    TrainConfig, TrialOutcome,
};

/// Version of the key = value configuration schema.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;
