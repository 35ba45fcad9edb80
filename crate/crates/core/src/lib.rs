//! GPU cluster placement under performance variability and locality.
//!
//! Most algorithms are generic over the scalar type; the aliases below fix
//! it to `f64`, which is what the simulator uses.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod io;
pub mod numeric;
pub mod placement;
pub mod report;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod synth;
pub mod trace;
pub mod variability;

pub use error::{Error, Result};
pub use placement::{ClusterState, JobId, PlacementPolicy};
pub use scheduler::SchedulerPolicy;
pub use sim::{compute_metrics, run_sim, ScoreMode, SimConfig, SimResult, Summary};
pub use trace::{JobTemplate, TraceSpec};

pub type Profile = variability::VariabilityProfile<f64>;
pub type Binning = variability::PMBinning<f64>;
pub type ClassBinning = variability::ClassBinning<f64>;
pub type Features = classifier::AppFeatures<f64>;
pub type ClassModel = classifier::ClassModel<f64>;
pub type LvMatrix = placement::LvMatrix<f64>;
pub type ClassLvMatrix = placement::ClassLvMatrix<f64>;
pub type Allocation = placement::Allocation<f64>;
pub type KMeansResult<const D: usize> = numeric::KMeansResult<f64, D>;
