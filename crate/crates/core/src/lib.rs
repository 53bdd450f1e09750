//! Measurement of multicalibration error under demographic-controlled
//! resampling, together with the sample-complexity bound calculators the
//! measurements are compared against.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`data`] — labeled datasets with (possibly overlapping) protected
//!   groups, CSV ingestion with one-hot encoding.
//! * [`split`] — demographic-controlled train/test partitions.
//! * [`train`] — Pegasos-style linear/RBF SVMs and a two-layer ReLU net
//!   behind a uniform [`Predictor`] contract.
//! * [`calibration`] — per-category empirical calibration error.
//! * [`bounds`] — every closed-form sample-complexity formula.
//! * [`rademacher`] — empirical and closed-form Rademacher complexity.
//! * [`oracle`] — finite discrete distributions with exactly computable
//!   true calibration error.
//! * [`sweep`] — the full splits × classifiers × repetitions experiment.

pub mod bounds;
pub mod calibration;
pub mod data;
pub mod oracle;
pub mod rademacher;
pub mod seed;
pub mod split;
pub mod sweep;
pub mod train;

pub use calibration::{Category, CategoryStats};
pub use data::{Example, GroupSpec, LabeledDataset};
pub use split::{Split, SplitPlan};
pub use sweep::{CalibrationRecord, SweepConfig};
pub use train::{Predictor, PredictorModel};
