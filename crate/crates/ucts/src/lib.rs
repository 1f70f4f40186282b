//! Uplift modeling with honest tree ensembles.
//!
//! Given logs from a randomized experiment — feature vectors, one of K
//! assigned treatments, and a real-valued response per subject — this crate
//! learns a treatment rule that assigns each subject the
//! response-maximizing treatment. Trees are scored by the estimated gain in
//! expected response a split unlocks, and leaf responses are estimated
//! honestly: the data that chooses the splits never touches the estimates
//! served at prediction time.
//!
//! The crate also ships single-sample estimation (CTS) and per-treatment
//! regression forests (SMA) as baselines, synthetic benchmark generators
//! with exact oracles, and offline policy evaluation (inverse-propensity
//! values, modified uplift curves, sample-size sweeps).
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, or the `ucts` binary for the file-based pipeline
//! (`simulate`, `train`, `predict`, `evaluate`, `muc`, `sweep`).

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod persist;
pub mod rng;
pub mod split;
pub mod synthetic;
pub mod tree;

pub use data::{stratified_split, ColumnKind, ColumnSpec, DataSplit, Dataset, FeatureSchema};
pub use error::{Error, Result};
pub use evaluation::{
    ips_value, muc_curve, oracle_value, regret_sweep, MucCurve, MucPoint, PolicyValueReport,
    SweepRow, ValueMethod,
};
pub use forest::{argmax_treatment, train, ForestConfig, Method, ResponseModel, UpliftForest};
pub use persist::Model;
pub use synthetic::{HighDimModel, SyntheticModel, TwoDModel};
pub use tree::{GrowthParams, UpliftTree};
