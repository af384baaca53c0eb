//! Mixed causal/noncausal vector autoregressions: simulation, GCov
//! estimation, simulated-annealing start selection and Monte Carlo
//! identification experiments.
//!
//! Parameters of a VAR(p) are always vectorized row-major over
//! `Θ₁, …, Θ_p` (see [`VarParams::to_vec`]); annealing bounds, gradients
//! and histograms all index coefficients in that order.

// Negated comparisons are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anneal;
pub mod error;
pub mod gcov;
pub mod io;
pub mod local;
pub mod mc;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod seeds;
pub mod sim;

pub use anneal::{anneal, sa_then_polish, AnnealOutcome, AnnealSchedule, StageTrace};
pub use error::{Error, Result};
pub use gcov::{objective, GcovObjective, ObjectiveConfig, TransformKind, TransformSet, Variant};
pub use io::{demean, load_series, LoadOptions, MissingPolicy, SeriesFile};
pub use local::{make_start, minimize_local, ols_var, reverse_ols, LocalOptConfig, StartStrategy};
pub use mc::{classify_estimate, export_report, run_experiment, ExperimentConfig, McReport};
pub use model::{ModelOrder, SpectralDecomposition, VarParams};
pub use par::Execution;
pub use pipeline::{estimate_pipeline, EstimationResult, OptimizerChoice};
pub use sim::{draw_errors, simulate_causal, simulate_mixed, ErrorDistribution, ErrorSpec, SimConfig};
