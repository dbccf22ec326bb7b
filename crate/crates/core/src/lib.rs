//! Frequentist proportional colocalization tests from GWAS summary
//! statistics, including a lead-variant test whose critical value is
//! conditioned on the variant selection event, plus a simulation harness
//! for size and power experiments.

pub mod calibration;
pub mod chisq;
pub mod cli;
pub mod error;
pub mod gmm;
pub mod io;
pub mod linalg;
pub mod result;
pub mod selective;
pub mod sim;
pub mod summary;

pub use error::{Error, Result};
pub use gmm::{prop_coloc_full, GmmProblem, Minimum};
pub use io::load_summary;
pub use result::{combined_verdict, Method, TestResult, Verdict};
pub use selective::{
    build_selection, conditional_machinery, lm_test, prop_coloc_cond, prop_coloc_naive,
    ConditionalMachinery, SelectionContext,
};
pub use sim::{run_experiment, RejectionTable, SimConfig};
pub use summary::{JointEffects, SummaryDataset};

/// The linear-algebra crate used in the public API.
pub use nalgebra;
