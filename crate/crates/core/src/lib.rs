//! Coupled dictionary learning.
//!
//! Two feature spaces share one sparse code: signals are coded jointly by
//! OMP over the stacked dictionaries, and each atom pair is refreshed by a
//! closed-form rank-1 least-squares step instead of an SVD. A K-SVD learner
//! is included as the reference baseline.

pub mod baseline_ksvd;
pub mod cli;
pub mod datapipe;
pub mod dict_update;
pub mod error;
pub mod learner;
pub mod linalg;
pub mod sparse_coding;

pub use baseline_ksvd::{ksvd_update_atom, learn_ksvd};
pub use datapipe::{Dataset, Dictionary};
pub use dict_update::{sweep, update_atom, update_joint_coeffs};
pub use error::{CdlError, Result};
pub use learner::{
    avg_learning_error, learn_coupled, learn_single, load_model, save_model, sparsity_schedule, CoupledModel,
    CycleMetrics, LearnConfig, ScheduleMode,
};
pub use sparse_coding::{code_dataset, omp_joint, CodingLimits, SparseCode};
