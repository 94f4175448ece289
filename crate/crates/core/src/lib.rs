//! Reliability-aware scheduling of IoT workflows on edge-hub-cloud systems.
//!
//! The pipeline is: load an [`instance`], expand it into the extended task
//! allocation graph ([`transform`]), then schedule it exactly with the
//! continuous-time model in [`milp`], heuristically with [`heft`], or by
//! exhaustive search with [`oracle`]. Every schedule is checked and scored by
//! [`validator`].

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod heft;
pub mod instance;
pub mod milp;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod schedule;
pub mod transform;
pub mod validator;
pub mod workload;

pub use error::Error;
pub use model::ObjectiveWeights;
pub use objective::Problem;
pub use schedule::{Outcome, Placement, Schedule};
