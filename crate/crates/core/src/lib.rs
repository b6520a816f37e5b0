//! Single-loop coupled gradient flows for nested optimization (minimax,
//! lifted-penalty bilevel and min–min–max), with Lyapunov diagnostics,
//! closed-form time-scale thresholds, forward-Euler certificates and the
//! hypercleaning phase-diagram experiments.

pub mod data;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod flows;
pub mod integrator;
pub mod linalg;
pub mod lyapunov;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod thresholds;

pub use error::{Error, Result};
pub use flows::{eval_field, FlowField, FlowKind, FlowState};
pub use problems::{Family, Problem, ProblemConstants};
