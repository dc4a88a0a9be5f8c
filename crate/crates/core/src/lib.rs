//! Joint component-carrier (CC) and resource-block (RB) allocation for
//! massive carrier aggregation.
//!
//! The crate is organised around a small data model ([`model`]), the
//! iterative successive-GP-approximation solver ([`sgpa`]), reference
//! algorithms used for comparison ([`baselines`], backed by the dense
//! simplex in [`lp`]) and a seeded Monte-Carlo harness ([`simharness`]).

pub mod baselines;
pub mod error;
pub mod lp;
pub mod model;
pub mod sgpa;
pub mod simharness;

pub use error::{Error, Result};
pub use model::{
    check_feasibility, evaluate_relaxed_wsu, evaluate_wsu, quantize, BinaryAllocation,
    FeasibilityReport, ProblemInstance, RelaxedAllocation,
};
pub use sgpa::{capped_simplex_normalize, solve, NormalizationSolution, SgpaConfig, SgpaResult};
