//! Sharp bounds for partially identified causal estimands via multi-marginal
//! optimal transport (MOT).
//!
//! In a randomized experiment with `K` arms, each unit reveals only one of its
//! `K` potential outcomes. Quantities that involve the joint distribution of
//! potential outcomes — the variance of a treatment contrast, the covariance
//! between two treatment effects, a quadratic welfare criterion — are therefore
//! not point identified: the data pin down the `K` marginal outcome
//! distributions but not the coupling between them. The sharp identified set
//! for such a quantity is an interval whose endpoints are the infimum and
//! supremum of the estimand over all couplings of the observed marginals,
//! which is exactly a multi-marginal optimal transport problem.
//!
//! This crate computes those intervals for quadratic estimands over discrete
//! (empirical) marginals:
//!
//! - [`measures`] — weighted discrete marginals, empirical construction,
//!   centering, and CSV ingestion of arm-labelled outcome data.
//! - [`cost`] — cost specifications (mean-squared combinations, pairwise
//!   quadratic welfare, linear contrasts, general quadratic forms, and a small
//!   expression language) and dense cost-tensor assembly.
//! - [`solver`] — entropically regularized MOT solvers: a multi-marginal
//!   Sinkhorn with greedy margin selection and a Greenkhorn variant with
//!   single-atom updates, both with certified dual lower bounds and rounding
//!   to an exactly feasible coupling.
//! - [`oracle`] — an exact simplex LP for small instances, a permutation
//!   enumeration cross-check, and the Gaussian closed form used to validate
//!   the solvers.
//! - [`bounds`] — drivers that turn solver runs into identified intervals,
//!   decomposition-based baseline bounds, design-based variance bounds with
//!   sharpened confidence intervals, and treatment-effect covariance bounds.
//! - [`synth`] — seeded synthetic data generators used by the validation
//!   suite and the CLI.
//!
//! Numerical conventions used throughout: couplings and marginals are
//! probability vectors/tensors summing to one; `0 * log(0/x)` is zero; values
//! inside logarithms are floored at `1e-300`; cost tensors are stored shifted
//! so their minimum cell is zero and every reported objective value undoes the
//! shift.

pub mod bounds;
pub mod cost;
pub mod error;
pub mod measures;
pub mod oracle;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use bounds::{Certificate, IdentifiedInterval, NeymanResult, NeymanSolveInfo};
pub use cost::{CostKind, CostSpec, CostTensor, Sign};
pub use error::{Error, Result};
pub use measures::{DiscreteMarginal, MarginalSystem};
pub use solver::{Algorithm, Coupling, Potentials, SolveResult, SolverConfig};
pub use tensor::DenseTensor;
