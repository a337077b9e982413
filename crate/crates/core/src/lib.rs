//! Two-strain coinfection SIR model with logistic susceptible growth:
//! equilibria, stability, continuation in the carrying capacity `K` and
//! time integration.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branch;
pub mod equilibria;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod simulate;
pub mod stability;

pub use branch::{
    bifurcation_slopes, classify_scenario, coexistence_derivatives, hopf_scan, trace, Branch, BranchEvent, BranchPoint,
    Scenario, ScenarioTag, StepPolicy,
};
pub use equilibria::{
    all_equilibria, boundary_equilibria, coexistence_polynomial, dpds_at, solve_coexistence, thresholds,
    CoexistencePolynomial, Equilibrium, EquilibriumType, Thresholds,
};
pub use error::{Error, Result};
pub use model::{derive, validate_standing_assumptions, DerivedQuantities, Model, ModelParams, State};
pub use simulate::{basin_probe, integrate, r_limit, IntegratorOptions, Trajectory};
pub use stability::{classify, eigenvalues4, Classification, StabilityReport};
