//! Forward simulation, the regression Monte Carlo backward solver and the
//! expectation operator it generates.

mod axioms;
mod forward;
pub(crate) mod regression;
mod solver;
mod terminal;

pub use axioms::{axiom_check, Axiom, AxiomReport, COMPARISON_VIOLATION_FRACTION, EXACT_TOLERANCE};
pub use forward::{simulate_forward, PathEnsemble, SdeSpec, TimeGrid};
pub use regression::MAX_CONDITION;
pub(crate) use solver::{solve_backward, BackwardInput, SolverSettings};
pub use solver::{
    solve_on_paths, solve_theta_bsde, solve_with_terminal, theta_expectation, AdversaryRecord,
    BsdeSolution, McParams, Scenario, SolveDiagnostics, PICARD_TOLERANCE,
};
pub use terminal::{Monomial, Terminal};
