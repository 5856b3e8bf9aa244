//! Exact computations for the dyadic-type maximal operator on a regular
//! measure tree: the operator and its linearization, decreasing
//! rearrangements and the Hardy operator, the Bellman function of
//! `(f, F)`, and numerical checks of the mixed `L^p` inequalities.

pub mod bellman;
pub mod error;
pub mod lab;
pub mod maximal;
pub mod quadrature;
pub mod rearrangement;
pub mod tree;

pub use bellman::{
    bellman_value, corollary2_bound, h_p, minimize_corollary2, omega_p, BellmanCurve, BellmanPoint,
    BetaMinimum,
};
pub use error::{Error, Result};
pub use lab::{IneqParams, Inequality};
pub use maximal::{
    averages, coarsen, linearize, linearize_result, maximal_function, maximal_values, weak_type_deficit,
    Linearization, LinearizationDump, MaximalResult,
};
pub use rearrangement::{
    decreasing_rearrangement, hardy_moment, hardy_power, identity_rearrangement,
    random_rearrangement, LineFunction, LineStepFunction, PowerLawFunction,
};
pub use tree::{build_uniform_tree, moment, Node, NodeId, StepFunction, Tree};
