//! Augmented-Lagrangian manifold optimization on the complex sphere.
//!
//! The beamformer is lifted to `V = [W/√(ρN_T); z]` with `‖V‖_F = 1`, the
//! sum-log objective is replaced by its Lagrangian-dual (FP) surrogate for
//! fixed auxiliaries `μ = γ`, and rate floors enter an augmented Lagrangian
//! minimized by Riemannian steepest descent with Armijo backtracking.

mod problem;
mod solver;

pub use problem::{
    constraint_values, cost, euclidean_grad, fp_objective, fp_surrogate, mu_update, Auxiliary,
    CostEval, Lifted, Multipliers, Terms,
};
pub use solver::{
    multiplier_update, project_tangent, random_start, retract, riemannian_step, solve,
    AlmOptions, Solution, StepOutcome, TraceRow,
};
