//! Two-stage decoder optimization: a high-frequency stage matching rE to a
//! goal field, then a low-frequency stage aligning rV with the resulting rE.

mod design;
pub mod lbfgs;
pub mod objective;

pub use design::*;
pub use lbfgs::{LbfgsOptions, StopReason};
pub use objective::{
    check_gradient, hf_objective, objective_gradient, GradientCheck, Objective, ObjectiveSpec, ObjectiveTerms,
    TermWeights,
};
