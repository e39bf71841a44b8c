//! Nuisance model fitters: ordinary least squares and multinomial logit.

pub(crate) mod linalg;
mod logit;
mod ols;

pub(crate) use logit::fit_codes;
pub use logit::{
    fit_multinomial_logit, ConvergenceReport, GroupMembershipModel, MultinomialLogit,
    MAX_ITERATIONS, SCORE_TOLERANCE,
};
pub use ols::{fit_linear_model, LinearModel};
