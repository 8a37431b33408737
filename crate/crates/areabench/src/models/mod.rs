//! Model definitions: prior configuration, the unit-level (cluster
//! binomial) model, the area-level Fay-Herriot model on logit direct
//! estimates, and the benchmark-augmented joint posteriors.

mod fh;
mod joint;
mod priors;
mod unit;

pub use fh::{fh_logposterior, AreaModelState};
pub use joint::{
    joint_fh_logposterior, joint_unit_logposterior, unit_constraint_theta, ConstraintScale,
};
pub use priors::{ClusterVariancePrior, InterceptPrior, Priors};
pub(crate) use unit::{binom_logpmf_logit, softplus};
pub use unit::{
    ln_choose, unit_area_prediction, unit_logposterior, unit_logposterior_grad, UnitGrad,
    UnitModelState,
};
