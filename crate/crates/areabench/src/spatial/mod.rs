//! Spatial structure: adjacency graphs, the intrinsic CAR precision they
//! induce, and the scaled BYM2 random-effect prior built on top of it.

mod bym2;
mod graph;
mod icar;

pub use bym2::{
    beta_logpdf, bym2_logprior, pc_precision_logpdf, pc_precision_rate, project_zero_sum,
    Bym2Params, ScaledIcar,
};
pub use graph::AreaGraph;
pub use icar::IcarPrecision;
