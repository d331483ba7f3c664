//! Unbalanced entropic optimal transport between nonnegative measures on
//! a shared set of `p` spatial bins.

pub mod divergence;
pub mod geometry;
pub mod kernel;
pub mod sinkhorn;

pub use divergence::{
    divergence_with_self_terms, grad_s, grad_s_with_self_term, self_term, sinkhorn_divergence, DivergenceReport,
    SelfTerm,
};
pub use geometry::{ground_metric_graph, ground_metric_grid, GeometryKind, GroundGeometry};
pub use kernel::{kernel_conv, ConvOutput, GibbsKernel};
pub use sinkhorn::{
    grad_w, grad_w_from_state, mass_bounds, mass_bounds_check, primal_objective, sinkhorn_symmetric,
    sinkhorn_unbalanced, sinkhorn_unbalanced_warm, transport_plan, MassBounds, SinkhornState, TransportSummary,
    UotParams,
};
