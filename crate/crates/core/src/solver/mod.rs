//! Grid solutions: storage, residual evaluation, explicit evolution of the
//! extremal equation, inf-convolution and the monotone envelope used in the
//! measure estimate.

mod envelope;
mod evolve;
mod grid;
mod residual;

pub use envelope::{
    box_attainment, convex_envelope_1d, convex_envelope_2d, g_map_contact, inf_convolution, monotone_envelope,
    AttainmentReport, GMapReport,
};
pub use evolve::{evolve_extremal, sampled_slope, EvolveParams, Evolution};
pub use grid::SpaceTimeGrid;
pub use residual::{analytic_residual, residuals, Affine, AnalyticSolution, Constant, ResidualField, VanishingExample};
