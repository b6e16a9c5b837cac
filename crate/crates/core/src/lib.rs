//! Numerical laboratory for intrinsic Harnack inequalities of fully nonlinear
//! parabolic equations with a gradient nonlinearity `phi(|Du|)`.
//!
//! The algebraic core ([`pucci`], [`nonlinearity`], [`geometry`], [`stacks`],
//! [`solver`]) is generic over the scalar type; the calibrated constructions
//! in [`barrier`] and [`harnack`] run in `f64`.

pub mod barrier;
pub mod error;
pub mod geometry;
pub mod harnack;
pub mod nonlinearity;
pub mod pucci;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod stacks;

pub use error::{Error, Result};
pub use scalar::{Exact, Real, Scalar};

pub type SymMatrix64 = pucci::SymMatrix<f64>;
pub type SymMatrix32 = pucci::SymMatrix<f32>;
pub type Ellipticity64 = pucci::EllipticityPair<f64>;
pub type Ellipticity32 = pucci::EllipticityPair<f32>;
pub type PhiModel64 = nonlinearity::PhiModel<f64>;
pub type PhiModel32 = nonlinearity::PhiModel<f32>;
pub type ParabolicCube64 = geometry::ParabolicCube<f64>;
pub type ExactCube = geometry::ParabolicCube<Exact>;
pub type BoxRegion64 = geometry::BoxRegion<f64>;
pub type LevelSchedule64 = stacks::LevelSchedule<f64>;
pub type CubeStack64 = stacks::CubeStack<f64>;
pub type ExactStack = stacks::CubeStack<Exact>;
pub type Grid64 = solver::SpaceTimeGrid<f64>;
pub type Grid32 = solver::SpaceTimeGrid<f32>;
