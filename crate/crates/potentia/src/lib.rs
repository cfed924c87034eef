//! Numerical laboratory for weighted solvability of A*(D)f = mu.
//!
//! The crate verifies, at desk scale, the structural conditions on
//! homogeneous constant-coefficient operators (ellipticity, canceling,
//! cocanceling), weighted potential-theoretic compatibility conditions
//! between measures and Muckenhoupt weights, and the inequality and
//! solvability machinery built on Riesz potentials and transforms.
//!
//! The numeric core is generic over the real scalar type via [`Real`]
//! (f32 or f64); the aliases at the crate root fix the default f64
//! instantiation used by the command-line tool.

pub mod conditions;
pub mod error;
pub mod grid;
pub mod inequality;
pub mod io;
mod linalg;
pub mod measures;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod symbolic;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Real;

// Concrete double-precision aliases. The generic types live in their modules.
pub type Operator = symbolic::HomogeneousOperator<f64>;
pub type Sphere = symbolic::SphereSample<f64>;
pub type GridF64 = grid::Grid<f64>;
pub type WeightF64 = weights::Weight<f64>;
pub type GridWeightF64 = weights::GridWeight<f64>;
pub type MeasureF64 = measures::Measure<f64>;
pub type PositiveMeasureF64 = measures::PositiveMeasure<f64>;
pub type FieldF64 = spectral::Field<f64>;
pub type BumpSpecF64 = spectral::BumpSpec<f64>;
pub type MultiplierF64 = spectral::Multiplier<f64>;
