//! Far-field simulation, pattern synthesis and benchmarking for diode-tunable reflecting surfaces.
//!
//! Numeric code is generic over [`num::Real`] (`f32` or `f64`); the aliases below fix the common
//! double-precision instantiations.

pub mod benchmarks;
pub mod control;
pub mod field;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod num;
pub mod optimizer;
pub mod surface;

pub type Field = grid::FieldGrid<f64>;
pub type Field32 = grid::FieldGrid<f32>;
pub type Surface = surface::SurfaceSpec<f64>;
pub type Surface32 = surface::SurfaceSpec<f32>;
pub type UnitCell = surface::UnitCellSpec<f64>;
pub type Source = field::SourceModel<f64>;
pub type Problem = optimizer::FitnessProblem<f64>;
