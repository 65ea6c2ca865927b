//! Magnetic vector potentials in several gauges, their X-ray transforms, and
//! the high-energy behaviour of the magnetic scattering operator.
//!
//! Units follow the usual convention `ħ = e = 1`; the particle mass is a
//! runtime parameter. Planar problems are embedded in three dimensions: a
//! planar field `B` is stored as `(0, 0, B)` and planar vectors have a zero
//! third component, so the same cross products serve both cases.

pub mod error;
pub mod fft;
pub mod field_models;
pub mod gauges;
pub mod grid;
pub mod propagator;
pub mod quadrature;
pub mod report;
pub mod scattering_phase;
pub mod vec3;
pub mod xray;

pub use error::{Error, Result};
pub use field_models::{Dim, FieldModel, ScalarPotentialModel};
pub use gauges::{GaugeFunction, GaugeKind, Mollifier, VectorPotential};
pub use grid::{GridSpec, SampledField};
pub use vec3::Vec3;
