//! Shape statistics of small cells in stationary Poisson line and hyperplane
//! tessellations whose directional distribution is concentrated on `d` atoms.
//!
//! The typical cell of such a tessellation is a parallelepiped whose edge
//! lengths are independent exponentials, so everything here is built on
//! sampling those edge lengths ([`sampler`]), evaluating size and shape
//! functionals on them ([`functionals`]), exact and quadrature-based
//! conditional laws ([`analytic`]) and Monte Carlo studies of the smallest
//! cells ([`experiments`]).

pub mod analytic;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod format;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod special;

pub use error::{Error, Result};
pub use functionals::SizeFunctional;
pub use model::{DirectionAtom, EdgeRates, TessellationModel};
pub use sampler::{SampleStreamSpec, TypicalCell};
