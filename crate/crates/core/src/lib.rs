//! Numerical toolkit for finite metric measure spaces: volume-doubling
//! profiles, dyadic cube hierarchies, maximal functions and Morrey norms,
//! kernel conditions, and spectral checks for Schrodinger-type operators
//! built from graph Laplacians.

pub mod cubes;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod maximal;
pub mod spectral;
pub mod suite;
pub mod report;
pub mod space;
pub mod util;

pub use error::{Error, Result};
pub use report::{Check, Report, RunManifest};
pub use space::{Ball, MetricMeasureSpace, PointId};
