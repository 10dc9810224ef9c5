//! Moebius-invariant knot energy of smooth closed curves in 3-space.
//!
//! The crate is organised around a handful of modules:
//!
//! * [`curve`]: trigonometric curves, sampled curves, arc length, curvature.
//! * [`energy`]: the double-integral energy, its epsilon-truncation and the
//!   open-curve (through infinity) variant.
//! * [`moebius`]: sphere inversions and similarities acting on points and curves.
//! * [`descent`]: discrete energy gradient and a monotone descent driver.
//! * [`topology`]: projection crossing counts and the crossing/energy bounds.
//!
//! All O(N^2) kernels run row-parallel on rayon when the `parallel` feature
//! is enabled (the default) and sequentially otherwise; in both cases rows
//! are reduced in index order so the results are bitwise identical.

pub mod curve;
pub mod descent;
pub mod energy;
mod error;
pub mod moebius;
pub mod par;
pub mod spectral;
pub mod topology;

pub use curve::{CurvatureSample, CurveDocument, ParamCurve, PunctureInfo, SampledCurve};
pub use descent::{DescentConfig, MinimizeTrace, Termination};
pub use energy::{DiagonalMode, EnergyReport, QuadratureConfig};
pub use error::{Error, Result};
pub use moebius::{ExtPoint, MoebiusMap, Primitive};
pub use par::Backend;
pub use topology::{BoundReport, CrossingReport};

/// Points and vectors in R^3.
pub type Vec3 = nalgebra::Vector3<f64>;
