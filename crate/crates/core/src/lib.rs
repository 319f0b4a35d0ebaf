//! Dimension theory of amenable group actions at desk scale.
//!
//! The crate computes Bowen-metric packing, spanning and covering counts on
//! finite surrogates of G-systems, scale-limited Hausdorff measures, Katok
//! spanning numbers, and regression estimators for metric mean dimension and
//! mean Hausdorff dimension. Finite-scale inequalities are exposed as
//! executable checks in [`verify`].
//!
//! Logarithms are natural throughout. Slopes against `|log ε|` are unitless,
//! so the base cancels.

pub mod error;
pub mod estimate;
pub mod group;
pub mod hausdorff;
pub mod metric;
pub mod packing;
pub mod report;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
pub use group::{Element, FiniteWindow, FolnerSequence, GroupSpec};
pub use metric::{DistanceMatrix, MetricSpec, MetricTransform};
pub use packing::{BoundDirection, CountMode, CountQuery, CountReport};
pub use systems::{GSystem, ShiftSystem};

/// Version string embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
