//! Subframework-based distance rigidity for multi-robot networks.
//!
//! The crate is organized bottom-up:
//!
//! * [`graph`]: undirected graphs, hop geodesics and the disk-proximity model.
//! * [`rigidity`]: rigidity matrices, the rigidity eigenvalue and the
//!   diameter bound.
//! * [`subframework`]: hop-limited subframeworks, rigidity extents and the
//!   communication-load metric.
//! * [`control`]: the rigidity-maintenance gradient controller.
//! * [`localization`]: per-robot range-only position filters.
//! * [`simnet`]: the synchronous message-passing engine that runs the
//!   controller and the filters in a decentralized way.

pub mod error;
pub mod graph;
pub mod rigidity;
pub mod subframework;
pub mod control;
pub mod localization;
pub mod simnet;

pub use error::{Error, Result};
pub use graph::{GeodesicTable, Graph};
pub use rigidity::{Framework, RigidityEigenpair, RigidityReport};
pub use subframework::{ExtentAssignment, LoadReport, Subframework};
pub use control::{ControlParams, ControlState};
pub use localization::FilterState;
pub use simnet::{SimParams, World};

