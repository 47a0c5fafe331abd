//! Anchor-mesh motion for face video forensics.
//!
//! Sparse facial anchors are triangulated once per clip, each triangle's
//! motion between consecutive frames is fitted as a rigid transform, and the
//! resulting dense motion field is fused with RGB features by a multi-head
//! cross attention block. The crate also ships the toy detection pipeline,
//! its loss, a mesh-quality bound and the frame/pixel evaluation metrics.
//!
//! ```
//! use anchormesh::geometry::{estimate_rigid, Point2, Triangle};
//!
//! let src = Triangle::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0));
//! let dst = src.map(|p| p + Point2::new(2.0, 3.0));
//! let fit = estimate_rigid(&src, &dst);
//! assert!((fit.transform.translation - Point2::new(2.0, 3.0)).norm_sq() < 1e-20);
//! ```

pub mod attention;
pub mod cli;
pub mod clipfile;
pub mod error;
pub mod geometry;
pub mod imageio;
pub mod meshing;
pub mod metrics;
pub mod motionfield;
pub mod oracles;
pub mod pipeline;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
