//! Render-and-compare 6D pose refinement on a soft rasterizer.
//!
//! The crate is `no_std` (with `alloc`): it holds the geometry, the differentiable renderer,
//! the self-supervision losses, the pose metrics, the refinement loop and a synthetic scene
//! factory. File formats and the command line live in the `softpose` crate.

#![no_std]
// float math comes from `num_traits::Float`, but std's inherent methods take over whenever
// std is linked into the build graph and leave those imports unused
#![allow(unused_imports)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod primitives;
pub mod render;
pub mod scene;
pub mod spatial;

pub use error::{Error, Result};
pub use geometry::{Camera, DepthMap, Mask, Plane, PointCloud, Pose, RgbImage, SymmetrySet, TriMesh, POSE_DIM};
pub use render::{grad_render, render, RenderConfig, RenderCotangents, RenderOutput};
