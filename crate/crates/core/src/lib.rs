//! Lidar odometry toolkit.
//!
//! The crate covers the full chain from raw multi-lidar scans to a pose
//! estimate: de-skew, merge and body filtering, an adaptive voxel filter
//! that holds the downsampled point count near a target, normal estimation,
//! and plane-to-plane GICP whose per-point covariances are rebuilt in closed
//! form from stored normals. Maps are kept bounded by a robot-centered
//! sliding window backed either by a double-buffered octree or by an
//! incremental kd-tree.
//!
//! A ray-cast simulator and an evaluation harness (`loam-kit` binary) are
//! included for synthetic benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod index;

pub use error::{Error, Result};
pub mod config;
pub mod eval;
pub mod map;
pub mod normals;
mod parallel;
pub mod pipeline;
pub mod preprocess;
pub mod registration;
pub mod sim;
