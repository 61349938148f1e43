//! Scan-matching vulnerability analysis and LiDAR spoofing simulation.
//!
//! The crate scores how strongly each point of a LiDAR scan constrains the
//! weakest direction of a GICP scan-matching problem, aggregates those scores
//! into a per-frame vulnerability value over azimuth sectors, picks a roadside
//! spoofer position from the most vulnerable stretch of a route, simulates
//! removal and injection spoofing, and measures the resulting localization error.
//!
//! Modules, roughly bottom-up:
//!
//! - [`geometry`]: point clouds, kd-tree, covariances, voxel grids, azimuth sectors
//! - [`matcher`] / [`pipeline`]: Gauss-Newton GICP and the two localization schemes
//! - [`smvs`]: point-wise and frame-wise vulnerability scores
//! - [`attack`]: removal, salt-and-pepper and wall-injection spoofing
//! - [`placement`]: spoofer placement from a vulnerability profile
//! - [`scene`]: synthetic worlds and raycast datasets
//! - [`metrics`]: APE / RPE and bucket reports
//! - [`experiment`]: end-to-end attack trials used by the CLI and the acceptance suite

pub mod attack;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod kv;
pub mod matcher;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod placement;
pub mod pose;
pub mod scene;
pub mod seed;
pub mod smvs;
pub mod trajectory;

pub use error::{Error, Result};
pub use par::Execution;
pub use pose::{PoseSE3, Twist};
pub use trajectory::Trajectory;
