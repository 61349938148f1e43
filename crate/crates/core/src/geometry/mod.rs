//! Point-cloud containers and the spatial primitives shared by every other module.

mod azimuth;
mod cloud;
mod covariance;
mod kdtree;

pub use azimuth::{azimuth, azimuth_bin, AzimuthBinning};
pub use cloud::{
    read_xyz, statistical_outlier_removal, voxel_downsample, write_xyz, Cov3,
    Point3, PointCloud,
};
pub use covariance::{
    estimate_covariances, raw_covariances, regularize_covariance, sample_covariance,
    CovarianceConfig,
};
pub use kdtree::{Neighbor, SpatialIndex};
