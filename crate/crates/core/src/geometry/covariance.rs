use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{Cov3, Point3, PointCloud, SpatialIndex};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceConfig {
    /// Neighbors used per point, including the point itself.
    pub k: usize,
    /// Smallest regularized eigenvalue.
    pub epsilon: f64,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self { k: 20, epsilon: 1e-3 }
    }
}

/// Unbiased sample covariance of a point set.
pub fn sample_covariance(points: &[Point3]) -> Cov3 {
    let n = points.len();
    if n < 2 {
        return Cov3::zeros();
    }
    let mean = points.iter().fold(Point3::zeros(), |a, p| a + p) / n as f64;
    let mut c = Cov3::zeros();
    for p in points {
        let d = p - mean;
        c += d * d.transpose();
    }
    c / (n - 1) as f64
}

/// Replaces the spectrum with `(1, 1, epsilon)` in descending eigenvector order.
pub fn regularize_covariance(cov: &Cov3, epsilon: f64) -> Cov3 {
    let eig = SymmetricEigen::new(*cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let v = Matrix3::from_columns(&[
        eig.eigenvectors.column(idx[0]).into_owned(),
        eig.eigenvectors.column(idx[1]).into_owned(),
        eig.eigenvectors.column(idx[2]).into_owned(),
    ]);
    let c = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, epsilon)) * v.transpose();
    (c + c.transpose()) * 0.5
}

/// Sample covariance of each point's `k` nearest neighbors, before regularization.
pub fn raw_covariances(cloud: &PointCloud, k: usize, exec: Execution) -> Result<Vec<Cov3>> {
    if k < 4 {
        return Err(Error::param(format!("covariance neighborhood k={k} must be at least 4")));
    }
    if cloud.len() < k {
        return Err(Error::param(format!(
            "cloud has {} points, covariance estimation needs at least k={k}",
            cloud.len()
        )));
    }
    let index = SpatialIndex::new(cloud.points().to_vec());
    Ok(map_indexed(cloud.points(), exec, |_, p| {
        let mut nn = Vec::with_capacity(k + 1);
        index.knn_into(p, k, &mut nn).expect("index is non-empty");
        let neigh: Vec<Point3> = nn.iter().map(|&(_, id)| index.points()[id]).collect();
        sample_covariance(&neigh)
    }))
}

/// Attaches regularized plane-like covariances to every point.
pub fn estimate_covariances(cloud: &PointCloud, cfg: &CovarianceConfig, exec: Execution) -> Result<PointCloud> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::param("covariance epsilon must be positive"));
    }
    let raw = raw_covariances(cloud, cfg.k, exec)?;
    let covs = raw.iter().map(|c| regularize_covariance(c, cfg.epsilon)).collect();
    Ok(PointCloud::from_parts_unchecked(cloud.points().to_vec(), Some(covs)))
}
