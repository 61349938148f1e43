use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::SpatialIndex;
use crate::error::{Error, Result};

/// A point in meters, right-handed sensor frame (x forward, y left, z up).
pub type Point3 = Vector3<f64>;
/// A 3×3 covariance in m².
pub type Cov3 = Matrix3<f64>;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    covariances: Option<Vec<Cov3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::param(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self {
            points,
            covariances: None,
        })
    }

    pub fn with_covariances(points: Vec<Point3>, covariances: Vec<Cov3>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.set_covariances(covariances)?;
        Ok(cloud)
    }

    pub fn set_covariances(&mut self, covariances: Vec<Cov3>) -> Result<()> {
        if covariances.len() != self.points.len() {
            return Err(Error::param(format!(
                "{} covariances for {} points",
                covariances.len(),
                self.points.len()
            )));
        }
        for (i, c) in covariances.iter().enumerate() {
            let asym = (c - c.transpose()).amax();
            if !(asym <= SYMMETRY_TOL * c.amax().max(1.0)) {
                return Err(Error::param(format!("covariance {i} is not symmetric")));
            }
            let min_eig = c.symmetric_eigenvalues().min();
            if min_eig < -1e-9 * c.amax().max(1.0) {
                return Err(Error::param(format!("covariance {i} is not PSD")));
            }
        }
        self.covariances = Some(covariances);
        Ok(())
    }

    /// Builds a cloud without validation. Callers guarantee finiteness.
    pub(crate) fn from_parts_unchecked(points: Vec<Point3>, covariances: Option<Vec<Cov3>>) -> Self {
        Self {
            points,
            covariances,
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn covariances(&self) -> Option<&[Cov3]> {
        self.covariances.as_deref()
    }

    pub fn has_covariances(&self) -> bool {
        self.covariances.is_some()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn without_covariances(&self) -> PointCloud {
        Self::from_parts_unchecked(self.points.clone(), None)
    }
}

type VoxelKey = (i64, i64, i64);

fn voxel_key(p: &Point3, inv: f64) -> VoxelKey {
    (
        (p.x * inv).floor() as i64,
        (p.y * inv).floor() as i64,
        (p.z * inv).floor() as i64,
    )
}

/// Replaces the points of each occupied voxel by their centroid.
///
/// Output order follows the first occurrence of each voxel in the input.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0) || !voxel.is_finite() {
        return Err(Error::param(format!("voxel size must be positive, got {voxel}")));
    }
    let inv = 1.0 / voxel;
    let mut slots: HashMap<VoxelKey, usize> = HashMap::with_capacity(cloud.len());
    let mut acc: Vec<(Point3, usize)> = Vec::new();
    for p in cloud.points() {
        let slot = *slots.entry(voxel_key(p, inv)).or_insert_with(|| {
            acc.push((Point3::zeros(), 0));
            acc.len() - 1
        });
        acc[slot].0 += p;
        acc[slot].1 += 1;
    }
    let points = acc.into_iter().map(|(s, n)| s / n as f64).collect();
    Ok(PointCloud::from_parts_unchecked(points, None))
}

/// Drops points whose mean distance to their `k` nearest neighbors exceeds
/// `mean + std_ratio * std` over the whole cloud.
pub fn statistical_outlier_removal(cloud: &PointCloud, k: usize, std_ratio: f64) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if cloud.len() <= k {
        return Ok(cloud.clone());
    }
    let index = SpatialIndex::new(cloud.points().to_vec());
    let mean_dist: Vec<f64> = cloud
        .points()
        .iter()
        .map(|p| {
            let nn = index.knn(p, k + 1).expect("index is non-empty");
            nn.iter().skip(1).map(|n| n.distance).sum::<f64>() / k as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let sd = (mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let limit = mu + std_ratio * sd;
    let keep: Vec<usize> = (0..cloud.len()).filter(|&i| mean_dist[i] <= limit).collect();
    let points = keep.iter().map(|&i| cloud.points()[i]).collect();
    let covs = cloud
        .covariances()
        .map(|c| keep.iter().map(|&i| c[i]).collect());
    Ok(PointCloud::from_parts_unchecked(points, covs))
}

/// Reads an ASCII cloud: one `x y z` triple per line, `#` comments allowed.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields[..3]) {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(format!("cannot parse {f:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value {f:?}")));
            }
            *slot = v;
        }
        points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(PointCloud::from_parts_unchecked(points, None))
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(cloud.len() * 32);
    for p in cloud.points() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_corners_collapse_to_center() {
        let mut pts = Vec::new();
        for &x in &[0.1, 0.5] {
            for &y in &[0.1, 0.5] {
                for &z in &[0.1, 0.5] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        let out = voxel_downsample(&PointCloud::new(pts).unwrap(), 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.points()[0] - Point3::new(0.3, 0.3, 0.3)).norm() < 1e-12);
    }

    #[test]
    fn empty_and_bad_voxel() {
        let empty = PointCloud::default();
        assert!(voxel_downsample(&empty, 0.5).unwrap().is_empty());
        assert!(matches!(voxel_downsample(&empty, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(voxel_downsample(&empty, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn downsample_matches_bucket_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..1000)
            .map(|_| Point3::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let out = voxel_downsample(&PointCloud::new(pts.clone()).unwrap(), 0.5).unwrap();

        // oracle: sort points into buckets by integer key, average each bucket
        let mut buckets: std::collections::BTreeMap<(i64, i64, i64), Vec<Point3>> = Default::default();
        for p in &pts {
            let k = ((p.x / 0.5).floor() as i64, (p.y / 0.5).floor() as i64, (p.z / 0.5).floor() as i64);
            buckets.entry(k).or_default().push(*p);
        }
        let mut expected: Vec<Point3> = buckets
            .values()
            .map(|b| b.iter().fold(Point3::zeros(), |a, p| a + p) / b.len() as f64)
            .collect();
        let mut got = out.points().to_vec();
        let key = |p: &Point3| (p.x, p.y, p.z);
        expected.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        assert_eq!(expected.len(), got.len());
        for (e, g) in expected.iter().zip(&got) {
            assert!((e - g).amax() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_covariances() {
        let pts = vec![Point3::zeros(); 2];
        assert!(PointCloud::with_covariances(pts.clone(), vec![Cov3::identity()]).is_err());
        let mut asym = Cov3::identity();
        asym[(0, 1)] = 0.1;
        assert!(PointCloud::with_covariances(pts.clone(), vec![asym, Cov3::identity()]).is_err());
        let neg = -Cov3::identity();
        assert!(PointCloud::with_covariances(pts.clone(), vec![neg, Cov3::identity()]).is_err());
        assert!(PointCloud::with_covariances(pts, vec![Cov3::identity(); 2]).is_ok());
        assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn xyz_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.xyz");
        let cloud = PointCloud::new(vec![Point3::new(1.5, -2.0, 0.1), Point3::new(1e-7, 3.0, 4.0)]).unwrap();
        write_xyz(&path, &cloud).unwrap();
        assert_eq!(read_xyz(&path).unwrap(), cloud);

        std::fs::write(&path, "# header\n1 2 3\n\n4 nan 6\n").unwrap();
        match read_xyz(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "1 2\n").unwrap();
        assert!(matches!(read_xyz(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn outlier_filter_drops_far_point() {
        let mut pts: Vec<Point3> = (0..50).map(|i| Point3::new((i % 10) as f64 * 0.1, (i / 10) as f64 * 0.1, 0.0)).collect();
        pts.push(Point3::new(50.0, 50.0, 50.0));
        let out = statistical_outlier_removal(&PointCloud::new(pts).unwrap(), 5, 2.0).unwrap();
        assert_eq!(out.len(), 50);
    }
}
