//! Scan matching vulnerability scores.
//!
//! Point-wise: two perturbed clones of a frame are linearized against each other
//! at the identity pose. The eigenvector of the smallest eigenvalue of the global
//! Hessian is the direction the scan constrains least; the eigenvector of the
//! largest eigenvalue of a point's local Hessian is the direction that point
//! constrains most. Their absolute dot product is the point's importance.
//!
//! Frame-wise: importances are summed per azimuth sector, the heaviest sector is
//! taken as the aim point, and every sector contributes its score weighted by
//! `d_th − d`, where `d` is the circular sector distance to the aim point.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{azimuth_bin, estimate_covariances, voxel_downsample, AzimuthBinning, CovarianceConfig, Point3, PointCloud};
use crate::matcher::{linearize, TargetMap};
use crate::par::{map_indexed, Execution};
use crate::pose::PoseSE3;
use crate::seed::{derive_seed, rng_for, stream};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloneParams {
    /// Per-axis Gaussian noise, meters.
    pub sigma: f64,
    /// Fraction of points kept in each clone, in (0, 1].
    pub keep_ratio: f64,
    pub seed: u64,
}

impl Default for CloneParams {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            keep_ratio: 0.9,
            seed: 0,
        }
    }
}

fn make_clone(frame: &PointCloud, params: &CloneParams, stream_id: u64, cov: &CovarianceConfig, exec: Execution) -> Result<PointCloud> {
    let mut rng = rng_for(params.seed, stream_id, 0);
    let n = frame.len();
    let m = ((params.keep_ratio * n as f64).round() as usize).clamp(1, n);
    let mut idx = sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    let mut pts: Vec<Point3> = idx.iter().map(|&i| frame.points()[i]).collect();
    if params.sigma > 0.0 {
        let noise = Normal::new(0.0, params.sigma).map_err(|e| Error::param(e.to_string()))?;
        for p in &mut pts {
            for c in p.iter_mut() {
                *c += noise.sample(&mut rng);
            }
        }
    }
    let cov = CovarianceConfig { k: cov.k.min(m), ..*cov };
    estimate_covariances(&PointCloud::from_parts_unchecked(pts, None), &cov, exec)
}

/// Source and target clones of `frame`, each subsampled, jittered, and given covariances.
pub fn perturbed_clones(frame: &PointCloud, params: &CloneParams, cov: &CovarianceConfig, exec: Execution) -> Result<(PointCloud, PointCloud)> {
    if frame.is_empty() {
        return Err(Error::param("cannot clone an empty frame"));
    }
    if !(params.sigma >= 0.0) || !(params.keep_ratio > 0.0 && params.keep_ratio <= 1.0) {
        return Err(Error::param("clone parameters out of range"));
    }
    let source = make_clone(frame, params, stream::CLONE_SOURCE, cov, exec)?;
    let target = make_clone(frame, params, stream::CLONE_TARGET, cov, exec)?;
    Ok((source, target))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseConfig {
    pub max_corr_dist: f64,
    /// When set, rotation rows/columns of every Hessian are scaled by this
    /// length (meters per radian) before eigenanalysis.
    pub rotation_scale: Option<f64>,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        Self {
            max_corr_dist: 2.0,
            rotation_scale: None,
        }
    }
}

/// Per-point importances of a source clone.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceCloud {
    /// Source clone points, sensor frame.
    pub points: Vec<Point3>,
    /// Importance in [0, 1]; zero for points without a correspondence.
    pub importance: Vec<f64>,
    pub lambda_min: f64,
    pub x_min: Vector6<f64>,
    /// Largest local eigenpair per point, `None` without a correspondence.
    pub local_max: Vec<Option<(f64, Vector6<f64>)>>,
    /// The smallest global eigenvalue is repeated within 1e-6 relative.
    pub near_degenerate: bool,
}

impl ImportanceCloud {
    pub fn total(&self) -> f64 {
        self.importance.iter().sum()
    }

    /// `x y z I` lines for visualization.
    pub fn to_xyzi_string(&self) -> String {
        let mut s = String::new();
        for (p, i) in self.points.iter().zip(&self.importance) {
            let _ = writeln!(s, "{} {} {} {}", p.x, p.y, p.z, i);
        }
        s
    }
}

/// Flips `v` so that its first nonzero component is positive.
pub fn canonical_sign(v: &Vector6<f64>) -> Vector6<f64> {
    match v.iter().find(|c| **c != 0.0) {
        Some(c) if *c < 0.0 => -v,
        _ => *v,
    }
}

fn lex_greater(a: &Vector6<f64>, b: &Vector6<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x != y {
            return x > y;
        }
    }
    false
}

/// Eigenpairs of a symmetric 6×6 matrix sorted by ascending eigenvalue, vectors sign-canonicalized.
pub fn sorted_eigenpairs(h: &Matrix6<f64>) -> Vec<(f64, Vector6<f64>)> {
    let eig = SymmetricEigen::new(*h);
    let mut pairs: Vec<(f64, Vector6<f64>)> = (0..6)
        .map(|j| (eig.eigenvalues[j], canonical_sign(&eig.eigenvectors.column(j).into_owned())))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

fn degenerate_tol(a: f64, b: f64) -> f64 {
    1e-6 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Smallest eigenpair with a deterministic choice inside a repeated cluster.
fn min_eigenpair(h: &Matrix6<f64>) -> (f64, Vector6<f64>, bool) {
    let pairs = sorted_eigenpairs(h);
    let lambda = pairs[0].0;
    let cluster: Vec<&(f64, Vector6<f64>)> = pairs.iter().filter(|p| p.0 - lambda <= degenerate_tol(lambda, p.0)).collect();
    let mut best = cluster[0];
    for c in &cluster[1..] {
        if lex_greater(&c.1, &best.1) {
            best = c;
        }
    }
    (best.0, best.1, cluster.len() > 1)
}

fn max_eigenpair(h: &Matrix6<f64>) -> (f64, Vector6<f64>) {
    let pairs = sorted_eigenpairs(h);
    pairs[5]
}

fn scale_rotation(h: &Matrix6<f64>, scale: Option<f64>) -> Matrix6<f64> {
    match scale {
        None => *h,
        Some(l) => {
            let s = Matrix6::from_diagonal(&Vector6::new(1.0 / l, 1.0 / l, 1.0 / l, 1.0, 1.0, 1.0));
            s * h * s
        }
    }
}

/// Point-wise importance of every source point at the identity pose.
pub fn pointwise_smvs(source: &PointCloud, target: &PointCloud, cfg: &PointwiseConfig, exec: Execution) -> Result<ImportanceCloud> {
    let target_map = TargetMap::new(target.clone())?;
    let sys = linearize(source, &target_map, &PoseSE3::identity(), cfg.max_corr_dist, exec).map_err(|e| match e {
        Error::DegenerateLinearization => Error::Analysis("no correspondences between clones".into()),
        other => other,
    })?;
    let (lambda_min, x_min, near_degenerate) = min_eigenpair(&scale_rotation(&sys.h_global, cfg.rotation_scale));
    let mut local_max = vec![None; source.len()];
    let maxima = map_indexed(&sys.terms, exec, |_, t| max_eigenpair(&scale_rotation(&t.hessian, cfg.rotation_scale)));
    for (t, m) in sys.terms.iter().zip(maxima) {
        local_max[t.source] = Some(m);
    }
    let importance = local_max
        .iter()
        .map(|m| m.map_or(0.0, |(_, x)| x_min.dot(&x).abs().min(1.0)))
        .collect();
    Ok(ImportanceCloud {
        points: source.points().to_vec(),
        importance,
        lambda_min,
        x_min,
        local_max,
        near_degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionHistogram {
    pub scores: Vec<f64>,
    pub k_center: usize,
}

impl RegionHistogram {
    /// Builds a histogram; the center is the heaviest sector, smallest index on ties.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut k_center = 0;
        for (k, s) in scores.iter().enumerate() {
            if *s > scores[k_center] {
                k_center = k;
            }
        }
        Self { scores, k_center }
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSmvs {
    pub value: f64,
    pub k_center: usize,
    pub d_th: usize,
}

/// `Σ_k score_k · (d_th − d_k)` with circular sector distances to the heaviest sector.
pub fn smvs_from_histogram(hist: &RegionHistogram, binning: &AzimuthBinning, d_th: usize) -> Result<FrameSmvs> {
    if hist.scores.len() != binning.n() {
        return Err(Error::param("histogram size does not match the binning"));
    }
    if d_th > binning.n() / 2 {
        return Err(Error::param(format!("d_th={d_th} exceeds half the region count")));
    }
    let value = hist
        .scores
        .iter()
        .enumerate()
        .map(|(k, s)| s * (d_th as f64 - binning.circular_distance(hist.k_center, k) as f64))
        .sum();
    Ok(FrameSmvs {
        value,
        k_center: hist.k_center,
        d_th,
    })
}

/// Sector histogram of importances over the points' azimuths.
pub fn region_histogram(points: &[Point3], importance: &[f64], binning: &AzimuthBinning) -> Result<RegionHistogram> {
    let mut scores = vec![0.0; binning.n()];
    let mut binned = 0;
    for (p, i) in points.iter().zip(importance) {
        if let Ok(k) = azimuth_bin(p, binning) {
            scores[k] += i;
            binned += 1;
        }
    }
    if binned == 0 && !points.is_empty() {
        return Err(Error::Analysis("no point has a defined azimuth".into()));
    }
    if points.is_empty() {
        return Err(Error::Analysis("no points to bin".into()));
    }
    Ok(RegionHistogram::from_scores(scores))
}

pub fn framewise_smvs(imp: &ImportanceCloud, binning: &AzimuthBinning, d_th: usize) -> Result<(FrameSmvs, RegionHistogram)> {
    if d_th > binning.n() / 2 {
        return Err(Error::param(format!("d_th={d_th} exceeds half the region count")));
    }
    let hist = region_histogram(&imp.points, &imp.importance, binning)?;
    Ok((smvs_from_histogram(&hist, binning, d_th)?, hist))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmvsConfig {
    pub n_regions: usize,
    pub d_th: usize,
    pub clone_sigma: f64,
    pub keep_ratio: f64,
    /// Voxel size applied to each frame before cloning; `None` analyzes raw frames.
    pub voxel: Option<f64>,
    pub covariance: CovarianceConfig,
    pub pointwise: PointwiseConfig,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for SmvsConfig {
    fn default() -> Self {
        Self {
            n_regions: 72,
            d_th: 8,
            clone_sigma: 0.01,
            keep_ratio: 0.9,
            voxel: Some(0.5),
            covariance: CovarianceConfig::default(),
            pointwise: PointwiseConfig::default(),
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub frame_id: usize,
    pub timestamp: f64,
    pub smvs: FrameSmvs,
    /// Absent when the entry was read back from CSV.
    pub histogram: Option<RegionHistogram>,
    pub pose: PoseSE3,
    pub near_degenerate: bool,
}

/// Frame-wise scores along a route.
#[derive(Debug, Clone, PartialEq)]
pub struct SmvsProfile {
    pub n_regions: usize,
    pub d_th: usize,
    pub entries: Vec<ProfileEntry>,
    /// Frames that could not be analyzed, with the reason.
    pub gaps: Vec<(usize, String)>,
}

/// Analysis of one frame, also used by [`trajectory_smvs`].
pub fn analyze_frame(frame: &PointCloud, cfg: &SmvsConfig, seed: u64, exec: Execution) -> Result<(ImportanceCloud, FrameSmvs, RegionHistogram)> {
    let binning = AzimuthBinning::new(cfg.n_regions)?;
    let frame = match cfg.voxel {
        Some(v) => voxel_downsample(frame, v)?,
        None => frame.clone(),
    };
    let params = CloneParams {
        sigma: cfg.clone_sigma,
        keep_ratio: cfg.keep_ratio,
        seed,
    };
    let (source, target) = perturbed_clones(&frame, &params, &cfg.covariance, exec)?;
    let imp = pointwise_smvs(&source, &target, &cfg.pointwise, exec)?;
    let (smvs, hist) = framewise_smvs(&imp, &binning, cfg.d_th)?;
    Ok((imp, smvs, hist))
}

/// Scores every frame, attaching the benign world pose of that frame.
pub fn trajectory_smvs(dataset: &Dataset, benign: &Trajectory, cfg: &SmvsConfig) -> Result<SmvsProfile> {
    if dataset.len() != benign.len() {
        return Err(Error::param(format!("{} frames but {} benign poses", dataset.len(), benign.len())));
    }
    AzimuthBinning::new(cfg.n_regions)?;
    if cfg.d_th > cfg.n_regions / 2 {
        return Err(Error::param("d_th exceeds half the region count"));
    }
    // frames fan out; each frame's inner work stays sequential
    let inner = if cfg.exec.is_parallel() { Execution::Sequential } else { cfg.exec };
    let results = map_indexed(&dataset.frames, cfg.exec, |i, frame| {
        analyze_frame(frame, cfg, derive_seed(cfg.seed, stream::CLONE_SOURCE, i as u64), inner)
    });
    let mut entries = Vec::new();
    let mut gaps = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((imp, smvs, hist)) => entries.push(ProfileEntry {
                frame_id: i,
                timestamp: dataset.stamps[i],
                smvs,
                histogram: Some(hist),
                pose: benign.poses()[i],
                near_degenerate: imp.near_degenerate,
            }),
            Err(e) => gaps.push((i, e.to_string())),
        }
    }
    Ok(SmvsProfile {
        n_regions: cfg.n_regions,
        d_th: cfg.d_th,
        entries,
        gaps,
    })
}

const PROFILE_HEADER: &str = "frame_id,timestamp,smvs,k_center,tx,ty,tz,qx,qy,qz,qw";

impl SmvsProfile {
    pub fn binning(&self) -> Result<AzimuthBinning> {
        AzimuthBinning::new(self.n_regions)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# n_regions={} d_th={}\n{PROFILE_HEADER}\n", self.n_regions, self.d_th);
        for e in &self.entries {
            let t = e.pose.translation;
            let q = e.pose.quaternion_xyzw();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.frame_id, e.timestamp, e.smvs.value, e.smvs.k_center, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
            );
        }
        for (i, why) in &self.gaps {
            let _ = writeln!(s, "# gap frame={i}: {why}");
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut n_regions = 72;
        let mut d_th = 8;
        let mut entries = Vec::new();
        let mut gaps = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim();
                if let Some(rest) = c.strip_prefix("gap frame=") {
                    if let Some((i, why)) = rest.split_once(':') {
                        gaps.push((i.parse().map_err(|_| perr(no + 1, "bad gap line".into()))?, why.trim().to_string()));
                    }
                    continue;
                }
                for tok in c.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("n_regions=") {
                        n_regions = v.parse().map_err(|_| perr(no + 1, "bad n_regions".into()))?;
                    } else if let Some(v) = tok.strip_prefix("d_th=") {
                        d_th = v.parse().map_err(|_| perr(no + 1, "bad d_th".into()))?;
                    }
                }
                continue;
            }
            if line.is_empty() || line == PROFILE_HEADER {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(perr(no + 1, format!("expected 11 columns, found {}", f.len())));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| perr(no + 1, format!("cannot parse {:?}", f[i])));
            let frame_id = f[0].parse().map_err(|_| perr(no + 1, "bad frame_id".into()))?;
            let k_center = f[3].parse().map_err(|_| perr(no + 1, "bad k_center".into()))?;
            entries.push(ProfileEntry {
                frame_id,
                timestamp: num(1)?,
                smvs: FrameSmvs {
                    value: num(2)?,
                    k_center,
                    d_th,
                },
                histogram: None,
                pose: PoseSE3::from_parts([num(4)?, num(5)?, num(6)?], [num(7)?, num(8)?, num(9)?, num(10)?]),
                near_degenerate: false,
            });
        }
        Ok(Self {
            n_regions,
            d_th,
            entries,
            gaps,
        })
    }

    /// Entry with the highest frame-wise score (earliest on ties).
    pub fn peak(&self) -> Option<&ProfileEntry> {
        self.entries.iter().fold(None, |best: Option<&ProfileEntry>, e| match best {
            Some(b) if b.smvs.value >= e.smvs.value => Some(b),
            _ => Some(e),
        })
    }

    /// Entry with the lowest frame-wise score (earliest on ties).
    pub fn trough(&self) -> Option<&ProfileEntry> {
        self.entries.iter().fold(None, |best: Option<&ProfileEntry>, e| match best {
            Some(b) if b.smvs.value <= e.smvs.value => Some(b),
            _ => Some(e),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n).map(|_| Point3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-1.0..3.0))).collect()).unwrap()
    }

    #[test]
    fn identity_clone_parameters() {
        let frame = random_frame(100, 1);
        let p = CloneParams { sigma: 0.0, keep_ratio: 1.0, seed: 4 };
        let (s, t) = perturbed_clones(&frame, &p, &CovarianceConfig::default(), Execution::Sequential).unwrap();
        assert_eq!(s.points(), frame.points());
        assert_eq!(t.points(), frame.points());
    }

    #[test]
    fn clone_sizes_and_determinism() {
        let frame = random_frame(1000, 2);
        let p = CloneParams { sigma: 0.01, keep_ratio: 0.9, seed: 9 };
        let (s, t) = perturbed_clones(&frame, &p, &CovarianceConfig::default(), Execution::Sequential).unwrap();
        assert_eq!(s.len(), 900);
        assert_eq!(t.len(), 900);
        assert_ne!(s.points(), t.points());
        let (s2, t2) = perturbed_clones(&frame, &p, &CovarianceConfig::default(), Execution::Parallel).unwrap();
        assert_eq!(s, s2);
        assert_eq!(t, t2);
        assert!(perturbed_clones(&PointCloud::default(), &p, &CovarianceConfig::default(), Execution::Sequential).is_err());
    }

    #[test]
    fn importances_are_bounded() {
        let frame = random_frame(300, 3);
        let (s, t) = perturbed_clones(&frame, &CloneParams::default(), &CovarianceConfig::default(), Execution::Sequential).unwrap();
        let imp = pointwise_smvs(&s, &t, &PointwiseConfig::default(), Execution::Sequential).unwrap();
        assert!(imp.importance.iter().all(|&i| (0.0..=1.0).contains(&i)));
        assert!((imp.x_min.norm() - 1.0).abs() < 1e-12);
    }

    fn single_point_cloud(theta_deg: f64, i: f64) -> (Point3, f64) {
        let t = theta_deg.to_radians();
        (Point3::new(t.cos(), t.sin(), 0.0), i)
    }

    fn smvs_of(pairs: &[(Point3, f64)]) -> f64 {
        let b = AzimuthBinning::new(72).unwrap();
        let pts: Vec<Point3> = pairs.iter().map(|p| p.0).collect();
        let imp: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let hist = region_histogram(&pts, &imp, &b).unwrap();
        smvs_from_histogram(&hist, &b, 8).unwrap().value
    }

    #[test]
    fn closed_forms() {
        let s = 0.37;
        assert_eq!(smvs_of(&[single_point_cloud(2.5, s)]), 8.0 * s);
        let (s1, s2) = (0.8, 0.3);
        assert_eq!(smvs_of(&[single_point_cloud(2.5, s1), single_point_cloud(7.5, s2)]), 8.0 * s1 + 7.0 * s2);
        let uniform: Vec<(Point3, f64)> = (0..72).map(|k| single_point_cloud(-180.0 + 5.0 * k as f64 + 2.5, 0.25)).collect();
        assert!((smvs_of(&uniform) - (-720.0 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn histogram_errors() {
        let b = AzimuthBinning::new(72).unwrap();
        assert!(matches!(region_histogram(&[Point3::new(0.0, 0.0, 1.0)], &[1.0], &b), Err(Error::Analysis(_))));
        let hist = RegionHistogram::from_scores(vec![0.0; 72]);
        assert!(smvs_from_histogram(&hist, &b, 37).is_err());
    }

    #[test]
    fn center_ties_pick_smallest_index() {
        let mut scores = vec![0.0; 8];
        scores[3] = 1.0;
        scores[6] = 1.0;
        assert_eq!(RegionHistogram::from_scores(scores).k_center, 3);
    }

    #[test]
    fn csv_roundtrip() {
        let profile = SmvsProfile {
            n_regions: 72,
            d_th: 8,
            entries: vec![ProfileEntry {
                frame_id: 3,
                timestamp: 0.3,
                smvs: FrameSmvs { value: -123.5, k_center: 40, d_th: 8 },
                histogram: None,
                pose: PoseSE3::from_xyz_yaw(1.0, 2.0, 1.8, 0.4),
                near_degenerate: false,
            }],
            gaps: vec![(4, "analysis failed: x".into())],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        profile.write_csv(&p).unwrap();
        let back = SmvsProfile::read_csv(&p).unwrap();
        assert_eq!(back.entries.len(), 1);
        assert_eq!(back.gaps, profile.gaps);
        assert_eq!(back.entries[0].smvs, profile.entries[0].smvs);
        assert!((back.entries[0].pose.translation - profile.entries[0].pose.translation).norm() < 1e-12);
    }
}
