//! Two localization schemes built on the scan matcher: scan-to-local-map
//! odometry and scan-to-prior-map localization.

use std::collections::VecDeque;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{
    estimate_covariances, statistical_outlier_removal, voxel_downsample, CovarianceConfig,
    Point3, PointCloud,
};
use crate::matcher::{gauss_newton_align, MatchConfig, TargetMap};
use crate::par::Execution;
use crate::pose::PoseSE3;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Voxel size applied to each incoming scan.
    pub scan_voxel: f64,
    /// Voxel size used to deduplicate the local map.
    pub map_voxel: f64,
    /// Number of registered frames kept in the local map.
    pub window: usize,
    pub covariance: CovarianceConfig,
    pub matching: MatchConfig,
    /// Optional `(k, std_ratio)` statistical outlier removal before matching.
    pub outlier_filter: Option<(usize, f64)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scan_voxel: 0.5,
            map_voxel: 0.5,
            window: 20,
            covariance: CovarianceConfig::default(),
            matching: MatchConfig::default(),
            outlier_filter: None,
        }
    }
}

impl PipelineConfig {
    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.matching.exec = exec;
        self
    }
}

/// Per-frame outcome of a localization run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub iterations: usize,
    pub converged: bool,
    pub correspondences: usize,
    /// Set when matching failed and the pose fell back to the prediction.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationRun {
    pub trajectory: Trajectory,
    pub frames: Vec<FrameReport>,
}

impl LocalizationRun {
    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|f| f.failure.is_some()).count()
    }
}

/// Downsampled scan with covariances, ready for matching.
pub fn preprocess_scan(scan: &PointCloud, cfg: &PipelineConfig) -> Result<PointCloud> {
    let mut cloud = voxel_downsample(scan, cfg.scan_voxel)?;
    if let Some((k, ratio)) = cfg.outlier_filter {
        cloud = statistical_outlier_removal(&cloud, k, ratio)?;
    }
    estimate_covariances(&cloud, &cfg.covariance, cfg.matching.exec)
}

fn register(source: &Result<PointCloud>, target: &TargetMap, seed: &PoseSE3, cfg: &PipelineConfig) -> (PoseSE3, FrameReport) {
    let outcome = match source {
        Ok(src) => gauss_newton_align(src, target, seed, &cfg.matching),
        Err(e) => Err(Error::Analysis(e.to_string())),
    };
    match outcome {
        Ok(m) => (
            m.pose,
            FrameReport {
                iterations: m.iterations,
                converged: m.converged,
                correspondences: m.system.terms.len(),
                failure: None,
            },
        ),
        Err(e) => (
            *seed,
            FrameReport {
                iterations: 0,
                converged: false,
                correspondences: 0,
                failure: Some(e.to_string()),
            },
        ),
    }
}

/// Sliding window of registered scans in world coordinates. The target is
/// rebuilt from their union each frame, so its covariances describe the merged
/// surface rather than any single scan's sampling pattern.
struct LocalMap {
    frames: VecDeque<Vec<Point3>>,
    window: usize,
}

impl LocalMap {
    fn push(&mut self, scan: &PointCloud, pose: &PoseSE3) {
        self.frames.push_back(scan.points().iter().map(|p| pose.transform_point(p)).collect());
        while self.frames.len() > self.window {
            self.frames.pop_front();
        }
    }

    fn target(&self, cfg: &PipelineConfig) -> Result<TargetMap> {
        let pts: Vec<Point3> = self.frames.iter().flatten().copied().collect();
        prepare_prior_map(&PointCloud::from_parts_unchecked(pts, None), cfg)
    }
}

/// Scan-to-local-map odometry. The first frame defines the world origin; each
/// later frame is seeded with a constant-velocity prediction and aligned against
/// the union of the last `window` registered frames.
pub fn odometry_run(dataset: &Dataset, cfg: &PipelineConfig) -> Result<LocalizationRun> {
    if dataset.is_empty() {
        return Err(Error::param("dataset has no frames"));
    }
    let mut map = LocalMap {
        frames: VecDeque::new(),
        window: cfg.window.max(1),
    };
    let mut poses: Vec<PoseSE3> = Vec::with_capacity(dataset.len());
    let mut reports = Vec::with_capacity(dataset.len());
    for scan in &dataset.frames {
        let source = preprocess_scan(scan, cfg);
        let prediction = match poses.as_slice() {
            [] => PoseSE3::identity(),
            [only] => *only,
            [.., prev, last] => last.compose(&prev.inverse().compose(last)),
        };
        let (pose, report) = if poses.is_empty() {
            let report = FrameReport {
                iterations: 0,
                converged: true,
                correspondences: 0,
                failure: source.as_ref().err().map(|e| e.to_string()),
            };
            (prediction, report)
        } else {
            match map.target(cfg) {
                Ok(target) => register(&source, &target, &prediction, cfg),
                Err(e) => (
                    prediction,
                    FrameReport {
                        iterations: 0,
                        converged: false,
                        correspondences: 0,
                        failure: Some(e.to_string()),
                    },
                ),
            }
        };
        if let Ok(src) = &source {
            map.push(src, &pose);
        }
        poses.push(pose);
        reports.push(report);
    }
    Ok(LocalizationRun {
        trajectory: Trajectory::new(dataset.stamps.clone(), poses)?,
        frames: reports,
    })
}

/// Builds a matching target from a world-frame map cloud.
pub fn prepare_prior_map(map: &PointCloud, cfg: &PipelineConfig) -> Result<TargetMap> {
    if map.is_empty() {
        return Err(Error::param("prior map is empty"));
    }
    let down = voxel_downsample(map, cfg.map_voxel)?;
    TargetMap::new(estimate_covariances(&down, &cfg.covariance, cfg.matching.exec)?)
}

/// Union of all frames placed at the given poses, voxel-downsampled.
pub fn build_prior_map(dataset: &Dataset, poses: &Trajectory, voxel: f64) -> Result<PointCloud> {
    if dataset.len() != poses.len() {
        return Err(Error::param("dataset and trajectory lengths differ"));
    }
    let pts: Vec<Point3> = dataset
        .frames
        .iter()
        .zip(poses.poses())
        .flat_map(|(f, p)| f.points().iter().map(move |q| p.transform_point(q)))
        .collect();
    voxel_downsample(&PointCloud::from_parts_unchecked(pts, None), voxel)
}

/// Aligns every frame directly against a static prior map, seeding each frame
/// with the previous frame's estimate.
pub fn priormap_localize(dataset: &Dataset, prior_map: &PointCloud, init: &PoseSE3, cfg: &PipelineConfig) -> Result<LocalizationRun> {
    let target = prepare_prior_map(prior_map, cfg)?;
    priormap_localize_prepared(dataset, &target, init, cfg)
}

/// As [`priormap_localize`] with an already prepared map target.
pub fn priormap_localize_prepared(dataset: &Dataset, target: &TargetMap, init: &PoseSE3, cfg: &PipelineConfig) -> Result<LocalizationRun> {
    if dataset.is_empty() {
        return Err(Error::param("dataset has no frames"));
    }
    let mut seed = *init;
    let mut poses = Vec::with_capacity(dataset.len());
    let mut reports = Vec::with_capacity(dataset.len());
    for scan in &dataset.frames {
        let (pose, report) = register(&preprocess_scan(scan, cfg), target, &seed, cfg);
        seed = pose;
        poses.push(pose);
        reports.push(report);
    }
    Ok(LocalizationRun {
        trajectory: Trajectory::new(dataset.stamps.clone(), poses)?,
        frames: reports,
    })
}
