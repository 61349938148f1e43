//! Attack trials on a synthetic course.
//!
//! A trial re-simulates a fixed-length stretch of the route around the spoofer
//! with its own sensor-noise seed, attacks it, localizes it with one of the two
//! pipelines, and scores the result against ground truth.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::Vector2;
use rand::Rng;

use crate::attack::{attack_dataset, AttackSpec, SpooferState};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::AzimuthBinning;
use crate::matcher::TargetMap;
use crate::metrics::{ape, ApeMode, ApeStats};
use crate::par::{map_indexed, Execution};
use crate::pipeline::{build_prior_map, odometry_run, prepare_prior_map, priormap_localize_prepared, LocalizationRun, PipelineConfig};
use crate::scene::{generate_dataset, raycast_frame, Scene, SensorModel, TrajectorySpec};
use crate::seed::{derive_seed, rng_for, stream};
use crate::smvs::ProfileEntry;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineKind {
    Odometry,
    PriorMap,
}

impl PipelineKind {
    pub const BOTH: [PipelineKind; 2] = [Self::Odometry, Self::PriorMap];
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odometry" | "odom" => Ok(Self::Odometry),
            "priormap" | "prior-map" => Ok(Self::PriorMap),
            other => Err(Error::param(format!("unknown pipeline {other:?} (expected odometry or priormap)"))),
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Odometry => "odometry",
            Self::PriorMap => "priormap",
        })
    }
}

/// A simulated route with its benign recording and the prior map built from it.
pub struct Course {
    pub scene: Scene,
    pub route: TrajectorySpec,
    pub sensor: SensorModel,
    pub dataset: Dataset,
    pub ground_truth: Trajectory,
    pub prior_map: TargetMap,
}

impl Course {
    /// Simulates the benign recording. The prior map is the union of the benign
    /// frames placed at their ground-truth poses.
    pub fn generate(scene: Scene, route: TrajectorySpec, sensor: SensorModel, seed: u64, cfg: &PipelineConfig) -> Result<Self> {
        let (dataset, ground_truth) = generate_dataset(&scene, &route, &sensor, seed, cfg.matching.exec)?;
        let map = build_prior_map(&dataset, &ground_truth, cfg.map_voxel)?;
        let prior_map = prepare_prior_map(&map, cfg)?;
        Ok(Self {
            scene,
            route,
            sensor,
            dataset,
            ground_truth,
            prior_map,
        })
    }

    /// Localizes an arbitrary recording of (part of) this course.
    pub fn localize(&self, kind: PipelineKind, dataset: &Dataset, init: &crate::pose::PoseSE3, cfg: &PipelineConfig) -> Result<LocalizationRun> {
        match kind {
            PipelineKind::Odometry => odometry_run(dataset, cfg),
            PipelineKind::PriorMap => priormap_localize_prepared(dataset, &self.prior_map, init, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub pipeline: PipelineConfig,
    /// Half the route length simulated around the spoofer, meters.
    pub half_length: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            half_length: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub frames: Range<usize>,
    pub ape: ApeStats,
    /// Localization of the attacked recording.
    pub run: LocalizationRun,
}

/// Frames whose route position lies within `half_length` (along the route) of
/// the route frame closest to `point`.
pub fn segment_around(gt: &Trajectory, point: &Vector2<f64>, half_length: f64) -> Result<Range<usize>> {
    if gt.is_empty() {
        return Err(Error::param("empty ground truth"));
    }
    let dist = |i: usize| (gt.poses()[i].translation.xy() - point).norm_squared();
    let foot = (0..gt.len()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).expect("non-empty");
    // cumulative path length from the foot frame in both directions
    let pos = |i: usize| gt.poses()[i].translation.xy();
    let mut lo = foot;
    let mut walked = 0.0;
    while lo > 0 && walked + (pos(lo) - pos(lo - 1)).norm() <= half_length + 1e-9 {
        walked += (pos(lo) - pos(lo - 1)).norm();
        lo -= 1;
    }
    let mut hi = foot;
    walked = 0.0;
    while hi + 1 < gt.len() && walked + (pos(hi + 1) - pos(hi)).norm() <= half_length + 1e-9 {
        walked += (pos(hi + 1) - pos(hi)).norm();
        hi += 1;
    }
    Ok(lo..hi + 1)
}

fn sub_trajectory(t: &Trajectory, r: Range<usize>) -> Result<Trajectory> {
    Trajectory::new(t.stamps()[r.clone()].to_vec(), t.poses()[r].to_vec())
}

/// One attacked pass. `seed` drives both the sensor noise of the re-simulated
/// frames and the attack's own randomness.
pub fn attack_trial(course: &Course, spoofer: &SpooferState, spec: &AttackSpec, kind: PipelineKind, seed: u64, cfg: &TrialConfig, exec: Execution) -> Result<TrialOutcome> {
    let range = segment_around(&course.ground_truth, &spoofer.position, cfg.half_length)?;
    let gt = sub_trajectory(&course.ground_truth, range.clone())?;
    let frames = map_indexed(gt.poses(), exec, |i, pose| {
        raycast_frame(&course.scene, pose, &course.sensor, derive_seed(seed, stream::TRIAL, (range.start + i) as u64))
    });
    let benign = Dataset::new(frames, gt.stamps().to_vec())?;
    let spec = AttackSpec { seed, ..*spec };
    let attacked = attack_dataset(&benign, &gt, spoofer, &spec, &course.sensor, exec)?;
    let run = course.localize(kind, &attacked, &gt.poses()[0], &cfg.pipeline.with_exec(exec))?;
    let ape = ape(&run.trajectory, &gt, true, ApeMode::Timestamp)?;
    Ok(TrialOutcome { frames: range, ape, run })
}

/// Runs independent trials, fanning out across trials and keeping each trial's
/// inner work sequential. Results are in job order.
pub fn run_trials(course: &Course, jobs: &[(SpooferState, u64)], spec: &AttackSpec, kind: PipelineKind, cfg: &TrialConfig, exec: Execution) -> Vec<Result<TrialOutcome>> {
    map_indexed(jobs, exec, |_, (spoofer, seed)| attack_trial(course, spoofer, spec, kind, *seed, cfg, Execution::Sequential))
}

/// Spoofer standing `standoff` meters from the frame's position toward the
/// center of its heaviest sector.
pub fn spoofer_for_entry(entry: &ProfileEntry, n_regions: usize, standoff: f64) -> Result<SpooferState> {
    let az = AzimuthBinning::new(n_regions)?.bin_center(entry.smvs.k_center);
    let dir = entry.pose.rotation * nalgebra::Vector3::new(az.cos(), az.sin(), 0.0);
    let dir = dir.xy().normalize();
    let p = entry.pose.translation.xy() + dir * standoff;
    Ok(SpooferState::at(p.x, p.y))
}

/// Uniform positions in the route's bounding box grown by `margin` meters.
pub fn random_spoofers(gt: &Trajectory, count: usize, margin: f64, seed: u64) -> Result<Vec<SpooferState>> {
    if gt.is_empty() {
        return Err(Error::param("empty ground truth"));
    }
    let mut lo = gt.poses()[0].translation.xy();
    let mut hi = lo;
    for p in gt.poses() {
        lo = lo.inf(&p.translation.xy());
        hi = hi.sup(&p.translation.xy());
    }
    let lo = lo.add_scalar(-margin);
    let hi = hi.add_scalar(margin);
    let mut rng = rng_for(seed, stream::PLACEMENT, 0);
    Ok((0..count)
        .map(|_| SpooferState::at(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y)))
        .collect())
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Benign localization of the whole course with both pipelines.
pub fn benign_runs(course: &Course, cfg: &PipelineConfig) -> Result<Vec<(PipelineKind, Trajectory)>> {
    PipelineKind::BOTH
        .iter()
        .map(|&kind| {
            course
                .localize(kind, &course.dataset, &course.ground_truth.poses()[0], cfg)
                .map(|r| (kind, r.trajectory))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::PoseSE3;

    fn line(n: usize) -> Trajectory {
        let poses = (0..n).map(|i| PoseSE3::from_xyz_yaw(i as f64 * 0.5, 0.0, 1.8, 0.0)).collect();
        Trajectory::new((0..n).map(|i| i as f64 * 0.1).collect(), poses).unwrap()
    }

    #[test]
    fn segments_are_fixed_length_and_clamped() {
        let gt = line(201);
        assert_eq!(segment_around(&gt, &Vector2::new(50.0, 12.0), 10.0).unwrap(), 80..121);
        assert_eq!(segment_around(&gt, &Vector2::new(-30.0, 0.0), 10.0).unwrap(), 0..21);
        assert_eq!(segment_around(&gt, &Vector2::new(500.0, 0.0), 10.0).unwrap(), 180..201);
    }

    #[test]
    fn random_spoofers_stay_in_box() {
        let gt = line(201);
        let s = random_spoofers(&gt, 50, 25.0, 3).unwrap();
        assert_eq!(s, random_spoofers(&gt, 50, 25.0, 3).unwrap());
        for sp in &s {
            assert!((-25.0..=125.0).contains(&sp.position.x));
            assert!((-25.0..=25.0).contains(&sp.position.y));
        }
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        assert_eq!("priormap".parse::<PipelineKind>().unwrap(), PipelineKind::PriorMap);
    }
}
