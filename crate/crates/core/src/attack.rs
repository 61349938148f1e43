//! Spoofing attack models applied through a horizontal window aimed at the
//! spoofer: high-frequency removal (optionally refilled with random returns) and
//! injection of a fake wall.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::kv::KeyValues;
use crate::par::{map_indexed, Execution};
use crate::pose::PoseSE3;
use crate::scene::SensorModel;
use crate::seed::{derive_seed, rng_for, stream};
use crate::trajectory::Trajectory;

/// Default half-width of the affected window (80° in total).
pub const DEFAULT_HALF_WIDTH: f64 = 40.0 * PI / 180.0;

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Horizontal sector in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthWindow {
    pub center: f64,
    pub half_width: f64,
}

impl AzimuthWindow {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width <= PI) || !center.is_finite() {
            return Err(Error::param("window half-width must lie in (0, π]"));
        }
        Ok(Self {
            center: wrap_angle(center),
            half_width,
        })
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    /// Closed-interval membership across the ±π seam.
    pub fn contains_angle(&self, theta: f64) -> bool {
        wrap_angle(theta - self.center).abs() <= self.half_width
    }

    /// Points on the z-axis have no azimuth and are never inside.
    pub fn contains(&self, p: &Point3) -> bool {
        (p.x != 0.0 || p.y != 0.0) && self.contains_angle(p.y.atan2(p.x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackModel {
    RemovalNoNoise,
    RemovalNoise,
    Injection,
}

impl AttackModel {
    pub const ALL: [AttackModel; 3] = [Self::RemovalNoNoise, Self::RemovalNoise, Self::Injection];
}

impl FromStr for AttackModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hfr" => Ok(Self::RemovalNoNoise),
            "hfr-noise" => Ok(Self::RemovalNoise),
            "inject" => Ok(Self::Injection),
            other => Err(Error::param(format!("unknown attack model {other:?} (expected hfr, hfr-noise or inject)"))),
        }
    }
}

impl fmt::Display for AttackModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RemovalNoNoise => "hfr",
            Self::RemovalNoise => "hfr-noise",
            Self::Injection => "inject",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub model: AttackModel,
    /// Range of the injected wall, meters.
    pub wall_distance: f64,
    /// Number of rings the spoofer can write into.
    pub layers: usize,
    /// Range interval of the replacement returns, meters.
    pub noise_range: (f64, f64),
    pub seed: u64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            model: AttackModel::RemovalNoise,
            wall_distance: 5.0,
            layers: 10,
            noise_range: (1.0, 20.0),
            seed: 0,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.wall_distance > 0.0) {
            return Err(Error::param("wall distance must be positive"));
        }
        if self.layers == 0 {
            return Err(Error::param("at least one injectable layer is required"));
        }
        let (lo, hi) = self.noise_range;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::param("noise range must satisfy 0 ≤ r_min < r_max"));
        }
        Ok(())
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("attack.model", self.model)
            .set("attack.wall_distance", self.wall_distance)
            .set("attack.layers", self.layers)
            .set("attack.noise_min", self.noise_range.0)
            .set("attack.noise_max", self.noise_range.1)
            .set("attack.seed", self.seed);
    }
}

/// Roadside device position on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpooferState {
    pub position: Vector2<f64>,
    pub height: f64,
    pub max_range: f64,
    pub half_width: f64,
}

impl SpooferState {
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            position: Vector2::new(x, y),
            height: 1.0,
            max_range: 50.0,
            half_width: DEFAULT_HALF_WIDTH,
        }
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("spoofer.x", self.position.x)
            .set("spoofer.y", self.position.y)
            .set("spoofer.height", self.height)
            .set("spoofer.max_range", self.max_range)
            .set("spoofer.half_width_deg", self.half_width.to_degrees());
    }
}

/// The window the spoofer covers as seen from `victim`, or `None` when it is out
/// of reach.
pub fn spoof_window(victim: &PoseSE3, spoofer: &SpooferState) -> Result<Option<AzimuthWindow>> {
    if !(spoofer.max_range > 0.0) {
        return Err(Error::param("spoofer range must be positive"));
    }
    let world = Vector3::new(spoofer.position.x, spoofer.position.y, spoofer.height);
    let local = victim.inverse().transform_point(&world);
    let planar = local.xy().norm();
    if planar > spoofer.max_range || planar == 0.0 {
        return Ok(None);
    }
    AzimuthWindow::new(local.y.atan2(local.x), spoofer.half_width).map(Some)
}

/// Deletes every return inside the window; with `with_noise` the same number of
/// random returns is appended, uniform in azimuth over the window, elevation over
/// the vertical field of view, and range over the spec's noise interval.
pub fn apply_removal(frame: &PointCloud, window: &AzimuthWindow, with_noise: bool, spec: &AttackSpec, sensor: &SensorModel, seed: u64) -> PointCloud {
    let mut kept: Vec<Point3> = frame.points().iter().filter(|p| !window.contains(p)).copied().collect();
    let removed = frame.len() - kept.len();
    if with_noise && removed > 0 {
        let mut rng = rng_for(seed, stream::ATTACK, 0);
        let fov = sensor.vertical_fov_deg.to_radians();
        let (lo, hi) = spec.noise_range;
        for _ in 0..removed {
            let az = window.center + rng.random_range(-window.half_width..=window.half_width);
            let el = if fov > 0.0 { rng.random_range(-fov..=fov) } else { 0.0 };
            let r = rng.random_range(lo..=hi);
            let (sa, ca) = az.sin_cos();
            let (se, ce) = el.sin_cos();
            kept.push(Vector3::new(r * ce * ca, r * ce * sa, r * se));
        }
    }
    PointCloud::from_parts_unchecked(kept, None)
}

/// Replaces everything behind range `D` in the window with a cylindrical wall at
/// `D`, sampled at the sensor's horizontal resolution on the middle
/// `min(layers, rings)` rings.
pub fn apply_injection(frame: &PointCloud, window: &AzimuthWindow, spec: &AttackSpec, sensor: &SensorModel) -> Result<PointCloud> {
    let d = spec.wall_distance;
    if !(d > 0.0) || d >= sensor.max_range {
        return Err(Error::param(format!("wall distance {d} m must lie in (0, {}) m", sensor.max_range)));
    }
    let mut out: Vec<Point3> = frame
        .points()
        .iter()
        .filter(|p| !(window.contains(p) && p.xy().norm() > d))
        .copied()
        .collect();
    let res = sensor.horizontal_res_deg.to_radians();
    let columns = (window.width() / res).round() as usize;
    let elevations = sensor.ring_elevations();
    let layers = spec.layers.min(elevations.len());
    let first = (elevations.len() - layers) / 2;
    for &el in &elevations[first..first + layers] {
        let z = d * el.tan();
        // the wall is flat in range, so steep rings would land beyond max range
        if (d * d + z * z).sqrt() > sensor.max_range {
            continue;
        }
        for j in 0..columns {
            let az = window.center - window.half_width + (j as f64 + 0.5) * res;
            let (sa, ca) = az.sin_cos();
            out.push(Vector3::new(d * ca, d * sa, z));
        }
    }
    Ok(PointCloud::from_parts_unchecked(out, None))
}

/// Applies one model to a frame seen through `window`.
pub fn attack_frame(frame: &PointCloud, window: &AzimuthWindow, spec: &AttackSpec, sensor: &SensorModel, seed: u64) -> Result<PointCloud> {
    match spec.model {
        AttackModel::RemovalNoNoise => Ok(apply_removal(frame, window, false, spec, sensor, seed)),
        AttackModel::RemovalNoise => Ok(apply_removal(frame, window, true, spec, sensor, seed)),
        AttackModel::Injection => apply_injection(frame, window, spec, sensor),
    }
}

/// Attacks a whole recording. Windows come from the ground-truth poses since the
/// spoofer aims at the physical vehicle; frames out of reach are passed through.
pub fn attack_dataset(
    dataset: &Dataset,
    ground_truth: &Trajectory,
    spoofer: &SpooferState,
    spec: &AttackSpec,
    sensor: &SensorModel,
    exec: Execution,
) -> Result<Dataset> {
    if dataset.len() != ground_truth.len() {
        return Err(Error::param(format!(
            "{} frames but {} ground-truth poses",
            dataset.len(),
            ground_truth.len()
        )));
    }
    spec.validate()?;
    let frames = map_indexed(&dataset.frames, exec, |i, frame| -> Result<PointCloud> {
        match spoof_window(&ground_truth.poses()[i], spoofer)? {
            Some(w) => attack_frame(frame, &w, spec, sensor, derive_seed(spec.seed, stream::ATTACK, i as u64)),
            None => Ok(frame.clone()),
        }
    });
    Dataset::new(frames.into_iter().collect::<Result<_>>()?, dataset.stamps.clone())
}

/// Sidecar manifest written next to an attacked dataset.
pub fn attack_manifest(spec: &AttackSpec, spoofer: &SpooferState) -> KeyValues {
    let mut kv = KeyValues::new();
    spec.to_kv(&mut kv);
    spoofer.to_kv(&mut kv);
    kv
}
