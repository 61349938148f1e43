//! Synthetic worlds made of rectangular patches, a spinning multi-ring LiDAR
//! model, and raycast dataset generation with exact ground truth.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::kv::KeyValues;
use crate::par::{map_range, Execution};
use crate::pose::PoseSE3;
use crate::seed::{rng_for, stream};
use crate::trajectory::Trajectory;

/// Parallelogram `corner + s·u + t·v`, `s, t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub corner: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Patch {
    pub fn new(corner: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { corner, u, v }
    }

    fn is_degenerate(&self) -> bool {
        let all_finite = self.corner.iter().chain(self.u.iter()).chain(self.v.iter()).all(|c| c.is_finite());
        !all_finite || self.u.cross(&self.v).norm() < 1e-9
    }

    /// Distance from `p` to the patch's supporting plane.
    pub fn plane_distance(&self, p: &Point3) -> f64 {
        let n = self.u.cross(&self.v).normalize();
        (p - self.corner).dot(&n).abs()
    }

    /// Ray parameter of the hit, if any.
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.u.cross(&self.v);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let r = n.dot(&(self.corner - origin)) / denom;
        if !(r > 0.0) {
            return None;
        }
        let w = origin + dir * r - self.corner;
        let uu = self.u.norm_squared();
        let vv = self.v.norm_squared();
        let uv = self.u.dot(&self.v);
        let det = uu * vv - uv * uv;
        let wu = w.dot(&self.u);
        let wv = w.dot(&self.v);
        let s = (wu * vv - wv * uv) / det;
        let t = (wv * uu - wu * uv) / det;
        const EDGE: f64 = 1e-12;
        ((-EDGE..=1.0 + EDGE).contains(&s) && (-EDGE..=1.0 + EDGE).contains(&t)).then_some(r)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub patches: Vec<Patch>,
    /// Infinite ground plane at z = 0.
    pub ground: bool,
}

impl Scene {
    pub fn new(patches: Vec<Patch>, ground: bool) -> Result<Self> {
        if let Some(i) = patches.iter().position(Patch::is_degenerate) {
            return Err(Error::param(format!("patch {i} has degenerate edge vectors")));
        }
        Ok(Self { patches, ground })
    }

    /// Nearest hit distance along a world ray.
    pub fn cast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let mut best = self.patches.iter().filter_map(|p| p.intersect(origin, dir)).fold(f64::INFINITY, f64::min);
        if self.ground && dir.z < 0.0 && origin.z > 0.0 {
            best = best.min(-origin.z / dir.z);
        }
        best.is_finite().then_some(best)
    }

    /// Distance from a world point to the closest patch plane (or ground).
    pub fn surface_distance(&self, p: &Point3) -> f64 {
        let mut d = self.patches.iter().map(|q| q.plane_distance(p)).fold(f64::INFINITY, f64::min);
        if self.ground {
            d = d.min(p.z.abs());
        }
        d
    }
}

/// Adds the four vertical faces of an axis-aligned box.
pub fn push_box(patches: &mut Vec<Patch>, min: Vector2<f64>, max: Vector2<f64>, height: f64) {
    let up = Vector3::new(0.0, 0.0, height);
    let dx = Vector3::new(max.x - min.x, 0.0, 0.0);
    let dy = Vector3::new(0.0, max.y - min.y, 0.0);
    let c0 = Vector3::new(min.x, min.y, 0.0);
    let c1 = Vector3::new(max.x, max.y, 0.0);
    patches.push(Patch::new(c0, dx, up));
    patches.push(Patch::new(c0, dy, up));
    patches.push(Patch::new(c1, -dx, up));
    patches.push(Patch::new(c1, -dy, up));
}

/// Built-in worlds. Routes run along +x at y = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    /// Two long parallel walls flanking the route.
    Canyon,
    /// A single warehouse with a relief facade beside an otherwise empty route.
    OpenWall,
    /// A built-up canyon over the first half, then an open stretch with one warehouse.
    Mixed,
}

impl FromStr for Archetype {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canyon" => Ok(Self::Canyon),
            "open-wall" => Ok(Self::OpenWall),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::param(format!("unknown scene archetype {s:?}"))),
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Canyon => "canyon",
            Self::OpenWall => "open-wall",
            Self::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneSpec {
    Archetype { kind: Archetype, length: f64 },
    Custom { patches: Vec<Patch>, ground: bool },
}

const CANYON_HALF_WIDTH: f64 = 8.0;

fn warehouse(patches: &mut Vec<Patch>, center_x: f64) {
    let front = 16.0;
    push_box(patches, Vector2::new(center_x - 10.0, front), Vector2::new(center_x + 10.0, front + 12.0), 10.0);
    for k in -2..=2 {
        let x = center_x + 4.0 * k as f64;
        push_box(patches, Vector2::new(x - 1.0, front - 2.0), Vector2::new(x + 1.0, front), 10.0);
    }
}

fn built_canyon(patches: &mut Vec<Patch>, x0: f64, x1: f64) {
    // staggered blocks on both sides; the gaps expose cross-street faces
    for (side, offset) in [(1.0, 0.0), (-1.0, 9.0)] {
        let mut i = 0;
        let mut start = x0 - offset;
        while start < x1 {
            let lo = start.max(x0);
            let hi = (start + 14.0).min(x1);
            if hi - lo > 1.0 {
                let front = CANYON_HALF_WIDTH + if i % 2 == 0 { 0.0 } else { 1.5 };
                let (ymin, ymax) = if side > 0.0 { (front, front + 10.0) } else { (-front - 10.0, -front) };
                push_box(patches, Vector2::new(lo, ymin), Vector2::new(hi, ymax), 12.0);
            }
            start += 18.0;
            i += 1;
        }
    }
}

/// Deterministically expands a scene spec.
pub fn build_scene(spec: &SceneSpec) -> Result<Scene> {
    match spec {
        SceneSpec::Custom { patches, ground } => Scene::new(patches.clone(), *ground),
        SceneSpec::Archetype { kind, length } => {
            if !(*length > 0.0) {
                return Err(Error::param("scene length must be positive"));
            }
            let l = *length;
            let mut patches = Vec::new();
            match kind {
                Archetype::Canyon => {
                    let up = Vector3::new(0.0, 0.0, 10.0);
                    let along = Vector3::new(l, 0.0, 0.0);
                    patches.push(Patch::new(Vector3::new(0.0, CANYON_HALF_WIDTH, 0.0), along, up));
                    patches.push(Patch::new(Vector3::new(0.0, -CANYON_HALF_WIDTH, 0.0), along, up));
                }
                Archetype::OpenWall => warehouse(&mut patches, l / 2.0),
                Archetype::Mixed => {
                    built_canyon(&mut patches, 0.0, l / 2.0);
                    warehouse(&mut patches, 0.75 * l);
                }
            }
            Scene::new(patches, true)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub rings: usize,
    /// Half of the symmetric vertical field of view, degrees.
    pub vertical_fov_deg: f64,
    pub horizontal_res_deg: f64,
    pub max_range: f64,
    pub range_noise: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            rings: 32,
            vertical_fov_deg: 15.0,
            horizontal_res_deg: 0.4,
            max_range: 50.0,
            range_noise: 0.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) || !(self.horizontal_res_deg > 0.0) || self.rings == 0 || !(self.range_noise >= 0.0) {
            return Err(Error::param("invalid sensor model"));
        }
        Ok(())
    }

    pub fn horizontal_steps(&self) -> usize {
        (360.0 / self.horizontal_res_deg).round() as usize
    }

    /// Ring elevation angles in radians, bottom to top.
    pub fn ring_elevations(&self) -> Vec<f64> {
        let fov = self.vertical_fov_deg.to_radians();
        if self.rings == 1 {
            return vec![0.0];
        }
        (0..self.rings)
            .map(|r| -fov + 2.0 * fov * r as f64 / (self.rings - 1) as f64)
            .collect()
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("sensor.rings", self.rings)
            .set("sensor.vertical_fov_deg", self.vertical_fov_deg)
            .set("sensor.horizontal_res_deg", self.horizontal_res_deg)
            .set("sensor.max_range", self.max_range)
            .set("sensor.range_noise", self.range_noise);
    }

    /// Inverse of [`to_kv`](Self::to_kv); missing keys keep their defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let s = Self {
            rings: kv.parse_value("sensor.rings")?.unwrap_or(d.rings),
            vertical_fov_deg: kv.parse_value("sensor.vertical_fov_deg")?.unwrap_or(d.vertical_fov_deg),
            horizontal_res_deg: kv.parse_value("sensor.horizontal_res_deg")?.unwrap_or(d.horizontal_res_deg),
            max_range: kv.parse_value("sensor.max_range")?.unwrap_or(d.max_range),
            range_noise: kv.parse_value("sensor.range_noise")?.unwrap_or(d.range_noise),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Casts one sweep from `pose`. Points are returned in the sensor frame.
pub fn raycast_frame(scene: &Scene, pose: &PoseSE3, sensor: &SensorModel, seed: u64) -> PointCloud {
    let mut rng = rng_for(seed, stream::RAYCAST, 0);
    let noise = (sensor.range_noise > 0.0).then(|| Normal::new(0.0, sensor.range_noise).expect("finite sigma"));
    let steps = sensor.horizontal_steps();
    let res = 2.0 * PI / steps as f64;
    let origin = pose.translation;
    let mut points = Vec::new();
    for el in sensor.ring_elevations() {
        let (se, ce) = el.sin_cos();
        for h in 0..steps {
            let az = -PI + h as f64 * res;
            let (sa, ca) = az.sin_cos();
            let d = Vector3::new(ce * ca, ce * sa, se);
            let dw = pose.rotation * d;
            if let Some(r) = scene.cast(&origin, &dw) {
                if r <= sensor.max_range {
                    let r = r + noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                    points.push(d * r);
                }
            }
        }
    }
    PointCloud::from_parts_unchecked(points, None)
}

/// A polyline route traversed at constant speed with the heading following the
/// current segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Vector2<f64>>,
    pub speed: f64,
    pub frame_rate: f64,
    /// Sensor height above ground, meters.
    pub height: f64,
    /// Caps the run to this many seconds; otherwise the whole route is driven.
    pub duration: Option<f64>,
}

impl TrajectorySpec {
    pub fn straight(length: f64, speed: f64, frame_rate: f64) -> Self {
        Self {
            waypoints: vec![Vector2::new(0.0, 0.0), Vector2::new(length, 0.0)],
            speed,
            frame_rate,
            height: 1.8,
            duration: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::param("route needs at least 2 waypoints"));
        }
        if !(self.speed > 0.0) || !(self.frame_rate > 0.0) {
            return Err(Error::param("speed and frame rate must be positive"));
        }
        if self.waypoints.windows(2).any(|w| (w[1] - w[0]).norm() == 0.0) {
            return Err(Error::param("route has repeated waypoints"));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Ground-truth sensor poses, one per frame.
    pub fn sample(&self) -> Result<Trajectory> {
        self.validate()?;
        let step = self.speed / self.frame_rate;
        let length = self.length();
        let mut count = (length / step + 1e-9).floor() as usize + 1;
        if let Some(d) = self.duration {
            count = count.min((d * self.frame_rate).round() as usize);
        }
        let mut stamps = Vec::with_capacity(count);
        let mut poses = Vec::with_capacity(count);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for i in 0..count {
            let s = i as f64 * step;
            while seg + 2 < self.waypoints.len() && s > seg_start + (self.waypoints[seg + 1] - self.waypoints[seg]).norm() {
                seg_start += (self.waypoints[seg + 1] - self.waypoints[seg]).norm();
                seg += 1;
            }
            let a = self.waypoints[seg];
            let dir = (self.waypoints[seg + 1] - a).normalize();
            let p = a + dir * (s - seg_start);
            stamps.push(i as f64 / self.frame_rate);
            poses.push(PoseSE3::from_xyz_yaw(p.x, p.y, self.height, dir.y.atan2(dir.x)));
        }
        Trajectory::new(stamps, poses)
    }
}

/// Raycasts every ground-truth pose of the route.
pub fn generate_dataset(
    scene: &Scene,
    traj: &TrajectorySpec,
    sensor: &SensorModel,
    seed: u64,
    exec: Execution,
) -> Result<(Dataset, Trajectory)> {
    sensor.validate()?;
    let gt = traj.sample()?;
    let frames = map_range(gt.len(), exec, |i| {
        raycast_frame(scene, &gt.poses()[i], sensor, crate::seed::derive_seed(seed, stream::RAYCAST, i as u64))
    });
    Ok((Dataset::new(frames, gt.stamps().to_vec())?, gt))
}

/// Writes a generated dataset plus a manifest of every generation parameter.
pub fn write_dataset(dir: impl AsRef<Path>, dataset: &Dataset, gt: &Trajectory, manifest: &KeyValues) -> Result<()> {
    dataset.save(dir, Some(gt), Some(manifest))
}

/// Manifest entries describing a generated dataset.
pub fn dataset_manifest(spec: &SceneSpec, traj: &TrajectorySpec, sensor: &SensorModel, seed: u64) -> KeyValues {
    let mut kv = KeyValues::new();
    match spec {
        SceneSpec::Archetype { kind, length } => {
            kv.set("scene.archetype", kind).set("scene.length", length);
        }
        SceneSpec::Custom { patches, ground } => {
            kv.set("scene.custom_patches", patches.len()).set("scene.ground", ground);
        }
    }
    let wp: Vec<String> = traj.waypoints.iter().map(|w| format!("{},{}", w.x, w.y)).collect();
    kv.set("route.waypoints", wp.join(";"))
        .set("route.speed", traj.speed)
        .set("frame_rate", traj.frame_rate)
        .set("route.height", traj.height)
        .set("seed", seed);
    if let Some(d) = traj.duration {
        kv.set("route.duration", d);
    }
    sensor.to_kv(&mut kv);
    kv
}
