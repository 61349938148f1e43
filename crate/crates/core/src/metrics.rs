//! Trajectory error statistics and the SMVS-versus-error bucket table.

use std::fmt::Write as _;

use crate::attack::AttackModel;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::pose::PoseSE3;
use crate::smvs::SmvsProfile;
use crate::trajectory::Trajectory;

/// Maximum timestamp difference for two poses to be associated, seconds.
pub const STAMP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApeStats {
    pub rmse: f64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Rotation error statistics, degrees.
    pub rot_rmse: f64,
    pub rot_mean: f64,
    pub rot_max: f64,
    pub count: usize,
}

impl ApeStats {
    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("ape.rmse", self.rmse)
            .set("ape.mean", self.mean)
            .set("ape.std", self.std)
            .set("ape.max", self.max)
            .set("ape.rot_rmse_deg", self.rot_rmse)
            .set("ape.rot_mean_deg", self.rot_mean)
            .set("ape.rot_max_deg", self.rot_max)
            .set("ape.count", self.count);
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let need = |key: &str| -> Result<f64> { kv.parse_value(key)?.ok_or_else(|| Error::param(format!("missing {key}"))) };
        Ok(Self {
            rmse: need("ape.rmse")?,
            mean: need("ape.mean")?,
            std: need("ape.std")?,
            max: need("ape.max")?,
            rot_rmse: need("ape.rot_rmse_deg")?,
            rot_mean: need("ape.rot_mean_deg")?,
            rot_max: need("ape.rot_max_deg")?,
            count: kv.parse_value("ape.count")?.ok_or_else(|| Error::param("missing ape.count"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApeMode {
    /// Pair poses whose timestamps agree within [`STAMP_TOLERANCE`].
    #[default]
    Timestamp,
    /// Pair every estimated pose with the nearest reference position, ignoring
    /// time; used when the reference is a path rather than a timed trajectory.
    NearestNeighbor,
}

fn summarize(trans: &[f64], rot_deg: &[f64]) -> ApeStats {
    let n = trans.len() as f64;
    let mean = trans.iter().sum::<f64>() / n;
    let sq = trans.iter().map(|e| e * e).sum::<f64>() / n;
    let var = trans.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    ApeStats {
        rmse: sq.sqrt(),
        mean,
        std: var.sqrt(),
        max: trans.iter().copied().fold(0.0, f64::max),
        rot_rmse: (rot_deg.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        rot_mean: rot_deg.iter().sum::<f64>() / n,
        rot_max: rot_deg.iter().copied().fold(0.0, f64::max),
        count: trans.len(),
    }
}

/// Index pairs `(est, ref)` whose stamps agree; both stamp lists are sorted.
pub fn associate(est: &[f64], reference: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut j = 0;
    for (i, &t) in est.iter().enumerate() {
        while j < reference.len() && reference[j] < t - STAMP_TOLERANCE {
            j += 1;
        }
        if j < reference.len() && (reference[j] - t).abs() <= STAMP_TOLERANCE {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Absolute pose error. With `align_first_pose` the estimate is moved rigidly so
/// that its first associated pose coincides with the reference's.
pub fn ape(est: &Trajectory, reference: &Trajectory, align_first_pose: bool, mode: ApeMode) -> Result<ApeStats> {
    let pairs: Vec<(usize, usize)> = match mode {
        ApeMode::Timestamp => associate(est.stamps(), reference.stamps()),
        ApeMode::NearestNeighbor => {
            if reference.is_empty() {
                Vec::new()
            } else {
                (0..est.len()).map(|i| (i, nearest_position(reference, &est.poses()[i]))).collect()
            }
        }
    };
    if pairs.is_empty() {
        return Err(Error::param("no associated poses between the trajectories"));
    }
    let align = if align_first_pose {
        let (i, j) = pairs[0];
        reference.poses()[j].compose(&est.poses()[i].inverse())
    } else {
        PoseSE3::identity()
    };
    let mut trans = Vec::with_capacity(pairs.len());
    let mut rot = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let e = align.compose(&est.poses()[i]);
        let r = &reference.poses()[j];
        trans.push((e.translation - r.translation).norm());
        rot.push(e.rotation_angle_to(r).to_degrees());
    }
    Ok(summarize(&trans, &rot))
}

fn nearest_position(reference: &Trajectory, pose: &PoseSE3) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, r) in reference.poses().iter().enumerate() {
        let d = (r.translation - pose.translation).norm_squared();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RpeStats {
    pub trans_max: f64,
    pub trans_mean: f64,
    /// Degrees.
    pub rot_max: f64,
    pub rot_mean: f64,
    pub count: usize,
}

impl RpeStats {
    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("rpe.trans_max", self.trans_max)
            .set("rpe.trans_mean", self.trans_mean)
            .set("rpe.rot_max_deg", self.rot_max)
            .set("rpe.rot_mean_deg", self.rot_mean)
            .set("rpe.count", self.count);
    }
}

/// Relative pose error over a fixed frame offset `delta`, pairing poses by index.
pub fn rpe(est: &Trajectory, reference: &Trajectory, delta: usize) -> Result<RpeStats> {
    let n = est.len().min(reference.len());
    if delta == 0 || n < delta + 1 {
        return Err(Error::param(format!("need at least {} poses for a frame delta of {delta}", delta + 1)));
    }
    let mut stats = RpeStats::default();
    for i in 0..n - delta {
        let de = est.poses()[i].inverse().compose(&est.poses()[i + delta]);
        let dr = reference.poses()[i].inverse().compose(&reference.poses()[i + delta]);
        let err = dr.inverse().compose(&de);
        let t = err.translation.norm();
        let r = err.rotation.angle().to_degrees();
        stats.trans_max = stats.trans_max.max(t);
        stats.rot_max = stats.rot_max.max(r);
        stats.trans_mean += t;
        stats.rot_mean += r;
    }
    stats.count = n - delta;
    stats.trans_mean /= stats.count as f64;
    stats.rot_mean /= stats.count as f64;
    Ok(stats)
}

/// Default lower bucket edges over frame-wise SMVS; the first bucket also takes
/// everything below its edge.
pub const DEFAULT_BUCKET_EDGES: [f64; 4] = [-10000.0, -6000.0, -3000.0, -1000.0];

/// One attack run to be placed in a bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub label: String,
    pub model: AttackModel,
    /// Spoofer position on the ground plane.
    pub spoofer: [f64; 2],
    pub ape: ApeStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketCell {
    pub count: usize,
    pub trans_mean: f64,
    pub trans_std: f64,
    pub rot_mean: f64,
    pub rot_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    pub edges: Vec<f64>,
    pub models: Vec<AttackModel>,
    /// `cells[bucket][model]`, `None` for empty cells.
    pub cells: Vec<Vec<Option<BucketCell>>>,
    /// SMVS used for each input run, in input order.
    pub run_smvs: Vec<f64>,
}

impl BucketTable {
    pub fn bucket_of(edges: &[f64], smvs: f64) -> usize {
        edges.iter().rposition(|&e| smvs > e).unwrap_or(0)
    }

    pub fn bucket_label(&self, b: usize) -> String {
        match self.edges.get(b + 1) {
            _ if b == 0 && self.edges.len() > 1 => format!("S<{}", self.edges[1]),
            Some(hi) => format!("{}<S<{}", self.edges[b], hi),
            None => format!("{}<S", self.edges[b]),
        }
    }

    pub fn total_runs(&self) -> usize {
        self.cells.iter().flatten().flatten().map(|c| c.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket,model,count,ape_mean_m,ape_std_m,rot_mean_deg,rot_std_deg\n");
        for (b, row) in self.cells.iter().enumerate() {
            for (m, cell) in row.iter().enumerate() {
                let label = self.bucket_label(b);
                let model = self.models[m];
                match cell {
                    Some(c) => writeln!(
                        out,
                        "{label},{model},{},{},{},{},{}",
                        c.count, c.trans_mean, c.trans_std, c.rot_mean, c.rot_std
                    ),
                    None => writeln!(out, "{label},{model},0,n/a,n/a,n/a,n/a"),
                }
                .expect("write to String");
            }
        }
        out
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Frame-wise SMVS of the profile frame closest to a spoofer position.
pub fn smvs_near(profile: &SmvsProfile, spoofer: [f64; 2]) -> Option<f64> {
    profile
        .entries
        .iter()
        .min_by(|a, b| {
            let da = (a.pose.translation.xy() - nalgebra::Vector2::from(spoofer)).norm_squared();
            let db = (b.pose.translation.xy() - nalgebra::Vector2::from(spoofer)).norm_squared();
            da.total_cmp(&db)
        })
        .map(|e| e.smvs.value)
}

/// Groups runs by the frame-wise SMVS where they were launched and reports mean
/// and population standard deviation of the APE per bucket and model.
pub fn bucket_report(profile: &SmvsProfile, runs: &[RunRecord], edges: &[f64]) -> Result<BucketTable> {
    if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("bucket edges must be strictly increasing"));
    }
    let mut models: Vec<AttackModel> = Vec::new();
    for r in runs {
        if !models.contains(&r.model) {
            models.push(r.model);
        }
    }
    let mut run_smvs = Vec::with_capacity(runs.len());
    let mut groups: Vec<Vec<Vec<&ApeStats>>> = vec![vec![Vec::new(); models.len()]; edges.len()];
    for r in runs {
        let s = smvs_near(profile, r.spoofer).ok_or_else(|| Error::param("profile has no entries"))?;
        run_smvs.push(s);
        let m = models.iter().position(|&m| m == r.model).expect("model collected above");
        groups[BucketTable::bucket_of(edges, s)][m].push(&r.ape);
    }
    let cells = groups
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|g| {
                    (!g.is_empty()).then(|| {
                        let (tm, ts) = mean_std(&g.iter().map(|a| a.rmse).collect::<Vec<_>>());
                        let (rm, rs) = mean_std(&g.iter().map(|a| a.rot_rmse).collect::<Vec<_>>());
                        BucketCell {
                            count: g.len(),
                            trans_mean: tm,
                            trans_std: ts,
                            rot_mean: rm,
                            rot_std: rs,
                        }
                    })
                })
                .collect()
        })
        .collect();
    Ok(BucketTable {
        edges: edges.to_vec(),
        models,
        cells,
        run_smvs,
    })
}
