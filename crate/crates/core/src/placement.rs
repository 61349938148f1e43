//! Spoofer placement from an SMVS profile.
//!
//! The highest-scoring frames each cast a half-line from the vehicle toward
//! their heaviest sector. Where those half-lines cross is where the critical
//! structure sits; after a ±2σ outlier cut the crossings are boxed, and the
//! spoofer goes on the line through the box center perpendicular to the route,
//! a standoff away from the route.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::smvs::{ProfileEntry, SmvsProfile};

pub type Point2 = Vector2<f64>;

pub const DEFAULT_TOP_M: usize = 10;
pub const DEFAULT_STANDOFF: f64 = 12.5;
pub const STANDOFF_RANGE: (f64, f64) = (10.0, 15.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfLine2D {
    pub origin: Point2,
    pub direction: Point2,
}

impl HalfLine2D {
    /// Normalizes `direction`; rejects zero or non-finite input.
    pub fn new(origin: Point2, direction: Point2) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) || !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::param("half-line needs a finite origin and non-zero direction"));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Point2 {
        self.origin + self.direction * t
    }
}

fn cross(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Half-line from a profile entry toward the world direction of its peak sector.
pub fn entry_halfline(entry: &ProfileEntry, n_regions: usize) -> Result<HalfLine2D> {
    let binning = crate::geometry::AzimuthBinning::new(n_regions)?;
    let az = binning.bin_center(entry.smvs.k_center);
    let local = nalgebra::Vector3::new(az.cos(), az.sin(), 0.0);
    let world = entry.pose.rotation * local;
    HalfLine2D::new(entry.pose.translation.xy(), world.xy())
}

/// The `top_m` highest-scoring entries, earlier frames winning ties, in
/// descending score order.
pub fn top_entries(profile: &SmvsProfile, top_m: usize) -> Result<Vec<&ProfileEntry>> {
    if profile.entries.len() < 2 {
        return Err(Error::param(format!(
            "need ≥ 2 frames in the profile, got {}",
            profile.entries.len()
        )));
    }
    if top_m < 2 {
        return Err(Error::param("top_m must be at least 2"));
    }
    let mut order: Vec<&ProfileEntry> = profile.entries.iter().collect();
    order.sort_by(|a, b| b.smvs.value.total_cmp(&a.smvs.value).then(a.frame_id.cmp(&b.frame_id)));
    order.truncate(top_m);
    Ok(order)
}

pub fn critical_directions(profile: &SmvsProfile, top_m: usize) -> Result<Vec<HalfLine2D>> {
    top_entries(profile, top_m)?
        .into_iter()
        .map(|e| entry_halfline(e, profile.n_regions))
        .collect()
}

/// Crossing of two half-lines, if it lies forward of both origins.
pub fn intersect_pair(a: &HalfLine2D, b: &HalfLine2D) -> Option<Point2> {
    let den = cross(&a.direction, &b.direction);
    if den.abs() < 1e-9 {
        return None;
    }
    let w = b.origin - a.origin;
    let s = cross(&w, &b.direction) / den;
    let t = cross(&w, &a.direction) / den;
    (s >= 0.0 && t >= 0.0).then(|| a.at(s))
}

/// All forward pairwise crossings, in `(i, j)` lexicographic pair order.
pub fn intersect_halflines(lines: &[HalfLine2D]) -> Vec<Point2> {
    let mut out = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if let Some(p) = intersect_pair(&lines[i], &lines[j]) {
                out.push(p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierFilter {
    pub kept: Vec<Point2>,
    pub bbox_min: Point2,
    pub bbox_max: Point2,
    pub center: Point2,
}

/// Keeps points within two population standard deviations of the mean on both
/// axes and boxes what remains.
pub fn filter_outliers(points: &[Point2]) -> Result<OutlierFilter> {
    if points.is_empty() {
        return Err(Error::param("no intersection points to filter"));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Point2>() / n;
    let var = points.iter().map(|p| (p - mean).component_mul(&(p - mean))).sum::<Point2>() / n;
    let sigma = var.map(f64::sqrt);
    let within = |d: f64, s: f64| s == 0.0 || d.abs() <= 2.0 * s;
    let kept: Vec<Point2> = points
        .iter()
        .filter(|p| within(p.x - mean.x, sigma.x) && within(p.y - mean.y, sigma.y))
        .copied()
        .collect();
    // |x − μ| ≤ 2σ cannot fail for every point at once, so `kept` is non-empty
    let mut lo = kept[0];
    let mut hi = kept[0];
    for p in &kept {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Ok(OutlierFilter {
        kept,
        bbox_min: lo,
        bbox_max: hi,
        center: (lo + hi) / 2.0,
    })
}

/// Total-least-squares line through `points`: centroid and unit direction of
/// largest spread.
pub fn fit_line(points: &[Point2]) -> Result<(Point2, Point2)> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit("need at least two positions".into()));
    }
    let c = points.iter().sum::<Point2>() / points.len() as f64;
    let mut s = Matrix2::zeros();
    for p in points {
        let d = p - c;
        s += d * d.transpose();
    }
    if s.trace() <= 1e-18 {
        return Err(Error::DegenerateFit("all positions coincide".into()));
    }
    let eig = SymmetricEigen::new(s);
    let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let mut dir: Point2 = eig.eigenvectors.column(k).into_owned();
    // fixed orientation so results do not depend on the solver's sign choice
    if dir.x < 0.0 || (dir.x == 0.0 && dir.y < 0.0) {
        dir = -dir;
    }
    Ok((c, dir.normalize()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementResult {
    pub intersections: Vec<Point2>,
    pub kept: Vec<Point2>,
    pub bbox_min: Point2,
    pub bbox_max: Point2,
    pub center: Point2,
    /// Point on and direction of the fitted route line.
    pub route_point: Point2,
    pub route_direction: Point2,
    /// `y = m·x + n` form of the route line; absent for a vertical route.
    pub slope_intercept: Option<(f64, f64)>,
    /// Foot of the perpendicular from the center onto the route line.
    pub foot: Point2,
    pub placement_direction: Point2,
    pub standoff: f64,
    /// The first recommendation lies on the same side of the route as the center.
    pub recommended: [Point2; 2],
}

impl PlacementResult {
    pub fn primary(&self) -> Point2 {
        self.recommended[0]
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let fmt = |p: &Point2| format!("{},{}", p.x, p.y);
        kv.set("intersections", self.intersections.len())
            .set("kept", self.kept.len())
            .set("bbox_min", fmt(&self.bbox_min))
            .set("bbox_max", fmt(&self.bbox_max))
            .set("center", fmt(&self.center))
            .set("route_point", fmt(&self.route_point))
            .set("route_direction", fmt(&self.route_direction))
            .set("foot", fmt(&self.foot))
            .set("placement_direction", fmt(&self.placement_direction))
            .set("standoff", self.standoff)
            .set("spoofer_primary", fmt(&self.recommended[0]))
            .set("spoofer_secondary", fmt(&self.recommended[1]));
        if let Some((m, n)) = self.slope_intercept {
            kv.set("route_slope", m).set("route_intercept", n);
        }
        kv
    }

    /// Writes `placement.txt` and `intersections.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.to_kv().write(dir.join("placement.txt"))?;
        let mut csv = String::from("x,y,kept\n");
        for p in &self.intersections {
            let kept = self.kept.contains(p);
            writeln!(csv, "{},{},{}", p.x, p.y, u8::from(kept)).expect("write to String");
        }
        let path = dir.join("intersections.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
    }

    /// Reads the primary recommendation back from `placement.txt`.
    pub fn read_primary(path: impl AsRef<Path>) -> Result<Point2> {
        let path = path.as_ref();
        let kv = KeyValues::read(path)?;
        let raw = kv
            .get("spoofer_primary")
            .ok_or_else(|| Error::param(format!("{} has no spoofer_primary entry", path.display())))?;
        let parts: Vec<f64> = raw
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::param(format!("malformed spoofer_primary {raw:?}")))?;
        match parts[..] {
            [x, y] => Ok(Point2::new(x, y)),
            _ => Err(Error::param(format!("malformed spoofer_primary {raw:?}"))),
        }
    }
}

/// Places the spoofer given the crossing cluster center. The route is fitted to
/// the top-m frames' positions.
pub fn placement_line(filter: OutlierFilter, intersections: Vec<Point2>, profile: &SmvsProfile, top_m: usize, standoff: f64) -> Result<PlacementResult> {
    let (lo, hi) = STANDOFF_RANGE;
    if !standoff.is_finite() {
        return Err(Error::param("standoff must be finite"));
    }
    let standoff = standoff.clamp(lo, hi);
    let positions: Vec<Point2> = top_entries(profile, top_m)?
        .iter()
        .map(|e| e.pose.translation.xy())
        .collect();
    let (route_point, route_direction) = fit_line(&positions)?;
    let center = filter.center;
    let foot = route_point + route_direction * (center - route_point).dot(&route_direction);
    let mut normal = Point2::new(-route_direction.y, route_direction.x);
    if (center - foot).dot(&normal) < 0.0 {
        normal = -normal;
    }
    let slope_intercept = (route_direction.x.abs() > 1e-12).then(|| {
        let m = route_direction.y / route_direction.x;
        (m, route_point.y - m * route_point.x)
    });
    Ok(PlacementResult {
        intersections,
        kept: filter.kept,
        bbox_min: filter.bbox_min,
        bbox_max: filter.bbox_max,
        center,
        route_point,
        route_direction,
        slope_intercept,
        foot,
        placement_direction: normal,
        standoff,
        recommended: [foot + normal * standoff, foot - normal * standoff],
    })
}

/// Directions → crossings → outlier cut → placement.
pub fn optimize_placement(profile: &SmvsProfile, top_m: usize, standoff: f64) -> Result<PlacementResult> {
    let lines = critical_directions(profile, top_m)?;
    let intersections = intersect_halflines(&lines);
    if intersections.is_empty() {
        return Err(Error::Analysis("critical directions never cross".into()));
    }
    let filter = filter_outliers(&intersections)?;
    placement_line(filter, intersections, profile, top_m, standoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::PoseSE3;
    use crate::smvs::FrameSmvs;

    fn hl(o: (f64, f64), d: (f64, f64)) -> HalfLine2D {
        HalfLine2D::new(Point2::new(o.0, o.1), Point2::new(d.0, d.1)).unwrap()
    }

    fn entry(id: usize, x: f64, y: f64, yaw: f64, value: f64, k: usize) -> ProfileEntry {
        ProfileEntry {
            frame_id: id,
            timestamp: id as f64,
            smvs: FrameSmvs { value, k_center: k, d_th: 8 },
            histogram: None,
            pose: PoseSE3::from_xyz_yaw(x, y, 0.0, yaw),
            near_degenerate: false,
        }
    }

    fn profile(entries: Vec<ProfileEntry>) -> SmvsProfile {
        SmvsProfile { n_regions: 72, d_th: 8, entries, gaps: Vec::new() }
    }

    #[test]
    fn pairwise_crossings() {
        let a = hl((0.0, 0.0), (1.0, 0.0));
        assert_eq!(intersect_halflines(&[a, hl((10.0, -10.0), (0.0, 1.0))]), vec![Point2::new(10.0, 0.0)]);
        assert!(intersect_halflines(&[a, hl((0.0, 1.0), (1.0, 0.0))]).is_empty());
        assert!(intersect_halflines(&[a, hl((10.0, 10.0), (0.0, 1.0))]).is_empty());
    }

    #[test]
    fn directions_follow_yaw() {
        // sector 36 spans [0°, 5°); the bin center sits at 2.5°
        let e = entry(0, 0.0, 0.0, 0.0, 1.0, 36);
        let l = entry_halfline(&e, 72).unwrap();
        assert!((l.direction.y.atan2(l.direction.x) - 2.5f64.to_radians()).abs() < 1e-12);
        let e = entry(0, 0.0, 0.0, std::f64::consts::FRAC_PI_2, 1.0, 36);
        let l = entry_halfline(&e, 72).unwrap();
        assert!((l.direction.y.atan2(l.direction.x) - 92.5f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn top_selection() {
        let p = profile(vec![entry(0, 0.0, 0.0, 0.0, 1.0, 36), entry(1, 1.0, 0.0, 0.0, 3.0, 36), entry(2, 2.0, 0.0, 0.0, 3.0, 36)]);
        let ids: Vec<usize> = top_entries(&p, 10).unwrap().iter().map(|e| e.frame_id).collect();
        assert_eq!(ids, vec![1, 2, 0]);
        let one = profile(vec![entry(0, 0.0, 0.0, 0.0, 1.0, 36)]);
        let err = critical_directions(&one, 10).unwrap_err().to_string();
        assert!(err.contains("need ≥ 2 frames"), "{err}");
    }

    #[test]
    fn outlier_cut() {
        let mut pts: Vec<Point2> = (0..20)
            .map(|i| {
                let a = i as f64 * 0.3;
                Point2::new(10.0 + 0.5 * a.cos(), 0.5 * a.sin())
            })
            .collect();
        pts.push(Point2::new(100.0, 100.0));
        let f = filter_outliers(&pts).unwrap();
        assert_eq!(f.kept.len(), 20);
        assert!((f.center - Point2::new(10.0, 0.0)).norm() < 0.6);
        let same = vec![Point2::new(1.0, 2.0); 4];
        let f = filter_outliers(&same).unwrap();
        assert_eq!((f.kept.len(), f.center), (4, Point2::new(1.0, 2.0)));
        let f = filter_outliers(&same[..1]).unwrap();
        assert_eq!((f.bbox_min, f.bbox_max), (same[0], same[0]));
    }

    fn center_only(c: Point2) -> OutlierFilter {
        OutlierFilter { kept: vec![c], bbox_min: c, bbox_max: c, center: c }
    }

    #[test]
    fn perpendicular_through_center() {
        let p = profile((0..5).map(|i| entry(i, i as f64 * 3.0, 0.0, 0.0, 1.0, 36)).collect());
        let r = placement_line(center_only(Point2::new(5.0, 2.0)), vec![], &p, 10, 12.5).unwrap();
        assert!((r.foot - Point2::new(5.0, 0.0)).norm() < 1e-12);
        assert!((r.recommended[0] - Point2::new(5.0, 12.5)).norm() < 1e-12);
        assert!((r.recommended[1] - Point2::new(5.0, -12.5)).norm() < 1e-12);
        assert_eq!(r.slope_intercept, Some((0.0, 0.0)));

        let p = profile((0..5).map(|i| entry(i, 0.0, i as f64 * 3.0, 0.0, 1.0, 36)).collect());
        let r = placement_line(center_only(Point2::new(4.0, 5.0)), vec![], &p, 10, 30.0).unwrap();
        assert_eq!(r.standoff, 15.0);
        assert!(r.slope_intercept.is_none());
        assert!((r.recommended[0] - Point2::new(15.0, 5.0)).norm() < 1e-12);
        assert!(r.placement_direction.dot(&r.route_direction).abs() < 1e-12);

        let p = profile((0..3).map(|i| entry(i, 1.0, 1.0, 0.0, 1.0, 36)).collect());
        assert!(matches!(
            placement_line(center_only(Point2::zeros()), vec![], &p, 10, 12.5),
            Err(Error::DegenerateFit(_))
        ));
    }
}
