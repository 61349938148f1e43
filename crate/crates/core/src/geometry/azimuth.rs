use std::f64::consts::{PI, TAU};

use super::Point3;
use crate::error::{Error, Result};

/// Equal horizontal sectors over the full circle; sector 0 starts at −π.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AzimuthBinning {
    n: usize,
}

impl AzimuthBinning {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::param(format!("region count must be even and at least 4, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.n as f64
    }

    /// Region index for an azimuth in (−π, π].
    pub fn bin_of_angle(&self, theta: f64) -> usize {
        let k = ((theta + PI) * self.n as f64 / TAU).floor() as i64;
        k.rem_euclid(self.n as i64) as usize
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        -PI + (k as f64 + 0.5) * self.bin_width()
    }

    /// Circular distance between two region indices.
    pub fn circular_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b) % self.n;
        d.min(self.n - d)
    }
}

impl Default for AzimuthBinning {
    fn default() -> Self {
        Self { n: 72 }
    }
}

/// Full-quadrant horizontal angle of a point.
pub fn azimuth(p: &Point3) -> Result<f64> {
    if p.x == 0.0 && p.y == 0.0 {
        return Err(Error::UndefinedAzimuth);
    }
    Ok(p.y.atan2(p.x))
}

pub fn azimuth_bin(p: &Point3, binning: &AzimuthBinning) -> Result<usize> {
    Ok(binning.bin_of_angle(azimuth(p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_points() {
        let b = AzimuthBinning::new(72).unwrap();
        assert_eq!(azimuth_bin(&Point3::new(1.0, 0.0, 0.0), &b).unwrap(), 36);
        assert_eq!(azimuth_bin(&Point3::new(0.0, 1.0, 0.0), &b).unwrap(), 54);
        assert_eq!(azimuth_bin(&Point3::new(-1.0, 0.0, 0.0), &b).unwrap(), 0);
        assert!(matches!(azimuth_bin(&Point3::new(0.0, 0.0, 3.0), &b), Err(Error::UndefinedAzimuth)));
    }

    #[test]
    fn invalid_region_counts() {
        assert!(AzimuthBinning::new(2).is_err());
        assert!(AzimuthBinning::new(71).is_err());
        assert!(AzimuthBinning::new(4).is_ok());
    }

    #[test]
    fn matches_angle_range_oracle() {
        let b = AzimuthBinning::new(72).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let p = Point3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-2.0..2.0));
            let theta = p.y.atan2(p.x);
            let k = azimuth_bin(&p, &b).unwrap();
            // oracle: linear search for the half-open sector containing theta
            let found = (0..72)
                .filter(|&j| {
                    let lo = -PI + TAU * j as f64 / 72.0;
                    let hi = -PI + TAU * (j + 1) as f64 / 72.0;
                    theta >= lo && theta < hi
                })
                .collect::<Vec<_>>();
            let expected = if theta == PI { 0 } else { found[0] };
            assert_eq!(found.len() <= 1, true);
            assert_eq!(k, expected, "theta={theta}");
        }
    }

    #[test]
    fn circular_distance_symmetric() {
        let b = AzimuthBinning::new(72).unwrap();
        assert_eq!(b.circular_distance(0, 71), 1);
        assert_eq!(b.circular_distance(71, 0), 1);
        assert_eq!(b.circular_distance(10, 46), 36);
        let total: usize = (0..72).map(|k| b.circular_distance(5, k)).sum();
        assert_eq!(total, 1296);
    }
}
