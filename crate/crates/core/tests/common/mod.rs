#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smvslab::geometry::{estimate_covariances, CovarianceConfig, Point3, PointCloud};
use smvslab::Execution;

/// Points scattered on a floor and three walls of a small room, jittered by
/// `noise`; the arrangement constrains all six pose directions.
pub fn room(seed: u64, n: usize, noise: f64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tilt: f64 = rng.random_range(-0.3..0.3);
    (0..n)
        .map(|i| {
            let (u, v) = (rng.random_range(-4.0..4.0), rng.random_range(0.0..3.0));
            let p = match i % 4 {
                0 => Point3::new(u, rng.random_range(-4.0..4.0), 0.0),
                1 => Point3::new(5.0, u, v),
                2 => Point3::new(u, 6.0 + tilt * u, v),
                _ => Point3::new(-3.0 + 0.5 * v, u, v),
            };
            p + Point3::new(rng.random_range(-noise..=noise), rng.random_range(-noise..=noise), rng.random_range(-noise..=noise))
        })
        .collect()
}

pub fn with_covariances(points: Vec<Point3>) -> PointCloud {
    estimate_covariances(&PointCloud::new(points).unwrap(), &CovarianceConfig::default(), Execution::Sequential).unwrap()
}
