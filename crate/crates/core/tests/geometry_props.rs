mod common;

use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use smvslab::geometry::{azimuth, azimuth_bin, voxel_downsample, AzimuthBinning, CovarianceConfig, Point3, PointCloud};

fn point() -> impl Strategy<Value = Point3> {
    (-20.0f64..20.0, -20.0f64..20.0, -5.0f64..5.0).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn voxel_downsample_is_idempotent_on_isolated_points(
        cells in prop::collection::btree_set((-30i32..30, -30i32..30, -5i32..5), 1..200),
        offs in prop::collection::vec((0.05f64..0.95, 0.05f64..0.95, 0.05f64..0.95), 200),
    ) {
        // one point strictly inside each distinct voxel
        let voxel = 0.5;
        let pts: Vec<Point3> = cells
            .iter()
            .zip(&offs)
            .map(|(&(i, j, k), &(a, b, c))| Point3::new((i as f64 + a) * voxel, (j as f64 + b) * voxel, (k as f64 + c) * voxel))
            .collect();
        let once = voxel_downsample(&PointCloud::new(pts.clone()).unwrap(), voxel).unwrap();
        let twice = voxel_downsample(&once, voxel).unwrap();
        prop_assert_eq!(once.len(), pts.len());
        prop_assert_eq!(once.points(), twice.points());
    }

    #[test]
    fn azimuth_bins_partition_the_circle(p in point(), n in (2usize..90).prop_map(|h| 2 * h)) {
        prop_assume!(p.x != 0.0 || p.y != 0.0);
        let binning = AzimuthBinning::new(n).unwrap();
        let theta = azimuth(&p).unwrap();
        let k = azimuth_bin(&p, &binning).unwrap();
        prop_assert!(k < n);
        let w = binning.bin_width();
        let lo = -PI + k as f64 * w;
        // half-open [lo, lo + w), with θ = π folded onto bin 0's start
        let t = if theta >= PI { theta - TAU } else { theta };
        prop_assert!(t >= lo - 1e-12 && t < lo + w + 1e-12, "θ={t} not in bin {k} [{lo}, {})", lo + w);
        prop_assert!((w * n as f64 - TAU).abs() < 1e-12);
    }

    #[test]
    fn covariance_spectrum_is_regularized(seed in 0u64..1000, noise in 0.0f64..0.05) {
        let cloud = common::with_covariances(common::room(seed, 120, noise));
        let eps = CovarianceConfig::default().epsilon;
        for c in cloud.covariances().unwrap() {
            let mut e: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
            e.sort_by(|a, b| b.total_cmp(a));
            prop_assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12 && (e[2] - eps).abs() < 1e-12, "{e:?}");
        }
    }
}
