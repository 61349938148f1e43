mod common;

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use smvslab::geometry::{azimuth, AzimuthBinning, CovarianceConfig, Point3, PointCloud};
use smvslab::smvs::{framewise_smvs, perturbed_clones, pointwise_smvs, smvs_from_histogram, CloneParams, ImportanceCloud, PointwiseConfig, RegionHistogram};
use smvslab::Execution;

const EXACT_CLONES: CloneParams = CloneParams {
    sigma: 0.0,
    keep_ratio: 1.0,
    seed: 0,
};

fn importance(points: Vec<Point3>) -> ImportanceCloud {
    let frame = PointCloud::new(points).unwrap();
    let (src, tgt) = perturbed_clones(&frame, &EXACT_CLONES, &CovarianceConfig::default(), Execution::Sequential).unwrap();
    pointwise_smvs(&src, &tgt, &PointwiseConfig::default(), Execution::Sequential).unwrap()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn histogram_conserves_importance(seed in 0u64..1000, noise in 0.0f64..0.05) {
        let imp = importance(common::room(seed, 200, noise));
        let binning = AzimuthBinning::default();
        let (_, hist) = framewise_smvs(&imp, &binning, 8).unwrap();
        let binnable: f64 = imp.points.iter().zip(&imp.importance).filter(|(p, _)| azimuth(p).is_ok()).map(|(_, i)| i).sum();
        prop_assert!((hist.total() - binnable).abs() < 1e-9);
    }

    #[test]
    fn point_order_does_not_matter(seed in 0u64..1000, stride in prop::sample::select(vec![7usize, 11, 13, 17])) {
        let pts = common::room(seed, 200, 0.02);
        let n = pts.len();
        let shuffled: Vec<Point3> = (0..n).map(|i| pts[(i * stride) % n]).collect();
        let binning = AzimuthBinning::default();
        let a = importance(pts);
        let b = importance(shuffled);
        for (x, y) in sorted(&a.importance).iter().zip(sorted(&b.importance)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (sa, ha) = framewise_smvs(&a, &binning, 8).unwrap();
        let (sb, hb) = framewise_smvs(&b, &binning, 8).unwrap();
        for (x, y) in ha.scores.iter().zip(&hb.scores) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!((sa.value - sb.value).abs() <= 1e-9 * sa.value.abs().max(1.0));
    }

    #[test]
    fn yaw_by_whole_sectors_shifts_the_histogram(seed in 0u64..1000, m in 1usize..72) {
        let n = 72;
        let binning = AzimuthBinning::new(n).unwrap();
        let pts = common::room(seed, 200, 0.02);
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::TAU * m as f64 / n as f64);
        let turned: Vec<Point3> = pts.iter().map(|p| rot * p).collect();
        let a = importance(pts);
        let b = importance(turned);
        prop_assume!(!a.near_degenerate && !b.near_degenerate);
        let (sa, ha) = framewise_smvs(&a, &binning, 8).unwrap();
        let (sb, hb) = framewise_smvs(&b, &binning, 8).unwrap();
        let scale = ha.total().max(1.0);
        for k in 0..n {
            prop_assert!((ha.scores[k] - hb.scores[(k + m) % n]).abs() < 1e-6 * scale, "sector {k}");
        }
        prop_assert!((sa.value - sb.value).abs() <= 1e-6 * sa.value.abs().max(1.0));
    }

    #[test]
    fn frame_score_is_bounded(scores in prop::collection::vec(0.0f64..50.0, 72), d_th in 1usize..=36) {
        let binning = AzimuthBinning::default();
        let hist = RegionHistogram::from_scores(scores);
        let total = hist.total();
        let s = smvs_from_histogram(&hist, &binning, d_th).unwrap().value;
        prop_assert!(s <= d_th as f64 * total + 1e-9);
        prop_assert!(s >= -((36 - d_th) as f64) * total - 1e-9);
    }
}

#[test]
fn real_frame_scores_respect_the_upper_bound() {
    let binning = AzimuthBinning::default();
    for seed in 0..5 {
        let imp = importance(common::room(seed, 300, 0.01));
        let (s, _) = framewise_smvs(&imp, &binning, 8).unwrap();
        assert!(s.value <= 8.0 * imp.total() + 1e-9);
    }
}
