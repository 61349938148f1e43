//! Two smooth parallel walls leave travel along them unobserved. This pins the
//! reason benign odometry drifts in the canyon archetype: it is a property of
//! the scene, not of the matcher.

use nalgebra::SymmetricEigen;
use smvslab::geometry::{estimate_covariances, voxel_downsample, CovarianceConfig};
use smvslab::matcher::{linearize, TargetMap};
use smvslab::scene::{build_scene, raycast_frame, Archetype, SceneSpec, SensorModel};
use smvslab::{Execution, PoseSE3};

/// (λ_min / λ_max, |along-track component| of the weakest direction) at the
/// middle of a 100 m course of the given archetype.
fn weakest_direction(kind: Archetype) -> (f64, f64) {
    let scene = build_scene(&SceneSpec::Archetype { kind, length: 100.0 }).unwrap();
    let sensor = SensorModel { range_noise: 0.0, ..SensorModel::default() };
    let pose = PoseSE3::from_xyz_yaw(50.0, 0.0, 1.8, 0.0);
    let prep = |seed| {
        let frame = voxel_downsample(&raycast_frame(&scene, &pose, &sensor, seed), 0.5).unwrap();
        estimate_covariances(&frame, &CovarianceConfig::default(), Execution::Sequential).unwrap()
    };
    let target = TargetMap::new(prep(1)).unwrap();
    let sys = linearize(&prep(1), &target, &PoseSE3::identity(), 2.0, Execution::Sequential).unwrap();
    let eig = SymmetricEigen::new(sys.h_global);
    let (k_min, _) = eig.eigenvalues.argmin();
    let ratio = eig.eigenvalues.min() / eig.eigenvalues.max();
    // twist order is rotation then translation; index 3 is travel along x
    (ratio, eig.eigenvectors.column(k_min)[3].abs())
}

#[test]
fn canyon_is_degenerate_along_the_route() {
    let (ratio, along) = weakest_direction(Archetype::Canyon);
    assert!(ratio < 1e-4, "λ_min/λ_max = {ratio:e}");
    assert!(along > 0.99, "weakest direction is only {along} along-track");
}

#[test]
fn mixed_course_constrains_every_direction() {
    let (canyon, _) = weakest_direction(Archetype::Canyon);
    let (mixed, _) = weakest_direction(Archetype::Mixed);
    assert!(mixed > 50.0 * canyon, "mixed {mixed:e} vs canyon {canyon:e}");
}
