use nalgebra::Vector2;
use proptest::prelude::*;
use smvslab::scene::{build_scene, raycast_frame, Archetype, SceneSpec, SensorModel, TrajectorySpec};
use smvslab::PoseSE3;

fn archetype() -> impl Strategy<Value = Archetype> {
    prop::sample::select(vec![Archetype::Canyon, Archetype::OpenWall, Archetype::Mixed])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noiseless_returns_lie_on_surfaces(kind in archetype(), x in 0.0f64..60.0, y in -3.0f64..3.0, yaw in -3.1f64..3.1, seed: u64) {
        let scene = build_scene(&SceneSpec::Archetype { kind, length: 60.0 }).unwrap();
        let sensor = SensorModel { rings: 8, horizontal_res_deg: 2.0, ..SensorModel::default() };
        let pose = PoseSE3::from_xyz_yaw(x, y, 1.8, yaw);
        let frame = raycast_frame(&scene, &pose, &sensor, seed);
        prop_assert!(frame.len() <= sensor.rings * sensor.horizontal_steps());
        for p in frame.points() {
            let w = pose.transform_point(p);
            prop_assert!(scene.surface_distance(&w) < 1e-9, "{w:?} is {} m off every surface", scene.surface_distance(&w));
            prop_assert!(p.norm() <= sensor.max_range + 1e-9);
        }
    }

    #[test]
    fn noisy_frames_respect_the_ray_budget(kind in archetype(), noise in 0.0f64..0.1, seed: u64) {
        let scene = build_scene(&SceneSpec::Archetype { kind, length: 40.0 }).unwrap();
        let sensor = SensorModel { rings: 4, horizontal_res_deg: 3.0, range_noise: noise, ..SensorModel::default() };
        let frame = raycast_frame(&scene, &PoseSE3::from_xyz_yaw(20.0, 0.0, 1.8, 0.0), &sensor, seed);
        prop_assert!(frame.len() <= sensor.rings * sensor.horizontal_steps());
    }

    #[test]
    fn straight_routes_advance_one_step_per_frame(heading in -3.1f64..3.1, length in 1.0f64..200.0, speed in 0.5f64..20.0, rate in 1.0f64..30.0) {
        let dir = Vector2::new(heading.cos(), heading.sin());
        let route = TrajectorySpec {
            waypoints: vec![Vector2::new(3.0, -2.0), Vector2::new(3.0, -2.0) + dir * length],
            ..TrajectorySpec::straight(length, speed, rate)
        };
        let gt = route.sample().unwrap();
        let step = speed / rate;
        for w in gt.poses().windows(2) {
            prop_assert!(((w[1].translation - w[0].translation).norm() - step).abs() < 1e-9);
        }
    }
}
