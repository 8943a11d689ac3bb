use marvin_core::kinematics::{ChassisParams, Pose2D};
use marvin_core::nav::{follow_path, FollowParams, Gaze};
use proptest::prelude::*;

fn path_from(points: &[(f64, f64)]) -> Vec<Pose2D> {
    points.iter().map(|&(x, y)| Pose2D::new(x, y, 0.0)).collect()
}

proptest! {
    #[test]
    fn follow_output_inside_octahedron(
        pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..8),
        px in -5.0..5.0f64, py in -5.0..5.0f64, yaw in -3.1..3.1f64,
        gx in -5.0..5.0f64, gy in -5.0..5.0f64,
    ) {
        let c = ChassisParams::default();
        let out = follow_path(&path_from(&pts), &Pose2D::new(px, py, yaw), Gaze::Point(gx, gy), None, &FollowParams::default(), &c).unwrap();
        let t = out.twist;
        prop_assert!(t.vx.abs() + t.vy.abs() + c.lever() * t.yaw_rate.abs() <= c.velocity_budget() * (1.0 + 1e-9));
    }

    #[test]
    fn gaze_never_changes_translation(
        pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..8),
        px in -5.0..5.0f64, py in -5.0..5.0f64, yaw in -3.1..3.1f64,
        g1 in -3.1..3.1f64, g2 in -3.1..3.1f64,
    ) {
        let c = ChassisParams::default();
        let p = FollowParams::default();
        let path = path_from(&pts);
        let pose = Pose2D::new(px, py, yaw);
        let a = follow_path(&path, &pose, Gaze::Heading(g1), None, &p, &c).unwrap();
        let b = follow_path(&path, &pose, Gaze::Heading(g2), None, &p, &c).unwrap();
        prop_assert_eq!((a.raw.vx, a.raw.vy), (b.raw.vx, b.raw.vy));
        prop_assert!(a.raw.vx.hypot(a.raw.vy) <= p.v_max + 1e-12);
    }
}
