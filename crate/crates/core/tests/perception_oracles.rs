use marvin_core::grid::{Cell, OccupancyGrid};
use marvin_core::kinematics::Pose2D;
use marvin_core::perception::detect::{person_visible, project_skeleton};
use marvin_core::perception::skeleton::PoseClass;
use marvin_core::perception::{
    associate, classify_pose, project_goal, synth_detect, BBox, CameraModel, SortParams, SortTracker,
};
use marvin_core::worldsim::{BodyLimits, PersonAgent, Posture, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const POSTURES: [Posture; 3] = [Posture::Standing, Posture::Sitting, Posture::Laying];

struct Sample {
    camera: CameraModel,
    person: Pose2D,
    posture: Posture,
}

// Randomised viewpoint: 2-5.5 m away, inside the horizontal FOV, any body
// orientation, any mast height, mild tilt. Views that crop a joint out of the
// image are redrawn, so every sample is a complete labelled skeleton.
fn sample(rng: &mut ChaCha8Rng) -> Sample {
    loop {
        let s = draw(rng);
        let (kp, _) = project_skeleton::<ChaCha8Rng>(&s.camera, &s.person, s.posture, None).unwrap();
        if kp.points().iter().all(|k| k.confidence > 0.0) {
            return s;
        }
    }
}

fn draw(rng: &mut ChaCha8Rng) -> Sample {
    let camera = CameraModel::default().mounted(rng.random_range(0.0..0.35), rng.random_range(0.0..10.0));
    let range = rng.random_range(2.0..5.5);
    let bearing = rng.random_range(-0.5..0.5f64);
    Sample {
        camera,
        person: Pose2D::new(range * bearing.cos(), range * bearing.sin(), rng.random_range(-PI..PI)),
        posture: POSTURES[rng.random_range(0..3)],
    }
}

fn accuracy(sigma: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut correct = 0;
    for _ in 0..1000 {
        let s = sample(&mut rng);
        let (kp, _) = project_skeleton(&s.camera, &s.person, s.posture, Some((&mut noise_rng, sigma))).unwrap();
        if classify_pose(&kp) == PoseClass::from(s.posture) {
            correct += 1;
        }
    }
    correct as f64 / 1000.0
}

#[test]
fn classifier_exact_without_noise() {
    assert_eq!(accuracy(0.0, 11), 1.0);
}

#[test]
fn classifier_robust_to_pixel_noise() {
    let acc = accuracy(2.0, 12);
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn goal_projection_inverts_synthetic_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let s = sample(&mut rng);
        let (kp, depths) = project_skeleton::<ChaCha8Rng>(&s.camera, &s.person, s.posture, None).unwrap();
        let torso = [5usize, 6, 11, 12];
        let depth = torso.iter().map(|j| depths[*j]).sum::<f64>() / 4.0;
        let g = project_goal(&kp, depth, &s.camera, 0.0).unwrap();
        let err = (g.x - s.person.x).hypot(g.y - s.person.y);
        assert!(err < 0.05, "{:?} {:?} err {err}", s.person, s.posture);
    }
}

#[test]
fn occlusion_matches_segment_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut grid = OccupancyGrid::new(80, 80, 0.1, (-4.0, -4.0), Cell::Free).unwrap();
    for _ in 0..25 {
        let (cx, cy) = (rng.random_range(0..80), rng.random_range(0..80));
        if (cx as i64 - 40).abs() > 3 || (cy as i64 - 40).abs() > 3 {
            grid.set(cx, cy, Cell::Occupied);
        }
    }
    let camera = CameraModel::default();
    let robot = Pose2D::new(0.05, 0.05, 0.3);
    let mut hidden = 0;
    for _ in 0..400 {
        let p = PersonAgent::new(
            "p",
            Pose2D::new(rng.random_range(-3.9..3.9), rng.random_range(-3.9..3.9), 0.0),
            0.0,
        )
        .unwrap();
        let (lx, ly) = robot.to_local(p.pose.x, p.pose.y);
        let in_fov = lx > 0.0 && ly.atan2(lx).abs() < camera.hfov() / 2.0 && lx <= camera.max_depth;
        // dense sampling along the sight line
        let clear = (0..=4000).all(|k| {
            let f = k as f64 / 4000.0;
            !grid.is_occupied_world(robot.x + (p.pose.x - robot.x) * f, robot.y + (p.pose.y - robot.y) * f)
        });
        if in_fov && !clear {
            hidden += 1;
        }
        assert_eq!(
            person_visible(&grid, &robot, &camera, &p),
            in_fov && clear,
            "{:?}",
            p.pose
        );
    }
    assert!(hidden > 5);
}

#[test]
fn detector_respects_visibility() {
    let mut grid = OccupancyGrid::new(100, 60, 0.1, (-1.0, -3.0), Cell::Free).unwrap();
    for cy in 0..60 {
        grid.set(30, cy, Cell::Occupied);
    }
    let mut w = World::new(grid, Pose2D::default(), BodyLimits::default()).unwrap();
    w.persons = vec![
        PersonAgent::new("near", Pose2D::new(1.5, 0.2, PI), 0.0).unwrap(),
        PersonAgent::new("behind", Pose2D::new(4.0, 0.0, PI), 0.0).unwrap(),
    ];
    let d = synth_detect::<ChaCha8Rng>(&w, &CameraModel::default(), None);
    assert_eq!(d.iter().map(|d| d.person).collect::<Vec<_>>(), vec![0]);
}

fn exhaustive_best(dets: &[BBox], tracks: &[BBox], thr: f64) -> f64 {
    fn go(i: usize, dets: &[BBox], tracks: &[BBox], used: &mut Vec<bool>, thr: f64) -> f64 {
        if i == dets.len() {
            return 0.0;
        }
        let mut best = go(i + 1, dets, tracks, used, thr);
        for t in 0..tracks.len() {
            let v = dets[i].iou(&tracks[t]);
            if !used[t] && v >= thr {
                used[t] = true;
                best = best.max(v + go(i + 1, dets, tracks, used, thr));
                used[t] = false;
            }
        }
        best
    }
    go(0, dets, tracks, &mut vec![false; tracks.len()], thr)
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let (u, v) = (rng.random_range(0.0..200.0), rng.random_range(0.0..150.0));
    let (w, h) = (rng.random_range(20.0..80.0), rng.random_range(40.0..160.0));
    BBox {
        x1: u,
        y1: v,
        x2: u + w,
        y2: v + h,
    }
}

#[test]
fn association_matches_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for frame in 0..2000 {
        let dets: Vec<_> = (0..rng.random_range(0..=5)).map(|_| random_box(&mut rng)).collect();
        let tracks: Vec<_> = (0..rng.random_range(0..=5)).map(|_| random_box(&mut rng)).collect();
        let pairs = associate(&dets, &tracks, 0.3);
        let total: f64 = pairs.iter().map(|&(d, t)| dets[d].iou(&tracks[t])).sum();
        let best = exhaustive_best(&dets, &tracks, 0.3);
        assert!((total - best).abs() < 1e-9, "frame {frame}: {total} vs {best}");
        let mut ds: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let mut ts: Vec<_> = pairs.iter().map(|p| p.1).collect();
        ds.dedup();
        ts.sort_unstable();
        ts.dedup();
        assert_eq!((ds.len(), ts.len()), (pairs.len(), pairs.len()));
    }
}

#[test]
fn crossing_boxes_keep_their_ids() {
    let mut sort = SortTracker::new(SortParams::default());
    let mut owners = None;
    for k in 0..20 {
        let a = 100.0 + 15.0 * k as f64;
        let b = 400.0 - 15.0 * k as f64;
        // box A slightly lower, so the pair overlaps while crossing
        let dets = [
            BBox {
                x1: a - 30.0,
                y1: 110.0,
                x2: a + 30.0,
                y2: 310.0,
            },
            BBox {
                x1: b - 30.0,
                y1: 90.0,
                x2: b + 30.0,
                y2: 290.0,
            },
        ];
        let ids = sort.update(&dets);
        match owners {
            None => owners = Some((ids[0], ids[1])),
            Some(o) => assert_eq!((ids[0], ids[1]), o, "frame {k}"),
        }
    }
    assert_eq!(owners, Some((1, 2)));
}

#[test]
fn ids_strictly_increase_and_never_repeat() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sort = SortTracker::new(SortParams::default());
    let mut seen = std::collections::BTreeSet::new();
    let mut max_seen = 0;
    for _ in 0..300 {
        let dets: Vec<_> = (0..rng.random_range(0..=4)).map(|_| random_box(&mut rng)).collect();
        let existing: std::collections::BTreeSet<u64> = sort.tracks.iter().map(|t| t.id).collect();
        for id in sort.update(&dets) {
            if !existing.contains(&id) && !seen.contains(&id) {
                assert!(id > max_seen);
                max_seen = id;
            }
            seen.insert(id);
        }
        for t in &sort.tracks {
            assert!(t.state[2] > 0.0 && t.state[3] > 0.0);
        }
    }
}
