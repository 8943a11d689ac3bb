use marvin_core::bus::{arbitrate_velocity, ArbiterConfig, VelocityCommand, VelocitySource};
use marvin_core::grid::{Cell, OccupancyGrid};
use marvin_core::kinematics::Twist2D;
use marvin_core::messages::{marvin_bus, topics, EStopCommand, LightsCommand, Message};
use marvin_core::nav::mapfile::{read_map, write_map};
use marvin_core::perception::{associate, BBox};
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = Vec<BBox>> {
    prop::collection::vec((0.0..200.0f64, 0.0..150.0f64, 10.0..80.0f64, 20.0..160.0f64), 0..6).prop_map(|v| {
        v.into_iter()
            .map(|(x, y, w, h)| BBox {
                x1: x,
                y1: y,
                x2: x + w,
                y2: y + h,
            })
            .collect()
    })
}

fn cell() -> impl Strategy<Value = Cell> {
    prop_oneof![Just(Cell::Free), Just(Cell::Occupied), Just(Cell::Unknown)]
}

proptest! {
    // per-topic FIFO with consecutive sequence numbers; overflow drops the oldest
    #[test]
    fn bus_delivery_order(ops in prop::collection::vec(any::<bool>(), 0..200), depth in 1usize..64) {
        let bus = marvin_bus();
        let lights = bus.subscribe_with_depth(topics::LIGHTS, depth).unwrap();
        let all = bus.subscribe_all(1 << 12);
        let p = bus.publisher("p");
        let mut sent_lights = Vec::new();
        for (i, on) in ops.iter().enumerate() {
            bus.set_clock(i as f64);
            if *on {
                p.publish(topics::LIGHTS, Message::LightsCommand(LightsCommand { on: i % 2 == 0 })).unwrap();
                sent_lights.push(i as f64);
            } else {
                p.publish(topics::ESTOP, Message::EstopCommand(EStopCommand { latch: true })).unwrap();
            }
        }
        let got = lights.drain();
        let keep = sent_lights.len().min(depth);
        prop_assert_eq!(lights.dropped() as usize, sent_lights.len() - keep);
        let stamps: Vec<f64> = got.iter().map(|e| e.stamp).collect();
        prop_assert_eq!(&stamps[..], &sent_lights[sent_lights.len() - keep..]);
        for w in got.windows(2) {
            prop_assert_eq!(w[1].seq, w[0].seq + 1);
        }
        let everything = all.drain();
        prop_assert_eq!(everything.len(), ops.len());
        prop_assert!(everything.windows(2).all(|w| w[0].stamp < w[1].stamp));
    }

    #[test]
    fn map_file_round_trip(w in 1usize..24, h in 1usize..24, seed in prop::collection::vec(cell(), 576),
                           res in 0.01..0.5f64, ox in -10.0..10.0f64, oy in -10.0..10.0f64) {
        let grid = OccupancyGrid::from_cells(w, h, res, (ox, oy), seed[..w * h].to_vec()).unwrap();
        let mut bytes = Vec::new();
        write_map(&grid, &mut bytes).unwrap();
        let back = read_map(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &grid);
        let mut again = Vec::new();
        write_map(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn association_is_one_to_one_above_threshold(dets in boxes(), tracks in boxes(), thr in 0.05..0.9f64) {
        let pairs = associate(&dets, &tracks, thr);
        let mut d: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let mut t: Vec<_> = pairs.iter().map(|p| p.1).collect();
        d.sort_unstable();
        d.dedup();
        t.sort_unstable();
        t.dedup();
        prop_assert_eq!((d.len(), t.len()), (pairs.len(), pairs.len()));
        for (i, j) in pairs {
            prop_assert!(dets[i].iou(&tracks[j]) >= thr);
        }
    }

    #[test]
    fn latched_estop_always_wins(vx in -2.0..2.0f64, vy in -2.0..2.0f64, w in -3.0..3.0f64,
                                 manual in any::<bool>(), auto in any::<bool>(), now in 0.0..100.0f64) {
        let cmd = |source| VelocityCommand { twist: Twist2D::new(vx, vy, w), source, stamp: now };
        let m = cmd(VelocitySource::Manual);
        let a = cmd(VelocitySource::Autonomous);
        let out = arbitrate_velocity(manual.then_some(&m), auto.then_some(&a), true, now, &ArbiterConfig::default());
        prop_assert_eq!(out, Twist2D::ZERO);
    }
}
