use std::cmp::Ordering;
use std::collections::BinaryHeap;

use marvin_core::grid::GridGeometry;
use marvin_core::nav::{plan_cells, Costmap, PathCost, LETHAL};
use marvin_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Exact a + b*sqrt(2), compared by sign analysis, independent of the planner.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Exact(u64, u64);

impl Ord for Exact {
    fn cmp(&self, o: &Self) -> Ordering {
        let da = self.0 as i128 - o.0 as i128;
        let db = self.1 as i128 - o.1 as i128;
        if da == 0 && db == 0 {
            return Ordering::Equal;
        }
        if da >= 0 && db >= 0 {
            return Ordering::Greater;
        }
        if da <= 0 && db <= 0 {
            return Ordering::Less;
        }
        // opposite signs: compare |da| with |db|*sqrt(2)
        let lhs = da * da;
        let rhs = 2 * db * db;
        if da > 0 {
            lhs.cmp(&rhs)
        } else {
            rhs.cmp(&lhs)
        }
    }
}

impl PartialOrd for Exact {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn dijkstra(map: &Costmap, s: (i64, i64), t: (i64, i64)) -> Option<Exact> {
    let g = map.geometry;
    let lethal = |x: i64, y: i64| map.cost(x, y).is_none_or(|c| c == LETHAL);
    let mut dist: Vec<Option<Exact>> = vec![None; g.len()];
    let mut heap = BinaryHeap::new();
    dist[g.index(s.0, s.1)] = Some(Exact(0, 0));
    heap.push(std::cmp::Reverse((Exact(0, 0), s)));
    while let Some(std::cmp::Reverse((d, (x, y)))) = heap.pop() {
        if dist[g.index(x, y)] != Some(d) {
            continue;
        }
        if (x, y) == t {
            return Some(d);
        }
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if (dx, dy) == (0, 0) || lethal(x + dx, y + dy) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && (lethal(x + dx, y) || lethal(x, y + dy)) {
                    continue;
                }
                let w = 253 + map.cost(x + dx, y + dy).unwrap() as u64;
                let nd = if diag { Exact(d.0, d.1 + w) } else { Exact(d.0 + w, d.1) };
                let ni = g.index(x + dx, y + dy);
                if dist[ni].is_none_or(|old| nd < old) {
                    dist[ni] = Some(nd);
                    heap.push(std::cmp::Reverse((nd, (x + dx, y + dy))));
                }
            }
        }
    }
    None
}

fn random_map(rng: &mut ChaCha8Rng) -> Costmap {
    let geometry = GridGeometry {
        width: 32,
        height: 32,
        resolution: 0.05,
        origin_x: 0.0,
        origin_y: 0.0,
    };
    let density = rng.random_range(0.05..0.3);
    let radius = rng.random_range(0.0..0.2);
    let mut map = Costmap::empty(geometry, radius);
    let cells: Vec<_> = (0..geometry.len())
        .filter(|_| rng.random_bool(density))
        .map(|i| geometry.coords(i))
        .collect();
    map.add_obstacles(cells, None);
    map
}

fn free_cell(map: &Costmap, rng: &mut ChaCha8Rng) -> (i64, i64) {
    loop {
        let c = (rng.random_range(0..32), rng.random_range(0..32));
        if !map.is_lethal(c.0, c.1) {
            return c;
        }
    }
}

#[test]
fn plan_cost_equals_dijkstra_on_random_grids() {
    let mut reachable = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng);
        let s = free_cell(&map, &mut rng);
        let t = free_cell(&map, &mut rng);
        match (plan_cells(&map, s, t), dijkstra(&map, s, t)) {
            (Ok(p), Some(best)) => {
                reachable += 1;
                assert_eq!(Exact(p.exact_cost.straight, p.exact_cost.diagonal), best, "seed {seed}");
                let oracle = PathCost {
                    straight: best.0,
                    diagonal: best.1,
                };
                assert_eq!(p.cost.to_bits(), oracle.value(0.05).to_bits(), "seed {seed}");
                assert_eq!(p.cells.first(), Some(&s));
                assert_eq!(p.cells.last(), Some(&t));
                // the returned cells realise the reported cost and avoid lethal cells
                let mut acc = Exact(0, 0);
                for w in p.cells.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    assert!(!map.is_lethal(b.0, b.1));
                    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                    assert!(dx.abs() <= 1 && dy.abs() <= 1 && (dx, dy) != (0, 0));
                    let wgt = 253 + map.cost(b.0, b.1).unwrap() as u64;
                    if dx != 0 && dy != 0 {
                        assert!(!map.is_lethal(a.0 + dx, a.1) && !map.is_lethal(a.0, a.1 + dy));
                        acc.1 += wgt;
                    } else {
                        acc.0 += wgt;
                    }
                }
                assert_eq!(acc, best, "seed {seed}");
            }
            (Err(Error::NoPath), None) => {}
            (got, want) => panic!("seed {seed}: planner {got:?} vs oracle {want:?}"),
        }
    }
    assert!(reachable > 50, "only {reachable} reachable instances");
}

#[test]
fn side_opening_detour_is_optimal() {
    let geometry = GridGeometry {
        width: 20,
        height: 20,
        resolution: 0.1,
        origin_x: 0.0,
        origin_y: 0.0,
    };
    let mut map = Costmap::empty(geometry, 0.0);
    map.add_obstacles((0..18).map(|y| (10, y)), None);
    let p = plan_cells(&map, (2, 2), (17, 2)).unwrap();
    let best = dijkstra(&map, (2, 2), (17, 2)).unwrap();
    assert_eq!(Exact(p.exact_cost.straight, p.exact_cost.diagonal), best);
    assert!(p.cells.iter().any(|c| c.1 >= 18));
}
