//! A* over the 8-connected costmap graph.
//!
//! Step costs are `resolution * (1 + cost / 253)` for straight moves and
//! `sqrt(2)` times that for diagonals. Costs are accumulated exactly as
//! `(a + b * sqrt(2)) * resolution / 253` with integer `a` and `b`, so any two
//! optimal searches agree bit for bit on the total.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::kinematics::Pose2D;
use crate::nav::costmap::{Costmap, INFLATED_MAX, LETHAL};

/// Exact path cost `straight + diagonal * sqrt(2)` in units of `resolution / 253`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct PathCost {
    pub straight: u64,
    pub diagonal: u64,
}

impl PathCost {
    pub fn value(&self, resolution: f64) -> f64 {
        (self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2) * resolution / INFLATED_MAX
    }

    fn add(self, other: PathCost) -> PathCost {
        PathCost {
            straight: self.straight + other.straight,
            diagonal: self.diagonal + other.diagonal,
        }
    }
}

impl Ord for PathCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // sign of da + db * sqrt(2)
        let da = self.straight as i128 - other.straight as i128;
        let db = self.diagonal as i128 - other.diagonal as i128;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (a, b) if a >= 0 && b >= 0 => Ordering::Greater,
            (a, b) if a <= 0 && b <= 0 => Ordering::Less,
            (1, _) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for PathCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The eight moves; diagonals may not cut past a lethal orthogonal neighbour.
pub const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Successors of `(cx, cy)` with exact step costs. Shared graph definition.
pub fn neighbors(map: &Costmap, cx: i64, cy: i64) -> impl Iterator<Item = ((i64, i64), PathCost)> + '_ {
    MOVES.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (cx + dx, cy + dy);
        let c = map.cost(nx, ny)?;
        if c == LETHAL {
            return None;
        }
        let weight = INFLATED_MAX as u64 + u64::from(c);
        if dx != 0 && dy != 0 {
            if map.is_lethal(cx + dx, cy) || map.is_lethal(cx, cy + dy) {
                return None;
            }
            Some((
                (nx, ny),
                PathCost {
                    straight: 0,
                    diagonal: weight,
                },
            ))
        } else {
            Some((
                (nx, ny),
                PathCost {
                    straight: weight,
                    diagonal: 0,
                },
            ))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub cells: Vec<(i64, i64)>,
    pub poses: Vec<Pose2D>,
    pub exact_cost: PathCost,
    pub cost: f64,
}

impl PlannedPath {
    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].distance_to(&w[1])).sum()
    }
}

#[derive(PartialEq, Eq)]
struct Open {
    f: PathCost,
    index: usize,
}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then on cell index
        other.f.cmp(&self.f).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Octile distance in exact units; a lower bound since every weight is >= 253.
fn octile(a: (i64, i64), b: (i64, i64)) -> PathCost {
    let dx = (a.0 - b.0).unsigned_abs();
    let dy = (a.1 - b.1).unsigned_abs();
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    let w = INFLATED_MAX as u64;
    PathCost {
        straight: (hi - lo) * w,
        diagonal: lo * w,
    }
}

/// Minimal-cost path between the cells containing `start` and `goal`.
pub fn plan(map: &Costmap, start: (f64, f64), goal: (f64, f64)) -> Result<PlannedPath> {
    let g = map.geometry;
    let s = g.world_to_cell(start.0, start.1);
    let t = g.world_to_cell(goal.0, goal.1);
    plan_cells(map, s, t)
}

pub fn plan_cells(map: &Costmap, s: (i64, i64), t: (i64, i64)) -> Result<PlannedPath> {
    let g = map.geometry;
    for (name, c) in [("start", s), ("goal", t)] {
        match map.cost(c.0, c.1) {
            None => return Err(Error::invalid(format!("{name} cell {c:?} outside the costmap"))),
            Some(LETHAL) => return Err(Error::invalid(format!("{name} cell {c:?} is lethal"))),
            _ => {}
        }
    }
    let n = g.len();
    let mut best: Vec<Option<PathCost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let si = g.index(s.0, s.1);
    let ti = g.index(t.0, t.1);
    best[si] = Some(PathCost::default());
    let mut open = BinaryHeap::new();
    open.push(Open {
        f: octile(s, t),
        index: si,
    });
    while let Some(Open { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == ti {
            break;
        }
        let here = g.coords(index);
        let gc = best[index].expect("expanded node has a cost");
        for (next, step) in neighbors(map, here.0, here.1) {
            let ni = g.index(next.0, next.1);
            if closed[ni] {
                continue;
            }
            let cand = gc.add(step);
            if best[ni].is_none_or(|b| cand < b) {
                best[ni] = Some(cand);
                parent[ni] = index;
                open.push(Open {
                    f: cand.add(octile(next, t)),
                    index: ni,
                });
            }
        }
    }
    let exact = best[ti].ok_or(Error::NoPath)?;
    let mut cells = vec![t];
    let mut cur = ti;
    while cur != si {
        cur = parent[cur];
        cells.push(g.coords(cur));
    }
    cells.reverse();
    let mut poses: Vec<Pose2D> = cells
        .iter()
        .map(|&(cx, cy)| {
            let (x, y) = g.cell_center(cx, cy);
            Pose2D::new(x, y, 0.0)
        })
        .collect();
    let n = poses.len();
    for i in 0..n {
        let (a, b) = if i + 1 < n {
            (i, i + 1)
        } else if i > 0 {
            (i - 1, i)
        } else {
            continue;
        };
        let (pa, pb) = (poses[a], poses[b]);
        poses[i].yaw = (pb.y - pa.y).atan2(pb.x - pa.x);
    }
    Ok(PlannedPath {
        cells,
        poses,
        exact_cost: exact,
        cost: exact.value(g.resolution),
    })
}
