//! SORT multi-object tracking: constant-velocity Kalman boxes with optimal
//! IoU assignment.

use nalgebra::{SMatrix, SVector};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::perception::skeleton::BBox;

type State = SVector<f64, 7>;
type Cov = SMatrix<f64, 7, 7>;
type Meas = SVector<f64, 4>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SortParams {
    pub iou_threshold: f64,
    pub max_age: u32,
    pub min_hits: u32,
}

impl Default for SortParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            max_age: 5,
            min_hits: 3,
        }
    }
}

/// Box as `[u, v, s, r]`: centre, area and aspect ratio.
fn to_z(b: &BBox) -> Meas {
    let w = b.x2 - b.x1;
    let h = b.y2 - b.y1;
    Meas::new(b.x1 + w / 2.0, b.y1 + h / 2.0, w * h, w / h)
}

fn to_box(x: &State) -> BBox {
    let w = (x[2] * x[3]).max(0.0).sqrt();
    let h = if w > 0.0 { x[2] / w } else { 0.0 };
    BBox {
        x1: x[0] - w / 2.0,
        y1: x[1] - h / 2.0,
        x2: x[0] + w / 2.0,
        y2: x[1] + h / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    /// `[u, v, s, r, u', v', s']`
    pub state: [f64; 7],
    cov: Vec<f64>,
    pub hits: u32,
    pub hit_streak: u32,
    pub age: u32,
    pub time_since_update: u32,
}

impl Track {
    fn new(id: u64, b: &BBox) -> Self {
        let z = to_z(b);
        let mut p = Cov::identity() * 10.0;
        for i in 4..7 {
            p[(i, i)] = 1e4;
        }
        Self {
            id,
            state: [z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0],
            cov: p.as_slice().to_vec(),
            hits: 1,
            hit_streak: 1,
            age: 0,
            time_since_update: 0,
        }
    }

    fn x(&self) -> State {
        State::from_column_slice(&self.state)
    }

    fn p(&self) -> Cov {
        Cov::from_column_slice(&self.cov)
    }

    fn store(&mut self, x: State, p: Cov) {
        self.state.copy_from_slice(x.as_slice());
        self.cov.copy_from_slice(p.as_slice());
    }

    pub fn bbox(&self) -> BBox {
        to_box(&self.x())
    }

    pub fn confirmed(&self, params: &SortParams) -> bool {
        self.hits >= params.min_hits
    }

    fn predict(&mut self) {
        let mut x = self.x();
        if x[2] + x[6] <= 0.0 {
            x[6] = 0.0;
        }
        let mut f = Cov::identity();
        f[(0, 4)] = 1.0;
        f[(1, 5)] = 1.0;
        f[(2, 6)] = 1.0;
        let mut q = Cov::identity();
        for i in 4..7 {
            q[(i, i)] = 0.01;
        }
        q[(6, 6)] = 1e-4;
        let x = f * x;
        let p = f * self.p() * f.transpose() + q;
        self.store(x, p);
        self.age += 1;
        if self.time_since_update > 0 {
            self.hit_streak = 0;
        }
        self.time_since_update += 1;
    }

    fn correct(&mut self, b: &BBox) {
        let mut h = SMatrix::<f64, 4, 7>::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&Meas::new(1.0, 1.0, 10.0, 10.0));
        let (x, p) = (self.x(), self.p());
        let s = h * p * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
        let k = p * h.transpose() * s_inv;
        let x = x + k * (to_z(b) - h * x);
        let p = (Cov::identity() - k * h) * p;
        self.store(x, p);
        self.time_since_update = 0;
        self.hits += 1;
        self.hit_streak += 1;
    }
}

/// IoU-maximising one-to-one matching; pairs below `threshold` are left unmatched.
/// Returns `(detection, track)` pairs sorted by detection.
pub fn associate(dets: &[BBox], tracks: &[BBox], threshold: f64) -> Vec<(usize, usize)> {
    if dets.is_empty() || tracks.is_empty() {
        return Vec::new();
    }
    let iou = |d: usize, t: usize| {
        let v = dets[d].iou(&tracks[t]);
        if v >= threshold {
            v
        } else {
            0.0
        }
    };
    // integer weights keep the solver exact; rows must not outnumber columns
    let scale = |v: f64| (v * 1e12).round() as i64;
    let transpose = dets.len() > tracks.len();
    let (rows, cols) = if transpose {
        (tracks.len(), dets.len())
    } else {
        (dets.len(), tracks.len())
    };
    let w = Matrix::from_fn(
        rows,
        cols,
        |(r, c)| {
            if transpose {
                scale(iou(c, r))
            } else {
                scale(iou(r, c))
            }
        },
    );
    let (_, assign) = kuhn_munkres(&w);
    let mut pairs: Vec<(usize, usize)> = assign
        .into_iter()
        .enumerate()
        .map(|(r, c)| if transpose { (c, r) } else { (r, c) })
        .filter(|&(d, t)| dets[d].iou(&tracks[t]) >= threshold)
        .collect();
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortTracker {
    pub params: SortParams,
    pub tracks: Vec<Track>,
    next_id: u64,
}

impl SortTracker {
    pub fn new(params: SortParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    /// One frame: predict, drop tracks unseen for more than `max_age` frames,
    /// associate, correct, spawn. Returns the track id of each detection.
    pub fn update(&mut self, dets: &[BBox]) -> Vec<u64> {
        for t in &mut self.tracks {
            t.predict();
        }
        let max_age = self.params.max_age;
        self.tracks.retain(|t| t.time_since_update <= max_age);
        let predicted: Vec<BBox> = self.tracks.iter().map(Track::bbox).collect();
        let pairs = associate(dets, &predicted, self.params.iou_threshold);
        let mut ids = vec![0; dets.len()];
        for &(d, t) in &pairs {
            self.tracks[t].correct(&dets[d]);
            ids[d] = self.tracks[t].id;
        }
        for (d, b) in dets.iter().enumerate() {
            if pairs.iter().any(|p| p.0 == d) {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track::new(id, b));
            ids[d] = id;
        }
        ids
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }
}

/// Lowest id among confirmed tracks.
pub fn select_target(tracks: &[Track], params: &SortParams) -> Option<u64> {
    tracks.iter().filter(|t| t.confirmed(params)).map(|t| t.id).min()
}
