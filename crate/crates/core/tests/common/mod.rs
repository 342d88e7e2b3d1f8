//! Instance generators and independent reference implementations shared by
//! the integration suites.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rendezvous::model::MissionParams;
use rendezvous::world::{Cell, CellState, KnownMap};

/// Small missions with R <= 3 and S <= 3. The mix includes structurally
/// infeasible team sizes and horizons too short for the chained jobs.
pub fn mission_instances(n: usize, seed: u64) -> Vec<MissionParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.gen_range(2..=3);
            let s = rng.gen_range(1..=3);
            let m = [60.0, 100.0, 300.0, 600.0][rng.gen_range(0..4)];
            let p = [10.0, 30.0, 50.0][rng.gen_range(0..3)];
            let (a, b) = [(1.0, 1.0), (1.0, 0.0), (0.0, 1.0), (2.0, 0.5)][rng.gen_range(0..4)];
            MissionParams::new(r, s, m, p).with_weights(a, b)
        })
        .collect()
}

pub fn random_known(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    p_unknown: f64,
    p_occ: f64,
) -> KnownMap {
    let mut k = KnownMap::unknown(w, h, 1.0);
    for r in 0..h {
        for c in 0..w {
            let x: f64 = rng.gen();
            let s = if x < p_unknown {
                CellState::Unknown
            } else if x < p_unknown + p_occ {
                CellState::Occupied
            } else {
                CellState::Free
            };
            k.set(Cell::new(r, c), s);
        }
    }
    k
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Plain Dijkstra over known-free cells with unit orthogonal and sqrt(2)
/// diagonal steps. A diagonal is allowed only when both orthogonal cells it
/// passes are known-free. Returns the distance in cells.
pub fn dijkstra_cells(k: &KnownMap, from: Cell, to: Cell) -> Option<f64> {
    let (w, h) = (k.width, k.height);
    let free = |r: isize, c: isize| {
        r >= 0
            && c >= 0
            && (r as usize) < h
            && (c as usize) < w
            && k.get(Cell::new(r as usize, c as usize)) == CellState::Free
    };
    if !free(from.row as isize, from.col as isize) || !free(to.row as isize, to.col as isize) {
        return None;
    }
    let mut dist = vec![f64::INFINITY; w * h];
    let start = from.row * w + from.col;
    dist[start] = 0.0;
    let mut heap = BinaryHeap::from([Item(0.0, start)]);
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        let (r, c) = ((u / w) as isize, (u % w) as isize);
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                if (dr, dc) == (0, 0) || !free(r + dr, c + dc) {
                    continue;
                }
                let cost = if dr != 0 && dc != 0 {
                    if !free(r + dr, c) || !free(r, c + dc) {
                        continue;
                    }
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let v = (r + dr) as usize * w + (c + dc) as usize;
                if d + cost < dist[v] {
                    dist[v] = d + cost;
                    heap.push(Item(d + cost, v));
                }
            }
        }
    }
    let d = dist[to.row * w + to.col];
    d.is_finite().then_some(d)
}

/// Cells that are known-free with an unknown 4-neighbour, by direct scan.
pub fn brute_frontier_cells(k: &KnownMap) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    for r in 0..k.height {
        for c in 0..k.width {
            if k.get(Cell::new(r, c)) != CellState::Free {
                continue;
            }
            let unknown_nb =
                [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)]
                    .iter()
                    .any(|&(dr, dc)| {
                        let (nr, nc) = (r as isize + dr, c as isize + dc);
                        nr >= 0
                            && nc >= 0
                            && (nr as usize) < k.height
                            && (nc as usize) < k.width
                            && k.get(Cell::new(nr as usize, nc as usize)) == CellState::Unknown
                    });
            if unknown_nb {
                out.insert(Cell::new(r, c));
            }
        }
    }
    out
}

pub fn king_adjacent(a: Cell, b: Cell) -> bool {
    a != b && a.row.abs_diff(b.row) <= 1 && a.col.abs_diff(b.col) <= 1
}
