//! Grid environment: ground truth, tri-state robot maps, ray-cast sensing,
//! frontier extraction, shortest paths through known space and map stitching.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("empty map")]
    Empty,
    #[error("ragged map: row {row} has {found} cells, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("open boundary at row {row}, column {col}")]
    OpenBoundary { row: usize, col: usize },
    #[error("unexpected character {ch:?} at row {row}, column {col}")]
    BadChar { ch: char, row: usize, col: usize },
    #[error("duplicate spawn id {0}")]
    DuplicateSpawn(u32),
    #[error("cell {0} is outside the map")]
    OutOfBounds(Cell),
    #[error("cell {0} is not free")]
    NotFree(Cell),
    #[error("map dimensions differ: {0}")]
    DimensionMismatch(String),
    #[error("no known-free cell")]
    NoFreeCell,
}

/// Grid coordinate; ordering is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Octile distance in cells.
    pub fn octile(self, other: Cell) -> f64 {
        let dr = self.row.abs_diff(other.row) as f64;
        let dc = self.col.abs_diff(other.col) as f64;
        dr.max(dc) + (std::f64::consts::SQRT_2 - 1.0) * dr.min(dc)
    }

    /// Euclidean distance in cells.
    pub fn euclid(self, other: Cell) -> f64 {
        let dr = self.row.abs_diff(other.row) as f64;
        let dc = self.col.abs_diff(other.col) as f64;
        dr.hypot(dc)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Octile distance from a real-valued point to a cell centre.
pub fn octile_to_point(cell: Cell, row: f64, col: f64) -> f64 {
    let dr = (cell.row as f64 - row).abs();
    let dc = (cell.col as f64 - col).abs();
    dr.max(dc) + (std::f64::consts::SQRT_2 - 1.0) * dr.min(dc)
}

/// Ground-truth occupancy. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    occupied: Vec<bool>,
    pub spawns: BTreeMap<u32, Cell>,
}

impl GridWorld {
    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.occupied[c.row * self.width + c.col]
    }

    pub fn free_cells(&self) -> usize {
        self.occupied.iter().filter(|&&o| !o).count()
    }

    /// ASCII rendering in the format accepted by [`load_map`].
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        let by_cell: BTreeMap<Cell, u32> = self.spawns.iter().map(|(&id, &c)| (c, id)).collect();
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = Cell::new(r, c);
                let ch = match by_cell.get(&cell) {
                    Some(&id) if id < 10 => char::from_digit(id, 10).unwrap(),
                    _ if self.is_occupied(cell) => '#',
                    _ => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// An empty, walled `height × width` room.
    pub fn empty_room(height: usize, width: usize, cell_size: f64) -> Self {
        let mut occupied = vec![false; width * height];
        for r in 0..height {
            for c in 0..width {
                if r == 0 || c == 0 || r + 1 == height || c + 1 == width {
                    occupied[r * width + c] = true;
                }
            }
        }
        Self {
            width,
            height,
            cell_size,
            occupied,
            spawns: BTreeMap::new(),
        }
    }

    pub fn with_spawn(mut self, id: u32, cell: Cell) -> Self {
        self.spawns.insert(id, cell);
        self
    }

    pub fn set_occupied(&mut self, c: Cell, occupied: bool) {
        self.occupied[c.row * self.width + c.col] = occupied;
    }
}

/// Parses the ASCII map format: `#` occupied, `.` free, `1`-`9` spawn of that
/// robot id (free). Every boundary cell must be occupied.
pub fn load_map(text: &str, cell_size: f64) -> Result<GridWorld, WorldError> {
    let rows: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.is_empty())
        .collect();
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.chars().count());
    if height == 0 || width == 0 {
        return Err(WorldError::Empty);
    }
    let mut occupied = Vec::with_capacity(width * height);
    let mut spawns = BTreeMap::new();
    for (r, line) in rows.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(WorldError::Ragged {
                row: r,
                found,
                expected: width,
            });
        }
        for (c, ch) in line.chars().enumerate() {
            match ch {
                '#' => occupied.push(true),
                '.' => occupied.push(false),
                '1'..='9' => {
                    let id = ch.to_digit(10).unwrap();
                    if spawns.insert(id, Cell::new(r, c)).is_some() {
                        return Err(WorldError::DuplicateSpawn(id));
                    }
                    occupied.push(false);
                }
                _ => return Err(WorldError::BadChar { ch, row: r, col: c }),
            }
        }
    }
    for r in 0..height {
        for c in 0..width {
            if (r == 0 || c == 0 || r + 1 == height || c + 1 == width) && !occupied[r * width + c] {
                return Err(WorldError::OpenBoundary { row: r, col: c });
            }
        }
    }
    Ok(GridWorld {
        width,
        height,
        cell_size,
        occupied,
        spawns,
    })
}

/// Procedural desk-scale arena: walled `size × size` grid with scattered
/// rectangular obstacles, `num_robots` spawns along the west wall and every
/// free pocket unreachable from the spawns filled in.
pub fn generate_map(size: usize, cell_size: f64, num_robots: usize, seed: u64) -> GridWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = GridWorld::empty_room(size, size, cell_size);
    let mid = size / 2;
    let spawn_rows: Vec<usize> = (0..num_robots).map(|k| mid - num_robots + 2 * k).collect();
    let keep_clear = |r: usize, c: usize| c < 12 && r + 10 > mid && r < mid + 10;

    let obstacles = size * size / 700;
    for _ in 0..obstacles {
        let h = rng.gen_range(3..=size / 9);
        let w = rng.gen_range(3..=size / 9);
        let r0 = rng.gen_range(2..size - h - 2);
        let c0 = rng.gen_range(2..size - w - 2);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                if !keep_clear(r, c) {
                    world.set_occupied(Cell::new(r, c), true);
                }
            }
        }
    }
    // Long interior walls with doorways.
    for _ in 0..size / 40 {
        let vertical = rng.gen_bool(0.5);
        let at = rng.gen_range(size / 5..size - size / 5);
        let from = rng.gen_range(1..size / 3);
        let to = rng.gen_range(2 * size / 3..size - 1);
        for t in from..to {
            let (r, c) = if vertical { (t, at) } else { (at, t) };
            if !keep_clear(r, c) && (t % 17) > 3 {
                world.set_occupied(Cell::new(r, c), true);
            }
        }
    }
    for (k, &r) in spawn_rows.iter().enumerate() {
        world.spawns.insert(k as u32 + 1, Cell::new(r, 2));
    }

    // Fill pockets not 4-connected to the first spawn.
    let start = world.spawns[&1];
    let mut seen = vec![false; size * size];
    let mut queue = VecDeque::from([start]);
    seen[start.row * size + start.col] = true;
    while let Some(c) = queue.pop_front() {
        for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
            let (r, cc) = (c.row as isize + dr, c.col as isize + dc);
            if !world.in_bounds(r, cc) {
                continue;
            }
            let n = Cell::new(r as usize, cc as usize);
            if !seen[n.row * size + n.col] && !world.is_occupied(n) {
                seen[n.row * size + n.col] = true;
                queue.push_back(n);
            }
        }
    }
    for r in 0..size {
        for c in 0..size {
            if !seen[r * size + c] {
                world.set_occupied(Cell::new(r, c), true);
            }
        }
    }
    world
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// One robot's partial knowledge of the world.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    cells: Vec<CellState>,
}

/// Run-length encoded snapshot of a [`KnownMap`]: runs of `'?'`, `'.'`, `'#'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub runs: Vec<(char, usize)>,
}

impl KnownMap {
    pub fn unknown(width: usize, height: usize, cell_size: f64) -> Self {
        Self {
            width,
            height,
            cell_size,
            cells: vec![CellState::Unknown; width * height],
        }
    }

    pub fn for_world(world: &GridWorld) -> Self {
        Self::unknown(world.width, world.height, world.cell_size)
    }

    pub fn get(&self, c: Cell) -> CellState {
        self.cells[c.row * self.width + c.col]
    }

    pub fn set(&mut self, c: Cell, s: CellState) {
        self.cells[c.row * self.width + c.col] = s;
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.get(c) == CellState::Free
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn known_free_count(&self) -> usize {
        self.cells.iter().filter(|&&s| s == CellState::Free).count()
    }

    pub fn known_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|&&s| s != CellState::Unknown)
            .count()
    }

    pub fn known_free_area(&self) -> f64 {
        self.known_free_count() as f64 * self.cell_size * self.cell_size
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == CellState::Free)
            .map(move |(i, _)| Cell::new(i / w, i % w))
    }

    fn neighbors4(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let (r, col) = (c.row as isize, c.col as isize);
        [(r - 1, col), (r + 1, col), (r, col - 1), (r, col + 1)]
            .into_iter()
            .filter(|&(r, c)| {
                r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width
            })
            .map(|(r, c)| Cell::new(r as usize, c as usize))
    }

    /// Known-free and 4-adjacent to at least one unknown cell.
    pub fn is_frontier_cell(&self, c: Cell) -> bool {
        self.is_free(c)
            && self
                .neighbors4(c)
                .any(|n| self.get(n) == CellState::Unknown)
    }

    /// 8-connected moves through known-free cells; a diagonal move also needs
    /// both cells it cuts past to be known-free. Yields `(cell, cost in cells)`.
    pub fn moves(&self, c: Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
        const STEPS: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        STEPS.into_iter().filter_map(move |(dr, dc)| {
            let r = c.row as isize + dr;
            let col = c.col as isize + dc;
            if r < 0 || col < 0 || r as usize >= self.height || col as usize >= self.width {
                return None;
            }
            let n = Cell::new(r as usize, col as usize);
            if !self.is_free(n) {
                return None;
            }
            if dr != 0 && dc != 0 {
                let a = Cell::new(r as usize, c.col);
                let b = Cell::new(c.row, col as usize);
                if !self.is_free(a) || !self.is_free(b) {
                    return None;
                }
                Some((n, std::f64::consts::SQRT_2))
            } else {
                Some((n, 1.0))
            }
        })
    }

    pub fn snapshot(&self) -> MapSnapshot {
        let mut runs: Vec<(char, usize)> = Vec::new();
        for &s in &self.cells {
            let ch = match s {
                CellState::Unknown => '?',
                CellState::Free => '.',
                CellState::Occupied => '#',
            };
            match runs.last_mut() {
                Some((last, n)) if *last == ch => *n += 1,
                _ => runs.push((ch, 1)),
            }
        }
        MapSnapshot {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
            runs,
        }
    }

    pub fn from_snapshot(snap: &MapSnapshot) -> Result<Self, WorldError> {
        let mut cells = Vec::with_capacity(snap.width * snap.height);
        for &(ch, n) in &snap.runs {
            let s = match ch {
                '?' => CellState::Unknown,
                '.' => CellState::Free,
                '#' => CellState::Occupied,
                _ => return Err(WorldError::BadChar { ch, row: 0, col: 0 }),
            };
            cells.extend(std::iter::repeat_n(s, n));
        }
        if cells.len() != snap.width * snap.height {
            return Err(WorldError::DimensionMismatch(format!(
                "snapshot has {} cells for {}x{}",
                cells.len(),
                snap.height,
                snap.width
            )));
        }
        Ok(Self {
            width: snap.width,
            height: snap.height,
            cell_size: snap.cell_size,
            cells,
        })
    }
}

/// Cells crossed by the segment between two cell centres, including both
/// neighbours where it passes exactly through a corner.
pub fn supercover_line(from: Cell, to: (isize, isize)) -> Vec<(isize, isize)> {
    let (mut x, mut y) = (from.col as isize, from.row as isize);
    let (dx, dy) = (to.1 - x, to.0 - y);
    let (nx, ny) = (dx.abs(), dy.abs());
    let (sx, sy) = (dx.signum(), dy.signum());
    let mut out = vec![(y, x)];
    let (mut ix, mut iy) = (0, 0);
    while ix < nx || iy < ny {
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            out.push((y, x + sx));
            out.push((y + sy, x));
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        out.push((y, x));
    }
    out
}

/// Noiseless range-limited sensing from `pose`: rays to every boundary cell
/// of the sensing disc mark crossed cells free and the first obstacle
/// occupied. Known cells are never forgotten.
pub fn sense(
    world: &GridWorld,
    known: &mut KnownMap,
    pose: Cell,
    range: f64,
) -> Result<(), WorldError> {
    if pose.row >= world.height || pose.col >= world.width {
        return Err(WorldError::OutOfBounds(pose));
    }
    if world.is_occupied(pose) {
        return Err(WorldError::NotFree(pose));
    }
    known.set(pose, CellState::Free);
    let radius = range / world.cell_size;
    let ri = radius.floor() as isize;
    let inside = |dr: isize, dc: isize| ((dr * dr + dc * dc) as f64) <= radius * radius;
    for dr in -ri..=ri {
        for dc in -ri..=ri {
            if !inside(dr, dc) {
                continue;
            }
            let on_edge = !inside(dr + 1, dc)
                || !inside(dr - 1, dc)
                || !inside(dr, dc + 1)
                || !inside(dr, dc - 1);
            if !on_edge {
                continue;
            }
            let target = (pose.row as isize + dr, pose.col as isize + dc);
            cast_ray(world, known, pose, target);
        }
    }
    Ok(())
}

fn cast_ray(world: &GridWorld, known: &mut KnownMap, pose: Cell, target: (isize, isize)) {
    let line = supercover_line(pose, target);
    let mut k = 1;
    while k < line.len() {
        let (r, c) = line[k];
        // A corner crossing contributes two cells; both must be clear.
        let corner = k + 2 < line.len() + 1 && k + 1 < line.len() && {
            let (r2, c2) = line[k + 1];
            r2 != r && c2 != c && (r2 - r).abs() == 1 && (c2 - c).abs() == 1
        };
        let group: &[(isize, isize)] = if corner {
            &line[k..k + 2]
        } else {
            &line[k..k + 1]
        };
        let mut blocked = false;
        for &(r, c) in group {
            if !world.in_bounds(r, c) {
                return;
            }
            let cell = Cell::new(r as usize, c as usize);
            if world.is_occupied(cell) {
                known.set(cell, CellState::Occupied);
                blocked = true;
            } else if known.get(cell) == CellState::Unknown {
                known.set(cell, CellState::Free);
            }
        }
        if blocked {
            return;
        }
        k += group.len();
    }
}

/// A connected cluster of frontier cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    /// Members in row-major order.
    pub cells: Vec<Cell>,
    /// Cell nearest the mean member position.
    pub centroid: Cell,
}

impl Frontier {
    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn min_cell(&self) -> Cell {
        self.cells[0]
    }

    /// Member closest (octile) to the centroid; the navigation goal.
    pub fn target(&self) -> Cell {
        *self
            .cells
            .iter()
            .min_by(|a, b| {
                a.octile(self.centroid)
                    .total_cmp(&b.octile(self.centroid))
                    .then(a.cmp(b))
            })
            .expect("frontiers are non-empty")
    }
}

/// Maximal 8-connected components of frontier cells, ordered by their
/// smallest (row, col) member.
pub fn detect_frontiers(known: &KnownMap) -> Vec<Frontier> {
    let (w, h) = (known.width, known.height);
    let mut visited = vec![false; w * h];
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let start = Cell::new(r, c);
            if visited[r * w + c] || !known.is_frontier_cell(start) {
                continue;
            }
            let mut members = Vec::new();
            let mut queue = VecDeque::from([start]);
            visited[r * w + c] = true;
            while let Some(cur) = queue.pop_front() {
                members.push(cur);
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let (nr, nc) = (cur.row as isize + dr, cur.col as isize + dc);
                        if (dr, dc) == (0, 0)
                            || nr < 0
                            || nc < 0
                            || nr as usize >= h
                            || nc as usize >= w
                        {
                            continue;
                        }
                        let n = Cell::new(nr as usize, nc as usize);
                        if !visited[n.row * w + n.col] && known.is_frontier_cell(n) {
                            visited[n.row * w + n.col] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
            members.sort();
            let n = members.len() as f64;
            let mr = members.iter().map(|m| m.row as f64).sum::<f64>() / n;
            let mc = members.iter().map(|m| m.col as f64).sum::<f64>() / n;
            let centroid = Cell::new(mr.round() as usize, mc.round() as usize);
            out.push(Frontier {
                cells: members,
                centroid,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<Cell>,
    /// Metres.
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    cell: Cell,
}

impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // Min-heap on f, then lower (row, col).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

/// Shortest 8-connected path through known-free cells with the octile
/// heuristic. `None` when `to` cannot be reached through known space.
pub fn astar_path(known: &KnownMap, from: Cell, to: Cell) -> Option<Path> {
    if !known.in_bounds(from) || !known.in_bounds(to) || !known.is_free(from) || !known.is_free(to)
    {
        return None;
    }
    if from == to {
        return Some(Path {
            cells: vec![from],
            length: 0.0,
        });
    }
    let w = known.width;
    let idx = |c: Cell| c.row * w + c.col;
    let mut g = vec![f64::INFINITY; w * known.height];
    let mut parent = vec![usize::MAX; w * known.height];
    let mut closed = vec![false; w * known.height];
    let mut open = BinaryHeap::new();
    g[idx(from)] = 0.0;
    open.push(Open {
        f: from.octile(to),
        g: 0.0,
        cell: from,
    });
    while let Some(Open { g: gc, cell, .. }) = open.pop() {
        if closed[idx(cell)] || gc > g[idx(cell)] {
            continue;
        }
        closed[idx(cell)] = true;
        if cell == to {
            let mut cells = vec![to];
            let mut cur = idx(to);
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(Cell::new(cur / w, cur % w));
            }
            cells.reverse();
            return Some(Path {
                cells,
                length: gc * known.cell_size,
            });
        }
        for (n, cost) in known.moves(cell) {
            let ng = gc + cost;
            if ng < g[idx(n)] - 1e-12 {
                g[idx(n)] = ng;
                parent[idx(n)] = idx(cell);
                open.push(Open {
                    f: ng + n.octile(to),
                    g: ng,
                    cell: n,
                });
            }
        }
    }
    None
}

/// Single-source shortest distances (metres) through known-free cells;
/// `f64::INFINITY` where unreachable.
pub fn distance_field(known: &KnownMap, from: Cell) -> Vec<f64> {
    let w = known.width;
    let mut dist = vec![f64::INFINITY; w * known.height];
    if !known.in_bounds(from) || !known.is_free(from) {
        return dist;
    }
    let mut heap = BinaryHeap::new();
    dist[from.row * w + from.col] = 0.0;
    heap.push(Open {
        f: 0.0,
        g: 0.0,
        cell: from,
    });
    while let Some(Open { g: d, cell, .. }) = heap.pop() {
        if d > dist[cell.row * w + cell.col] {
            continue;
        }
        for (n, cost) in known.moves(cell) {
            let nd = d + cost;
            let slot = &mut dist[n.row * w + n.col];
            if nd < *slot - 1e-12 {
                *slot = nd;
                heap.push(Open {
                    f: nd,
                    g: nd,
                    cell: n,
                });
            }
        }
    }
    for d in dist.iter_mut() {
        *d *= known.cell_size;
    }
    dist
}

/// Cellwise union: known beats unknown, and free/occupied disagreements
/// resolve to occupied.
pub fn merge_maps(a: &KnownMap, b: &KnownMap) -> Result<KnownMap, WorldError> {
    if a.width != b.width || a.height != b.height || a.cell_size != b.cell_size {
        return Err(WorldError::DimensionMismatch(format!(
            "{}x{}@{} vs {}x{}@{}",
            a.height, a.width, a.cell_size, b.height, b.width, b.cell_size
        )));
    }
    let cells = a
        .cells
        .iter()
        .zip(&b.cells)
        .map(|(&x, &y)| match (x, y) {
            (CellState::Occupied, _) | (_, CellState::Occupied) => CellState::Occupied,
            (CellState::Free, _) | (_, CellState::Free) => CellState::Free,
            _ => CellState::Unknown,
        })
        .collect();
    Ok(KnownMap {
        width: a.width,
        height: a.height,
        cell_size: a.cell_size,
        cells,
    })
}

/// Known-free cell nearest (octile) to a real-valued point, ties to the
/// smallest cell.
pub fn nearest_free_cell(known: &KnownMap, row: f64, col: f64) -> Option<Cell> {
    known
        .free_cells()
        .map(|c| (octile_to_point(c, row, col), c))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn all_known(world: &GridWorld) -> KnownMap {
        let mut k = KnownMap::for_world(world);
        for r in 0..world.height {
            for c in 0..world.width {
                let cell = Cell::new(r, c);
                k.set(
                    cell,
                    if world.is_occupied(cell) {
                        CellState::Occupied
                    } else {
                        CellState::Free
                    },
                );
            }
        }
        k
    }

    #[test]
    fn parse_single_free_cell() {
        let w = load_map("###\n#.#\n###\n", 1.0).unwrap();
        assert_eq!(w.free_cells(), 1);
        assert!(!w.is_occupied(Cell::new(1, 1)));
    }

    #[test]
    fn parse_spawns() {
        let w = load_map("#####\n#1.2#\n#.3.#\n#####\n", 2.0).unwrap();
        assert_eq!(w.spawns.len(), 3);
        assert_eq!(w.spawns[&1], Cell::new(1, 1));
        assert_eq!(w.spawns[&2], Cell::new(1, 3));
        assert_eq!(w.spawns[&3], Cell::new(2, 2));
        assert_eq!(load_map(&w.to_ascii(), 2.0).unwrap(), w);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            load_map("###\n#.##\n###\n", 1.0).unwrap_err(),
            WorldError::Ragged {
                row: 1,
                found: 4,
                expected: 3
            }
        );
        assert!(matches!(
            load_map("###\n...\n###\n", 1.0),
            Err(WorldError::OpenBoundary { row: 1, col: 0 })
        ));
        assert_eq!(
            load_map("####\n#11#\n####\n", 1.0).unwrap_err(),
            WorldError::DuplicateSpawn(1)
        );
        assert!(matches!(
            load_map("###\n#x#\n###\n", 1.0),
            Err(WorldError::BadChar { .. })
        ));
        assert_eq!(load_map("", 1.0).unwrap_err(), WorldError::Empty);
    }

    #[test]
    fn sensing_empty_room_covers_everything() {
        let w = GridWorld::empty_room(12, 12, 1.0);
        let mut k = KnownMap::for_world(&w);
        sense(&w, &mut k, Cell::new(6, 6), 30.0).unwrap();
        let truth = all_known(&w);
        // The four room corners hide behind the two walls meeting there.
        let corners = [
            Cell::new(0, 0),
            Cell::new(0, 11),
            Cell::new(11, 0),
            Cell::new(11, 11),
        ];
        for r in 0..12 {
            for c in 0..12 {
                let cell = Cell::new(r, c);
                if corners.contains(&cell) {
                    assert_eq!(k.get(cell), CellState::Unknown);
                } else {
                    assert_eq!(k.get(cell), truth.get(cell), "{cell}");
                }
            }
        }
        assert_eq!(k.known_free_count(), w.free_cells());
        assert!(detect_frontiers(&k).is_empty());
    }

    #[test]
    fn walls_occlude() {
        let mut w = GridWorld::empty_room(9, 9, 1.0);
        for r in 1..8 {
            w.set_occupied(Cell::new(r, 4), true);
        }
        let mut k = KnownMap::for_world(&w);
        sense(&w, &mut k, Cell::new(4, 3), 20.0).unwrap();
        assert_eq!(k.get(Cell::new(4, 4)), CellState::Occupied);
        for r in 1..8 {
            for c in 5..8 {
                assert_eq!(k.get(Cell::new(r, c)), CellState::Unknown, "({r},{c})");
            }
        }
    }

    #[test]
    fn sensing_is_idempotent_and_monotone() {
        let w = generate_map(40, 1.0, 2, 3);
        let mut k = KnownMap::for_world(&w);
        let p = w.spawns[&1];
        sense(&w, &mut k, p, 6.0).unwrap();
        let once = k.clone();
        sense(&w, &mut k, p, 6.0).unwrap();
        assert_eq!(k, once);
        assert!(matches!(
            sense(&w, &mut k, Cell::new(0, 0), 6.0),
            Err(WorldError::NotFree(_))
        ));
        assert!(matches!(
            sense(&w, &mut k, Cell::new(99, 0), 6.0),
            Err(WorldError::OutOfBounds(_))
        ));
    }

    #[test]
    fn sensed_free_cells_agree_with_truth() {
        let w = generate_map(60, 2.0, 3, 11);
        let mut k = KnownMap::for_world(&w);
        sense(&w, &mut k, w.spawns[&2], 20.0).unwrap();
        for r in 0..w.height {
            for c in 0..w.width {
                let cell = Cell::new(r, c);
                match k.get(cell) {
                    CellState::Free => assert!(!w.is_occupied(cell)),
                    CellState::Occupied => assert!(w.is_occupied(cell)),
                    CellState::Unknown => {}
                }
            }
        }
    }

    #[test]
    fn frontier_edge_cases() {
        let k = KnownMap::unknown(10, 10, 1.0);
        assert!(detect_frontiers(&k).is_empty());
    }

    #[test]
    fn half_explored_corridor_has_one_frontier() {
        // 1x10 corridor inside walls; the west half is known.
        let mut w = GridWorld::empty_room(3, 12, 1.0);
        w.set_occupied(Cell::new(1, 11), true);
        let mut k = KnownMap::for_world(&w);
        for c in 0..6 {
            k.set(Cell::new(0, c), CellState::Occupied);
            k.set(Cell::new(2, c), CellState::Occupied);
        }
        k.set(Cell::new(1, 0), CellState::Occupied);
        for c in 1..6 {
            k.set(Cell::new(1, c), CellState::Free);
        }
        let f = detect_frontiers(&k);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].cells, vec![Cell::new(1, 5)]);
    }

    #[test]
    fn astar_basic_cases() {
        let w = GridWorld::empty_room(12, 12, 1.5);
        let k = all_known(&w);
        let p = astar_path(&k, Cell::new(3, 3), Cell::new(3, 3)).unwrap();
        assert_eq!(p.length, 0.0);
        let p = astar_path(&k, Cell::new(1, 1), Cell::new(1, 8)).unwrap();
        assert!((p.length - 7.0 * 1.5).abs() < 1e-12);
        assert_eq!(p.cells.len(), 8);
        let p = astar_path(&k, Cell::new(1, 1), Cell::new(10, 10)).unwrap();
        assert!((p.length - 9.0 * SQRT2 * 1.5).abs() < 1e-9);
        assert!(astar_path(&k, Cell::new(1, 1), Cell::new(0, 0)).is_none());
    }

    #[test]
    fn astar_does_not_plan_through_unknown() {
        let w = GridWorld::empty_room(5, 8, 1.0);
        let mut k = all_known(&w);
        for r in 1..4 {
            k.set(Cell::new(r, 4), CellState::Unknown);
        }
        assert!(astar_path(&k, Cell::new(2, 1), Cell::new(2, 6)).is_none());
    }

    #[test]
    fn diagonal_moves_do_not_cut_corners() {
        let mut w = GridWorld::empty_room(4, 4, 1.0);
        w.set_occupied(Cell::new(1, 2), true);
        let k = all_known(&w);
        // (1,1) -> (2,2) must go around (1,2)? (2,1) is free so the diagonal
        // is blocked only by (1,2): expect two cardinal steps.
        let p = astar_path(&k, Cell::new(1, 1), Cell::new(2, 2)).unwrap();
        assert!((p.length - 2.0).abs() < 1e-12);
    }

    #[test]
    fn merge_rules() {
        let w = GridWorld::empty_room(4, 4, 1.0);
        let full = all_known(&w);
        let empty = KnownMap::for_world(&w);
        assert_eq!(merge_maps(&full, &full).unwrap(), full);
        assert_eq!(merge_maps(&full, &empty).unwrap(), full);
        let mut a = empty.clone();
        a.set(Cell::new(1, 1), CellState::Free);
        let mut b = empty.clone();
        b.set(Cell::new(1, 1), CellState::Occupied);
        assert_eq!(
            merge_maps(&a, &b).unwrap().get(Cell::new(1, 1)),
            CellState::Occupied
        );
        let other = KnownMap::unknown(5, 4, 1.0);
        assert!(merge_maps(&a, &other).is_err());
    }

    #[test]
    fn snapshot_roundtrip() {
        let w = generate_map(30, 2.0, 2, 5);
        let mut k = KnownMap::for_world(&w);
        sense(&w, &mut k, w.spawns[&1], 12.0).unwrap();
        let snap = k.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back: MapSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(KnownMap::from_snapshot(&back).unwrap(), k);
    }

    #[test]
    fn generated_map_is_closed_and_connected() {
        let w = generate_map(130, 2.0, 3, 1);
        let text = w.to_ascii();
        let back = load_map(&text, 2.0).unwrap();
        assert_eq!(back.spawns.len(), 3);
        let k = all_known(&w);
        let d = distance_field(&k, w.spawns[&1]);
        for r in 0..w.height {
            for c in 0..w.width {
                if !w.is_occupied(Cell::new(r, c)) {
                    assert!(d[r * w.width + c].is_finite(), "({r},{c}) unreachable");
                }
            }
        }
        let area = w.free_cells() as f64 * 4.0;
        assert!(area > 40_000.0, "{area}");
    }

    #[test]
    fn nearest_free_cell_ties_to_smallest() {
        let w = GridWorld::empty_room(5, 5, 1.0);
        let k = all_known(&w);
        assert_eq!(nearest_free_cell(&k, 2.5, 2.5), Some(Cell::new(2, 2)));
        assert_eq!(nearest_free_cell(&k, 0.0, 0.0), Some(Cell::new(1, 1)));
        assert_eq!(
            nearest_free_cell(&KnownMap::unknown(3, 3, 1.0), 1.0, 1.0),
            None
        );
    }
}
