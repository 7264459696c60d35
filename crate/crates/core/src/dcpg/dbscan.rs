//! Density-based clustering over 3D points.
//!
//! Neighbor queries use a uniform hash grid with cell size `eps`, so each
//! query touches at most 27 cells.

use std::collections::{HashMap, VecDeque};

use crate::geometry::Point;

type Cell = (i64, i64, i64);

struct Grid<'a> {
    points: &'a [Point],
    eps: f64,
    eps2: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Point], eps: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell_of(p, eps)).or_default().push(i);
        }
        Self {
            points,
            eps,
            eps2: eps * eps,
            cells,
        }
    }

    fn cell_of(p: &Point, eps: f64) -> Cell {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    }

    /// Indices within `eps` of point `i`, itself included, ascending.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let (cx, cy, cz) = Self::cell_of(p, self.eps);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend(bucket.iter().copied().filter(|&j| (self.points[j] - p).norm_squared() <= self.eps2));
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Clusters `points` with DBSCAN; `None` marks noise.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are the density-connected components of core
/// points plus their border points. Points are scanned in index order and
/// clusters expand breadth-first, so a border point reachable from several
/// clusters joins the first one that reaches it, and labels are numbered in
/// order of discovery.
pub fn dbscan(points: &[Point], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0 && eps.is_finite(), "eps must be positive and finite");
    let n = points.len();
    let grid = Grid::new(points, eps);
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::new();
    let mut nb = Vec::new();
    let mut next_label = 0;

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        grid.neighbors(i, &mut nb);
        if nb.len() < min_pts {
            continue;
        }
        let label = next_label;
        next_label += 1;
        labels[i] = Some(label);
        queue.extend(nb.iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(label);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            grid.neighbors(j, &mut nb);
            if nb.len() >= min_pts {
                queue.extend(nb.iter().copied());
            }
        }
    }
    labels
}

/// Groups point indices by cluster label, in label order.
pub fn clusters(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); count];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            out[*l].push(i);
        }
    }
    out
}
