//! Uniform-grid spatial index with exact radius and k-nearest queries.

use super::cloud::{dist_sq, Point3, PointCloud};
use crate::error::{Error, Result};

/// A neighbor hit: point index and squared distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

/// Immutable bucket grid over a point set.
///
/// Points are bucketed in a dense CSR layout (`cell_start` / `order`). Results
/// of every query are sorted by `(dist_sq, index)`, so they are independent of
/// the bucketing.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    origin: Point3,
    cell: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    order: Vec<u32>,
    /// `points` permuted into `order`, so a bucket is a contiguous slice.
    sorted: Vec<Point3>,
}

const MAX_CELLS_PER_POINT: usize = 16;

/// Builds an index with an automatically chosen cell size.
pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    SpatialIndex::build(&cloud.points)
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        let (lo, hi) = bounds(points)?;
        let mut ext: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
        ext.sort_by(|a, b| b.total_cmp(a));
        // sized for surface-like clouds: a few points per occupied cell
        let cell = if ext[1] > 0.0 {
            2.0 * (ext[0] * ext[1] / points.len() as f64).sqrt()
        } else if ext[0] > 0.0 {
            ext[0] / points.len() as f64
        } else {
            1.0
        };
        Self::with_cell_size(points, cell)
    }

    /// Builds an index with roughly the requested cell edge; the edge grows if
    /// the dense grid would be much larger than the point count.
    pub fn with_cell_size(points: &[Point3], cell: f64) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::invalid("cell size must be positive"));
        }
        let (lo, hi) = bounds(points)?;
        let max_cells = MAX_CELLS_PER_POINT * points.len() + 4096;
        let mut cell = cell;
        let dims = loop {
            let d: Vec<usize> = (0..3)
                .map(|a| ((hi[a] - lo[a]) / cell).floor() as usize + 1)
                .collect();
            if d.iter().try_fold(1usize, |acc, &x| acc.checked_mul(x)).is_some_and(|n| n <= max_cells)
            {
                break [d[0], d[1], d[2]];
            }
            cell *= 1.5;
        };

        let mut index = SpatialIndex {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            cell_start: Vec::new(),
            order: Vec::new(),
            sorted: Vec::new(),
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| index.cell_key(p)).collect();
        let mut counts = vec![0u32; n_cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        index.cell_start = counts;
        index.sorted = order.iter().map(|&i| points[i as usize]).collect();
        index.order = order;
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.dims
    }

    fn cell_coord(&self, p: &Point3) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn cell_key(&self, p: &Point3) -> usize {
        let c = self.cell_coord(p);
        let c = [0, 1, 2].map(|a| c[a].clamp(0, self.dims[a] as i64 - 1) as usize);
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Distance along axis `a` from `center` to the slab of cells at coordinate `c`.
    fn gap(&self, center: &Point3, a: usize, c: i64) -> f64 {
        let lo = self.origin[a] + c as f64 * self.cell;
        (lo - center[a]).max(center[a] - lo - self.cell).max(0.0)
    }

    /// Cells of row `(y, z)` that can hold points within `sqrt(r2)` of
    /// `center`, or `None` if the row misses the ball.
    fn row_span(&self, center: &Point3, r2: f64, y: i64, z: i64, x0: i64, x1: i64) -> Option<(i64, i64)> {
        let rem = r2 - self.gap(center, 1, y).powi(2) - self.gap(center, 2, z).powi(2);
        if rem < 0.0 {
            return None;
        }
        let w = rem.sqrt();
        let a = (((center[0] - w - self.origin[0]) / self.cell).floor() as i64).max(x0);
        let b = (((center[0] + w - self.origin[0]) / self.cell).floor() as i64).min(x1);
        (a <= b).then_some((a, b))
    }

    /// Positions in `order` of the cells `x0..=x1` of one grid row.
    fn row(&self, x0: i64, x1: i64, y: i64, z: i64) -> std::ops::Range<usize> {
        let base = (z as usize * self.dims[1] + y as usize) * self.dims[0];
        self.cell_start[base + x0 as usize] as usize..self.cell_start[base + x1 as usize + 1] as usize
    }

    /// All points with `|p - center| <= r`, nearest first, ties by index.
    pub fn radius_neighbors(&self, center: &Point3, r: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.radius_neighbors_into(center, r, &mut out);
        out
    }

    pub(crate) fn radius_neighbors_into(&self, center: &Point3, r: f64, out: &mut Vec<Neighbor>) {
        self.collect_within(center, r, out);
        sort_neighbors(out);
    }

    /// The `k` nearest points within `r`, nearest first. Same result as
    /// truncating [`radius_neighbors`](Self::radius_neighbors).
    pub fn radius_nearest(&self, center: &Point3, r: f64, k: usize) -> Vec<Neighbor> {
        let mut out = Vec::with_capacity(2 * k);
        if k == 0 || !(r >= 0.0) {
            return out;
        }
        // rows nearest the center first, so the k-th distance bound tightens early
        let (x0, x1, y0, y1, z0, z1) = self.cell_box(center, r);
        let mut rows: Vec<(f64, i64, i64)> = Vec::with_capacity(((y1 - y0 + 1) * (z1 - z0 + 1)).max(0) as usize);
        for z in z0..=z1 {
            for y in y0..=y1 {
                rows.push((self.gap(center, 1, y).powi(2) + self.gap(center, 2, z).powi(2), y, z));
            }
        }
        rows.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut bound = r * r;
        for &(_, y, z) in &rows {
            let Some((a, b)) = self.row_span(center, bound, y, z, x0, x1) else { continue };
            for j in self.row(a, b, y, z) {
                let d = dist_sq(&self.sorted[j], center);
                if d <= bound {
                    out.push(Neighbor { index: self.order[j] as usize, dist_sq: d });
                    if out.len() == 2 * k {
                        out.select_nth_unstable_by(k - 1, neighbor_order);
                        out.truncate(k);
                        bound = out[k - 1].dist_sq;
                    }
                }
            }
        }
        sort_neighbors(&mut out);
        out.truncate(k);
        out
    }

    fn cell_box(&self, center: &Point3, r: f64) -> (i64, i64, i64, i64, i64, i64) {
        let lo = self.cell_coord(&[center[0] - r, center[1] - r, center[2] - r]);
        let hi = self.cell_coord(&[center[0] + r, center[1] + r, center[2] + r]);
        let range = |a: usize| (lo[a].max(0), hi[a].min(self.dims[a] as i64 - 1));
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let (z0, z1) = range(2);
        (x0, x1, y0, y1, z0, z1)
    }

    fn collect_within(&self, center: &Point3, r: f64, out: &mut Vec<Neighbor>) {
        out.clear();
        if !(r >= 0.0) {
            return;
        }
        let r2 = r * r;
        let (x0, x1, y0, y1, z0, z1) = self.cell_box(center, r);
        for z in z0..=z1 {
            for y in y0..=y1 {
                let Some((a, b)) = self.row_span(center, r2, y, z, x0, x1) else { continue };
                for j in self.row(a, b, y, z) {
                    let d = dist_sq(&self.sorted[j], center);
                    if d <= r2 {
                        out.push(Neighbor {
                            index: self.order[j] as usize,
                            dist_sq: d,
                        });
                    }
                }
            }
        }
    }

    /// The `k` nearest points (fewer if the index is smaller), nearest first,
    /// ties by index.
    pub fn k_nearest(&self, center: &Point3, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let q = self.cell_coord(center);
        // Shells beyond this radius lie entirely outside the grid.
        let max_shell = (0..3)
            .map(|a| q[a].abs().max((self.dims[a] as i64 - 1 - q[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut cand: Vec<Neighbor> = Vec::new();
        let mut s: i64 = 0;
        loop {
            self.scan_shell(center, q, s, &mut cand);
            if cand.len() >= k {
                cand.select_nth_unstable_by(k - 1, neighbor_order);
                cand.truncate(k);
                let bound = s as f64 * self.cell;
                if cand[k - 1].dist_sq <= bound * bound {
                    break;
                }
            }
            if s >= max_shell {
                break;
            }
            s += 1;
        }
        sort_neighbors(&mut cand);
        cand.truncate(k);
        cand
    }

    fn scan_shell(&self, center: &Point3, q: [i64; 3], s: i64, out: &mut Vec<Neighbor>) {
        let inside = |a: usize, v: i64| v >= 0 && v < self.dims[a] as i64;
        for dz in -s..=s {
            let z = q[2] + dz;
            if !inside(2, z) {
                continue;
            }
            for dy in -s..=s {
                let y = q[1] + dy;
                if !inside(1, y) {
                    continue;
                }
                let on_face = dz.abs() == s || dy.abs() == s;
                let step = if on_face || s == 0 { 1 } else { 2 * s };
                let mut dx = -s;
                while dx <= s {
                    let x = q[0] + dx;
                    if inside(0, x) {
                        for j in self.row(x, x, y, z) {
                            out.push(Neighbor {
                                index: self.order[j] as usize,
                                dist_sq: dist_sq(&self.sorted[j], center),
                            });
                        }
                    }
                    dx += step;
                }
            }
        }
    }
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.dist_sq.total_cmp(&b.dist_sq).then(a.index.cmp(&b.index))
}

fn sort_neighbors(v: &mut [Neighbor]) {
    v.sort_unstable_by(neighbor_order);
}

fn bounds(points: &[Point3]) -> Result<(Point3, Point3)> {
    if points.is_empty() {
        return Err(Error::invalid("cannot index an empty point set"));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            if !p[a].is_finite() {
                return Err(Error::invalid("non-finite coordinate"));
            }
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    Ok((lo, hi))
}
