//! Starting-point meshes and tolerance-deduplicated point registries.
//!
//! All distances are infinity-norm distances.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("mesh step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("bounds mismatch in dimension {dim}: lower {lower} > upper {upper}")]
    BadBounds { dim: usize, lower: f64, upper: f64 },
    #[error("lower and upper bounds have different lengths")]
    LengthMismatch,
}

/// Relative slack absorbing rounding in `(upper - lower) / step` so that a
/// box width that is an exact multiple of the step keeps its last node.
const GRID_SLACK: f64 = 1e-9;

/// Number of grid nodes `lower, lower + step, ...` not exceeding `upper`.
pub fn grid_count(lower: f64, upper: f64, step: f64) -> usize {
    let q = (upper - lower) / step;
    (q + GRID_SLACK * (1.0 + q.abs())).floor() as usize + 1
}

/// Cartesian grid of starting points over a box, last dimension fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub counts: Vec<usize>,
    dim: usize,
    points: Vec<f64>,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim.max(1))
    }
}

/// Builds the starting-point mesh with pitch `step` over `[lower, upper]`.
pub fn rmesh(lower: &[f64], upper: &[f64], step: f64) -> Result<Mesh, GeometryError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(GeometryError::BadStep(step));
    }
    if lower.len() != upper.len() {
        return Err(GeometryError::LengthMismatch);
    }
    for (dim, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
        if !(lo <= hi) {
            return Err(GeometryError::BadBounds {
                dim,
                lower: lo,
                upper: hi,
            });
        }
    }
    let dim = lower.len();
    let counts: Vec<usize> = lower
        .iter()
        .zip(upper)
        .map(|(&lo, &hi)| grid_count(lo, hi, step))
        .collect();
    let total: usize = if dim == 0 { 0 } else { counts.iter().product() };
    let mut points = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        points.extend(idx.iter().zip(lower).map(|(&i, &lo)| lo + i as f64 * step));
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(Mesh { counts, dim, points })
}

pub fn max_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

const HASHED_DIMS: usize = 3;
type CellKey = [i64; HASHED_DIMS];

/// Points stored with a provenance tag, no two closer than `tol`.
///
/// Lookups go through a uniform hash grid on the first (up to) three
/// coordinates with cell size `cell`; queries with a radius up to `cell`
/// check the `3^k` neighbouring cells, larger radii fall back to a scan.
#[derive(Debug, Clone)]
pub struct PointRegistry<T> {
    dim: usize,
    tol: f64,
    cell: f64,
    coords: Vec<f64>,
    tags: Vec<T>,
    grid: HashMap<CellKey, Vec<usize>>,
}

impl<T> PointRegistry<T> {
    /// Registry whose insertions are deduplicated at `tol`.
    pub fn new(dim: usize, tol: f64) -> Self {
        Self::with_cell(dim, tol, tol)
    }

    /// Like [`PointRegistry::new`] with a hash cell sized for membership
    /// queries of radius up to `cell` (clamped to at least `tol`).
    pub fn with_cell(dim: usize, tol: f64, cell: f64) -> Self {
        assert!(tol >= 0.0, "tolerance must be non-negative");
        let cell = cell.max(tol);
        PointRegistry {
            dim,
            tol,
            cell,
            coords: Vec::new(),
            tags: Vec::new(),
            grid: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tag(&self, i: usize) -> &T {
        &self.tags[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &T)> + '_ {
        self.coords.chunks_exact(self.dim.max(1)).zip(&self.tags)
    }

    fn hashed(&self) -> bool {
        self.cell > 0.0 && self.cell.is_finite()
    }

    fn key(&self, p: &[f64]) -> CellKey {
        let mut k = [0i64; HASHED_DIMS];
        for (slot, &x) in k.iter_mut().zip(p) {
            // saturating float-to-int cast keeps far-out points in edge cells
            *slot = (x / self.cell).floor() as i64;
        }
        k
    }

    /// Index of some stored point within `radius` of `p`, if any.
    pub fn find_within(&self, p: &[f64], radius: f64) -> Option<usize> {
        assert_eq!(p.len(), self.dim);
        if !self.hashed() || radius > self.cell {
            return (0..self.len()).find(|&i| max_distance(self.point(i), p) <= radius);
        }
        let center = self.key(p);
        let k = self.dim.min(HASHED_DIMS);
        let mut best: Option<usize> = None;
        for offset in 0..3usize.pow(k as u32) {
            let mut key = center;
            let mut o = offset;
            for slot in key.iter_mut().take(k) {
                *slot = slot.saturating_add((o % 3) as i64 - 1);
                o /= 3;
            }
            if let Some(bucket) = self.grid.get(&key) {
                for &i in bucket {
                    if max_distance(self.point(i), p) <= radius && best.is_none_or(|b| i < b) {
                        best = Some(i);
                    }
                }
            }
        }
        best
    }

    /// Membership within `tol` (which may differ from the insertion tolerance).
    pub fn belongs(&self, p: &[f64], tol: f64) -> bool {
        self.find_within(p, tol).is_some()
    }

    /// Stores `p` unless a stored point lies within the registry tolerance.
    pub fn append_unique(&mut self, p: &[f64], tag: T) -> bool {
        if self.find_within(p, self.tol).is_some() {
            return false;
        }
        self.push(p, tag);
        true
    }

    fn push(&mut self, p: &[f64], tag: T) {
        assert_eq!(p.len(), self.dim);
        let i = self.tags.len();
        self.coords.extend_from_slice(p);
        self.tags.push(tag);
        if self.hashed() {
            let key = self.key(p);
            self.grid.entry(key).or_default().push(i);
        }
    }
}
