//! Non-linear shape normalization by line-density equalization.
//!
//! The ink is rasterized onto a coarse binary grid; each axis gets a density
//! projection in which stroke cells count fully and background cells count
//! inversely to the length of the background run containing them. The
//! prefix sums of the (floored) projections define monotone piecewise-linear
//! coordinate maps that spread dense regions apart and compress empty ones.

use crate::ink::{Ink, Point};
use crate::raster::bresenham_cells;

/// Square occupancy grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryGrid {
    n: usize,
    cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(n: usize) -> BinaryGrid {
        BinaryGrid {
            n,
            cells: vec![false; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.n + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.cells[y * self.n + x] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Per-coordinate density totals along one axis. Strictly positive after
/// flooring.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProjection {
    pub axis: Axis,
    pub values: Vec<f64>,
}

/// Monotone piecewise-linear map of `[0,n]` onto itself with fixed ends.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    axis: Axis,
    knots: Vec<f64>,
}

impl CoordinateMap {
    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// Map values at integer coordinates 0..=n. Strictly increasing.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn grid_size(&self) -> usize {
        self.knots.len() - 1
    }

    /// Evaluate the map. Inputs are clamped to `[0,n]`.
    pub fn apply(&self, x: f64) -> f64 {
        let n = self.grid_size() as f64;
        let x = x.clamp(0.0, n);
        let i = (x.floor() as usize).min(self.grid_size() - 1);
        let frac = x - i as f64;
        self.knots[i] + frac * (self.knots[i + 1] - self.knots[i])
    }
}

/// Rasterize real strokes onto an n x n occupancy grid.
///
/// The ink must lie in the unit box; coordinates map to cells by flooring
/// (x = 1.0 lands in the last cell) and consecutive points are connected
/// with 8-connected lines so strokes are never broken by the grid.
pub fn rasterize_binary(ink: &Ink, n: usize) -> BinaryGrid {
    assert!(n >= 2, "density grid needs at least 2 cells per side");
    let mut grid = BinaryGrid::new(n);
    let to_cell = |v: f64| ((v * n as f64).floor() as i64).clamp(0, n as i64 - 1);
    for stroke in ink.real_strokes() {
        let pts = stroke.points();
        let cell = |p: Point| (to_cell(p.x), to_cell(p.y));
        if pts.len() == 1 {
            let (x, y) = cell(pts[0]);
            grid.set(x as usize, y as usize, true);
            continue;
        }
        for w in pts.windows(2) {
            let cells = bresenham_cells(cell(w[0]), cell(w[1]), n, n)
                .expect("clamped endpoints are inside the grid");
            for (x, y) in cells {
                grid.set(x as usize, y as usize, true);
            }
        }
    }
    grid
}

/// Background run length at each cell of one scanline. A stroke cell
/// contributes density 1; a background cell contributes the reciprocal of
/// the longest background run containing it along the scan direction.
fn scanline_density(occupied: &[bool]) -> Vec<f64> {
    let n = occupied.len();
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        if occupied[i] {
            out[i] = 1.0;
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !occupied[i] {
            i += 1;
        }
        let run = (i - start) as f64;
        for v in &mut out[start..i] {
            *v = 1.0 / run;
        }
    }
    out
}

/// Density projections onto both axes.
///
/// The x projection sums horizontal-run densities over rows per column; the
/// y projection sums vertical-run densities over columns per row. Each is
/// floored at 5% of its own mean so empty coordinates keep a small positive
/// share and the maps below stay strictly monotone.
pub fn density_projections(grid: &BinaryGrid) -> (DensityProjection, DensityProjection) {
    let n = grid.n();
    let mut dx = vec![0.0; n];
    for y in 0..n {
        let row: Vec<bool> = (0..n).map(|x| grid.get(x, y)).collect();
        for (x, v) in scanline_density(&row).into_iter().enumerate() {
            dx[x] += v;
        }
    }
    let mut dy = vec![0.0; n];
    for x in 0..n {
        let col: Vec<bool> = (0..n).map(|y| grid.get(x, y)).collect();
        for (y, v) in scanline_density(&col).into_iter().enumerate() {
            dy[y] += v;
        }
    }
    for values in [&mut dx, &mut dy] {
        let mean = values.iter().sum::<f64>() / n as f64;
        let floor = 0.05 * mean;
        for v in values.iter_mut() {
            if *v < floor {
                *v = floor;
            }
        }
    }
    (
        DensityProjection {
            axis: Axis::X,
            values: dx,
        },
        DensityProjection {
            axis: Axis::Y,
            values: dy,
        },
    )
}

/// Equalizing map for one projection: integer coordinate k maps to
/// n * P(k) / P(n) where P is the density prefix sum, interpolated linearly
/// between integers. Ends are fixed at 0 and n.
pub fn build_map(projection: &DensityProjection) -> CoordinateMap {
    let n = projection.values.len();
    let total: f64 = projection.values.iter().sum();
    debug_assert!(total > 0.0, "projection floor keeps totals positive");
    let mut knots = Vec::with_capacity(n + 1);
    let mut prefix = 0.0;
    knots.push(0.0);
    for &d in &projection.values {
        prefix += d;
        knots.push(n as f64 * prefix / total);
    }
    // Float drift can leave the last knot a hair off n; pin it.
    knots[n] = n as f64;
    debug_assert!(
        knots.windows(2).all(|w| w[1] > w[0]),
        "density floor guarantees strict monotonicity"
    );
    CoordinateMap {
        axis: projection.axis,
        knots,
    }
}

/// Remap every point of the ink through the equalizing maps of both axes.
///
/// The ink must lie in the unit box. Grid resolution n controls how finely
/// density varies; stroke structure, kinds, and label pass through.
pub fn apply_nln(ink: &Ink, n: usize) -> Ink {
    let grid = rasterize_binary(ink, n);
    let (dx, dy) = density_projections(&grid);
    let map_x = build_map(&dx);
    let map_y = build_map(&dy);
    let nf = n as f64;
    ink.map_points(|p| Point {
        x: map_x.apply(p.x * nf) / nf,
        y: map_y.apply(p.y * nf) / nf,
    })
}
