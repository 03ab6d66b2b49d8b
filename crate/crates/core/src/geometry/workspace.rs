//! Reachable region of the end-effector over the operating range.
//!
//! The tip is evaluated on the operating grid and the quadrilaterals spanned
//! by adjacent feasible grid nodes are filled into a fixed-resolution
//! occupancy raster. Filling quads instead of splatting the sampled points
//! makes the area estimate converge with the raster, not with the angle grid.

use super::{end_effector_position, AngleGrid, GeomError, Linkage, OperatingRange, Point2};

/// Occupancy raster over the workspace bounding box.
#[derive(Debug, Clone)]
pub struct Raster {
    /// Lower-left corner of cell (0, 0).
    pub min: Point2,
    /// Cell edge length.
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    occ: Vec<bool>,
}

impl Raster {
    fn new(min: Point2, cell: f64, nx: usize, ny: usize) -> Self {
        Raster { min, cell, nx, ny, occ: vec![false; nx * ny] }
    }

    pub fn is_occupied(&self, ix: isize, iy: isize) -> bool {
        if ix < 0 || iy < 0 || ix as usize >= self.nx || iy as usize >= self.ny {
            return false;
        }
        self.occ[iy as usize * self.nx + ix as usize]
    }

    fn mark(&mut self, ix: isize, iy: isize) {
        if ix >= 0 && iy >= 0 && (ix as usize) < self.nx && (iy as usize) < self.ny {
            self.occ[iy as usize * self.nx + ix as usize] = true;
        }
    }

    /// Cell containing `p` (may be out of bounds).
    pub fn cell_index(&self, p: Point2) -> (isize, isize) {
        (
            ((p.x - self.min.x) / self.cell).floor() as isize,
            ((p.y - self.min.y) / self.cell).floor() as isize,
        )
    }

    pub fn occupied_cells(&self) -> usize {
        self.occ.iter().filter(|&&b| b).count()
    }

    pub fn area(&self) -> f64 {
        self.occupied_cells() as f64 * self.cell * self.cell
    }

    /// True when `p` falls in an occupied cell or one of its 8 neighbors.
    /// The one-cell dilation absorbs pinholes left by rasterization when the
    /// raster is used as a covering test.
    pub fn covers_dilated(&self, p: Point2) -> bool {
        let (ix, iy) = self.cell_index(p);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if self.is_occupied(ix + dx, iy + dy) {
                    return true;
                }
            }
        }
        false
    }

    /// Min and max distance from the origin to occupied cell centers.
    pub fn radial_bounds(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if self.occ[iy * self.nx + ix] {
                    let c = self.min
                        + Point2::new((ix as f64 + 0.5) * self.cell, (iy as f64 + 0.5) * self.cell);
                    let r = c.norm();
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
        }
        (hi >= lo).then_some((lo, hi))
    }

    /// Marks every cell whose center lies inside triangle `(a, b, c)`
    /// (inclusive of edges).
    fn fill_triangle(&mut self, a: Point2, b: Point2, c: Point2) {
        let min_x = a.x.min(b.x).min(c.x);
        let max_x = a.x.max(b.x).max(c.x);
        let min_y = a.y.min(b.y).min(c.y);
        let max_y = a.y.max(b.y).max(c.y);
        let (ix0, iy0) = self.cell_index(Point2::new(min_x, min_y));
        let (ix1, iy1) = self.cell_index(Point2::new(max_x, max_y));
        for iy in iy0.max(0)..=iy1.min(self.ny as isize - 1) {
            for ix in ix0.max(0)..=ix1.min(self.nx as isize - 1) {
                let p = self.min
                    + Point2::new((ix as f64 + 0.5) * self.cell, (iy as f64 + 0.5) * self.cell);
                let s0 = (b - a).cross(p - a);
                let s1 = (c - b).cross(p - b);
                let s2 = (a - c).cross(p - c);
                if (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0) || (s0 <= 0.0 && s1 <= 0.0 && s2 <= 0.0) {
                    self.mark(ix, iy);
                }
            }
        }
    }
}

/// End-effector workspace of one design over the operating range.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// Tip positions of the feasible grid poses, row-major.
    pub points: Vec<Point2>,
    pub raster: Raster,
    /// Occupied raster area (same length units squared as the linkage).
    pub area: f64,
}

/// Sweeps the operating grid, rasterizes the reached region and estimates its
/// area. `raster_cells` is the resolution of the longer bounding-box side.
pub fn compute_workspace(
    d: &Linkage,
    range: &OperatingRange,
    grid: AngleGrid,
    raster_cells: usize,
) -> Result<Workspace, GeomError> {
    assert!(raster_cells >= 2, "raster too coarse");
    let (n1, n2) = (grid.n_theta1, grid.n_theta2);
    let mut tips: Vec<Option<Point2>> = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            tips.push(end_effector_position(d, range.pose_at(grid, i, j)).ok());
        }
    }
    let points: Vec<Point2> = tips.iter().flatten().copied().collect();
    if points.is_empty() {
        return Err(GeomError::EmptyWorkspace);
    }

    let mut min = points[0];
    let mut max = points[0];
    for p in &points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let w = max.x - min.x;
    let h = max.y - min.y;
    let cell = (w.max(h)).max(1e-12) / raster_cells as f64;
    let nx = (w / cell).floor() as usize + 1;
    let ny = (h / cell).floor() as usize + 1;
    let mut raster = Raster::new(min, cell, nx, ny);

    for p in &points {
        let (ix, iy) = raster.cell_index(*p);
        raster.mark(ix, iy);
    }
    for i in 0..n1.saturating_sub(1) {
        for j in 0..n2.saturating_sub(1) {
            let idx = |ii: usize, jj: usize| tips[ii * n2 + jj];
            if let (Some(p00), Some(p10), Some(p11), Some(p01)) =
                (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1))
            {
                raster.fill_triangle(p00, p10, p11);
                raster.fill_triangle(p00, p11, p01);
            }
        }
    }

    let area = raster.area();
    Ok(Workspace { points, raster, area })
}
