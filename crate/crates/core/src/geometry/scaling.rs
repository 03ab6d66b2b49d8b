//! Scaling a unit design until its workspace covers the task region.
//!
//! Coverage is not monotone in the scale: blowing an annular workspace up too
//! far drops the task into the central hole. The search therefore derives
//! radial bounds from the raster, scans that bracket on a log grid for the
//! first covered scale, and only then bisects.

use super::{AngleGrid, GeomError, Linkage, OperatingRange, Point2, TaskRegion, Workspace};
use serde::{Deserialize, Serialize};

/// Parameters of the scale search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSearch {
    /// Hard bracket; scales outside it are never reported.
    pub s_min: f64,
    pub s_max: f64,
    /// Relative width at which bisection stops.
    pub tol_rel: f64,
    /// Log-scan resolution inside the radial bracket.
    pub scan: usize,
    /// Samples on the task-disk boundary (checked first, cheap rejection).
    pub boundary_samples: usize,
}

impl Default for ScaleSearch {
    fn default() -> Self {
        ScaleSearch { s_min: 0.01, s_max: 100.0, tol_rel: 1e-4, scan: 128, boundary_samples: 256 }
    }
}

/// True when the task disk, mapped into unit-workspace coordinates by
/// `1/scale`, lies entirely inside the dilated occupancy raster. Boundary ring
/// first, then a hexagonal interior lattice at one-cell pitch.
pub fn disk_covered(ws: &Workspace, task: &TaskRegion, scale: f64) -> bool {
    let inv = 1.0 / scale;
    let c = task.center * inv;
    let r = task.radius * inv;
    let n = 256;
    for k in 0..n {
        let ang = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        if !ws.raster.covers_dilated(c + r * Point2::unit_at(ang)) {
            return false;
        }
    }
    if !ws.raster.covers_dilated(c) {
        return false;
    }
    let cell = ws.raster.cell;
    let dy = cell * 3f64.sqrt() / 2.0;
    let rows = (2.0 * r / dy).ceil() as usize;
    for row in 0..=rows {
        let y = c.y - r + row as f64 * dy;
        let off = if row % 2 == 0 { 0.0 } else { cell / 2.0 };
        let half = (r * r - (y - c.y) * (y - c.y)).max(0.0).sqrt();
        let cols = (2.0 * half / cell).ceil() as usize;
        for col in 0..=cols {
            let x = c.x - half + off + col as f64 * cell;
            if x > c.x + half {
                break;
            }
            if !ws.raster.covers_dilated(Point2::new(x, y)) {
                return false;
            }
        }
    }
    true
}

/// Smallest scale whose workspace covers the task, times `safety`.
///
/// `ws` is the unit-design workspace. The returned scale (before the safety
/// factor) is accurate to `tol_rel` relative, confined to
/// `[s_min, s_max]`.
pub fn compute_scale_factor(
    ws: &Workspace,
    task: &TaskRegion,
    safety: f64,
    search: &ScaleSearch,
) -> Result<f64, GeomError> {
    assert!(safety >= 1.0, "safety factor must be >= 1");
    if task.radius <= 0.0 {
        return Err(GeomError::NonPositiveArea { what: "task" });
    }
    let uncoverable = GeomError::Uncoverable { lo: search.s_min, hi: search.s_max };
    let (r_lo, r_hi) = ws.raster.radial_bounds().ok_or(GeomError::EmptyWorkspace)?;
    // covers_dilated reaches at most ~2.1 cells from an occupied center;
    // padding by 2.5 makes the radial bounds safely conservative.
    let pad = 2.5 * ws.raster.cell;
    let outer = r_hi + pad;
    let inner = (r_lo - pad).max(0.0);

    let far = task.center.norm() + task.radius;
    let near = (task.center.norm() - task.radius).max(0.0);
    // far/s <= outer is necessary, so s >= far/outer; near/s >= inner caps s.
    let lo = (far / outer).max(search.s_min);
    let mut hi = search.s_max;
    if inner > 0.0 {
        if near <= 0.0 {
            // Task encloses the origin but the workspace has a central hole.
            return Err(uncoverable);
        }
        hi = hi.min(near / inner);
    }
    if lo > hi {
        return Err(uncoverable);
    }

    let steps = search.scan.max(2);
    let ratio = (hi / lo).powf(1.0 / (steps - 1) as f64);
    let mut first_covered = None;
    let mut prev = lo * 0.999;
    for k in 0..steps {
        let s = lo * ratio.powi(k as i32);
        if disk_covered(ws, task, s) {
            first_covered = Some((prev, s));
            break;
        }
        prev = s;
    }
    let (mut a, mut b) = first_covered.ok_or(uncoverable)?;
    while b - a > search.tol_rel * b {
        let mid = 0.5 * (a + b);
        if disk_covered(ws, task, mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b * safety)
}

/// Workspace-usage ratio: task area over scaled-workspace area. Higher is
/// better; a covered task cannot exceed 1.
pub fn kinematic_performance(task_area: f64, workspace_area: f64) -> Result<f64, GeomError> {
    if task_area <= 0.0 {
        return Err(GeomError::NonPositiveArea { what: "task" });
    }
    if workspace_area <= 0.0 {
        return Err(GeomError::NonPositiveArea { what: "workspace" });
    }
    Ok(task_area / workspace_area)
}

/// Kinematic labels of one design for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicLabel {
    /// Meters per unit length.
    pub scale: f64,
    /// Scaled workspace area in square meters.
    pub workspace_area: f64,
    /// Workspace-usage ratio.
    pub eta: f64,
}

/// Full kinematic labeling path: unit workspace, minimal covering scale,
/// scaled area, usage ratio.
pub fn eta_for_task(
    d: &Linkage,
    task: &TaskRegion,
    range: &OperatingRange,
    grid: AngleGrid,
    raster_cells: usize,
    safety: f64,
    search: &ScaleSearch,
) -> Result<KinematicLabel, GeomError> {
    let ws = super::compute_workspace(d, range, grid, raster_cells)?;
    let scale = compute_scale_factor(&ws, task, safety, search)?;
    let workspace_area = ws.area * scale * scale;
    let eta = kinematic_performance(task.area(), workspace_area)?;
    Ok(KinematicLabel { scale, workspace_area, eta })
}
