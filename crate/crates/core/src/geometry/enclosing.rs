//! Task region: the smallest disk enclosing a set of task points.

use super::{GeomError, Point2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Circular task region the scaled workspace must cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRegion {
    pub center: Point2,
    pub radius: f64,
}

impl TaskRegion {
    pub fn new(center: Point2, radius: f64) -> Self {
        TaskRegion { center, radius }
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn contains(&self, p: Point2) -> bool {
        // Multiplicative slack keeps boundary points of the generating set in.
        self.center.dist(p) <= self.radius * (1.0 + 1e-12) + 1e-12
    }
}

/// Smallest enclosing disk of `points` (Welzl's algorithm, move-to-front
/// variant). Runs in expected linear time after a deterministic shuffle.
pub fn min_enclosing_circle(points: &[Point2]) -> Result<TaskRegion, GeomError> {
    if points.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let mut pts = points.to_vec();
    // Fixed seed: expected-case complexity without run-to-run variation.
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x0517_ac1e));

    let mut c: Option<TaskRegion> = None;
    for (i, &p) in pts.iter().enumerate() {
        match c {
            Some(ref circ) if circ.contains(p) => {}
            _ => c = Some(circle_one_boundary_point(&pts[..=i], p)),
        }
    }
    Ok(c.unwrap())
}

/// Smallest circle over `pts` with `p` known to lie on the boundary.
fn circle_one_boundary_point(pts: &[Point2], p: Point2) -> TaskRegion {
    let mut c = TaskRegion::new(p, 0.0);
    for (i, &q) in pts.iter().enumerate() {
        if !c.contains(q) {
            c = if c.radius == 0.0 {
                diameter_circle(p, q)
            } else {
                circle_two_boundary_points(&pts[..=i], p, q)
            };
        }
    }
    c
}

/// Smallest circle over `pts` with `p` and `q` on the boundary.
fn circle_two_boundary_points(pts: &[Point2], p: Point2, q: Point2) -> TaskRegion {
    let circ = diameter_circle(p, q);
    let pq = q - p;
    let mut left: Option<TaskRegion> = None;
    let mut right: Option<TaskRegion> = None;
    for &r in pts {
        if circ.contains(r) {
            continue;
        }
        let cross = pq.cross(r - p);
        let Some(c) = circumcircle(p, q, r) else { continue };
        let side = pq.cross(c.center - p);
        if cross > 0.0 && left.map_or(true, |l| side > pq.cross(l.center - p)) {
            left = Some(c);
        } else if cross < 0.0 && right.map_or(true, |l| side < pq.cross(l.center - p)) {
            right = Some(c);
        }
    }
    match (left, right) {
        (None, None) => circ,
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (Some(l), Some(r)) => {
            if l.radius <= r.radius {
                l
            } else {
                r
            }
        }
    }
}

fn diameter_circle(a: Point2, b: Point2) -> TaskRegion {
    let center = Point2::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
    let radius = center.dist(a).max(center.dist(b));
    TaskRegion::new(center, radius)
}

/// Circumcircle of a triangle; `None` for collinear points. Coordinates are
/// taken relative to the bounding-box midpoint for numerical stability.
fn circumcircle(a: Point2, b: Point2, c: Point2) -> Option<TaskRegion> {
    let ox = (a.x.min(b.x).min(c.x) + a.x.max(b.x).max(c.x)) / 2.0;
    let oy = (a.y.min(b.y).min(c.y) + a.y.max(b.y).max(c.y)) / 2.0;
    let (ax, ay) = (a.x - ox, a.y - oy);
    let (bx, by) = (b.x - ox, b.y - oy);
    let (cx, cy) = (c.x - ox, c.y - oy);
    let d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    if d == 0.0 {
        return None;
    }
    let x = ox
        + ((ax * ax + ay * ay) * (by - cy)
            + (bx * bx + by * by) * (cy - ay)
            + (cx * cx + cy * cy) * (ay - by))
            / d;
    let y = oy
        + ((ax * ax + ay * ay) * (cx - bx)
            + (bx * bx + by * by) * (ax - cx)
            + (cx * cx + cy * cy) * (bx - ax))
            / d;
    let center = Point2::new(x, y);
    let radius = center.dist(a).max(center.dist(b)).max(center.dist(c));
    Some(TaskRegion::new(center, radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_points_give_diameter_circle() {
        let c = min_enclosing_circle(&[Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)]).unwrap();
        assert_relative_eq!(c.center.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.center.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.radius, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn triangle_circumcircle() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(1.0, 2.0)];
        let c = min_enclosing_circle(&pts).unwrap();
        assert_relative_eq!(c.center.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.center.y, 0.75, epsilon = 1e-12);
        assert_relative_eq!(c.radius, 1.25, epsilon = 1e-12);
    }

    #[test]
    fn collinear_points_fall_back_to_extremes() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(3.0, 0.0)];
        let c = min_enclosing_circle(&pts).unwrap();
        assert_relative_eq!(c.center.x, 1.5, epsilon = 1e-12);
        assert_relative_eq!(c.radius, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn single_point_is_a_zero_circle() {
        let c = min_enclosing_circle(&[Point2::new(4.0, -1.0)]).unwrap();
        assert_eq!(c.radius, 0.0);
        assert_eq!(c.center, Point2::new(4.0, -1.0));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(min_enclosing_circle(&[]).unwrap_err(), GeomError::EmptyInput);
    }

    #[test]
    fn interior_point_does_not_change_the_circle() {
        let base = [Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(1.0, 2.0)];
        let with_inner =
            [base[0], base[1], base[2], Point2::new(1.0, 0.5), Point2::new(0.9, 1.0)];
        let a = min_enclosing_circle(&base).unwrap();
        let b = min_enclosing_circle(&with_inner).unwrap();
        assert_relative_eq!(a.radius, b.radius, epsilon = 1e-12);
        assert_relative_eq!(a.center.x, b.center.x, epsilon = 1e-12);
    }
}
