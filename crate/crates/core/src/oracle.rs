//! Independent forward-kinematics oracle for tests.
//!
//! Builds the pose by intersecting the two joint circles around B and C
//! instead of going through the interior-angle formulas, so the two paths
//! share no code. Branch selection matches the production convention: D on
//! the counterclockwise side of the diagonal B-C as seen from B.

use crate::geometry::{GeomError, JointAngles, Linkage, Point2};

/// End-effector position via circle-circle intersection.
pub fn tip_by_circle_intersection(d: &Linkage, q: JointAngles) -> Result<Point2, GeomError> {
    let b = d.l1 * Point2::unit_at(q.theta1);
    let c = d.l2 * Point2::unit_at(q.theta2);
    let elbow = intersect_circles(c, d.l3, b, d.l4, q)?;

    // The arm is rigid on the rocker: ee_y perpendicular to D->B, ee_x along it.
    let axis = (b - elbow) * (1.0 / d.l4);
    let perp = Point2::new(axis.y, -axis.x);
    Ok(b + d.ee_y * perp + d.ee_x * axis)
}

/// Intersection of circles (center `p0`, radius `r0`) and (center `p1`,
/// radius `r1`), picking the solution counterclockwise of p0->p1... the
/// branch with cross(p0 - p1, x - p1) >= 0.
fn intersect_circles(
    p0: Point2,
    r0: f64,
    p1: Point2,
    r1: f64,
    q: JointAngles,
) -> Result<Point2, GeomError> {
    let delta = p1 - p0;
    let dist = delta.norm();
    if dist < 1e-12 {
        return Err(GeomError::DegeneratePose { a: dist });
    }
    if dist > r0 + r1 + 1e-9 || dist < (r0 - r1).abs() - 1e-9 {
        return Err(GeomError::ClosureInfeasible {
            theta1: q.theta1,
            theta2: q.theta2,
            arg: dist,
        });
    }
    // Foot of the perpendicular from the intersection points onto p0->p1.
    let along = (dist * dist + r0 * r0 - r1 * r1) / (2.0 * dist);
    let h2 = (r0 * r0 - along * along).max(0.0);
    let h = h2.sqrt();
    let dir = delta * (1.0 / dist);
    let foot = p0 + along * dir;
    let normal = dir.perp_ccw();
    let cand_a = foot + h * normal;
    let cand_b = foot - h * normal;
    // Want cross(C - B, X - B) >= 0 with p0 = C, p1 = B.
    let pick = |x: Point2| (p0 - p1).cross(x - p1);
    if pick(cand_a) >= pick(cand_b) {
        Ok(cand_a)
    } else {
        Ok(cand_b)
    }
}
