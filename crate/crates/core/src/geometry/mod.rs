//! Planar kinematics of the quasi-serial linkage.
//!
//! Both actuated joints sit at the origin. Link `l1` (the "frame" of the inner
//! four-bar) points at `theta1` to joint B, the crank `l2` points at `theta2`
//! to joint C. Coupler `l3` joins C to D and rocker `l4` joins D back to B,
//! closing the loop. The upper arm is rigid on the rocker: from B it runs
//! `ee_y` perpendicular to the rocker axis and then `ee_x` along it to the tip.

mod enclosing;
mod scaling;
mod workspace;

pub use enclosing::{min_enclosing_circle, TaskRegion};
pub use scaling::{compute_scale_factor, disk_covered, eta_for_task, kinematic_performance, KinematicLabel, ScaleSearch};
pub use workspace::{compute_workspace, Raster, Workspace};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("loop cannot close at theta1={theta1:.4} theta2={theta2:.4}: arccos argument {arg:.6} outside [-1, 1]")]
    ClosureInfeasible { theta1: f64, theta2: f64, arg: f64 },
    #[error("degenerate pose: joints B and C coincide (diagonal {a:.3e})")]
    DegeneratePose { a: f64 },
    #[error("workspace is empty: no pose in the operating range closes")]
    EmptyWorkspace,
    #[error("empty point set")]
    EmptyInput,
    #[error("no scale in [{lo:.3}, {hi:.3}] lets the workspace cover the task")]
    Uncoverable { lo: f64, hi: f64 },
    #[error("non-positive {what} area")]
    NonPositiveArea { what: &'static str },
}

/// 2-D point / vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    /// Unit vector at `angle` radians from the +x axis.
    pub fn unit_at(angle: f64) -> Self {
        Point2::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product `self x o`.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Rotated 90 degrees clockwise: `u(angle - pi/2)` for a unit vector.
    pub fn perp_cw(self) -> Point2 {
        Point2::new(self.y, -self.x)
    }

    /// Rotated 90 degrees counterclockwise.
    pub fn perp_ccw(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, p: Point2) -> Point2 {
        p * self
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Link lengths of one design.
///
/// Unit designs carry `l1 == 1` and everything else relative to it; after
/// scaling the same struct holds absolute lengths in meters. Kinematics is
/// scale-invariant, so every routine here accepts either form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linkage {
    /// Frame link of the inner four-bar (origin to B).
    pub l1: f64,
    /// Crank (origin to C).
    pub l2: f64,
    /// Coupler (C to D).
    pub l3: f64,
    /// Rocker (D to B).
    pub l4: f64,
    /// Upper-arm segment along the rocker axis (corner to tip).
    pub ee_x: f64,
    /// Upper-arm segment perpendicular to the rocker axis (B to corner).
    pub ee_y: f64,
}

impl Linkage {
    pub fn new(l1: f64, l2: f64, l3: f64, l4: f64, ee_x: f64, ee_y: f64) -> Self {
        Linkage { l1, l2, l3, l4, ee_x, ee_y }
    }

    pub fn lengths(&self) -> [f64; 6] {
        [self.l1, self.l2, self.l3, self.l4, self.ee_x, self.ee_y]
    }

    pub fn from_lengths(v: [f64; 6]) -> Self {
        Linkage::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    /// All six lengths multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Linkage {
        Linkage::from_lengths(self.lengths().map(|l| l * s))
    }

    /// Crank-rocker class condition, strict: l3 + l2 < l1 + l4. Necessary but
    /// not sufficient for closure over the operating range; the grid sweep in
    /// `is_feasible_over_range` does the rest.
    pub fn is_crank_rocker(&self) -> bool {
        self.l3 + self.l2 < self.l1 + self.l4
    }
}

/// A unit design together with the physical scale applied to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledDesign {
    pub unit: Linkage,
    /// Meters per unit length.
    pub scale: f64,
}

impl ScaledDesign {
    /// Absolute lengths in meters.
    pub fn absolute(&self) -> Linkage {
        self.unit.scaled(self.scale)
    }
}

/// Actuator angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAngles {
    pub theta1: f64,
    pub theta2: f64,
}

impl JointAngles {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        JointAngles { theta1, theta2 }
    }
}

/// Operating range of the actuators. `theta2` is bounded above by `theta1`,
/// so the range is triangular: rows of constant `theta1` span
/// `[theta2_min, theta1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingRange {
    pub theta1_min: f64,
    pub theta1_max: f64,
    pub theta2_min: f64,
}

impl Default for OperatingRange {
    fn default() -> Self {
        OperatingRange {
            theta1_min: 45f64.to_radians(),
            theta1_max: PI,
            theta2_min: (-37.5f64).to_radians(),
        }
    }
}

/// Grid resolution over the operating range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub n_theta1: usize,
    pub n_theta2: usize,
}

impl Default for AngleGrid {
    fn default() -> Self {
        AngleGrid { n_theta1: 64, n_theta2: 64 }
    }
}

impl OperatingRange {
    /// Pose at grid node `(i, j)`. Both endpoints of each axis are included;
    /// `j` runs along `theta2` from `theta2_min` up to the row's `theta1`.
    pub fn pose_at(&self, grid: AngleGrid, i: usize, j: usize) -> JointAngles {
        let fi = if grid.n_theta1 > 1 { i as f64 / (grid.n_theta1 - 1) as f64 } else { 0.0 };
        let fj = if grid.n_theta2 > 1 { j as f64 / (grid.n_theta2 - 1) as f64 } else { 0.0 };
        let t1 = self.theta1_min + fi * (self.theta1_max - self.theta1_min);
        let t2 = self.theta2_min + fj * (t1 - self.theta2_min);
        JointAngles::new(t1, t2)
    }

    /// All grid poses in row-major order (theta1 outer, theta2 inner).
    pub fn poses(&self, grid: AngleGrid) -> Vec<JointAngles> {
        let mut out = Vec::with_capacity(grid.n_theta1 * grid.n_theta2);
        for i in 0..grid.n_theta1 {
            for j in 0..grid.n_theta2 {
                out.push(self.pose_at(grid, i, j));
            }
        }
        out
    }
}

/// Allowed excess on arccos arguments before a pose is called infeasible.
/// Grid poses on the closure boundary (e.g. theta2 == theta1 exactly) produce
/// arguments like 1 + 1e-16 from rounding alone.
const ARCCOS_SLACK: f64 = 1e-9;

fn checked_acos(arg: f64, q: JointAngles) -> Result<f64, GeomError> {
    if arg.abs() <= 1.0 {
        Ok(arg.acos())
    } else if arg.abs() <= 1.0 + ARCCOS_SLACK {
        Ok(arg.clamp(-1.0, 1.0).acos())
    } else {
        Err(GeomError::ClosureInfeasible { theta1: q.theta1, theta2: q.theta2, arg })
    }
}

/// Length of the diagonal B-C for the given actuator angles (law of cosines
/// in triangle O-B-C).
pub fn coupler_diagonal(d: &Linkage, q: JointAngles) -> f64 {
    let c = (q.theta1 - q.theta2).cos();
    (d.l1 * d.l1 + d.l2 * d.l2 - 2.0 * d.l1 * d.l2 * c).max(0.0).sqrt()
}

/// Interior angles at joint B: `zeta` from the frame-link extension B->O to
/// the diagonal B->C (signed, counterclockwise positive), `xi` from the
/// diagonal to the rocker B->D (always counterclockwise by branch choice).
/// Their sum orients the rocker, and with it the rigid upper arm.
///
/// `zeta` carries the sign of `sin(theta1 - theta2)`: when the crank passes
/// more than half a turn behind the frame link the diagonal crosses the
/// B->O axis, and the unsigned law-of-cosines angle would jump to the
/// mirror-image assembly instead of following the physical one.
pub fn transmission_angles(d: &Linkage, q: JointAngles) -> Result<(f64, f64), GeomError> {
    let a = coupler_diagonal(d, q);
    if a < 1e-12 {
        return Err(GeomError::DegeneratePose { a });
    }
    let zeta = checked_acos((d.l1 * d.l1 + a * a - d.l2 * d.l2) / (2.0 * d.l1 * a), q)?;
    let xi = checked_acos((d.l4 * d.l4 + a * a - d.l3 * d.l3) / (2.0 * d.l4 * a), q)?;
    let zeta = if (q.theta1 - q.theta2).sin() >= 0.0 { zeta } else { -zeta };
    Ok((zeta, xi))
}

/// Transmission angle at the coupler-rocker joint D (angle between coupler
/// and rocker). Values near 0 or pi mean the loop is close to folding.
pub fn transmission_angle(d: &Linkage, q: JointAngles) -> Result<f64, GeomError> {
    let a = coupler_diagonal(d, q);
    checked_acos((d.l3 * d.l3 + d.l4 * d.l4 - a * a) / (2.0 * d.l3 * d.l4), q)
}

/// All joint positions of one closed pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseJoints {
    /// Tip of the frame link (joint B).
    pub frame_tip: Point2,
    /// Tip of the crank (joint C).
    pub crank_tip: Point2,
    /// Coupler-rocker joint D.
    pub elbow: Point2,
    /// Upper-arm corner: B displaced by `ee_y` perpendicular to the rocker.
    pub arm_corner: Point2,
    /// End-effector.
    pub tip: Point2,
    /// Absolute angle of the rocker axis D->B; the arm's `ee_x` segment runs
    /// along it.
    pub phi: f64,
}

/// Solves the loop closure and places every joint.
///
/// The branch is fixed: D lies on the counterclockwise side of the diagonal
/// B-C as seen from B, which keeps the four-bar in its elbow-up assembly over
/// the whole operating range.
pub fn solve_pose(d: &Linkage, q: JointAngles) -> Result<PoseJoints, GeomError> {
    let (zeta, xi) = transmission_angles(d, q)?;
    let phi = q.theta1 + zeta + xi;
    let frame_tip = d.l1 * Point2::unit_at(q.theta1);
    let crank_tip = d.l2 * Point2::unit_at(q.theta2);
    let arm_dir = Point2::unit_at(phi);
    let arm_perp = arm_dir.perp_cw();
    let elbow = frame_tip - d.l4 * arm_dir;
    let arm_corner = frame_tip + d.ee_y * arm_perp;
    let tip = arm_corner + d.ee_x * arm_dir;
    Ok(PoseJoints { frame_tip, crank_tip, elbow, arm_corner, tip, phi })
}

/// End-effector position for one pose.
pub fn end_effector_position(d: &Linkage, q: JointAngles) -> Result<Point2, GeomError> {
    Ok(solve_pose(d, q)?.tip)
}

/// True when the loop closes at every node of the operating grid.
pub fn is_feasible_over_range(d: &Linkage, range: &OperatingRange, grid: AngleGrid) -> bool {
    let lo = (d.l3 - d.l4).abs();
    let hi = d.l3 + d.l4;
    for i in 0..grid.n_theta1 {
        for j in 0..grid.n_theta2 {
            let a = coupler_diagonal(d, range.pose_at(grid, i, j));
            if a < lo - 1e-12 || a > hi + 1e-12 || a < 1e-12 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_design() -> Linkage {
        Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45)
    }

    #[test]
    fn diagonal_at_right_angle_matches_pythagoras() {
        let d = reference_design();
        let q = JointAngles::new(90f64.to_radians(), 0.0);
        assert_relative_eq!(coupler_diagonal(&d, q), (1.0f64 + 0.16).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn zeta_matches_hand_computed_value() {
        // l1=1, l2=0.4, theta1=90 deg, theta2=0: a=sqrt(1.16),
        // zeta = arccos((1 + 1.16 - 0.16) / (2 sqrt(1.16))) = 21.801 deg.
        let d = reference_design();
        let q = JointAngles::new(90f64.to_radians(), 0.0);
        let (zeta, _) = transmission_angles(&d, q).unwrap();
        assert_relative_eq!(zeta.to_degrees(), 21.801409486351815, epsilon = 1e-9);
    }

    #[test]
    fn pose_joints_satisfy_link_lengths() {
        let d = reference_design();
        let q = JointAngles::new(2.0, 0.3);
        let p = solve_pose(&d, q).unwrap();
        assert_relative_eq!(p.frame_tip.norm(), d.l1, epsilon = 1e-12);
        assert_relative_eq!(p.crank_tip.norm(), d.l2, epsilon = 1e-12);
        assert_relative_eq!(p.elbow.dist(p.crank_tip), d.l3, epsilon = 1e-12);
        assert_relative_eq!(p.elbow.dist(p.frame_tip), d.l4, epsilon = 1e-12);
        assert_relative_eq!(p.tip.dist(p.arm_corner), d.ee_x, epsilon = 1e-12);
        assert_relative_eq!(p.arm_corner.dist(p.frame_tip), d.ee_y, epsilon = 1e-12);
        // Elbow sits counterclockwise of the diagonal as seen from B.
        let cb = p.crank_tip - p.frame_tip;
        let db = p.elbow - p.frame_tip;
        assert!(cb.cross(db) >= 0.0);
    }

    #[test]
    fn diagonal_pose_closes_despite_rounding() {
        // theta2 == theta1 puts the arccos argument exactly on 1 up to rounding.
        let d = reference_design();
        let q = JointAngles::new(1.234, 1.234);
        let p = solve_pose(&d, q).unwrap();
        assert_relative_eq!(p.elbow.dist(p.frame_tip), d.l4, epsilon = 1e-12);
    }

    #[test]
    fn closure_error_reports_argument() {
        // Coupler+rocker far too short to reach the diagonal.
        let d = Linkage::new(1.0, 0.18, 0.3, 0.3, 1.0, 0.2);
        let q = JointAngles::new(PI, 0.0);
        match transmission_angle(&d, q) {
            Err(GeomError::ClosureInfeasible { arg, .. }) => assert!(arg.abs() > 1.0 + 1e-9),
            other => panic!("expected ClosureInfeasible, got {other:?}"),
        }
    }

    #[test]
    fn crank_rocker_condition() {
        assert!(reference_design().is_crank_rocker());
        // Bound-box minimum row: 0.8 + 0.18 = 0.98 < 1.3.
        assert!(Linkage::new(1.0, 0.18, 0.8, 0.3, 1.0, 0.2).is_crank_rocker());
        // Bound-box maximum row: 1.3 + 0.6 = 1.9 >= 1.6.
        assert!(!Linkage::new(1.0, 0.6, 1.3, 0.6, 1.4, 0.7).is_crank_rocker());
        // Strict at equality: 1.3 + 0.3 = 1.0 + 0.6.
        assert!(!Linkage::new(1.0, 0.3, 1.3, 0.6, 1.0, 0.2).is_crank_rocker());
    }

    #[test]
    fn grid_covers_range_endpoints() {
        let range = OperatingRange::default();
        let grid = AngleGrid { n_theta1: 5, n_theta2: 4 };
        let corner = range.pose_at(grid, 0, 0);
        assert_relative_eq!(corner.theta1.to_degrees(), 45.0, epsilon = 1e-12);
        assert_relative_eq!(corner.theta2.to_degrees(), -37.5, epsilon = 1e-12);
        let top = range.pose_at(grid, 4, 3);
        assert_relative_eq!(top.theta1.to_degrees(), 180.0, epsilon = 1e-12);
        assert_relative_eq!(top.theta2.to_degrees(), 180.0, epsilon = 1e-12);
        // theta2 never exceeds theta1 anywhere on the grid.
        for q in range.poses(AngleGrid::default()) {
            assert!(q.theta2 <= q.theta1 + 1e-12);
        }
    }

    #[test]
    fn feasibility_over_range_matches_pose_solving() {
        let range = OperatingRange::default();
        let grid = AngleGrid { n_theta1: 16, n_theta2: 16 };
        let designs = [
            reference_design(),
            Linkage::new(1.0, 0.18, 0.8, 0.3, 1.0, 0.2),
            Linkage::new(1.0, 0.6, 1.3, 0.6, 1.4, 0.7),
            Linkage::new(1.0, 0.35, 0.9, 0.55, 1.1, 0.3),
        ];
        for d in designs {
            let by_filter = is_feasible_over_range(&d, &range, grid);
            let by_solve = (0..grid.n_theta1).all(|i| {
                (0..grid.n_theta2).all(|j| solve_pose(&d, range.pose_at(grid, i, j)).is_ok())
            });
            assert_eq!(by_filter, by_solve, "disagreement for {d:?}");
        }
    }
}
