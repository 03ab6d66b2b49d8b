//! Quasi-static joint loads.
//!
//! The labels are the torques the two actuators must hold against gravity and
//! a payload at the tip, maximized over the operating grid. Joint velocities
//! come from differentiating the loop closure implicitly, which stays finite
//! at the diagonal boundary of the operating range where the
//! interior-angle formulas lose a factor to 0/0.

use crate::geometry::{
    solve_pose, AngleGrid, GeomError, JointAngles, Linkage, OperatingRange, Point2, PoseJoints,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("singular pose: jacobian condition number {cond:.3e} exceeds {limit:.1e}")]
    SingularPose { cond: f64, limit: f64 },
}

/// Inertial properties of the arm. Links are uniform slender rods cut from
/// the same stock; masses follow from length alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassModel {
    /// Material density, kg/m^3.
    pub density: f64,
    /// Constant link cross-section, m^2.
    pub section_area: f64,
    /// Point mass carried at the tip, kg.
    pub payload: f64,
    /// Gravitational acceleration, m/s^2, acting along -y.
    pub gravity: f64,
}

impl Default for MassModel {
    fn default() -> Self {
        // ABS stock, 6 cm^2 section, 5 kg payload.
        MassModel { density: 1040.0, section_area: 6.0e-4, payload: 5.0, gravity: 9.81 }
    }
}

/// Torque labels of one design: maximum magnitudes over the operating grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueLabel {
    /// N m at the theta1 actuator.
    pub tau1: f64,
    /// N m at the theta2 actuator.
    pub tau2: f64,
}

/// Joint positions plus their derivatives with respect to the two actuator
/// angles (index 0: theta1, index 1: theta2).
#[derive(Debug, Clone, Copy)]
pub struct PoseDerivatives {
    pub joints: PoseJoints,
    pub d_frame_tip: [Point2; 2],
    pub d_crank_tip: [Point2; 2],
    pub d_elbow: [Point2; 2],
    pub d_arm_dir: [Point2; 2],
    pub d_arm_perp: [Point2; 2],
    pub d_tip: [Point2; 2],
}

/// Solves the pose and differentiates it through the loop closure.
///
/// With B, C, D the revolute joints, `|D-B| = l4` and `|D-C| = l3` give
/// `(D-B) . dD = (D-B) . dB` and `(D-C) . dD = (D-C) . dC`; a 2x2 solve
/// yields dD for each actuator.
pub fn pose_derivatives(d: &Linkage, q: JointAngles) -> Result<PoseDerivatives, GeomError> {
    let joints = solve_pose(d, q)?;
    let rb = joints.elbow - joints.frame_tip;
    let rc = joints.elbow - joints.crank_tip;
    let det = rb.x * rc.y - rb.y * rc.x;
    if det.abs() < 1e-12 * rb.norm() * rc.norm() {
        // B, C and D collinear: the loop folds and dD is unbounded.
        return Err(GeomError::DegeneratePose { a: det });
    }

    let d_frame_tip = [joints.frame_tip.perp_ccw(), Point2::ZERO];
    let d_crank_tip = [Point2::ZERO, joints.crank_tip.perp_ccw()];
    let mut d_elbow = [Point2::ZERO; 2];
    let mut d_arm_dir = [Point2::ZERO; 2];
    let mut d_arm_perp = [Point2::ZERO; 2];
    let mut d_tip = [Point2::ZERO; 2];
    for k in 0..2 {
        let rhs0 = rb.dot(d_frame_tip[k]);
        let rhs1 = rc.dot(d_crank_tip[k]);
        d_elbow[k] = Point2::new((rc.y * rhs0 - rb.y * rhs1) / det, (rb.x * rhs1 - rc.x * rhs0) / det);
        // arm axis = (B - D) / l4
        d_arm_dir[k] = (d_frame_tip[k] - d_elbow[k]) * (1.0 / d.l4);
        d_arm_perp[k] = d_arm_dir[k].perp_cw();
        d_tip[k] = d_frame_tip[k] + d.ee_y * d_arm_perp[k] + d.ee_x * d_arm_dir[k];
    }
    Ok(PoseDerivatives { joints, d_frame_tip, d_crank_tip, d_elbow, d_arm_dir, d_arm_perp, d_tip })
}

const COND_LIMIT: f64 = 1e8;

/// Tip Jacobian `d(x, y)/d(theta1, theta2)`, row-major.
pub fn jacobian(d: &Linkage, q: JointAngles) -> Result<[[f64; 2]; 2], DynamicsError> {
    let pd = pose_derivatives(d, q)?;
    let j = [[pd.d_tip[0].x, pd.d_tip[1].x], [pd.d_tip[0].y, pd.d_tip[1].y]];
    // 2-norm condition number from the eigenvalues of J^T J.
    let g00 = j[0][0] * j[0][0] + j[1][0] * j[1][0];
    let g11 = j[0][1] * j[0][1] + j[1][1] * j[1][1];
    let g01 = j[0][0] * j[0][1] + j[1][0] * j[1][1];
    let tr = g00 + g11;
    let disc = ((g00 - g11) * (g00 - g11) / 4.0 + g01 * g01).sqrt();
    let lmax = tr / 2.0 + disc;
    let lmin = (tr / 2.0 - disc).max(0.0);
    let cond = if lmin > 0.0 { (lmax / lmin).sqrt() } else { f64::INFINITY };
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(DynamicsError::SingularPose { cond, limit: COND_LIMIT });
    }
    Ok(j)
}

/// Gravity loads resolved at the two actuators for one pose, via virtual
/// work: `tau_k = sum_p (d p / d theta_k)^T F_p` with `F_p = (0, -m_p g)`
/// over the payload and the link centers of mass. Lengths are in meters.
pub fn static_joint_torques(
    d: &Linkage,
    q: JointAngles,
    m: &MassModel,
) -> Result<TorqueLabel, DynamicsError> {
    let pd = pose_derivatives(d, q)?;
    let rod = m.density * m.section_area;
    let mut tau = [0.0f64; 2];
    for k in 0..2 {
        let db = pd.d_frame_tip[k];
        let dc = pd.d_crank_tip[k];
        let dd = pd.d_elbow[k];
        // (mass, d(com)/d(theta_k)) for payload and each uniform rod.
        let contributions = [
            (m.payload, pd.d_tip[k]),
            (rod * d.l1, db * 0.5),
            (rod * d.l2, dc * 0.5),
            (rod * d.l3, (dc + dd) * 0.5),
            (rod * d.l4, (dd + db) * 0.5),
            (rod * d.ee_y, db + pd.d_arm_perp[k] * (0.5 * d.ee_y)),
            (rod * d.ee_x, db + pd.d_arm_perp[k] * d.ee_y + pd.d_arm_dir[k] * (0.5 * d.ee_x)),
        ];
        tau[k] = contributions.iter().map(|(mass, dp)| -mass * m.gravity * dp.y).sum();
    }
    Ok(TorqueLabel { tau1: tau[0], tau2: tau[1] })
}

/// Torque labels: per-joint maxima of |tau| over the operating grid. Poses
/// that do not close are skipped; if none close the workspace is empty.
pub fn required_torques(
    d: &Linkage,
    m: &MassModel,
    range: &OperatingRange,
    grid: AngleGrid,
) -> Result<TorqueLabel, DynamicsError> {
    let mut best: Option<TorqueLabel> = None;
    for i in 0..grid.n_theta1 {
        for j in 0..grid.n_theta2 {
            match static_joint_torques(d, range.pose_at(grid, i, j), m) {
                Ok(t) => {
                    let b = best.get_or_insert(TorqueLabel { tau1: 0.0, tau2: 0.0 });
                    b.tau1 = b.tau1.max(t.tau1.abs());
                    b.tau2 = b.tau2.max(t.tau2.abs());
                }
                Err(_) => continue,
            }
        }
    }
    best.ok_or(DynamicsError::Geom(GeomError::EmptyWorkspace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_design() -> Linkage {
        Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45)
    }

    #[test]
    fn elbow_derivative_preserves_link_lengths() {
        // (D-B).dD == (D-B).dB and (D-C).dD == (D-C).dC by construction;
        // check through the solved values.
        let d = reference_design();
        let q = JointAngles::new(1.9, 0.4);
        let pd = pose_derivatives(&d, q).unwrap();
        let rb = pd.joints.elbow - pd.joints.frame_tip;
        let rc = pd.joints.elbow - pd.joints.crank_tip;
        for k in 0..2 {
            assert_relative_eq!(rb.dot(pd.d_elbow[k]), rb.dot(pd.d_frame_tip[k]), epsilon = 1e-10);
            assert_relative_eq!(rc.dot(pd.d_elbow[k]), rc.dot(pd.d_crank_tip[k]), epsilon = 1e-10);
        }
    }

    #[test]
    fn payload_contribution_is_linear_in_payload() {
        let d = reference_design().scaled(0.6);
        let q = JointAngles::new(2.0, 0.1);
        let base = MassModel { payload: 0.0, ..MassModel::default() };
        let five = MassModel::default();
        let ten = MassModel { payload: 10.0, ..MassModel::default() };
        let t0 = static_joint_torques(&d, q, &base).unwrap();
        let t5 = static_joint_torques(&d, q, &five).unwrap();
        let t10 = static_joint_torques(&d, q, &ten).unwrap();
        assert_relative_eq!(t10.tau1 - t0.tau1, 2.0 * (t5.tau1 - t0.tau1), epsilon = 1e-9);
        assert_relative_eq!(t10.tau2 - t0.tau2, 2.0 * (t5.tau2 - t0.tau2), epsilon = 1e-9);
    }

    #[test]
    fn reversing_gravity_flips_torque_signs() {
        let d = reference_design().scaled(0.6);
        let q = JointAngles::new(2.0, 0.1);
        let up = MassModel { gravity: -9.81, ..MassModel::default() };
        let a = static_joint_torques(&d, q, &MassModel::default()).unwrap();
        let b = static_joint_torques(&d, q, &up).unwrap();
        assert_relative_eq!(a.tau1, -b.tau1, epsilon = 1e-9);
        assert_relative_eq!(a.tau2, -b.tau2, epsilon = 1e-9);
    }

    #[test]
    fn label_maxima_are_nonnegative_and_bounded_by_total_moment() {
        let d = reference_design().scaled(0.6);
        let m = MassModel::default();
        let label =
            required_torques(&d, &m, &OperatingRange::default(), AngleGrid::default()).unwrap();
        assert!(label.tau1 >= 0.0 && label.tau2 >= 0.0);
        // Order-of-magnitude bound: all mass at the farthest tip radius, with
        // a generous factor for the mechanical advantage of the loop.
        let reach = d.l1 + d.ee_x + d.ee_y;
        let total_mass =
            m.payload + m.density * m.section_area * d.lengths().iter().sum::<f64>();
        let bound = 10.0 * total_mass * m.gravity * reach;
        assert!(label.tau1 <= bound, "tau1 {} > bound {bound}", label.tau1);
        assert!(label.tau2 <= bound, "tau2 {} > bound {bound}", label.tau2);
    }
}
