//! Analytic pose derivatives checked against central finite differences, and
//! torque properties that hold regardless of pose.

use mechsyn::dynamics::*;
use mechsyn::geometry::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn random_design(rng: &mut ChaCha20Rng) -> Linkage {
    Linkage::new(
        1.0,
        rng.gen_range(0.18..0.6),
        rng.gen_range(0.8..1.3),
        rng.gen_range(0.3..0.6),
        rng.gen_range(1.0..1.4),
        rng.gen_range(0.2..0.7),
    )
}

/// Pose comfortably inside the operating range so the finite-difference
/// stencil never crosses the closure boundary.
fn interior_pose(rng: &mut ChaCha20Rng) -> JointAngles {
    let t1 = rng.gen_range(60f64.to_radians()..170f64.to_radians());
    let t2 = rng.gen_range((-30f64).to_radians()..(t1 - 0.1));
    JointAngles::new(t1, t2)
}

/// True when the design keeps the transmission angle away from the folds at
/// every grid node; Lipschitz-style bounds only hold with such a margin.
fn fold_margin_ok(d: &Linkage, range: &OperatingRange, grid: AngleGrid) -> bool {
    let lim = 0.35;
    for i in 0..grid.n_theta1 {
        for j in 0..grid.n_theta2 {
            match transmission_angle(d, range.pose_at(grid, i, j)) {
                Ok(mu) if mu > lim && mu < std::f64::consts::PI - lim => {}
                _ => return false,
            }
        }
    }
    true
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let h = 1e-6;
    let mut checked = 0usize;
    while checked < 1000 {
        let d = random_design(&mut rng);
        let q = interior_pose(&mut rng);
        // Keep clear of fold poses where third derivatives blow up and the
        // finite-difference stencil loses accuracy.
        match transmission_angle(&d, q) {
            Ok(mu) if mu > 0.2 && mu < std::f64::consts::PI - 0.2 => {}
            _ => continue,
        }
        let Ok(j) = jacobian(&d, q) else { continue };
        let tip = |t1: f64, t2: f64| end_effector_position(&d, JointAngles::new(t1, t2));
        let (Ok(px1), Ok(mx1), Ok(px2), Ok(mx2)) = (
            tip(q.theta1 + h, q.theta2),
            tip(q.theta1 - h, q.theta2),
            tip(q.theta1, q.theta2 + h),
            tip(q.theta1, q.theta2 - h),
        ) else {
            continue;
        };
        let fd = [
            [(px1.x - mx1.x) / (2.0 * h), (px2.x - mx2.x) / (2.0 * h)],
            [(px1.y - mx1.y) / (2.0 * h), (px2.y - mx2.y) / (2.0 * h)],
        ];
        for r in 0..2 {
            for c in 0..2 {
                let scale = 1.0f64.max(j[r][c].abs());
                assert!(
                    (j[r][c] - fd[r][c]).abs() <= 1e-5 * scale,
                    "J[{r}][{c}] = {} but FD gives {} for {d:?} at {q:?}",
                    j[r][c],
                    fd[r][c]
                );
            }
        }
        checked += 1;
    }
}

#[test]
fn jacobian_is_scale_homogeneous() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let mut checked = 0usize;
    while checked < 200 {
        let d = random_design(&mut rng);
        let q = interior_pose(&mut rng);
        let s = rng.gen_range(0.1..10.0);
        let (Ok(j), Ok(js)) = (jacobian(&d, q), jacobian(&d.scaled(s), q)) else { continue };
        for r in 0..2 {
            for c in 0..2 {
                assert!(
                    (js[r][c] - s * j[r][c]).abs() <= 1e-9 * (s * j[r][c]).abs().max(1e-6),
                    "J(s d) != s J(d) at [{r}][{c}]"
                );
            }
        }
        checked += 1;
    }
}

#[test]
fn parallelogram_first_column_is_rotated_frame_vector() {
    // l3 = l1 and l4 = l2 make O-B-D-C a parallelogram: D = B + C, the arm
    // orientation follows theta2 alone, so d(tip)/d(theta1) is exactly the
    // 90-degree-rotated frame-tip position vector.
    let d = Linkage::new(1.0, 0.4, 1.0, 0.4, 1.2, 0.45);
    let q = JointAngles::new(2.0, 0.5);
    let j = jacobian(&d, q).unwrap();
    let b = d.l1 * Point2::unit_at(q.theta1);
    let rot = b.perp_ccw();
    assert!((j[0][0] - rot.x).abs() < 1e-9, "{} vs {}", j[0][0], rot.x);
    assert!((j[1][0] - rot.y).abs() < 1e-9, "{} vs {}", j[1][0], rot.y);
}

#[test]
fn massless_links_payload_only_identities() {
    // With massless links tau_k = -payload * g * d(tip_y)/d(theta_k) exactly,
    // torques are linear in payload, and labels scale linearly with size.
    let mut rng = ChaCha20Rng::seed_from_u64(24);
    let massless =
        |payload: f64| MassModel { density: 0.0, payload, ..MassModel::default() };
    let mut checked = 0usize;
    while checked < 100 {
        let d = random_design(&mut rng).scaled(0.7);
        let q = interior_pose(&mut rng);
        let (Ok(j), Ok(t)) = (jacobian(&d, q), static_joint_torques(&d, q, &massless(5.0)))
        else {
            continue;
        };
        let expect1 = -5.0 * 9.81 * j[1][0];
        let expect2 = -5.0 * 9.81 * j[1][1];
        assert!((t.tau1 - expect1).abs() <= 1e-9 * expect1.abs().max(1.0));
        assert!((t.tau2 - expect2).abs() <= 1e-9 * expect2.abs().max(1.0));

        let t2 = static_joint_torques(&d, q, &massless(10.0)).unwrap();
        assert!((t2.tau1 - 2.0 * t.tau1).abs() <= 1e-9 * t.tau1.abs().max(1.0));
        assert!((t2.tau2 - 2.0 * t.tau2).abs() <= 1e-9 * t.tau2.abs().max(1.0));
        checked += 1;
    }

    // Labels: payload monotone and scale linear.
    let d = Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45);
    let range = OperatingRange::default();
    let grid = AngleGrid::default();
    let label5 = required_torques(&d.scaled(0.7), &massless(5.0), &range, grid).unwrap();
    let label3 = required_torques(&d.scaled(0.7), &massless(3.0), &range, grid).unwrap();
    assert!(label5.tau1 >= label3.tau1 && label5.tau2 >= label3.tau2);
    assert!((label5.tau1 - 5.0 / 3.0 * label3.tau1).abs() <= 1e-9 * label5.tau1);

    let half = required_torques(&d.scaled(0.5), &massless(5.0), &range, grid).unwrap();
    let unit = required_torques(&d, &massless(5.0), &range, grid).unwrap();
    assert!((unit.tau1 - 2.0 * half.tau1).abs() <= 1e-9 * unit.tau1.max(1.0));
    assert!((unit.tau2 - 2.0 * half.tau2).abs() <= 1e-9 * unit.tau2.max(1.0));
}

#[test]
fn no_loads_no_torque() {
    let d = Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45);
    let m = MassModel { density: 0.0, payload: 0.0, ..MassModel::default() };
    let t = static_joint_torques(&d, JointAngles::new(2.0, 0.3), &m).unwrap();
    assert_eq!(t.tau1, 0.0);
    assert_eq!(t.tau2, 0.0);
}

#[test]
fn torque_labels_stable_under_grid_refinement() {
    let d = Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45).scaled(0.7);
    let m = MassModel::default();
    let range = OperatingRange::default();
    let coarse =
        required_torques(&d, &m, &range, AngleGrid { n_theta1: 64, n_theta2: 64 }).unwrap();
    let fine =
        required_torques(&d, &m, &range, AngleGrid { n_theta1: 128, n_theta2: 128 }).unwrap();
    assert!((fine.tau1 - coarse.tau1).abs() / fine.tau1 < 0.02);
    assert!((fine.tau2 - coarse.tau2).abs() / fine.tau2 < 0.02);
}

#[test]
fn torque_labels_continuous_under_design_perturbation() {
    let mut rng = ChaCha20Rng::seed_from_u64(25);
    let m = MassModel::default();
    let range = OperatingRange::default();
    let grid = AngleGrid { n_theta1: 16, n_theta2: 16 };
    let eps = 1e-5;
    let mut checked = 0usize;
    while checked < 100 {
        let d = random_design(&mut rng);
        // Stay away from the feasibility boundary so the perturbed design
        // keeps the same pose set.
        if !is_feasible_over_range(&d, &range, grid) || !fold_margin_ok(&d, &range, grid) {
            continue;
        }
        let mut lengths = d.lengths();
        for v in lengths.iter_mut().skip(1) {
            *v += rng.gen_range(-eps..eps);
        }
        let p = Linkage::from_lengths(lengths);
        if !is_feasible_over_range(&p, &range, grid) {
            continue;
        }
        let (Ok(a), Ok(b)) = (
            required_torques(&d.scaled(0.7), &m, &range, grid),
            required_torques(&p.scaled(0.7), &m, &range, grid),
        ) else {
            continue;
        };
        let dd: f64 = d
            .lengths()
            .iter()
            .zip(p.lengths())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let dt = ((a.tau1 - b.tau1).powi(2) + (a.tau2 - b.tau2).powi(2)).sqrt();
        // Empirical Lipschitz bound, generous but finite.
        assert!(dt <= 1e4 * dd + 1e-9, "torque jump {dt} for design step {dd}");
        checked += 1;
    }
}

#[test]
fn torque_matches_potential_energy_gradient() {
    // The gravity-induced generalized force is minus the gradient of the
    // potential m*g*height summed over payload and link centers of mass.
    // Check against a central difference of that potential.
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    let m = MassModel::default();
    let h = 1e-6;

    let potential = |d: &Linkage, q: JointAngles| -> Option<f64> {
        let p = mechsyn::dynamics::pose_derivatives(d, q).ok()?.joints;
        let rod = m.density * m.section_area;
        let com_y = [
            (m.payload, p.tip.y),
            (rod * d.l1, p.frame_tip.y * 0.5),
            (rod * d.l2, p.crank_tip.y * 0.5),
            (rod * d.l3, (p.crank_tip.y + p.elbow.y) * 0.5),
            (rod * d.l4, (p.elbow.y + p.frame_tip.y) * 0.5),
            (rod * d.ee_y, (p.frame_tip.y + p.arm_corner.y) * 0.5),
            (rod * d.ee_x, (p.arm_corner.y + p.tip.y) * 0.5),
        ];
        Some(com_y.iter().map(|(mass, y)| mass * m.gravity * y).sum())
    };

    let mut checked = 0usize;
    while checked < 200 {
        let d = random_design(&mut rng).scaled(0.7);
        let q = interior_pose(&mut rng);
        let Ok(t) = static_joint_torques(&d, q, &m) else { continue };
        let (Some(p1p), Some(p1m), Some(p2p), Some(p2m)) = (
            potential(&d, JointAngles::new(q.theta1 + h, q.theta2)),
            potential(&d, JointAngles::new(q.theta1 - h, q.theta2)),
            potential(&d, JointAngles::new(q.theta1, q.theta2 + h)),
            potential(&d, JointAngles::new(q.theta1, q.theta2 - h)),
        ) else {
            continue;
        };
        let fd1 = -(p1p - p1m) / (2.0 * h);
        let fd2 = -(p2p - p2m) / (2.0 * h);
        assert!((t.tau1 - fd1).abs() <= 1e-5 * fd1.abs().max(1.0), "tau1 {} vs -dV {}", t.tau1, fd1);
        assert!((t.tau2 - fd2).abs() <= 1e-5 * fd2.abs().max(1.0), "tau2 {} vs -dV {}", t.tau2, fd2);
        checked += 1;
    }
}

#[test]
fn torques_scale_superlinearly_with_size() {
    // Doubling every length at least doubles the gravity moment of the
    // payload and quadruples the self-weight terms.
    let d = Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45);
    let m = MassModel::default();
    let range = OperatingRange::default();
    let grid = AngleGrid::default();
    let small = required_torques(&d.scaled(0.5), &m, &range, grid).unwrap();
    let large = required_torques(&d.scaled(1.0), &m, &range, grid).unwrap();
    assert!(large.tau1 >= 2.0 * small.tau1 * 0.999);
    assert!(large.tau2 >= 2.0 * small.tau2 * 0.999);
}

#[test]
fn singular_pose_is_reported_not_garbage() {
    // At theta2 == theta1 the diagonal reaches its minimum l1 - l2; with
    // l3 - l4 == l1 - l2 the joints B, C, D fold onto a line there. The
    // jacobian must refuse rather than return huge numbers.
    let d = Linkage::new(1.0, 0.5, 1.0, 0.5, 1.2, 0.45);
    let q = JointAngles::new(1.3, 1.3);
    match jacobian(&d, q) {
        Err(DynamicsError::Geom(_)) | Err(DynamicsError::SingularPose { .. }) => {}
        other => panic!("expected a singularity error, got {other:?}"),
    }
}

#[test]
fn payload_zero_still_has_self_weight_torque() {
    let d = Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45).scaled(0.7);
    let m = MassModel { payload: 0.0, ..MassModel::default() };
    let t = required_torques(&d, &m, &OperatingRange::default(), AngleGrid::default()).unwrap();
    assert!(t.tau1 > 0.0);
    assert!(t.tau2 > 0.0);
}
