//! Workspace area estimation and the covering-scale search.

use mechsyn::geometry::*;
use proptest::prelude::*;

fn reference_design() -> Linkage {
    Linkage::new(1.0, 0.4, 1.0, 0.5, 1.2, 0.45)
}

#[test]
fn area_is_stable_under_angle_grid_doubling() {
    // The raster is the resolution that matters; refining the angle grid must
    // not move the area estimate by more than a few percent.
    let d = reference_design();
    let range = OperatingRange::default();
    let coarse = compute_workspace(&d, &range, AngleGrid { n_theta1: 64, n_theta2: 64 }, 256)
        .unwrap()
        .area;
    let fine = compute_workspace(&d, &range, AngleGrid { n_theta1: 128, n_theta2: 128 }, 256)
        .unwrap()
        .area;
    let rel = (fine - coarse).abs() / fine;
    assert!(rel < 0.05, "area moved {:.2}% under grid doubling", 100.0 * rel);
}

#[test]
fn zero_upper_arm_collapses_workspace_to_the_frame_arc() {
    // With no upper arm the tip rides on joint B: a circular arc of radius
    // l1. Every point must sit on that circle and the raster area must be a
    // thin band around it.
    let d = Linkage::new(1.0, 0.4, 1.0, 0.5, 0.0, 0.0);
    let range = OperatingRange::default();
    let ws = compute_workspace(&d, &range, AngleGrid::default(), 256).unwrap();
    for p in &ws.points {
        assert!((p.norm() - 1.0).abs() < 1e-9, "tip off the frame circle: {p:?}");
    }
    // Arc of at most 135 degrees, thickness of a few cells.
    let arc_len = (range.theta1_max - range.theta1_min) * d.l1;
    let band = arc_len * 3.0 * ws.raster.cell;
    assert!(ws.area <= band, "area {} exceeds thin band {band}", ws.area);
}

#[test]
fn workspace_area_scales_quadratically() {
    let d = reference_design();
    let range = OperatingRange::default();
    let grid = AngleGrid::default();
    let base = compute_workspace(&d, &range, grid, 256).unwrap().area;
    for s in [0.5, 2.0, 7.0] {
        let scaled = compute_workspace(&d.scaled(s), &range, grid, 256).unwrap().area;
        let rel = (scaled - s * s * base).abs() / (s * s * base);
        assert!(rel < 0.01, "scale {s}: area ratio off by {:.3}%", 100.0 * rel);
    }
}

#[test]
fn scale_factor_is_homogeneous_in_the_task() {
    // Scaling the task disk by k about the origin scales the minimal
    // covering scale by k.
    let ws = compute_workspace(
        &reference_design(),
        &OperatingRange::default(),
        AngleGrid::default(),
        256,
    )
    .unwrap();
    let search = ScaleSearch::default();
    let base_task = TaskRegion::new(Point2::new(-1.0, 0.5), 0.3);
    let s_base = compute_scale_factor(&ws, &base_task, 1.0, &search).unwrap();
    for k in [0.25, 3.0, 10.0] {
        let task = TaskRegion::new(base_task.center * k, base_task.radius * k);
        let s = compute_scale_factor(&ws, &task, 1.0, &search).unwrap();
        let rel = (s - k * s_base).abs() / (k * s_base);
        assert!(rel < 3e-4, "k={k}: scale {} vs expected {}", s, k * s_base);
    }
}

#[test]
fn eta_label_is_within_unit_interval_for_covered_tasks() {
    let d = reference_design();
    let task = TaskRegion::new(Point2::new(-1.0, 0.5), 0.3);
    let label = eta_for_task(
        &d,
        &task,
        &OperatingRange::default(),
        AngleGrid::default(),
        256,
        1.0,
        &ScaleSearch::default(),
    )
    .unwrap();
    assert!(label.eta > 0.0 && label.eta <= 1.0, "eta = {}", label.eta);
    assert!(label.scale > 0.0);
    // Task area over scaled workspace area is consistent with the parts.
    let expected = task.area() / label.workspace_area;
    approx::assert_relative_eq!(label.eta, expected, epsilon = 1e-12);
}

#[test]
fn tighter_coverage_gives_higher_eta() {
    // A larger safety factor inflates the workspace and can only reduce the
    // usage ratio.
    let d = reference_design();
    let task = TaskRegion::new(Point2::new(-1.0, 0.5), 0.3);
    let range = OperatingRange::default();
    let grid = AngleGrid::default();
    let search = ScaleSearch::default();
    let snug = eta_for_task(&d, &task, &range, grid, 256, 1.0, &search).unwrap();
    let padded = eta_for_task(&d, &task, &range, grid, 256, 1.2, &search).unwrap();
    assert!(snug.eta > padded.eta);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// Any closing design from the sampling box has a positive workspace area,
    /// and the dilated raster covers every stored point.
    #[test]
    fn closing_designs_have_positive_covered_area(
        l2 in 0.18f64..0.6,
        l3 in 0.8f64..1.3,
        l4 in 0.3f64..0.6,
        ee_x in 1.0f64..1.4,
        ee_y in 0.2f64..0.7,
    ) {
        let d = Linkage::new(1.0, l2, l3, l4, ee_x, ee_y);
        let range = OperatingRange::default();
        let grid = AngleGrid { n_theta1: 24, n_theta2: 24 };
        prop_assume!(is_feasible_over_range(&d, &range, grid));
        let ws = compute_workspace(&d, &range, grid, 128).unwrap();
        prop_assert!(ws.area > 0.0);
        for p in &ws.points {
            prop_assert!(ws.raster.covers_dilated(*p));
        }
    }
}
