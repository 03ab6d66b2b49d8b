//! Smallest enclosing circle checked against exhaustive candidate search.

use mechsyn::geometry::{min_enclosing_circle, Point2, TaskRegion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Brute force: the optimal circle is determined by two points (diameter) or
/// three (circumcircle); try all and keep the smallest that covers everything.
fn brute_force_mec(points: &[Point2]) -> TaskRegion {
    let contains_all = |c: &TaskRegion| points.iter().all(|&p| c.contains(p));
    let mut best: Option<TaskRegion> = None;
    let mut consider = |c: TaskRegion| {
        if contains_all(&c) && best.map_or(true, |b| c.radius < b.radius) {
            best = Some(c);
        }
    };
    if points.len() == 1 {
        return TaskRegion::new(points[0], 0.0);
    }
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let center = (points[i] + points[j]) * 0.5;
            consider(TaskRegion::new(center, center.dist(points[i])));
            for k in (j + 1)..points.len() {
                if let Some(c) = circumcircle(points[i], points[j], points[k]) {
                    consider(c);
                }
            }
        }
    }
    best.expect("brute force always finds a circle")
}

fn circumcircle(a: Point2, b: Point2, c: Point2) -> Option<TaskRegion> {
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    if d.abs() < 1e-14 {
        return None;
    }
    let asq = a.x * a.x + a.y * a.y;
    let bsq = b.x * b.x + b.y * b.y;
    let csq = c.x * c.x + c.y * c.y;
    let center = Point2::new(
        (asq * (b.y - c.y) + bsq * (c.y - a.y) + csq * (a.y - b.y)) / d,
        (asq * (c.x - b.x) + bsq * (a.x - c.x) + csq * (b.x - a.x)) / d,
    );
    Some(TaskRegion::new(center, center.dist(a).max(center.dist(b)).max(center.dist(c))))
}

#[test]
fn welzl_matches_brute_force_on_random_sets() {
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    for trial in 0..300 {
        let n = rng.gen_range(1..=12);
        let pts: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        let fast = min_enclosing_circle(&pts).unwrap();
        let brute = brute_force_mec(&pts);
        assert!(
            (fast.radius - brute.radius).abs() <= 1e-9 * brute.radius.max(1.0),
            "trial {trial}: radius {} vs brute {} for {pts:?}",
            fast.radius,
            brute.radius
        );
        for &p in &pts {
            assert!(fast.contains(p), "trial {trial}: {p:?} outside the returned circle");
        }
    }
}

#[test]
fn duplicated_points_do_not_break_the_search() {
    let p = Point2::new(1.0, 2.0);
    let q = Point2::new(-1.0, 0.5);
    let pts = vec![p, p, q, q, p];
    let c = min_enclosing_circle(&pts).unwrap();
    approx::assert_relative_eq!(c.radius, p.dist(q) / 2.0, epsilon = 1e-12);
}

#[test]
fn task_region_area_matches_radius() {
    let c = TaskRegion::new(Point2::ZERO, 2.0);
    approx::assert_relative_eq!(c.area(), 4.0 * std::f64::consts::PI, epsilon = 1e-12);
}
