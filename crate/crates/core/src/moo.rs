//! Constrained NSGA-II over surrogate predictions. Selection uses
//! constraint-domination; the returned archive collects every feasible
//! non-dominated individual seen in any generation, so its hypervolume never
//! decreases as the run progresses.

use crate::sampler::LabeledDesign;
use crate::surrogate::SurrogateModel;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_CONSTRAINTS: usize = 10;
const FEAS_EPS: f64 = 0.0;

#[derive(Debug, Error)]
pub enum MooError {
    #[error("no feasible individual found in {generations} generations")]
    NoFeasibleIndividual { generations: usize },
    #[error("degenerate bounds for variable {0}: [{1}, {2}]")]
    DegenerateBounds(usize, f64, f64),
    #[error("population must be even and at least 4, got {0}")]
    BadPopulation(usize),
}

/// Dataset statistics backing the z-band constraints g5-g10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub z: f64,
}

impl ConstraintStats {
    pub fn from_rows(rows: &[LabeledDesign], z: f64) -> Self {
        let n = rows.len() as f64;
        let mut mean = [0.0; 3];
        for r in rows {
            let t = r.targets();
            for k in 0..3 {
                mean[k] += t[k] / n;
            }
        }
        let mut var = [0.0; 3];
        for r in rows {
            let t = r.targets();
            for k in 0..3 {
                var[k] += (t[k] - mean[k]).powi(2) / n;
            }
        }
        ConstraintStats { mean, std: var.map(f64::sqrt), z }
    }
}

/// The ten constraint violations, all clamped at zero:
/// g1 eta' > 0; g2-g3 tau' > 0; g4 the crank-rocker inequality on absolute
/// lengths; g5-g10 each prediction inside mean +/- z std of the dataset.
pub fn evaluate_constraints(
    x: &[f64; 6],
    preds: &[f64; 3],
    stats: &ConstraintStats,
) -> [f64; N_CONSTRAINTS] {
    let mut g = [0.0; N_CONSTRAINTS];
    g[0] = (-preds[0]).max(0.0);
    g[1] = (-preds[1]).max(0.0);
    g[2] = (-preds[2]).max(0.0);
    g[3] = (x[2] + x[1] - x[0] - x[3]).max(0.0);
    for k in 0..3 {
        let half = stats.z * stats.std[k];
        let lo = stats.mean[k] - half;
        let hi = stats.mean[k] + half;
        g[4 + 2 * k] = (lo - preds[k]).max(0.0);
        g[5 + 2 * k] = (preds[k] - hi).max(0.0);
    }
    g
}

pub trait Problem: Sync {
    fn n_objectives(&self) -> usize;
    fn bounds(&self) -> &[(f64, f64)];
    /// Returns (objectives to minimize, constraint violations >= 0).
    fn evaluate(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// Surrogate-backed three-objective design problem.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub model: SurrogateModel,
    pub bounds: [(f64, f64); 6],
    pub stats: ConstraintStats,
}

impl DesignProblem {
    /// Bounds are the per-variable extent of the dataset's absolute lengths;
    /// constraint bands come from the same rows.
    pub fn from_dataset(
        model: SurrogateModel,
        rows: &[LabeledDesign],
        z: f64,
    ) -> Result<Self, MooError> {
        let mut bounds = [(f64::MAX, f64::MIN); 6];
        for r in rows {
            let f = r.features();
            for k in 0..6 {
                bounds[k].0 = bounds[k].0.min(f[k]);
                bounds[k].1 = bounds[k].1.max(f[k]);
            }
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(MooError::DegenerateBounds(k, lo, hi));
            }
        }
        Ok(DesignProblem { model, bounds, stats: ConstraintStats::from_rows(rows, z) })
    }
}

impl Problem for DesignProblem {
    fn n_objectives(&self) -> usize {
        3
    }

    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let xa: [f64; 6] = x.try_into().expect("six variables");
        let preds = self.model.predict(&xa);
        let g = evaluate_constraints(&xa, &preds, &self.stats);
        // Workspace usage is maximized; torques are minimized as-is.
        (vec![-preds[0], preds[1], preds[2]], g.to_vec())
    }
}

/// Inverse of `DesignProblem::evaluate`'s objective mapping: recovers
/// (eta, tau1, tau2) on their natural reporting scale.
pub fn objectives_to_targets(objectives: &[f64]) -> [f64; 3] {
    [-objectives[0], objectives[1], objectives[2]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    pub violations: Vec<f64>,
    /// Sum of violations; zero means feasible.
    pub violation: f64,
    pub rank: usize,
    /// Boundary points carry infinite crowding; JSON has no infinity, so it
    /// is clamped to f64::MAX on serialization (ordering is unaffected).
    #[serde(serialize_with = "ser_crowding")]
    pub crowding: f64,
}

fn ser_crowding<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(if v.is_finite() { *v } else { f64::MAX.copysign(*v) })
}

impl Individual {
    pub fn is_feasible(&self) -> bool {
        self.violation <= FEAS_EPS
    }
}

fn pareto_dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Constraint-domination: feasible beats infeasible, lower total violation
/// beats higher, and between feasible points plain Pareto dominance decides.
pub fn constraint_dominates(a: &Individual, b: &Individual) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => pareto_dominates(&a.objectives, &b.objectives),
    }
}

/// Fast non-dominated sort; sets `rank` and returns fronts of indices.
pub fn non_dominated_sort(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if constraint_dominates(&pop[i], &pop[j]) {
                dominated[i].push(j);
            } else if constraint_dominates(&pop[j], &pop[i]) {
                count[i] += 1;
            }
        }
    }
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    let mut rank = 0;
    while !current.is_empty() {
        for &i in &current {
            pop[i].rank = rank;
        }
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        fronts.push(std::mem::take(&mut current));
        current = next;
        rank += 1;
    }
    fronts
}

/// Sets `crowding` for the given front (indices into `pop`).
pub fn crowding_distance(pop: &mut [Individual], front: &[usize]) {
    for &i in front {
        pop[i].crowding = 0.0;
    }
    if front.is_empty() {
        return;
    }
    let n_obj = pop[front[0]].objectives.len();
    for m in 0..n_obj {
        let mut order: Vec<usize> = front.to_vec();
        order.sort_by(|&a, &b| {
            pop[a].objectives[m].partial_cmp(&pop[b].objectives[m]).expect("finite objective")
        });
        let lo = pop[order[0]].objectives[m];
        let hi = pop[*order.last().unwrap()].objectives[m];
        pop[order[0]].crowding = f64::INFINITY;
        pop[*order.last().unwrap()].crowding = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in 0..order.len().saturating_sub(2) {
            let i = order[w + 1];
            let gap = pop[order[w + 2]].objectives[m] - pop[order[w]].objectives[m];
            pop[i].crowding += gap / span;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsgaConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_crossover: f64,
    /// Per-variable mutation probability.
    pub mutation_prob: f64,
    pub eta_mutation: f64,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        NsgaConfig {
            pop_size: 100,
            generations: 200,
            crossover_prob: 0.9,
            eta_crossover: 15.0,
            mutation_prob: 1.0 / 6.0,
            eta_mutation: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    /// All-time feasible non-dominated set.
    pub pareto: Vec<Individual>,
    /// Population after survival, one entry per generation (index 0 is the
    /// evaluated initial population).
    pub history: Vec<Vec<Individual>>,
    pub seed: u64,
    pub config: NsgaConfig,
}

fn evaluate_all<P: Problem>(problem: &P, xs: Vec<Vec<f64>>) -> Vec<Individual> {
    xs.into_par_iter()
        .map(|x| {
            let (objectives, violations) = problem.evaluate(&x);
            let violation = violations.iter().sum();
            Individual { x, objectives, violations, violation, rank: usize::MAX, crowding: 0.0 }
        })
        .collect()
}

/// SBX, bounded, applied per variable.
fn sbx(
    rng: &mut ChaCha20Rng,
    cfg: &NsgaConfig,
    bounds: &[(f64, f64)],
    p1: &[f64],
    p2: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.gen::<f64>() > cfg.crossover_prob {
        return (c1, c2);
    }
    let eta = cfg.eta_crossover;
    for k in 0..p1.len() {
        if rng.gen::<f64>() > 0.5 {
            continue;
        }
        let (mut y1, mut y2) = (p1[k], p2[k]);
        if (y1 - y2).abs() < 1e-14 {
            continue;
        }
        if y1 > y2 {
            std::mem::swap(&mut y1, &mut y2);
        }
        let (lo, hi) = bounds[k];
        let u: f64 = rng.gen();
        let spread = |beta: f64| -> f64 {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let beta1 = 1.0 + 2.0 * (y1 - lo) / (y2 - y1);
        let betaq1 = spread(beta1);
        let mut a = 0.5 * ((y1 + y2) - betaq1 * (y2 - y1));
        let beta2 = 1.0 + 2.0 * (hi - y2) / (y2 - y1);
        let betaq2 = spread(beta2);
        let mut b = 0.5 * ((y1 + y2) + betaq2 * (y2 - y1));
        a = a.clamp(lo, hi);
        b = b.clamp(lo, hi);
        if rng.gen::<f64>() <= 0.5 {
            std::mem::swap(&mut a, &mut b);
        }
        c1[k] = a;
        c2[k] = b;
    }
    (c1, c2)
}

/// Polynomial mutation, bounded, applied per variable.
fn polynomial_mutation(rng: &mut ChaCha20Rng, cfg: &NsgaConfig, bounds: &[(f64, f64)], x: &mut [f64]) {
    let eta = cfg.eta_mutation;
    for k in 0..x.len() {
        if rng.gen::<f64>() > cfg.mutation_prob {
            continue;
        }
        let (lo, hi) = bounds[k];
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        let y = x[k];
        let d1 = (y - lo) / span;
        let d2 = (hi - y) / span;
        let u: f64 = rng.gen();
        let pow = 1.0 / (eta + 1.0);
        let dq = if u <= 0.5 {
            let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(pow)
        };
        x[k] = (y + dq * span).clamp(lo, hi);
    }
}

/// Binary tournament under constraint-domination, crowding as tie-break.
fn tournament<'a>(rng: &mut ChaCha20Rng, pop: &'a [Individual]) -> &'a Individual {
    let a = &pop[rng.gen_range(0..pop.len())];
    let b = &pop[rng.gen_range(0..pop.len())];
    if constraint_dominates(a, b) {
        a
    } else if constraint_dominates(b, a) {
        b
    } else if a.crowding > b.crowding {
        a
    } else {
        b
    }
}

/// Keeps `archive` as the non-dominated subset of `archive + feasible new`.
fn update_archive(archive: &mut Vec<Individual>, pop: &[Individual]) {
    for ind in pop.iter().filter(|i| i.is_feasible()) {
        if archive.iter().any(|a| pareto_dominates(&a.objectives, &ind.objectives)) {
            continue;
        }
        if archive.iter().any(|a| a.objectives == ind.objectives && a.x == ind.x) {
            continue;
        }
        archive.retain(|a| !pareto_dominates(&ind.objectives, &a.objectives));
        archive.push(ind.clone());
    }
}

pub fn nsga2<P: Problem>(
    problem: &P,
    cfg: &NsgaConfig,
    seed: u64,
) -> Result<ParetoArchive, MooError> {
    if cfg.pop_size < 4 || cfg.pop_size % 2 != 0 {
        return Err(MooError::BadPopulation(cfg.pop_size));
    }
    let bounds = problem.bounds();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let init: Vec<Vec<f64>> = (0..cfg.pop_size)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect())
        .collect();
    let mut pop = evaluate_all(problem, init);
    let fronts = non_dominated_sort(&mut pop);
    for f in &fronts {
        crowding_distance(&mut pop, f);
    }

    let mut archive: Vec<Individual> = Vec::new();
    update_archive(&mut archive, &pop);
    let mut history = Vec::with_capacity(cfg.generations + 1);
    history.push(pop.clone());

    for _ in 0..cfg.generations {
        let mut offspring_x = Vec::with_capacity(cfg.pop_size);
        while offspring_x.len() < cfg.pop_size {
            let p1 = tournament(&mut rng, &pop).x.clone();
            let p2 = tournament(&mut rng, &pop).x.clone();
            let (mut c1, mut c2) = sbx(&mut rng, cfg, bounds, &p1, &p2);
            polynomial_mutation(&mut rng, cfg, bounds, &mut c1);
            polynomial_mutation(&mut rng, cfg, bounds, &mut c2);
            offspring_x.push(c1);
            if offspring_x.len() < cfg.pop_size {
                offspring_x.push(c2);
            }
        }
        let offspring = evaluate_all(problem, offspring_x);
        let mut combined = pop;
        combined.extend(offspring);
        let fronts = non_dominated_sort(&mut combined);
        let mut next: Vec<Individual> = Vec::with_capacity(cfg.pop_size);
        for front in &fronts {
            crowding_distance(&mut combined, front);
            if next.len() + front.len() <= cfg.pop_size {
                next.extend(front.iter().map(|&i| combined[i].clone()));
            } else {
                let mut rest: Vec<usize> = front.clone();
                rest.sort_by(|&a, &b| {
                    combined[b]
                        .crowding
                        .partial_cmp(&combined[a].crowding)
                        .expect("crowding comparable")
                        .then(a.cmp(&b))
                });
                for &i in rest.iter().take(cfg.pop_size - next.len()) {
                    next.push(combined[i].clone());
                }
                break;
            }
        }
        pop = next;
        update_archive(&mut archive, &pop);
        history.push(pop.clone());
    }

    if archive.is_empty() {
        return Err(MooError::NoFeasibleIndividual { generations: cfg.generations });
    }
    archive.sort_by(|a, b| {
        a.objectives
            .iter()
            .zip(&b.objectives)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(ParetoArchive { pareto: archive, history, seed, config: *cfg })
}

/// Hypervolume dominated by `points` up to `reference` (minimization), for
/// two or three objectives. Points not strictly better than the reference in
/// every coordinate are ignored.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    match reference.len() {
        2 => hv2(points, reference),
        3 => hv3(points, reference),
        d => panic!("hypervolume implemented for 2 or 3 objectives, got {d}"),
    }
}

fn hv2(points: &[Vec<f64>], r: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p[0] < r[0] && p[1] < r[1])
        .map(|p| (p[0], p[1]))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut hv = 0.0;
    let mut prev_y = r[1];
    for (x, y) in pts {
        if y < prev_y {
            hv += (r[0] - x) * (prev_y - y);
            prev_y = y;
        }
    }
    hv
}

fn hv3(points: &[Vec<f64>], r: &[f64]) -> f64 {
    let mut pts: Vec<&Vec<f64>> =
        points.iter().filter(|p| p[0] < r[0] && p[1] < r[1] && p[2] < r[2]).collect();
    pts.sort_by(|a, b| a[2].partial_cmp(&b[2]).expect("finite"));
    let mut hv = 0.0;
    let mut i = 0;
    while i < pts.len() {
        let z = pts[i][2];
        // Slab from this z to the next distinct z (or the reference).
        let mut j = i;
        while j < pts.len() && pts[j][2] == z {
            j += 1;
        }
        let z_next = if j < pts.len() { pts[j][2] } else { r[2] };
        let slice: Vec<Vec<f64>> = pts[..j].iter().map(|p| vec![p[0], p[1]]).collect();
        hv += hv2(&slice, &r[..2]) * (z_next - z);
        i = j;
    }
    hv
}
