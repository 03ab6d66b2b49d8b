//! Design-rule extraction: Sobol sensitivity over the surrogate, decision
//! trees and correlations near the Pareto set, and finite-difference
//! derivative statistics of the true kinematic label.

mod sobol;
mod stats;
mod tree;

pub use sobol::{
    sobol_indices, sobol_indices_fn, ObjectiveSobol, SobolIndex, SobolReport, SobolSequence,
    MAX_SOBOL_DIM,
};
pub use stats::{
    average_ranks, correlation_p_value, correlations, pearson, spearman, CorrelationReport,
    PairStat,
};
pub use tree::{fit_tree, Split, TreeNode, DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF};

use crate::geometry::{eta_for_task, is_feasible_over_range, Linkage, TaskRegion};
use crate::moo::{Individual, ParetoArchive};
use crate::sampler::{LabelConfig, VARIABLE_NAMES};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("need at least {need} samples, have {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("archive history holds {have} generations, need at least 3")]
    InsufficientHistory { have: usize },
    #[error("zero variance in a correlation input")]
    ZeroVariance,
}

/// Designs mined around the Pareto set: a seeded draw from the archive plus
/// one from the populations of the last three generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSet {
    pub pareto: Vec<Individual>,
    pub history: Vec<Individual>,
    pub seed: u64,
}

impl NeighborhoodSet {
    pub fn len(&self) -> usize {
        self.pareto.len() + self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pareto.is_empty() && self.history.is_empty()
    }

    fn rows(&self) -> impl Iterator<Item = &Individual> {
        self.pareto.iter().chain(self.history.iter())
    }

    pub fn x_matrix(&self) -> Vec<Vec<f64>> {
        self.rows().map(|i| i.x.clone()).collect()
    }

    pub fn y_matrix(&self) -> Vec<Vec<f64>> {
        self.rows().map(|i| i.objectives.clone()).collect()
    }
}

fn seeded_take(pool: &[Individual], n: usize, rng: &mut ChaCha20Rng) -> Vec<Individual> {
    if pool.len() <= n {
        return pool.to_vec();
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

pub fn extract_neighborhood(
    archive: &ParetoArchive,
    n_pareto: usize,
    n_history: usize,
    seed: u64,
) -> Result<NeighborhoodSet, MiningError> {
    if archive.history.len() < 3 {
        return Err(MiningError::InsufficientHistory { have: archive.history.len() });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let pareto = seeded_take(&archive.pareto, n_pareto, &mut rng);
    let recent: Vec<Individual> =
        archive.history[archive.history.len() - 3..].iter().flatten().cloned().collect();
    let history = seeded_take(&recent, n_history, &mut rng);
    Ok(NeighborhoodSet { pareto, history, seed })
}

/// serde_json writes NaN as null; read null back as NaN so reports with
/// all-skipped variables survive a JSON round trip.
pub(crate) fn de_null_nan<'de, D>(d: D) -> Result<f64, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableDerivative {
    pub n: usize,
    /// Perturbations that broke feasibility or coverage.
    pub skipped: usize,
    #[serde(deserialize_with = "de_null_nan")]
    pub mean: f64,
    #[serde(deserialize_with = "de_null_nan")]
    pub mean_abs: f64,
    #[serde(deserialize_with = "de_null_nan")]
    pub q1: f64,
    #[serde(deserialize_with = "de_null_nan")]
    pub median: f64,
    #[serde(deserialize_with = "de_null_nan")]
    pub q3: f64,
    /// Tukey whiskers: extreme samples within 1.5 IQR of the quartiles.
    #[serde(deserialize_with = "de_null_nan")]
    pub whisker_low: f64,
    #[serde(deserialize_with = "de_null_nan")]
    pub whisker_high: f64,
    #[serde(deserialize_with = "de_null_nan")]
    pub min: f64,
    #[serde(deserialize_with = "de_null_nan")]
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub h: f64,
    pub variable_names: Vec<String>,
    pub per_variable: Vec<VariableDerivative>,
}

impl DerivativeReport {
    /// Variable indices sorted by descending mean absolute derivative.
    /// Variables with no surviving samples (NaN summary) sort last.
    pub fn ranking(&self) -> Vec<usize> {
        let key = |i: usize| {
            let v = self.per_variable[i].mean_abs;
            if v.is_nan() {
                f64::MIN
            } else {
                v
            }
        };
        let mut idx: Vec<usize> = (0..self.per_variable.len()).collect();
        idx.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).expect("keys are ordered"));
        idx
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variable,n,skipped,mean,mean_abs,q1,median,q3,whisker_low,whisker_high,min,max\n",
        );
        for (name, v) in self.variable_names.iter().zip(&self.per_variable) {
            out.push_str(&format!(
                "{name},{},{},{},{},{},{},{},{},{},{},{}\n",
                v.n, v.skipped, v.mean, v.mean_abs, v.q1, v.median, v.q3, v.whisker_low,
                v.whisker_high, v.min, v.max
            ));
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(mut vals: Vec<f64>, skipped: usize) -> VariableDerivative {
    if vals.is_empty() {
        return VariableDerivative {
            n: 0,
            skipped,
            mean: f64::NAN,
            mean_abs: f64::NAN,
            q1: f64::NAN,
            median: f64::NAN,
            q3: f64::NAN,
            whisker_low: f64::NAN,
            whisker_high: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
        };
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite derivative"));
    let n = vals.len();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let mean_abs = vals.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let q1 = quantile(&vals, 0.25);
    let median = quantile(&vals, 0.5);
    let q3 = quantile(&vals, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_low = *vals.iter().find(|v| **v >= lo_fence).unwrap();
    let whisker_high = *vals.iter().rev().find(|v| **v <= hi_fence).unwrap();
    VariableDerivative {
        n,
        skipped,
        mean,
        mean_abs,
        q1,
        median,
        q3,
        whisker_low,
        whisker_high,
        min: vals[0],
        max: vals[n - 1],
    }
}

fn perturbed(d: &Linkage, var: usize, delta: f64) -> Linkage {
    let mut out = *d;
    match var {
        0 => out.l1 += delta,
        1 => out.l2 += delta,
        2 => out.l3 += delta,
        3 => out.l4 += delta,
        4 => out.ee_x += delta,
        _ => out.ee_y += delta,
    }
    out
}

fn eta_of(d: &Linkage, task: &TaskRegion, cfg: &LabelConfig) -> Option<f64> {
    if !(d.is_crank_rocker() && is_feasible_over_range(d, &cfg.range, cfg.grid)) {
        return None;
    }
    eta_for_task(d, task, &cfg.range, cfg.grid, cfg.raster_cells, cfg.safety, &cfg.search)
        .ok()
        .map(|l| l.eta)
}

/// Central finite differences of the true kinematic usage ratio with respect
/// to each unit design variable, summarized per variable over the designs.
/// Perturbations that do not close, or whose workspace cannot cover the task,
/// are skipped and counted.
pub fn derivative_stats(
    designs: &[Linkage],
    task: &TaskRegion,
    cfg: &LabelConfig,
    h: f64,
) -> DerivativeReport {
    assert!(h > 0.0, "step must be positive");
    let per_design: Vec<[Option<f64>; 6]> = designs
        .par_iter()
        .map(|d| {
            let mut row = [None; 6];
            for (var, slot) in row.iter_mut().enumerate() {
                let plus = eta_of(&perturbed(d, var, h), task, cfg);
                let minus = eta_of(&perturbed(d, var, -h), task, cfg);
                if let (Some(p), Some(m)) = (plus, minus) {
                    *slot = Some((p - m) / (2.0 * h));
                }
            }
            row
        })
        .collect();
    let per_variable = (0..6)
        .map(|var| {
            let vals: Vec<f64> = per_design.iter().filter_map(|r| r[var]).collect();
            let skipped = designs.len() - vals.len();
            summarize(vals, skipped)
        })
        .collect();
    DerivativeReport {
        h,
        variable_names: VARIABLE_NAMES.iter().map(|s| s.to_string()).collect(),
        per_variable,
    }
}
