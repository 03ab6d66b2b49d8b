//! Design generation and labeling: Latin hypercube sampling over the length
//! box, feasibility filtering, and assembly of the labeled dataset.

use crate::dynamics::{required_torques, MassModel, TorqueLabel};
use crate::geometry::{
    eta_for_task, is_feasible_over_range, AngleGrid, GeomError, Linkage, OperatingRange,
    ScaleSearch, TaskRegion,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid bounds for {name}: [{lo}, {hi}]")]
    InvalidBounds { name: &'static str, lo: f64, hi: f64 },
    #[error("csv column {0} missing or malformed")]
    MalformedCsv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const VARIABLE_NAMES: [&str; 6] = ["l1", "l2", "l3", "l4", "eex", "eey"];

/// Sampling box, one `[min, max]` per length variable in the order
/// l1, l2, l3, l4, ee_x, ee_y. The frame link is the unit: its bounds are
/// degenerate at 1.
pub const DEFAULT_BOUNDS: [(f64, f64); 6] =
    [(1.0, 1.0), (0.18, 0.6), (0.8, 1.3), (0.3, 0.6), (1.0, 1.4), (0.2, 0.7)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub bounds: [(f64, f64); 6],
    pub seed: u64,
    pub range: OperatingRange,
    pub grid: AngleGrid,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_samples: 2000,
            bounds: DEFAULT_BOUNDS,
            seed: 42,
            range: OperatingRange::default(),
            grid: AngleGrid::default(),
        }
    }
}

/// Latin hypercube sample of unit designs: per variable, one point in each of
/// `n_samples` equal strata, uniformly jittered inside its stratum, strata
/// shuffled independently per variable.
pub fn lhs_sample(cfg: &SamplerConfig) -> Result<Vec<Linkage>, SamplerError> {
    if cfg.n_samples == 0 {
        return Err(SamplerError::InvalidBounds { name: "n_samples", lo: 0.0, hi: 0.0 });
    }
    for (k, &(lo, hi)) in cfg.bounds.iter().enumerate() {
        let degenerate_ok = k == 0; // the frame link may be pinned
        if !(lo.is_finite() && hi.is_finite()) || lo > hi || (!degenerate_ok && lo >= hi) {
            return Err(SamplerError::InvalidBounds { name: VARIABLE_NAMES[k], lo, hi });
        }
    }
    let n = cfg.n_samples;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(6);
    for &(lo, hi) in &cfg.bounds {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let col = strata
            .into_iter()
            .map(|s| {
                let u: f64 = rng.gen();
                lo + (s as f64 + u) / n as f64 * (hi - lo)
            })
            .collect();
        columns.push(col);
    }
    Ok((0..n)
        .map(|i| {
            Linkage::from_lengths([
                columns[0][i],
                columns[1][i],
                columns[2][i],
                columns[3][i],
                columns[4][i],
                columns[5][i],
            ])
        })
        .collect())
}

/// Keeps the designs that pass the crank-rocker condition and close over the
/// full operating grid. Order is preserved.
pub fn filter_feasible(designs: &[Linkage], range: &OperatingRange, grid: AngleGrid) -> Vec<Linkage> {
    let flags: Vec<bool> = designs
        .par_iter()
        .map(|d| d.is_crank_rocker() && is_feasible_over_range(d, range, grid))
        .collect();
    designs
        .iter()
        .zip(flags)
        .filter_map(|(d, keep)| keep.then_some(*d))
        .collect()
}

/// One fully labeled design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledDesign {
    /// Index of the design in the feasible input list.
    pub idx: usize,
    pub unit: Linkage,
    /// Meters per unit length.
    pub scale_m: f64,
    /// Scaled workspace area, m^2.
    pub ws_area_m2: f64,
    /// Workspace-usage ratio.
    pub eta: f64,
    /// N m, maxima over the operating grid.
    pub tau1_nm: f64,
    pub tau2_nm: f64,
}

impl LabeledDesign {
    pub fn absolute(&self) -> Linkage {
        self.unit.scaled(self.scale_m)
    }

    /// Surrogate features: the six absolute lengths in meters.
    pub fn features(&self) -> [f64; 6] {
        self.absolute().lengths()
    }

    pub fn targets(&self) -> [f64; 3] {
        [self.eta, self.tau1_nm, self.tau2_nm]
    }
}

/// Labeling knobs shared by the whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub range: OperatingRange,
    pub grid: AngleGrid,
    pub raster_cells: usize,
    pub safety: f64,
    pub search: ScaleSearch,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            range: OperatingRange::default(),
            grid: AngleGrid::default(),
            raster_cells: 256,
            safety: 1.05,
            search: ScaleSearch::default(),
        }
    }
}

/// Where dropped designs went.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DropCounts {
    pub uncoverable: usize,
    pub empty_workspace: usize,
    pub torque_failure: usize,
}

/// Run record: everything needed to regenerate the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: SamplerConfig,
    pub label: LabelConfig,
    pub task: TaskRegion,
    pub mass: MassModel,
    pub n_sampled: usize,
    pub n_feasible: usize,
    pub n_labeled: usize,
    pub drops: DropCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDataset {
    pub rows: Vec<LabeledDesign>,
    pub provenance: Provenance,
}

/// Labels every feasible design against the task and keeps the successes.
/// Uncoverable tasks and torque failures are dropped and counted, never
/// imputed. Row order follows the input order.
pub fn build_dataset(
    designs: &[Linkage],
    task: &TaskRegion,
    mass: &MassModel,
    cfg: &LabelConfig,
    provenance_seed: &SamplerConfig,
) -> DesignDataset {
    #[derive(Clone, Copy)]
    enum Outcome {
        Row(LabeledDesign),
        Uncoverable,
        EmptyWorkspace,
        TorqueFailure,
    }

    let outcomes: Vec<Outcome> = designs
        .par_iter()
        .enumerate()
        .map(|(idx, unit)| {
            let label = match eta_for_task(
                unit,
                task,
                &cfg.range,
                cfg.grid,
                cfg.raster_cells,
                cfg.safety,
                &cfg.search,
            ) {
                Ok(l) => l,
                Err(GeomError::EmptyWorkspace) => return Outcome::EmptyWorkspace,
                Err(_) => return Outcome::Uncoverable,
            };
            let abs = unit.scaled(label.scale);
            let TorqueLabel { tau1, tau2 } =
                match required_torques(&abs, mass, &cfg.range, cfg.grid) {
                    Ok(t) if t.tau1.is_finite() && t.tau2.is_finite() => t,
                    _ => return Outcome::TorqueFailure,
                };
            Outcome::Row(LabeledDesign {
                idx,
                unit: *unit,
                scale_m: label.scale,
                ws_area_m2: label.workspace_area,
                eta: label.eta,
                tau1_nm: tau1,
                tau2_nm: tau2,
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut drops = DropCounts::default();
    for o in outcomes {
        match o {
            Outcome::Row(r) => rows.push(r),
            Outcome::Uncoverable => drops.uncoverable += 1,
            Outcome::EmptyWorkspace => drops.empty_workspace += 1,
            Outcome::TorqueFailure => drops.torque_failure += 1,
        }
    }
    let provenance = Provenance {
        sampler: *provenance_seed,
        label: *cfg,
        task: *task,
        mass: *mass,
        n_sampled: provenance_seed.n_samples,
        n_feasible: designs.len(),
        n_labeled: rows.len(),
        drops,
    };
    DesignDataset { rows, provenance }
}

pub const CSV_HEADER: [&str; 18] = [
    "idx", "l1", "l2", "l3", "l4", "eex", "eey", "scale_m", "l1_abs", "l2_abs", "l3_abs",
    "l4_abs", "eex_abs", "eey_abs", "ws_area_m2", "eta", "tau1_nm", "tau2_nm",
];

/// Writes rows in the dataset exchange schema. Floats use the shortest
/// round-trip decimal form, so re-reading reproduces them bit for bit.
pub fn write_csv<P: AsRef<Path>>(path: P, rows: &[LabeledDesign]) -> Result<(), SamplerError> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let u = r.unit.lengths();
        let a = r.absolute().lengths();
        let mut rec = Vec::with_capacity(18);
        rec.push(r.idx.to_string());
        rec.extend(u.iter().map(|v| v.to_string()));
        rec.push(r.scale_m.to_string());
        rec.extend(a.iter().map(|v| v.to_string()));
        rec.push(r.ws_area_m2.to_string());
        rec.push(r.eta.to_string());
        rec.push(r.tau1_nm.to_string());
        rec.push(r.tau2_nm.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Vec<LabeledDesign>, SamplerError> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, SamplerError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SamplerError::MalformedCsv(name.to_string()))
    };
    let idx_col = col("idx")?;
    let unit_cols: Vec<usize> =
        ["l1", "l2", "l3", "l4", "eex", "eey"].iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let scale_col = col("scale_m")?;
    let area_col = col("ws_area_m2")?;
    let eta_col = col("eta")?;
    let tau1_col = col("tau1_nm")?;
    let tau2_col = col("tau2_nm")?;

    let parse = |rec: &csv::StringRecord, c: usize, name: &str| -> Result<f64, SamplerError> {
        rec.get(c)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| SamplerError::MalformedCsv(name.to_string()))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut u = [0.0; 6];
        for (k, &c) in unit_cols.iter().enumerate() {
            u[k] = parse(&rec, c, VARIABLE_NAMES[k])?;
        }
        rows.push(LabeledDesign {
            idx: rec
                .get(idx_col)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SamplerError::MalformedCsv("idx".into()))?,
            unit: Linkage::from_lengths(u),
            scale_m: parse(&rec, scale_col, "scale_m")?,
            ws_area_m2: parse(&rec, area_col, "ws_area_m2")?,
            eta: parse(&rec, eta_col, "eta")?,
            tau1_nm: parse(&rec, tau1_col, "tau1_nm")?,
            tau2_nm: parse(&rec, tau2_col, "tau2_nm")?,
        });
    }
    Ok(rows)
}
