//! The six pipeline stages. Each one reads its inputs from the run
//! directory (verifying them against the manifest), computes, writes its
//! outputs, and records them back with content hashes. All heavy loops are
//! order-preserving, so output bytes do not depend on the thread count.

use crate::config::PipelineConfig;
use crate::manifest::RunManifest;
use crate::CliError;
use mechsyn::dynamics::required_torques;
use mechsyn::geometry::{eta_for_task, GeomError, Linkage, TaskRegion};
use mechsyn::mining::{
    correlations, derivative_stats, extract_neighborhood, fit_tree, sobol_indices,
    CorrelationReport, DerivativeReport, MiningError, NeighborhoodSet,
};
use mechsyn::moo::{nsga2, objectives_to_targets, DesignProblem, MooError, ParetoArchive};
use mechsyn::sampler::{
    filter_feasible, lhs_sample, read_csv, write_csv, LabeledDesign, SamplerError, VARIABLE_NAMES,
};
use mechsyn::surrogate::{evaluate, fit, split, RegressionMetrics, SurrogateError, SurrogateModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub const GENERATED_CSV: &str = "generated.csv";
pub const LABELED_CSV: &str = "labeled.csv";
pub const MODEL_JSON: &str = "model.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const ARCHIVE_JSON: &str = "archive.json";
pub const ARCHIVE_CSV: &str = "archive.csv";
pub const SOBOL_JSON: &str = "sobol.json";
pub const SOBOL_CSV: &str = "sobol.csv";
pub const CORRELATIONS_JSON: &str = "correlations.json";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const DERIVATIVES_JSON: &str = "derivatives.json";
pub const DERIVATIVES_CSV: &str = "derivatives.csv";
pub const NEIGHBORHOOD_CSV: &str = "neighborhood.csv";
pub const REPORT_MD: &str = "report.md";

pub const OBJECTIVE_NAMES: [&str; 3] = ["eta", "tau1_nm", "tau2_nm"];

pub fn tree_file(objective: &str, ext: &str) -> String {
    format!("tree_{objective}.{ext}")
}

/// Everything a stage needs to know about where it runs.
pub struct Run<'a> {
    pub cfg: &'a PipelineConfig,
    /// Raw config text; its hash ties the manifest to the configuration.
    pub config_text: &'a str,
    pub out_dir: &'a Path,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a PipelineConfig, config_text: &'a str, out_dir: &'a Path) -> Self {
        Run { cfg, config_text, out_dir }
    }

    fn open(&self) -> Result<RunManifest, CliError> {
        std::fs::create_dir_all(self.out_dir).map_err(|e| {
            CliError::Data(format!("cannot create {}: {e}", self.out_dir.display()))
        })?;
        RunManifest::load_or_new(self.out_dir, self.config_text)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        std::fs::write(self.out_dir.join(name), text)
            .map_err(|e| CliError::Data(format!("cannot write {name}: {e}")))
    }

    fn read(&self, name: &str) -> Result<String, CliError> {
        std::fs::read_to_string(self.out_dir.join(name))
            .map_err(|e| CliError::Data(format!("cannot read {name}: {e}")))
    }
}

fn sampler_err(e: SamplerError) -> CliError {
    match e {
        SamplerError::InvalidBounds { .. } => CliError::Config(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

// ---------------------------------------------------------------- generate

/// A design that passed filtering and task covering, before torque labeling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenRow {
    pub idx: usize,
    pub unit: Linkage,
    pub scale_m: f64,
    pub ws_area_m2: f64,
    pub eta: f64,
}

const GEN_HEADER: [&str; 16] = [
    "idx", "l1", "l2", "l3", "l4", "eex", "eey", "scale_m", "l1_abs", "l2_abs", "l3_abs",
    "l4_abs", "eex_abs", "eey_abs", "ws_area_m2", "eta",
];

pub fn write_generated(path: &Path, rows: &[GenRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| CliError::Data(format!("write {}: {e}", path.display()));
    w.write_record(GEN_HEADER).map_err(io_err)?;
    for r in rows {
        let u = r.unit.lengths();
        let a = r.unit.scaled(r.scale_m).lengths();
        let mut rec = Vec::with_capacity(16);
        rec.push(r.idx.to_string());
        rec.extend(u.iter().map(|v| v.to_string()));
        rec.push(r.scale_m.to_string());
        rec.extend(a.iter().map(|v| v.to_string()));
        rec.push(r.ws_area_m2.to_string());
        rec.push(r.eta.to_string());
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("flush {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_generated(path: &Path) -> Result<Vec<GenRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("read {}: {e}", path.display())))?
        .clone();
    let missing: Vec<&str> =
        GEN_HEADER.iter().filter(|n| !header.iter().any(|h| h == **n)).copied().collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "{} is missing columns: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let col = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let cols: Vec<usize> = GEN_HEADER.iter().map(|n| col(n)).collect();

    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("read {}: {e}", path.display())))?;
        let field = |slot: usize| -> Result<f64, CliError> {
            rec.get(cols[slot]).and_then(|s| s.parse().ok()).ok_or_else(|| {
                CliError::Data(format!(
                    "{} row {}: bad value in column {}",
                    path.display(),
                    line + 2,
                    GEN_HEADER[slot]
                ))
            })
        };
        let idx = rec.get(cols[0]).and_then(|s| s.parse().ok()).ok_or_else(|| {
            CliError::Data(format!("{} row {}: bad idx", path.display(), line + 2))
        })?;
        let mut u = [0.0; 6];
        for (k, slot) in u.iter_mut().zip(1..7) {
            *k = field(slot)?;
        }
        rows.push(GenRow {
            idx,
            unit: Linkage::from_lengths(u),
            scale_m: field(7)?,
            ws_area_m2: field(14)?,
            eta: field(15)?,
        });
    }
    Ok(rows)
}

/// Samples the unit design space, keeps crank-rocker designs that close over
/// the whole operating range, and labels each survivor with its minimal
/// covering scale and workspace-usage ratio.
pub fn cmd_generate(run: &Run, seed: Option<u64>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut manifest = run.open()?;
    let mut scfg = run.cfg.sampler_config();
    if let Some(s) = seed {
        scfg.seed = s;
    }
    let task = run.cfg.task.region()?;
    let lcfg = run.cfg.label_config();

    let designs = lhs_sample(&scfg).map_err(sampler_err)?;
    let feasible = filter_feasible(&designs, &scfg.range, scfg.grid);
    if feasible.is_empty() {
        return Err(CliError::Data(
            "no sampled design passed the crank-rocker and closure filters; widen the bounds"
                .into(),
        ));
    }

    let labels: Vec<Option<GenRow>> = feasible
        .par_iter()
        .enumerate()
        .map(|(idx, d)| {
            eta_for_task(d, &task, &lcfg.range, lcfg.grid, lcfg.raster_cells, lcfg.safety, &lcfg.search)
                .ok()
                .map(|k| GenRow {
                    idx,
                    unit: *d,
                    scale_m: k.scale,
                    ws_area_m2: k.workspace_area,
                    eta: k.eta,
                })
        })
        .collect();
    let rows: Vec<GenRow> = labels.into_iter().flatten().collect();

    let covering_rate = rows.len() as f64 / feasible.len() as f64;
    if covering_rate < 0.01 {
        return Err(CliError::Data(format!(
            "aborting: only {} of {} feasible designs ({:.2}%) can cover the task; \
             the task region is out of reach for this design space",
            rows.len(),
            feasible.len(),
            covering_rate * 100.0
        )));
    }

    write_generated(&run.out_dir.join(GENERATED_CSV), &rows)?;

    let acceptance = rows.len() as f64 / designs.len() as f64;
    let mut stats = BTreeMap::new();
    stats.insert("n_sampled".into(), designs.len() as f64);
    stats.insert("n_feasible".into(), feasible.len() as f64);
    stats.insert("n_coverable".into(), rows.len() as f64);
    stats.insert("acceptance_rate".into(), acceptance);
    stats.insert("covering_rate".into(), covering_rate);
    let dt = t0.elapsed().as_secs_f64();
    manifest.record_stage("generate", scfg.seed, dt, run.out_dir, &[GENERATED_CSV], stats)?;
    manifest.save(run.out_dir)?;
    println!(
        "generate: {} sampled -> {} feasible -> {} coverable ({:.2}% acceptance) in {:.1}s",
        designs.len(),
        feasible.len(),
        rows.len(),
        acceptance * 100.0,
        dt
    );
    Ok(())
}

// ------------------------------------------------------------------- label

/// Appends the torque labels. Designs whose torque evaluation fails are
/// dropped and counted, never imputed.
pub fn cmd_label(run: &Run, seed: Option<u64>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut manifest = run.open()?;
    manifest.require_stage("generate", run.out_dir)?;
    let gen_rows = read_generated(&run.out_dir.join(GENERATED_CSV))?;
    if gen_rows.is_empty() {
        return Err(CliError::Data("generated.csv has no rows".into()));
    }

    let mass = run.cfg.mass.model();
    let lcfg = run.cfg.label_config();
    let labeled: Vec<Option<LabeledDesign>> = gen_rows
        .par_iter()
        .map(|g| {
            let abs = g.unit.scaled(g.scale_m);
            match required_torques(&abs, &mass, &lcfg.range, lcfg.grid) {
                Ok(t) if t.tau1.is_finite() && t.tau2.is_finite() => Some(LabeledDesign {
                    idx: g.idx,
                    unit: g.unit,
                    scale_m: g.scale_m,
                    ws_area_m2: g.ws_area_m2,
                    eta: g.eta,
                    tau1_nm: t.tau1,
                    tau2_nm: t.tau2,
                }),
                _ => None,
            }
        })
        .collect();
    let rows: Vec<LabeledDesign> = labeled.into_iter().flatten().collect();
    let dropped = gen_rows.len() - rows.len();
    if rows.is_empty() {
        return Err(CliError::Data("every design failed torque labeling".into()));
    }

    write_csv(run.out_dir.join(LABELED_CSV), &rows).map_err(sampler_err)?;

    let mut stats = BTreeMap::new();
    stats.insert("n_input".into(), gen_rows.len() as f64);
    stats.insert("n_labeled".into(), rows.len() as f64);
    stats.insert("n_dropped_torque".into(), dropped as f64);
    let dt = t0.elapsed().as_secs_f64();
    manifest.record_stage("label", seed.unwrap_or(0), dt, run.out_dir, &[LABELED_CSV], stats)?;
    manifest.save(run.out_dir)?;
    println!(
        "label: {} designs -> {} labeled ({} torque drops) in {:.1}s",
        gen_rows.len(),
        rows.len(),
        dropped,
        dt
    );
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub n_train: usize,
    pub n_test: usize,
    pub seed_split: u64,
    pub seed_training: u64,
    pub epochs_run: usize,
    pub train: RegressionMetrics,
    pub test: RegressionMetrics,
}

fn surrogate_err(e: SurrogateError) -> CliError {
    match e {
        SurrogateError::TooFewRows(_) => CliError::Data(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

/// Fits the surrogate on a held-out split of the labeled rows.
pub fn cmd_train(run: &Run, seed: Option<u64>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut manifest = run.open()?;
    manifest.require_stage("label", run.out_dir)?;
    let rows = read_csv(run.out_dir.join(LABELED_CSV)).map_err(sampler_err)?;

    let seed_split = run.cfg.seeds.split;
    let seed_training = seed.unwrap_or(run.cfg.seeds.training);
    let (train_rows, test_rows) =
        split(&rows, run.cfg.mlp.train_fraction, seed_split).map_err(surrogate_err)?;
    let model = fit(&train_rows, &run.cfg.mlp.hyperparams(), seed_training).map_err(surrogate_err)?;

    let metrics = TrainMetrics {
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        seed_split,
        seed_training,
        epochs_run: model.meta.epochs_run,
        train: evaluate(&model, &train_rows),
        test: evaluate(&model, &test_rows),
    };
    run.write(MODEL_JSON, &model.to_json())?;
    run.write(
        METRICS_JSON,
        &serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )?;

    let mut stats = BTreeMap::new();
    stats.insert("n_train".into(), metrics.n_train as f64);
    stats.insert("n_test".into(), metrics.n_test as f64);
    stats.insert("r2_test_min".into(), metrics.test.min_r2());
    stats.insert("rmse_test".into(), metrics.test.aggregate.rmse);
    let dt = t0.elapsed().as_secs_f64();
    manifest.record_stage(
        "train",
        seed_training,
        dt,
        run.out_dir,
        &[MODEL_JSON, METRICS_JSON],
        stats,
    )?;
    manifest.save(run.out_dir)?;
    println!(
        "train: {}/{} rows, test R2 min {:.4} ({} epochs) in {:.1}s",
        metrics.n_train,
        metrics.n_test,
        metrics.test.min_r2(),
        metrics.epochs_run,
        dt
    );
    Ok(())
}

// ---------------------------------------------------------------- optimize

/// Truth re-evaluation of one archived design through the labeling pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRow {
    /// ok | uncoverable | kinematics_failed | torque_failed
    pub status: String,
    pub scale_true_m: f64,
    pub ws_area_true_m2: f64,
    pub eta_true: f64,
    pub tau1_true_nm: f64,
    pub tau2_true_nm: f64,
    pub rel_gap: [f64; 3],
}

fn reevaluate(
    x: &[f64],
    preds: &[f64; 3],
    task: &TaskRegion,
    mass: &mechsyn::dynamics::MassModel,
    lcfg: &mechsyn::sampler::LabelConfig,
) -> TruthRow {
    let nan = TruthRow {
        status: String::new(),
        scale_true_m: f64::NAN,
        ws_area_true_m2: f64::NAN,
        eta_true: f64::NAN,
        tau1_true_nm: f64::NAN,
        tau2_true_nm: f64::NAN,
        rel_gap: [f64::NAN; 3],
    };
    let unit = Linkage::from_lengths([
        1.0,
        x[1] / x[0],
        x[2] / x[0],
        x[3] / x[0],
        x[4] / x[0],
        x[5] / x[0],
    ]);
    let label = match eta_for_task(
        &unit,
        task,
        &lcfg.range,
        lcfg.grid,
        lcfg.raster_cells,
        lcfg.safety,
        &lcfg.search,
    ) {
        Ok(l) => l,
        Err(GeomError::Uncoverable { .. }) => {
            return TruthRow { status: "uncoverable".into(), ..nan }
        }
        Err(_) => return TruthRow { status: "kinematics_failed".into(), ..nan },
    };
    let abs = unit.scaled(label.scale);
    let t = match required_torques(&abs, mass, &lcfg.range, lcfg.grid) {
        Ok(t) if t.tau1.is_finite() && t.tau2.is_finite() => t,
        _ => return TruthRow { status: "torque_failed".into(), ..nan },
    };
    let truth = [label.eta, t.tau1, t.tau2];
    let mut rel_gap = [0.0; 3];
    for k in 0..3 {
        rel_gap[k] = (preds[k] - truth[k]).abs() / truth[k].abs().max(1e-12);
    }
    TruthRow {
        status: "ok".into(),
        scale_true_m: label.scale,
        ws_area_true_m2: label.workspace_area,
        eta_true: truth[0],
        tau1_true_nm: truth[1],
        tau2_true_nm: truth[2],
        rel_gap,
    }
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn median(sorted: &mut Vec<f64>) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite gaps"));
    let n = sorted.len();
    Some(if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) })
}

/// Runs the constrained NSGA-II search on the surrogate, then re-evaluates
/// every archived design through the reference labeling pipeline and records
/// the prediction gaps.
pub fn cmd_optimize(run: &Run, seed: Option<u64>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut manifest = run.open()?;
    manifest.require_stage("label", run.out_dir)?;
    manifest.require_stage("train", run.out_dir)?;
    let rows = read_csv(run.out_dir.join(LABELED_CSV)).map_err(sampler_err)?;
    let model = SurrogateModel::from_json(&run.read(MODEL_JSON)?)
        .map_err(|e| CliError::Data(format!("malformed model.json: {e}")))?;

    let problem = DesignProblem::from_dataset(model, &rows, run.cfg.nsga.z_band)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let nsga_seed = seed.unwrap_or(run.cfg.seeds.nsga);
    let archive = nsga2(&problem, &run.cfg.nsga.nsga(), nsga_seed).map_err(|e| match e {
        MooError::NoFeasibleIndividual { .. } => CliError::Numerical(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;

    run.write(ARCHIVE_JSON, &serde_json::to_string(&archive).expect("archive serializes"))?;

    let task = run.cfg.task.region()?;
    let mass = run.cfg.mass.model();
    let lcfg = run.cfg.label_config();
    let truths: Vec<(usize, [f64; 3], TruthRow)> = archive
        .pareto
        .par_iter()
        .enumerate()
        .map(|(i, ind)| {
            let preds = objectives_to_targets(&ind.objectives);
            (i, preds, reevaluate(&ind.x, &preds, &task, &mass, &lcfg))
        })
        .collect();

    let mut w = csv::Writer::from_path(run.out_dir.join(ARCHIVE_CSV))
        .map_err(|e| CliError::Data(format!("cannot write {ARCHIVE_CSV}: {e}")))?;
    let io_err = |e: csv::Error| CliError::Data(format!("write {ARCHIVE_CSV}: {e}"));
    w.write_record([
        "idx", "l1_abs", "l2_abs", "l3_abs", "l4_abs", "eex_abs", "eey_abs", "eta_pred",
        "tau1_pred_nm", "tau2_pred_nm", "violation", "status", "scale_true_m",
        "ws_area_true_m2", "eta_true", "tau1_true_nm", "tau2_true_nm", "rel_gap_eta",
        "rel_gap_tau1", "rel_gap_tau2",
    ])
    .map_err(io_err)?;
    for (i, preds, t) in &truths {
        let ind = &archive.pareto[*i];
        let mut rec = Vec::with_capacity(20);
        rec.push(i.to_string());
        rec.extend(ind.x.iter().map(|v| v.to_string()));
        rec.extend(preds.iter().map(|v| v.to_string()));
        rec.push(ind.violation.to_string());
        rec.push(t.status.clone());
        rec.push(fmt_opt(t.scale_true_m));
        rec.push(fmt_opt(t.ws_area_true_m2));
        rec.push(fmt_opt(t.eta_true));
        rec.push(fmt_opt(t.tau1_true_nm));
        rec.push(fmt_opt(t.tau2_true_nm));
        rec.extend(t.rel_gap.iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("flush {ARCHIVE_CSV}: {e}")))?;

    let n_ok = truths.iter().filter(|(_, _, t)| t.status == "ok").count();
    let mut stats = BTreeMap::new();
    stats.insert("pareto_size".into(), archive.pareto.len() as f64);
    stats.insert("generations".into(), (archive.history.len().max(1) - 1) as f64);
    stats.insert("n_truth_ok".into(), n_ok as f64);
    for (k, name) in OBJECTIVE_NAMES.iter().enumerate() {
        let mut gaps: Vec<f64> = truths
            .iter()
            .filter(|(_, _, t)| t.status == "ok")
            .map(|(_, _, t)| t.rel_gap[k])
            .collect();
        if let Some(m) = median(&mut gaps) {
            stats.insert(format!("median_rel_gap_{name}"), m);
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    manifest.record_stage(
        "optimize",
        nsga_seed,
        dt,
        run.out_dir,
        &[ARCHIVE_JSON, ARCHIVE_CSV],
        stats.clone(),
    )?;
    manifest.save(run.out_dir)?;
    let med = stats.get("median_rel_gap_eta").copied().unwrap_or(f64::NAN);
    println!(
        "optimize: pareto {} ({} truth-ok, median eta gap {:.3}) in {:.1}s",
        archive.pareto.len(),
        n_ok,
        med,
        dt
    );
    Ok(())
}

// -------------------------------------------------------------------- mine

fn mining_err(e: MiningError) -> CliError {
    CliError::Data(e.to_string())
}

/// Rule mining: Sobol sensitivity of the surrogate, decision trees and
/// correlations on the Pareto neighborhood, and finite-difference derivative
/// statistics of the true usage ratio.
pub fn cmd_mine(run: &Run, seed: Option<u64>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut manifest = run.open()?;
    manifest.require_stage("label", run.out_dir)?;
    manifest.require_stage("train", run.out_dir)?;
    manifest.require_stage("optimize", run.out_dir)?;
    let rows = read_csv(run.out_dir.join(LABELED_CSV)).map_err(sampler_err)?;
    let model = SurrogateModel::from_json(&run.read(MODEL_JSON)?)
        .map_err(|e| CliError::Data(format!("malformed model.json: {e}")))?;
    let archive: ParetoArchive = serde_json::from_str(&run.read(ARCHIVE_JSON)?)
        .map_err(|e| CliError::Data(format!("malformed archive.json: {e}")))?;

    let mining_seed = seed.unwrap_or(run.cfg.seeds.mining);
    let mcfg = &run.cfg.mining;

    // Sobol over the dataset's bounding box, through the surrogate.
    let problem = DesignProblem::from_dataset(model.clone(), &rows, run.cfg.nsga.z_band)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let sobol = sobol_indices(&model, &problem.bounds, mcfg.sobol_base_n, mining_seed);
    run.write(SOBOL_JSON, &serde_json::to_string_pretty(&sobol).expect("sobol serializes"))?;
    run.write(SOBOL_CSV, &sobol.to_csv())?;

    // Pareto neighborhood: trees and correlations on natural-scale targets.
    let nb = extract_neighborhood(&archive, mcfg.n_pareto, mcfg.n_history, mining_seed)
        .map_err(mining_err)?;
    let x = nb.x_matrix();
    let y_nat: Vec<[f64; 3]> =
        nb.y_matrix().iter().map(|o| objectives_to_targets(o)).collect();

    let mut tree_files: Vec<String> = Vec::new();
    for (k, name) in OBJECTIVE_NAMES.iter().enumerate() {
        let yk: Vec<f64> = y_nat.iter().map(|t| t[k]).collect();
        let tree = fit_tree(&x, &yk, mcfg.tree_max_depth, mcfg.tree_min_leaf);
        run.write(
            &tree_file(name, "json"),
            &serde_json::to_string_pretty(&tree).expect("tree serializes"),
        )?;
        run.write(&tree_file(name, "txt"), &tree.to_text(&VARIABLE_NAMES))?;
        run.write(&tree_file(name, "dot"), &tree.to_dot(&VARIABLE_NAMES, name))?;
        for ext in ["json", "txt", "dot"] {
            tree_files.push(tree_file(name, ext));
        }
    }

    let y_cols: Vec<Vec<f64>> = y_nat.iter().map(|t| t.to_vec()).collect();
    let corr = correlations(&x, &VARIABLE_NAMES, &y_cols, &OBJECTIVE_NAMES, mcfg.alpha)
        .map_err(mining_err)?;
    run.write(
        CORRELATIONS_JSON,
        &serde_json::to_string_pretty(&corr).expect("correlations serialize"),
    )?;
    run.write(CORRELATIONS_CSV, &corr.to_csv())?;

    // Scatter backing data: neighborhood designs with the scale factor
    // (the absolute l1, since unit designs are l1-normalized).
    write_neighborhood(run, &nb, &y_nat)?;

    // Derivative statistics of the true usage ratio on a seeded sample of
    // labeled unit designs, with the finer labeling settings.
    let mut rng = ChaCha20Rng::seed_from_u64(mining_seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    order.truncate(mcfg.derivative_designs);
    order.sort_unstable();
    let units: Vec<Linkage> = order.iter().map(|&i| rows[i].unit).collect();
    let task = run.cfg.task.region()?;
    let deriv =
        derivative_stats(&units, &task, &run.cfg.derivative_label_config(), mcfg.derivative_h);
    run.write(
        DERIVATIVES_JSON,
        &serde_json::to_string_pretty(&deriv).expect("derivatives serialize"),
    )?;
    run.write(DERIVATIVES_CSV, &deriv.to_csv())?;

    let mut stats = BTreeMap::new();
    stats.insert("sobol_evaluations".into(), sobol.total_evaluations as f64);
    stats.insert("neighborhood_n".into(), nb.len() as f64);
    stats.insert("derivative_designs".into(), units.len() as f64);
    let mut files: Vec<&str> = vec![
        SOBOL_JSON,
        SOBOL_CSV,
        CORRELATIONS_JSON,
        CORRELATIONS_CSV,
        NEIGHBORHOOD_CSV,
        DERIVATIVES_JSON,
        DERIVATIVES_CSV,
    ];
    files.extend(tree_files.iter().map(|s| s.as_str()));
    let dt = t0.elapsed().as_secs_f64();
    manifest.record_stage("mine", mining_seed, dt, run.out_dir, &files, stats)?;
    manifest.save(run.out_dir)?;
    println!(
        "mine: sobol {} evals, neighborhood {}, derivatives on {} designs in {:.1}s",
        sobol.total_evaluations,
        nb.len(),
        units.len(),
        dt
    );
    Ok(())
}

fn write_neighborhood(
    run: &Run,
    nb: &NeighborhoodSet,
    y_nat: &[[f64; 3]],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(run.out_dir.join(NEIGHBORHOOD_CSV))
        .map_err(|e| CliError::Data(format!("cannot write {NEIGHBORHOOD_CSV}: {e}")))?;
    let io_err = |e: csv::Error| CliError::Data(format!("write {NEIGHBORHOOD_CSV}: {e}"));
    w.write_record([
        "source", "l1_abs", "l2_abs", "l3_abs", "l4_abs", "eex_abs", "eey_abs", "scale_m",
        "eta", "tau1_nm", "tau2_nm",
    ])
    .map_err(io_err)?;
    let sources = nb
        .pareto
        .iter()
        .map(|i| ("pareto", i))
        .chain(nb.history.iter().map(|i| ("history", i)));
    for ((source, ind), t) in sources.zip(y_nat) {
        let mut rec = Vec::with_capacity(11);
        rec.push(source.to_string());
        rec.extend(ind.x.iter().map(|v| v.to_string()));
        rec.push(ind.x[0].to_string());
        rec.extend(t.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("flush {NEIGHBORHOOD_CSV}: {e}")))?;
    Ok(())
}

// ------------------------------------------------------------------ report

/// Renders the run report. All inputs come from earlier stages; a missing
/// stage is an explicit error naming it.
pub fn cmd_report(run: &Run, seed: Option<u64>) -> Result<(), CliError> {
    let t0 = Instant::now();
    let mut manifest = run.open()?;
    for stage in ["generate", "label", "train", "optimize", "mine"] {
        manifest.require_stage(stage, run.out_dir)?;
    }
    let text = crate::report::render(run, &manifest)?;
    run.write(REPORT_MD, &text)?;
    let dt = t0.elapsed().as_secs_f64();
    manifest.record_stage(
        "report",
        seed.unwrap_or(0),
        dt,
        run.out_dir,
        &[REPORT_MD],
        BTreeMap::new(),
    )?;
    manifest.save(run.out_dir)?;
    println!("report: wrote {REPORT_MD} in {:.1}s", dt);
    Ok(())
}

/// Metrics file reader shared by report and tests.
pub fn read_metrics(run: &Run) -> Result<TrainMetrics, CliError> {
    serde_json::from_str(&run.read(METRICS_JSON)?)
        .map_err(|e| CliError::Data(format!("malformed metrics.json: {e}")))
}

/// Archive CSV reader shared by report and tests. Returns the raw records
/// with the header.
pub fn read_archive_csv(run: &Run) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), CliError> {
    let path = run.out_dir.join(ARCHIVE_CSV);
    let mut rdr = csv::Reader::from_path(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("read {ARCHIVE_CSV}: {e}")))?
        .clone();
    let mut recs = Vec::new();
    for r in rdr.records() {
        recs.push(r.map_err(|e| CliError::Data(format!("read {ARCHIVE_CSV}: {e}")))?);
    }
    Ok((header, recs))
}

pub fn read_correlation_report(run: &Run) -> Result<CorrelationReport, CliError> {
    serde_json::from_str(&run.read(CORRELATIONS_JSON)?)
        .map_err(|e| CliError::Data(format!("malformed {CORRELATIONS_JSON}: {e}")))
}

pub fn read_derivative_report(run: &Run) -> Result<DerivativeReport, CliError> {
    serde_json::from_str(&run.read(DERIVATIVES_JSON)?)
        .map_err(|e| CliError::Data(format!("malformed {DERIVATIVES_JSON}: {e}")))
}
