//! Markdown run report. Everything here is derived from stage outputs, so
//! the rendered text is deterministic for a given manifest: no timestamps,
//! no timings, no absolute paths.

use crate::manifest::RunManifest;
use crate::stages::{
    read_archive_csv, read_correlation_report, read_derivative_report, read_metrics, tree_file,
    Run, OBJECTIVE_NAMES, SOBOL_JSON,
};
use crate::CliError;
use mechsyn::mining::{SobolReport, TreeNode};
use mechsyn::sampler::VARIABLE_NAMES;
use std::fmt::Write as _;

pub fn render(run: &Run, manifest: &RunManifest) -> Result<String, CliError> {
    let mut md = String::new();
    let cfg = run.cfg;

    writeln!(md, "# Mechanism synthesis run").unwrap();
    writeln!(md).unwrap();
    writeln!(md, "Config fingerprint: `{}`", manifest.config_sha256).unwrap();
    writeln!(md).unwrap();

    pipeline_summary(&mut md, manifest)?;
    task_section(&mut md, run)?;
    surrogate_section(&mut md, run)?;
    optimization_section(&mut md, run, manifest)?;
    sobol_section(&mut md, run)?;
    tree_section(&mut md, run)?;
    correlation_section(&mut md, run)?;
    derivative_section(&mut md, run)?;
    selected_designs(&mut md, run)?;

    writeln!(
        md,
        "Seeds: sampling {}, split {}, training {}, nsga {}, mining {} \
         (overridden per stage where the manifest says so).",
        cfg.seeds.sampling, cfg.seeds.split, cfg.seeds.training, cfg.seeds.nsga, cfg.seeds.mining
    )
    .unwrap();
    Ok(md)
}

fn stat(manifest: &RunManifest, stage: &str, key: &str) -> Option<f64> {
    manifest.stages.get(stage).and_then(|s| s.stats.get(key)).copied()
}

fn pipeline_summary(md: &mut String, manifest: &RunManifest) -> Result<(), CliError> {
    let need = |stage: &str, key: &str| -> Result<f64, CliError> {
        stat(manifest, stage, key).ok_or_else(|| {
            CliError::Data(format!("manifest stage '{stage}' is missing stat '{key}'"))
        })
    };
    writeln!(md, "## Pipeline").unwrap();
    writeln!(md).unwrap();
    writeln!(md, "| stage | outcome |").unwrap();
    writeln!(md, "|---|---|").unwrap();
    writeln!(
        md,
        "| generate | {} sampled, {} crank-rocker and closure feasible, {} task-coverable ({:.2}% acceptance) |",
        need("generate", "n_sampled")? as u64,
        need("generate", "n_feasible")? as u64,
        need("generate", "n_coverable")? as u64,
        need("generate", "acceptance_rate")? * 100.0
    )
    .unwrap();
    writeln!(
        md,
        "| label | {} rows labeled, {} dropped at torque evaluation |",
        need("label", "n_labeled")? as u64,
        need("label", "n_dropped_torque")? as u64
    )
    .unwrap();
    writeln!(
        md,
        "| train | {} train / {} test rows, worst test R2 {:.4} |",
        need("train", "n_train")? as u64,
        need("train", "n_test")? as u64,
        need("train", "r2_test_min")?
    )
    .unwrap();
    writeln!(
        md,
        "| optimize | {} Pareto designs after {} generations, {} verified against the reference pipeline |",
        need("optimize", "pareto_size")? as u64,
        need("optimize", "generations")? as u64,
        need("optimize", "n_truth_ok")? as u64
    )
    .unwrap();
    writeln!(
        md,
        "| mine | {} Sobol evaluations, {} neighborhood designs, {} derivative designs |",
        need("mine", "sobol_evaluations")? as u64,
        need("mine", "neighborhood_n")? as u64,
        need("mine", "derivative_designs")? as u64
    )
    .unwrap();
    writeln!(md).unwrap();
    Ok(())
}

fn task_section(md: &mut String, run: &Run) -> Result<(), CliError> {
    let task = run.cfg.task.region()?;
    writeln!(md, "## Task").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "Task disk: center ({:.4}, {:.4}) m, radius {:.4} m. Operating range: \
         theta1 in [{:.1}, {:.1}] deg, theta2 from {:.1} deg up to theta1.",
        task.center.x,
        task.center.y,
        task.radius,
        run.cfg.range.theta1_min_deg,
        run.cfg.range.theta1_max_deg,
        run.cfg.range.theta2_min_deg
    )
    .unwrap();
    writeln!(md).unwrap();
    Ok(())
}

fn surrogate_section(md: &mut String, run: &Run) -> Result<(), CliError> {
    let m = read_metrics(run)?;
    writeln!(md, "## Surrogate").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "MLP with {} hidden nodes, trained {} epochs on {} rows (targets normalized).",
        run.cfg.mlp.hidden_nodes, m.epochs_run, m.n_train
    )
    .unwrap();
    writeln!(md).unwrap();
    writeln!(md, "| target | train R2 | test R2 | test RMSE |").unwrap();
    writeln!(md, "|---|---|---|---|").unwrap();
    for (k, name) in OBJECTIVE_NAMES.iter().enumerate() {
        writeln!(
            md,
            "| {name} | {:.5} | {:.5} | {:.5} |",
            m.train.per_target[k].r2, m.test.per_target[k].r2, m.test.per_target[k].rmse
        )
        .unwrap();
    }
    writeln!(md).unwrap();
    Ok(())
}

fn optimization_section(
    md: &mut String,
    run: &Run,
    manifest: &RunManifest,
) -> Result<(), CliError> {
    writeln!(md, "## Optimization").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "Constrained NSGA-II ({} individuals, {} generations) maximizing the usage \
         ratio and minimizing both joint torques through the surrogate. The archive \
         keeps every feasible non-dominated design ever evaluated.",
        run.cfg.nsga.pop_size, run.cfg.nsga.generations
    )
    .unwrap();
    writeln!(md).unwrap();
    let gap = |name: &str| stat(manifest, "optimize", &format!("median_rel_gap_{name}"));
    writeln!(md, "Median relative gap between surrogate predictions and the reference labeling pipeline, over verified Pareto members:").unwrap();
    writeln!(md).unwrap();
    writeln!(md, "| target | median relative gap |").unwrap();
    writeln!(md, "|---|---|").unwrap();
    for name in OBJECTIVE_NAMES {
        match gap(name) {
            Some(g) => writeln!(md, "| {name} | {:.4} |", g).unwrap(),
            None => writeln!(md, "| {name} | no verified member |").unwrap(),
        }
    }
    writeln!(md).unwrap();
    Ok(())
}

fn sobol_section(md: &mut String, run: &Run) -> Result<(), CliError> {
    let text = std::fs::read_to_string(run.out_dir.join(SOBOL_JSON))
        .map_err(|e| CliError::Data(format!("cannot read {SOBOL_JSON}: {e}")))?;
    let rep: SobolReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed {SOBOL_JSON}: {e}")))?;
    writeln!(md, "## Global sensitivity (Sobol)").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "Saltelli scheme at base n = {} ({} surrogate evaluations), bootstrap {} \
         resamples for the 95% intervals. Negative point estimates are sampling \
         noise around a tiny true index and are flagged in `{SOBOL_JSON}`.",
        rep.base_n, rep.total_evaluations, rep.bootstrap
    )
    .unwrap();
    writeln!(md).unwrap();
    for obj in &rep.objectives {
        writeln!(md, "### {}", obj.objective).unwrap();
        writeln!(md).unwrap();
        writeln!(md, "| variable | S1 | S1 95% CI | ST | ST 95% CI |").unwrap();
        writeln!(md, "|---|---|---|---|---|").unwrap();
        for (k, name) in rep.variable_names.iter().enumerate() {
            let s1 = &obj.s1[k];
            let st = &obj.st[k];
            writeln!(
                md,
                "| {name} | {:.4} | [{:.4}, {:.4}] | {:.4} | [{:.4}, {:.4}] |",
                s1.value, s1.ci_low, s1.ci_high, st.value, st.ci_low, st.ci_high
            )
            .unwrap();
        }
        writeln!(md).unwrap();
    }
    Ok(())
}

struct Leaf {
    rule: String,
    n: usize,
    value: f64,
}

fn collect_leaves(node: &TreeNode, path: &mut Vec<String>, out: &mut Vec<Leaf>) {
    match &node.split {
        None => {
            let rule =
                if path.is_empty() { "(root)".to_string() } else { path.join(" and ") };
            out.push(Leaf { rule, n: node.n, value: node.value });
        }
        Some(s) => {
            let name = VARIABLE_NAMES[s.variable];
            path.push(format!("{name} <= {:.4}", s.threshold));
            collect_leaves(&s.left, path, out);
            path.pop();
            path.push(format!("{name} > {:.4}", s.threshold));
            collect_leaves(&s.right, path, out);
            path.pop();
        }
    }
}

fn tree_section(md: &mut String, run: &Run) -> Result<(), CliError> {
    writeln!(md, "## Decision trees (Pareto neighborhood)").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "Regression trees over the mined neighborhood; split thresholds are \
         absolute lengths in meters. Leaf tables are given in both value \
         orderings, since rule lists are reported in either direction depending \
         on whether the objective is read as a cost or a merit."
    )
    .unwrap();
    writeln!(md).unwrap();
    for name in OBJECTIVE_NAMES {
        let text = std::fs::read_to_string(run.out_dir.join(tree_file(name, "txt")))
            .map_err(|e| CliError::Data(format!("cannot read tree for {name}: {e}")))?;
        let tree: TreeNode = serde_json::from_str(
            &std::fs::read_to_string(run.out_dir.join(tree_file(name, "json")))
                .map_err(|e| CliError::Data(format!("cannot read tree for {name}: {e}")))?,
        )
        .map_err(|e| CliError::Data(format!("malformed tree for {name}: {e}")))?;

        writeln!(md, "### {name}").unwrap();
        writeln!(md).unwrap();
        writeln!(md, "```").unwrap();
        md.push_str(text.trim_end());
        writeln!(md).unwrap();
        writeln!(md, "```").unwrap();
        writeln!(md).unwrap();

        let mut leaves = Vec::new();
        collect_leaves(&tree, &mut Vec::new(), &mut leaves);
        let mut asc: Vec<usize> = (0..leaves.len()).collect();
        asc.sort_by(|&a, &b| leaves[a].value.partial_cmp(&leaves[b].value).unwrap());
        let desc: Vec<usize> = asc.iter().rev().copied().collect();
        for (title, order) in
            [("Leaves, ascending mean", asc), ("Leaves, descending mean", desc)]
        {
            writeln!(md, "{title}:").unwrap();
            writeln!(md).unwrap();
            writeln!(md, "| rule | n | mean {name} |").unwrap();
            writeln!(md, "|---|---|---|").unwrap();
            for &i in &order {
                let l = &leaves[i];
                writeln!(md, "| {} | {} | {:.4} |", l.rule, l.n, l.value).unwrap();
            }
            writeln!(md).unwrap();
        }
    }
    Ok(())
}

fn correlation_section(md: &mut String, run: &Run) -> Result<(), CliError> {
    let rep = read_correlation_report(run)?;
    writeln!(md, "## Correlations (Pareto neighborhood)").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "Pearson and Spearman coefficients over {} neighborhood designs; \
         significance at alpha = {}. Starred entries are significant.",
        rep.n, rep.alpha
    )
    .unwrap();
    writeln!(md).unwrap();
    for (j, obj) in rep.objective_names.iter().enumerate() {
        writeln!(md, "### {obj}").unwrap();
        writeln!(md).unwrap();
        writeln!(md, "| variable | Pearson r | p | Spearman rho | p |").unwrap();
        writeln!(md, "|---|---|---|---|---|").unwrap();
        for (k, var) in rep.variable_names.iter().enumerate() {
            let p = &rep.pairs[k][j];
            if !p.defined {
                writeln!(md, "| {var} | undefined (zero variance) | | | |").unwrap();
                continue;
            }
            let mark = |s: bool| if s { "*" } else { "" };
            writeln!(
                md,
                "| {var} | {:+.4}{} | {:.4} | {:+.4}{} | {:.4} |",
                p.pearson_r,
                mark(p.pearson_significant),
                p.pearson_p,
                p.spearman_rho,
                mark(p.spearman_significant),
                p.spearman_p
            )
            .unwrap();
        }
        writeln!(md).unwrap();
    }
    Ok(())
}

fn derivative_section(md: &mut String, run: &Run) -> Result<(), CliError> {
    let rep = read_derivative_report(run)?;
    writeln!(md, "## Usage-ratio derivatives").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "Central finite differences of the true usage ratio with step h = {} on \
         unit-normalized variables. Perturbations that break feasibility or task \
         covering are skipped and counted.",
        rep.h
    )
    .unwrap();
    writeln!(md).unwrap();
    writeln!(md, "| variable | n | skipped | mean | mean abs | q1 | median | q3 |").unwrap();
    writeln!(md, "|---|---|---|---|---|---|---|---|").unwrap();
    for (name, v) in rep.variable_names.iter().zip(&rep.per_variable) {
        if v.n == 0 {
            writeln!(md, "| {name} | 0 | {} | no surviving samples | | | | |", v.skipped)
                .unwrap();
            continue;
        }
        writeln!(
            md,
            "| {name} | {} | {} | {:+.4} | {:.4} | {:+.4} | {:+.4} | {:+.4} |",
            v.n, v.skipped, v.mean, v.mean_abs, v.q1, v.median, v.q3
        )
        .unwrap();
    }
    writeln!(md).unwrap();
    let names: Vec<&str> =
        rep.ranking().into_iter().map(|i| rep.variable_names[i].as_str()).collect();
    writeln!(md, "Influence ranking by mean |d eta / dx|: {}.", names.join(", ")).unwrap();
    writeln!(md).unwrap();
    Ok(())
}

fn selected_designs(md: &mut String, run: &Run) -> Result<(), CliError> {
    let (header, recs) = read_archive_csv(run)?;
    let col = |name: &str| -> Result<usize, CliError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("archive.csv is missing column {name}")))
    };
    let lens: Vec<usize> = ["l1_abs", "l2_abs", "l3_abs", "l4_abs", "eex_abs", "eey_abs"]
        .iter()
        .map(|n| col(n))
        .collect::<Result<_, _>>()?;
    let c_eta = col("eta_pred")?;
    let c_t1 = col("tau1_pred_nm")?;
    let c_t2 = col("tau2_pred_nm")?;
    let c_status = col("status")?;
    let c_eta_true = col("eta_true")?;
    let c_t1_true = col("tau1_true_nm")?;
    let c_t2_true = col("tau2_true_nm")?;

    let env = run.cfg.report.envelope_mm;
    let (e0, e1) = (env[0] / 1000.0, env[1] / 1000.0);

    struct Row {
        x: [f64; 6],
        eta: f64,
        t1: f64,
        t2: f64,
        truth: Option<[f64; 3]>,
    }
    let f = |rec: &csv::StringRecord, c: usize| -> f64 {
        rec.get(c).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN)
    };
    let mut rows: Vec<Row> = recs
        .iter()
        .filter_map(|rec| {
            let mut x = [0.0; 6];
            for (k, &c) in lens.iter().enumerate() {
                x[k] = f(rec, c);
            }
            // The mechanism is planar: links and the ee_x offset must fit the
            // longest envelope side, the ee_y offset the second side.
            let fits = x[..5].iter().all(|v| *v <= e0) && x[5] <= e1;
            fits.then(|| Row {
                x,
                eta: f(rec, c_eta),
                t1: f(rec, c_t1),
                t2: f(rec, c_t2),
                truth: (rec.get(c_status) == Some("ok"))
                    .then(|| [f(rec, c_eta_true), f(rec, c_t1_true), f(rec, c_t2_true)]),
            })
        })
        .collect();
    rows.sort_by(|a, b| (a.t1 + a.t2).partial_cmp(&(b.t1 + b.t2)).unwrap());
    rows.truncate(run.cfg.report.table_rows);

    writeln!(md, "## Selected designs").unwrap();
    writeln!(md).unwrap();
    writeln!(
        md,
        "Pareto designs that fit a {:.0} x {:.0} x {:.0} mm assembly envelope \
         (every link and the ee_x offset within {:.0} mm, the ee_y offset within \
         {:.0} mm), lowest combined predicted torque first.",
        env[0],
        env[1],
        env[2],
        env[0],
        env[1]
    )
    .unwrap();
    writeln!(md).unwrap();
    if rows.is_empty() {
        writeln!(md, "No Pareto design fits the envelope.").unwrap();
        writeln!(md).unwrap();
        return Ok(());
    }
    writeln!(
        md,
        "| l1 mm | l2 mm | l3 mm | l4 mm | ee_x mm | ee_y mm | eta' | tau1' Nm | tau2' Nm | eta | tau1 Nm | tau2 Nm |"
    )
    .unwrap();
    writeln!(md, "|---|---|---|---|---|---|---|---|---|---|---|---|").unwrap();
    for r in &rows {
        let mm: Vec<String> = r.x.iter().map(|v| format!("{:.1}", v * 1000.0)).collect();
        let truth = match r.truth {
            Some(t) => format!("{:.4} | {:.2} | {:.2}", t[0], t[1], t[2]),
            None => "unverified | |".to_string(),
        };
        writeln!(
            md,
            "| {} | {:.4} | {:.2} | {:.2} | {} |",
            mm.join(" | "),
            r.eta,
            r.t1,
            r.t2,
            truth
        )
        .unwrap();
    }
    writeln!(md).unwrap();
    Ok(())
}
