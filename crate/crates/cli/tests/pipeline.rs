//! End-to-end tests of the `mechsyn` binary: artifact production, manifest
//! chaining, config rejection, exit codes, and thread-count invariance.
//! Everything runs on a deliberately tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_CFG: &str = r#"
[sampling]
n_samples = 1500

[mlp]
hidden_nodes = 24
max_epochs = 800
patience = 150

[nsga]
pop_size = 16
generations = 10

[mining]
sobol_base_n = 64
n_pareto = 16
n_history = 40
tree_max_depth = 2
derivative_designs = 5
derivative_raster_cells = 256
"#;

/// Every file a full run must leave behind, besides manifest.json.
const ARTIFACTS: &[&str] = &[
    "generated.csv",
    "labeled.csv",
    "model.json",
    "metrics.json",
    "archive.json",
    "archive.csv",
    "sobol.json",
    "sobol.csv",
    "tree_eta.json",
    "tree_eta.txt",
    "tree_eta.dot",
    "tree_tau1_nm.json",
    "tree_tau1_nm.txt",
    "tree_tau1_nm.dot",
    "tree_tau2_nm.json",
    "tree_tau2_nm.txt",
    "tree_tau2_nm.dot",
    "correlations.json",
    "correlations.csv",
    "derivatives.json",
    "derivatives.csv",
    "neighborhood.csv",
    "report.md",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mechsyn"))
}

fn fresh_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mechsyn-it-{name}"));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

fn stage(cmd: &str, cfg: &Path, out: &Path) -> Output {
    bin().args([cmd, "--config"]).arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn stderr_of(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output, what: &str) {
    assert!(o.status.success(), "{what} failed:\n{}", stderr_of(o));
}

fn assert_exit(o: &Output, code: i32, what: &str) {
    assert_eq!(o.status.code(), Some(code), "{what}:\n{}", stderr_of(o));
}

#[test]
fn full_run_produces_every_artifact() {
    let root = fresh_dir("full-run");
    let cfg = write_cfg(&root, TINY_CFG);
    let out = root.join("run");
    let o = bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_ok(&o, "run");
    for f in ARTIFACTS {
        assert!(out.join(f).is_file(), "missing artifact {f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    for stage in ["generate", "label", "train", "optimize", "mine", "report"] {
        assert!(manifest.contains(&format!("\"{stage}\"")), "manifest lacks stage {stage}");
    }
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("Config fingerprint"));
    assert!(report.contains("Sobol"));
}

#[test]
fn staged_invocation_matches_the_run_command_byte_for_byte() {
    let root = fresh_dir("staged-vs-run");
    let cfg = write_cfg(&root, TINY_CFG);
    let (a, b) = (root.join("a"), root.join("b"));
    let o = bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&a).output().unwrap();
    assert_ok(&o, "run");
    for cmd in ["generate", "label", "train", "optimize", "mine", "report"] {
        assert_ok(&stage(cmd, &cfg, &b), cmd);
    }
    // manifest.json is excluded: it records wall-clock stage timings.
    for f in ARTIFACTS {
        let (fa, fb) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert_eq!(fa, fb, "{f} differs between `run` and staged execution");
    }
}

#[test]
fn label_output_is_invariant_to_thread_count() {
    let root = fresh_dir("thread-invariance");
    let cfg = write_cfg(&root, TINY_CFG);
    let (par, ser) = (root.join("par"), root.join("ser"));
    assert_ok(&stage("generate", &cfg, &par), "generate");
    fs::create_dir_all(&ser).unwrap();
    for f in ["generated.csv", "manifest.json"] {
        fs::copy(par.join(f), ser.join(f)).unwrap();
    }
    assert_ok(&stage("label", &cfg, &par), "parallel label");
    let o = bin()
        .args(["label", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&ser)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .unwrap();
    assert_ok(&o, "serial label");
    assert_eq!(
        fs::read(par.join("labeled.csv")).unwrap(),
        fs::read(ser.join("labeled.csv")).unwrap(),
        "labeled.csv depends on the rayon thread count"
    );
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let root = fresh_dir("seed-override");
    let cfg = write_cfg(&root, TINY_CFG);
    let (a, b) = (root.join("a"), root.join("b"));
    assert_ok(&stage("generate", &cfg, &a), "generate default seed");
    let o = bin()
        .args(["generate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .args(["--seed", "999"])
        .output()
        .unwrap();
    assert_ok(&o, "generate seed 999");
    assert_ne!(
        fs::read(a.join("generated.csv")).unwrap(),
        fs::read(b.join("generated.csv")).unwrap(),
        "--seed had no effect on generate"
    );
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let root = fresh_dir("unknown-key");
    let cfg = write_cfg(&root, "[sampling]\nn_smaples = 100\n");
    let o = stage("generate", &cfg, &root.join("run"));
    assert_exit(&o, 2, "misspelled key must exit 2");
    assert!(stderr_of(&o).contains("n_smaples"), "diagnostic must name the bad key");
}

#[test]
fn malformed_toml_exits_2() {
    let root = fresh_dir("bad-toml");
    let cfg = write_cfg(&root, "[sampling\nn_samples = ");
    let o = stage("generate", &cfg, &root.join("run"));
    assert_exit(&o, 2, "broken TOML must exit 2");
}

#[test]
fn invalid_config_value_exits_2() {
    let root = fresh_dir("bad-value");
    let cfg = write_cfg(&root, "[nsga]\npop_size = 7\n");
    let o = stage("generate", &cfg, &root.join("run"));
    assert_exit(&o, 2, "odd population must exit 2");
    assert!(stderr_of(&o).contains("pop_size"));
}

#[test]
fn stage_out_of_order_exits_3_and_names_the_missing_stage() {
    let root = fresh_dir("out-of-order");
    let cfg = write_cfg(&root, TINY_CFG);
    let o = stage("train", &cfg, &root.join("run"));
    assert_exit(&o, 3, "train before label must exit 3");
    assert!(stderr_of(&o).contains("label"), "diagnostic must name the missing stage");
}

#[test]
fn tampered_artifact_exits_3_and_names_the_file() {
    let root = fresh_dir("tampered");
    let cfg = write_cfg(&root, TINY_CFG);
    let out = root.join("run");
    assert_ok(&stage("generate", &cfg, &out), "generate");
    let gen = out.join("generated.csv");
    let mut text = fs::read_to_string(&gen).unwrap();
    text.push_str("tampered\n");
    fs::write(&gen, text).unwrap();
    let o = stage("label", &cfg, &out);
    assert_exit(&o, 3, "label on a tampered generated.csv must exit 3");
    assert!(stderr_of(&o).contains("generated.csv"), "diagnostic must name the file");
}

#[test]
fn foreign_config_is_refused_with_exit_3() {
    let root = fresh_dir("foreign-config");
    let cfg_a = write_cfg(&root, TINY_CFG);
    let out = root.join("run");
    assert_ok(&stage("generate", &cfg_a, &out), "generate");
    let cfg_b = root.join("other.toml");
    fs::write(&cfg_b, "[sampling]\nn_samples = 900\n").unwrap();
    let o = stage("label", &cfg_b, &out);
    assert_exit(&o, 3, "label under a different config must exit 3");
    assert!(stderr_of(&o).contains("different config"));
}

#[test]
fn task_no_design_can_cover_aborts_generate_with_exit_3() {
    // A disk centered on the base pivot sits inside the workspace annulus's
    // hole at every scale, so zero designs can cover it.
    let root = fresh_dir("uncoverable-task");
    let cfg = write_cfg(
        &root,
        "[task]\ncenter_m = [0.0, 0.0]\nradius_m = 0.05\n\n[sampling]\nn_samples = 400\n",
    );
    let o = stage("generate", &cfg, &root.join("run"));
    assert_exit(&o, 3, "fully uncoverable task must abort generation");
    assert!(stderr_of(&o).contains("cover the task"), "{}", stderr_of(&o));
}

#[test]
fn diverging_training_exits_4() {
    let root = fresh_dir("diverging-train");
    let cfg = write_cfg(
        &root,
        "[sampling]\nn_samples = 1500\n\n[mlp]\nlearning_rate = 1e308\nmax_epochs = 50\n",
    );
    let out = root.join("run");
    assert_ok(&stage("generate", &cfg, &out), "generate");
    assert_ok(&stage("label", &cfg, &out), "label");
    let o = stage("train", &cfg, &out);
    assert_exit(&o, 4, "overflowing training loss must exit 4");
    assert!(stderr_of(&o).contains("non-finite"), "{}", stderr_of(&o));
}
