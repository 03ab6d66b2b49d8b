//! Pipeline configuration: one TOML file, fully defaulted, unknown keys
//! rejected, units spelled out in the key names.

use crate::CliError;
use mechsyn::dynamics::MassModel;
use mechsyn::geometry::{min_enclosing_circle, AngleGrid, OperatingRange, Point2, ScaleSearch, TaskRegion};
use mechsyn::moo::NsgaConfig;
use mechsyn::sampler::{LabelConfig, SamplerConfig};
use mechsyn::surrogate::MlpHyperparams;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub mass: MassConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub range: RangeConfig,
    #[serde(default)]
    pub label: LabelStageConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
    #[serde(default)]
    pub nsga: NsgaStageConfig,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub seeds: Seeds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            task: TaskConfig::default(),
            mass: MassConfig::default(),
            sampling: SamplingConfig::default(),
            range: RangeConfig::default(),
            label: LabelStageConfig::default(),
            mlp: MlpConfig::default(),
            nsga: NsgaStageConfig::default(),
            mining: MiningConfig::default(),
            report: ReportConfig::default(),
            seeds: Seeds::default(),
        }
    }
}

/// Task region: either an explicit disk or a point list reduced to its
/// minimum enclosing circle. The default disk is illustrative, not a
/// benchmark value.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_m: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points_m: Option<Vec<[f64; 2]>>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { center_m: Some([-0.8, 0.2]), radius_m: Some(0.3), points_m: None }
    }
}

impl TaskConfig {
    pub fn region(&self) -> Result<TaskRegion, CliError> {
        match (&self.center_m, &self.radius_m, &self.points_m) {
            (Some(c), Some(r), None) => {
                if *r <= 0.0 {
                    return Err(CliError::Config(format!("task.radius_m must be positive, got {r}")));
                }
                Ok(TaskRegion { center: Point2::new(c[0], c[1]), radius: *r })
            }
            (None, None, Some(pts)) => {
                if pts.len() < 2 {
                    return Err(CliError::Config(
                        "task.points_m needs at least two points".into(),
                    ));
                }
                let pts: Vec<Point2> = pts.iter().map(|p| Point2::new(p[0], p[1])).collect();
                min_enclosing_circle(&pts).map_err(|e| CliError::Config(format!("task.points_m: {e}")))
            }
            _ => Err(CliError::Config(
                "task must set either center_m + radius_m or points_m, not both".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MassConfig {
    pub density_kg_m3: f64,
    pub section_area_m2: f64,
    pub payload_kg: f64,
    pub gravity_m_s2: f64,
}

impl Default for MassConfig {
    fn default() -> Self {
        let m = MassModel::default();
        MassConfig {
            density_kg_m3: m.density,
            section_area_m2: m.section_area,
            payload_kg: m.payload,
            gravity_m_s2: m.gravity,
        }
    }
}

impl MassConfig {
    pub fn model(&self) -> MassModel {
        MassModel {
            density: self.density_kg_m3,
            section_area: self.section_area_m2,
            payload: self.payload_kg,
            gravity: self.gravity_m_s2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub n_samples: usize,
    /// Unit-normalized bounds; l1 is the normalizer and stays degenerate.
    pub bounds_l1: [f64; 2],
    pub bounds_l2: [f64; 2],
    pub bounds_l3: [f64; 2],
    pub bounds_l4: [f64; 2],
    pub bounds_ee_x: [f64; 2],
    pub bounds_ee_y: [f64; 2],
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let b = SamplerConfig::default().bounds;
        SamplingConfig {
            n_samples: 30_000,
            bounds_l1: [b[0].0, b[0].1],
            bounds_l2: [b[1].0, b[1].1],
            bounds_l3: [b[2].0, b[2].1],
            bounds_l4: [b[3].0, b[3].1],
            bounds_ee_x: [b[4].0, b[4].1],
            bounds_ee_y: [b[5].0, b[5].1],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RangeConfig {
    pub theta1_min_deg: f64,
    pub theta1_max_deg: f64,
    pub theta2_min_deg: f64,
}

impl Default for RangeConfig {
    fn default() -> Self {
        RangeConfig { theta1_min_deg: 45.0, theta1_max_deg: 180.0, theta2_min_deg: -37.5 }
    }
}

impl RangeConfig {
    pub fn range(&self) -> OperatingRange {
        OperatingRange {
            theta1_min: self.theta1_min_deg.to_radians(),
            theta1_max: self.theta1_max_deg.to_radians(),
            theta2_min: self.theta2_min_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LabelStageConfig {
    pub grid_theta1: usize,
    pub grid_theta2: usize,
    pub raster_cells: usize,
    pub safety: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub scale_tol_rel: f64,
    pub scale_scan: usize,
    pub boundary_samples: usize,
}

impl Default for LabelStageConfig {
    fn default() -> Self {
        let l = LabelConfig::default();
        LabelStageConfig {
            grid_theta1: l.grid.n_theta1,
            grid_theta2: l.grid.n_theta2,
            raster_cells: l.raster_cells,
            safety: l.safety,
            scale_min: l.search.s_min,
            scale_max: l.search.s_max,
            scale_tol_rel: l.search.tol_rel,
            scale_scan: l.search.scan,
            boundary_samples: l.search.boundary_samples,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden_nodes: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    /// Share of labeled rows used for training; the rest is the test fold.
    pub train_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        let h = MlpHyperparams::default();
        MlpConfig {
            hidden_nodes: h.hidden_nodes,
            learning_rate: h.learning_rate,
            max_epochs: h.max_epochs,
            patience: h.patience,
            val_fraction: h.val_fraction,
            train_fraction: 0.8,
        }
    }
}

impl MlpConfig {
    pub fn hyperparams(&self) -> MlpHyperparams {
        MlpHyperparams {
            hidden_nodes: self.hidden_nodes,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            val_fraction: self.val_fraction,
            ..MlpHyperparams::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NsgaStageConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_crossover: f64,
    pub mutation_prob: f64,
    pub eta_mutation: f64,
    /// Width of the prediction bands g5-g10 in dataset standard deviations.
    pub z_band: f64,
}

impl Default for NsgaStageConfig {
    fn default() -> Self {
        let n = NsgaConfig::default();
        NsgaStageConfig {
            pop_size: n.pop_size,
            generations: n.generations,
            crossover_prob: n.crossover_prob,
            eta_crossover: n.eta_crossover,
            mutation_prob: n.mutation_prob,
            eta_mutation: n.eta_mutation,
            z_band: 1.95,
        }
    }
}

impl NsgaStageConfig {
    pub fn nsga(&self) -> NsgaConfig {
        NsgaConfig {
            pop_size: self.pop_size,
            generations: self.generations,
            crossover_prob: self.crossover_prob,
            eta_crossover: self.eta_crossover,
            mutation_prob: self.mutation_prob,
            eta_mutation: self.eta_mutation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    pub sobol_base_n: usize,
    pub n_pareto: usize,
    pub n_history: usize,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
    pub alpha: f64,
    pub derivative_h: f64,
    /// Labeled designs sampled for the finite-difference pass.
    pub derivative_designs: usize,
    pub derivative_raster_cells: usize,
    pub derivative_scale_tol_rel: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            sobol_base_n: 1024,
            n_pareto: 100,
            n_history: 300,
            tree_max_depth: 3,
            tree_min_leaf: 5,
            alpha: 0.05,
            derivative_h: 0.02,
            derivative_designs: 96,
            derivative_raster_cells: 512,
            derivative_scale_tol_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Build-volume filter for the selected-design table, longest side first.
    pub envelope_mm: [f64; 3],
    /// Rows shown in the selected-design table.
    pub table_rows: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { envelope_mm: [600.0, 350.0, 350.0], table_rows: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub sampling: u64,
    pub split: u64,
    pub training: u64,
    pub nsga: u64,
    pub mining: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { sampling: 42, split: 7, training: 7, nsga: 17, mining: 13 }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.task.region()?;
        let s = &self.sampling;
        if s.n_samples == 0 {
            return Err(CliError::Config("sampling.n_samples must be positive".into()));
        }
        for (name, b, degenerate_ok) in [
            ("bounds_l1", s.bounds_l1, true),
            ("bounds_l2", s.bounds_l2, false),
            ("bounds_l3", s.bounds_l3, false),
            ("bounds_l4", s.bounds_l4, false),
            ("bounds_ee_x", s.bounds_ee_x, false),
            ("bounds_ee_y", s.bounds_ee_y, false),
        ] {
            let bad = !(b[0].is_finite() && b[1].is_finite())
                || b[0] <= 0.0
                || if degenerate_ok { b[0] > b[1] } else { b[0] >= b[1] };
            if bad {
                return Err(CliError::Config(format!(
                    "sampling.{name} = [{}, {}] is not a valid range",
                    b[0], b[1]
                )));
            }
        }
        if self.range.theta1_min_deg >= self.range.theta1_max_deg {
            return Err(CliError::Config("range.theta1_min_deg must be below theta1_max_deg".into()));
        }
        if self.label.grid_theta1 < 2 || self.label.grid_theta2 < 2 {
            return Err(CliError::Config("label.grid_theta1/2 must be at least 2".into()));
        }
        if self.label.safety < 1.0 {
            return Err(CliError::Config("label.safety must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.mlp.val_fraction) {
            return Err(CliError::Config("mlp.val_fraction must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.mlp.train_fraction) || self.mlp.train_fraction <= 0.0 {
            return Err(CliError::Config("mlp.train_fraction must be in (0, 1)".into()));
        }
        if self.nsga.pop_size < 4 || self.nsga.pop_size % 2 != 0 {
            return Err(CliError::Config("nsga.pop_size must be even and at least 4".into()));
        }
        if self.nsga.z_band <= 0.0 {
            return Err(CliError::Config("nsga.z_band must be positive".into()));
        }
        if !self.mining.sobol_base_n.is_power_of_two() {
            return Err(CliError::Config("mining.sobol_base_n must be a power of two".into()));
        }
        if self.mining.derivative_h <= 0.0 {
            return Err(CliError::Config("mining.derivative_h must be positive".into()));
        }
        if self.report.envelope_mm.iter().any(|v| *v <= 0.0) {
            return Err(CliError::Config("report.envelope_mm sides must be positive".into()));
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampling;
        SamplerConfig {
            n_samples: s.n_samples,
            bounds: [
                (s.bounds_l1[0], s.bounds_l1[1]),
                (s.bounds_l2[0], s.bounds_l2[1]),
                (s.bounds_l3[0], s.bounds_l3[1]),
                (s.bounds_l4[0], s.bounds_l4[1]),
                (s.bounds_ee_x[0], s.bounds_ee_x[1]),
                (s.bounds_ee_y[0], s.bounds_ee_y[1]),
            ],
            seed: self.seeds.sampling,
            range: self.range.range(),
            grid: self.grid(),
        }
    }

    pub fn grid(&self) -> AngleGrid {
        AngleGrid { n_theta1: self.label.grid_theta1, n_theta2: self.label.grid_theta2 }
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig {
            range: self.range.range(),
            grid: self.grid(),
            raster_cells: self.label.raster_cells,
            safety: self.label.safety,
            search: ScaleSearch {
                s_min: self.label.scale_min,
                s_max: self.label.scale_max,
                tol_rel: self.label.scale_tol_rel,
                scan: self.label.scale_scan,
                boundary_samples: self.label.boundary_samples,
            },
        }
    }

    /// Finer labeling used only by the finite-difference pass.
    pub fn derivative_label_config(&self) -> LabelConfig {
        let mut cfg = self.label_config();
        cfg.raster_cells = self.mining.derivative_raster_cells;
        cfg.search.tol_rel = self.mining.derivative_scale_tol_rel;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_yields_full_defaults() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.sampling.n_samples, 30_000);
        assert_eq!(cfg.nsga.pop_size, 100);
        let task = cfg.task.region().unwrap();
        assert_eq!(task.radius, 0.3);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = PipelineConfig::from_toml("[sampling]\nn_sample = 10\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_sample"), "diagnostic should name the key: {msg}");
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn point_list_reduces_to_enclosing_circle() {
        let text = r#"
[task]
points_m = [[-1.0, 0.0], [0.0, 0.0], [-0.5, 0.5]]
"#;
        let cfg = PipelineConfig::from_toml(text).unwrap();
        let t = cfg.task.region().unwrap();
        assert!((t.center.x + 0.5).abs() < 1e-12);
        assert!((t.radius - 0.5).abs() < 1e-9);
    }

    #[test]
    fn disk_and_points_together_are_rejected() {
        let text = r#"
[task]
center_m = [0.1, 0.2]
radius_m = 0.3
points_m = [[0.0, 0.0], [1.0, 1.0]]
"#;
        let err = PipelineConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("not both"));
    }

    #[test]
    fn bad_values_name_the_offending_key() {
        for (snippet, needle) in [
            ("[sampling]\nbounds_l2 = [0.6, 0.18]", "bounds_l2"),
            ("[mlp]\nval_fraction = 1.5", "val_fraction"),
            ("[nsga]\npop_size = 7", "pop_size"),
            ("[mining]\nsobol_base_n = 1000", "sobol_base_n"),
            ("version = 9", "version"),
        ] {
            let err = PipelineConfig::from_toml(snippet).unwrap_err();
            assert!(err.to_string().contains(needle), "{snippet} -> {err}");
        }
    }
}
