//! MLP regression from the six absolute link lengths to (eta, tau1, tau2).
//! One hidden ReLU layer, full-batch Adam, early stopping on a held-out
//! validation fold. Everything is seeded and bitwise reproducible.

use crate::sampler::LabeledDesign;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_FEATURES: usize = 6;
pub const N_TARGETS: usize = 3;

/// Rows per parallel gradient chunk. Fixed so the reduction order (and thus
/// the floating-point result) never depends on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("need at least 10 rows, got {0}")]
    TooFewRows(usize),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("non-finite value in {what}")]
    NonFiniteInput { what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpHyperparams {
    pub hidden_nodes: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without monitored-loss improvement before stopping.
    pub patience: usize,
    /// Fraction of the training rows held out for early stopping. Zero means
    /// no holdout; the training loss is monitored instead.
    pub val_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for MlpHyperparams {
    fn default() -> Self {
        MlpHyperparams {
            hidden_nodes: 100,
            learning_rate: 1e-3,
            max_epochs: 50_000,
            patience: 500,
            val_fraction: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

/// Per-feature min-max for inputs, per-target mean/std for outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_min: [f64; N_FEATURES],
    pub x_max: [f64; N_FEATURES],
    pub y_mean: [f64; N_TARGETS],
    pub y_std: [f64; N_TARGETS],
}

impl Normalization {
    fn from_data(xs: &[[f64; N_FEATURES]], ys: &[[f64; N_TARGETS]]) -> Self {
        let mut x_min = [f64::MAX; N_FEATURES];
        let mut x_max = [f64::MIN; N_FEATURES];
        for x in xs {
            for k in 0..N_FEATURES {
                x_min[k] = x_min[k].min(x[k]);
                x_max[k] = x_max[k].max(x[k]);
            }
        }
        let n = ys.len() as f64;
        let mut y_mean = [0.0; N_TARGETS];
        for y in ys {
            for k in 0..N_TARGETS {
                y_mean[k] += y[k] / n;
            }
        }
        let mut y_std = [0.0; N_TARGETS];
        for y in ys {
            for k in 0..N_TARGETS {
                y_std[k] += (y[k] - y_mean[k]).powi(2) / n;
            }
        }
        for s in y_std.iter_mut() {
            *s = s.sqrt().max(1e-12);
        }
        Normalization { x_min, x_max, y_mean, y_std }
    }

    pub fn normalize_x(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for k in 0..N_FEATURES {
            out[k] = (x[k] - self.x_min[k]) / (self.x_max[k] - self.x_min[k]).max(1e-12);
        }
        out
    }

    pub fn normalize_y(&self, y: &[f64; N_TARGETS]) -> [f64; N_TARGETS] {
        let mut out = [0.0; N_TARGETS];
        for k in 0..N_TARGETS {
            out[k] = (y[k] - self.y_mean[k]) / self.y_std[k];
        }
        out
    }

    pub fn denormalize_y(&self, y: &[f64; N_TARGETS]) -> [f64; N_TARGETS] {
        let mut out = [0.0; N_TARGETS];
        for k in 0..N_TARGETS {
            out[k] = y[k] * self.y_std[k] + self.y_mean[k];
        }
        out
    }

    /// True when `x` lies inside the training feature box.
    pub fn in_hull(&self, x: &[f64; N_FEATURES]) -> bool {
        (0..N_FEATURES).all(|k| x[k] >= self.x_min[k] && x[k] <= self.x_max[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Monitored (validation, or training when no holdout) MSE at the best
    /// epoch, on normalized targets.
    pub best_monitored_mse: f64,
    pub final_train_mse: f64,
    /// Strictly improving (epoch, monitored MSE) snapshots.
    pub improvements: Vec<(usize, f64)>,
}

/// Weights row-major: `w1[j*N_FEATURES + k]` feeds hidden j from input k,
/// `w2[t*hidden + j]` feeds target t from hidden j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub n_inputs: usize,
    pub hidden_nodes: usize,
    pub n_outputs: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub normalization: Normalization,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub r2: f64,
    pub mse: f64,
    pub rmse: f64,
}

/// Metrics on normalized targets, per target and pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub per_target: [TargetMetrics; N_TARGETS],
    pub aggregate: TargetMetrics,
}

impl RegressionMetrics {
    pub fn min_r2(&self) -> f64 {
        self.per_target.iter().map(|m| m.r2).fold(f64::MAX, f64::min)
    }
}

/// Seeded shuffle split into (train, test); `ratio` is the train share.
pub fn split(
    rows: &[LabeledDesign],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledDesign>, Vec<LabeledDesign>), SurrogateError> {
    if rows.len() < 10 {
        return Err(SurrogateError::TooFewRows(rows.len()));
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let n_train = ((rows.len() as f64 * ratio).round() as usize).clamp(1, rows.len() - 1);
    let train = idx[..n_train].iter().map(|&i| rows[i]).collect();
    let test = idx[n_train..].iter().map(|&i| rows[i]).collect();
    Ok((train, test))
}

struct Gradients {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    /// Sum of squared errors over the chunk (all targets).
    sse: f64,
}

impl Gradients {
    fn zeros(h: usize) -> Self {
        Gradients {
            w1: vec![0.0; h * N_FEATURES],
            b1: vec![0.0; h],
            w2: vec![0.0; N_TARGETS * h],
            b2: vec![0.0; N_TARGETS],
            sse: 0.0,
        }
    }

    fn add(&mut self, o: &Gradients) {
        for (a, b) in self.w1.iter_mut().zip(&o.w1) {
            *a += b;
        }
        for (a, b) in self.b1.iter_mut().zip(&o.b1) {
            *a += b;
        }
        for (a, b) in self.w2.iter_mut().zip(&o.w2) {
            *a += b;
        }
        for (a, b) in self.b2.iter_mut().zip(&o.b2) {
            *a += b;
        }
        self.sse += o.sse;
    }
}

struct Params {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    h: usize,
}

impl Params {
    fn forward(&self, x: &[f64; N_FEATURES]) -> ([f64; N_TARGETS], Vec<f64>) {
        let mut hidden = vec![0.0; self.h];
        for j in 0..self.h {
            let mut z = self.b1[j];
            for k in 0..N_FEATURES {
                z += self.w1[j * N_FEATURES + k] * x[k];
            }
            hidden[j] = z.max(0.0);
        }
        let mut out = [0.0; N_TARGETS];
        for t in 0..N_TARGETS {
            let mut z = self.b2[t];
            for j in 0..self.h {
                z += self.w2[t * self.h + j] * hidden[j];
            }
            out[t] = z;
        }
        (out, hidden)
    }

    /// Gradient of the summed (not yet averaged) squared error over `rows`,
    /// using d/dz of 0.5*(pred-y)^2 scaled by 2, i.e. plain (pred-y) terms
    /// times 2 applied later with the 1/n factor. Here we accumulate
    /// d(sum (pred-y)^2)/d(param).
    fn chunk_gradient(&self, xs: &[[f64; N_FEATURES]], ys: &[[f64; N_TARGETS]]) -> Gradients {
        let mut g = Gradients::zeros(self.h);
        for (x, y) in xs.iter().zip(ys) {
            let (pred, hidden) = self.forward(x);
            let mut delta_out = [0.0; N_TARGETS];
            for t in 0..N_TARGETS {
                let e = pred[t] - y[t];
                g.sse += e * e;
                delta_out[t] = 2.0 * e;
            }
            for t in 0..N_TARGETS {
                g.b2[t] += delta_out[t];
                for j in 0..self.h {
                    g.w2[t * self.h + j] += delta_out[t] * hidden[j];
                }
            }
            for j in 0..self.h {
                if hidden[j] <= 0.0 {
                    continue;
                }
                let mut dh = 0.0;
                for t in 0..N_TARGETS {
                    dh += delta_out[t] * self.w2[t * self.h + j];
                }
                g.b1[j] += dh;
                for k in 0..N_FEATURES {
                    g.w1[j * N_FEATURES + k] += dh * x[k];
                }
            }
        }
        g
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], hp: &MlpHyperparams) {
        self.t += 1;
        let bc1 = 1.0 - hp.adam_beta1.powi(self.t as i32);
        let bc2 = 1.0 - hp.adam_beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = hp.adam_beta1 * self.m[i] + (1.0 - hp.adam_beta1) * grads[i];
            self.v[i] = hp.adam_beta2 * self.v[i] + (1.0 - hp.adam_beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= hp.learning_rate * mhat / (vhat.sqrt() + hp.adam_epsilon);
        }
    }
}

/// Mean squared error of `p` over normalized rows.
fn mse_normalized(p: &Params, xs: &[[f64; N_FEATURES]], ys: &[[f64; N_TARGETS]]) -> f64 {
    let sse: f64 = xs
        .par_chunks(CHUNK)
        .zip(ys.par_chunks(CHUNK))
        .map(|(cx, cy)| {
            let mut s = 0.0;
            for (x, y) in cx.iter().zip(cy) {
                let (pred, _) = p.forward(x);
                for t in 0..N_TARGETS {
                    s += (pred[t] - y[t]).powi(2);
                }
            }
            s
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    sse / (xs.len() * N_TARGETS) as f64
}

pub fn fit(
    rows: &[LabeledDesign],
    hp: &MlpHyperparams,
    seed: u64,
) -> Result<SurrogateModel, SurrogateError> {
    let xs: Vec<[f64; N_FEATURES]> = rows.iter().map(|r| r.features()).collect();
    let ys: Vec<[f64; N_TARGETS]> = rows.iter().map(|r| r.targets()).collect();
    fit_xy(&xs, &ys, hp, seed)
}

pub fn fit_xy(
    xs: &[[f64; N_FEATURES]],
    ys: &[[f64; N_TARGETS]],
    hp: &MlpHyperparams,
    seed: u64,
) -> Result<SurrogateModel, SurrogateError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(SurrogateError::TooFewRows(xs.len()));
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SurrogateError::NonFiniteInput { what: "features" });
    }
    if ys.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SurrogateError::NonFiniteInput { what: "targets" });
    }

    let norm = Normalization::from_data(xs, ys);
    let xn: Vec<[f64; N_FEATURES]> = xs.iter().map(|x| norm.normalize_x(x)).collect();
    let yn: Vec<[f64; N_TARGETS]> = ys.iter().map(|y| norm.normalize_y(y)).collect();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // Validation holdout for early stopping.
    let n = xn.len();
    let n_val = ((n as f64 * hp.val_fraction).round() as usize).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (val_idx, fit_idx) = order.split_at(n_val);
    let take = |idx: &[usize]| -> (Vec<[f64; N_FEATURES]>, Vec<[f64; N_TARGETS]>) {
        (idx.iter().map(|&i| xn[i]).collect(), idx.iter().map(|&i| yn[i]).collect())
    };
    let (val_x, val_y) = take(val_idx);
    let (fit_x, fit_y) = take(fit_idx);

    let h = hp.hidden_nodes;
    let init = |rng: &mut ChaCha20Rng, fan_in: usize, len: usize| -> Vec<f64> {
        let lim = 1.0 / (fan_in as f64).sqrt();
        (0..len).map(|_| rng.gen_range(-lim..lim)).collect()
    };
    let mut p = Params {
        w1: init(&mut rng, N_FEATURES, h * N_FEATURES),
        b1: vec![0.0; h],
        w2: init(&mut rng, h, N_TARGETS * h),
        b2: vec![0.0; N_TARGETS],
        h,
    };

    let mut adam_w1 = Adam::new(p.w1.len());
    let mut adam_b1 = Adam::new(p.b1.len());
    let mut adam_w2 = Adam::new(p.w2.len());
    let mut adam_b2 = Adam::new(p.b2.len());

    let mut best = (p.w1.clone(), p.b1.clone(), p.w2.clone(), p.b2.clone());
    let mut best_mse = f64::MAX;
    let mut best_epoch = 0usize;
    let mut improvements = Vec::new();
    let mut epochs_run = 0usize;
    let mut train_mse = f64::MAX;

    for epoch in 1..=hp.max_epochs {
        epochs_run = epoch;
        let mut total = Gradients::zeros(h);
        let chunk_grads: Vec<Gradients> = fit_x
            .par_chunks(CHUNK)
            .zip(fit_y.par_chunks(CHUNK))
            .map(|(cx, cy)| p.chunk_gradient(cx, cy))
            .collect();
        for g in &chunk_grads {
            total.add(g);
        }
        let inv = 1.0 / (fit_x.len() * N_TARGETS) as f64;
        train_mse = total.sse * inv;
        if !train_mse.is_finite() {
            return Err(SurrogateError::NonFiniteLoss { epoch });
        }
        for v in total
            .w1
            .iter_mut()
            .chain(total.b1.iter_mut())
            .chain(total.w2.iter_mut())
            .chain(total.b2.iter_mut())
        {
            *v *= inv;
        }
        adam_w1.step(&mut p.w1, &total.w1, hp);
        adam_b1.step(&mut p.b1, &total.b1, hp);
        adam_w2.step(&mut p.w2, &total.w2, hp);
        adam_b2.step(&mut p.b2, &total.b2, hp);

        let monitored =
            if val_x.is_empty() { train_mse } else { mse_normalized(&p, &val_x, &val_y) };
        if !monitored.is_finite() {
            return Err(SurrogateError::NonFiniteLoss { epoch });
        }
        if monitored < best_mse {
            best_mse = monitored;
            best_epoch = epoch;
            best = (p.w1.clone(), p.b1.clone(), p.w2.clone(), p.b2.clone());
            improvements.push((epoch, monitored));
        } else if epoch - best_epoch >= hp.patience {
            break;
        }
    }

    let (w1, b1, w2, b2) = best;
    Ok(SurrogateModel {
        n_inputs: N_FEATURES,
        hidden_nodes: h,
        n_outputs: N_TARGETS,
        w1,
        b1,
        w2,
        b2,
        normalization: norm,
        meta: TrainingMeta {
            seed,
            epochs_run,
            best_epoch,
            best_monitored_mse: best_mse,
            final_train_mse: train_mse,
            improvements,
        },
    })
}

impl SurrogateModel {
    /// Denormalized (eta', tau1', tau2') at absolute lengths (meters).
    pub fn predict(&self, lengths_abs: &[f64; N_FEATURES]) -> [f64; N_TARGETS] {
        let xn = self.normalization.normalize_x(lengths_abs);
        let mut hidden_sum;
        let mut out = [0.0; N_TARGETS];
        let h = self.hidden_nodes;
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            hidden_sum = self.b1[j];
            for k in 0..N_FEATURES {
                hidden_sum += self.w1[j * N_FEATURES + k] * xn[k];
            }
            hidden[j] = hidden_sum.max(0.0);
        }
        for t in 0..N_TARGETS {
            let mut z = self.b2[t];
            for j in 0..h {
                z += self.w2[t * h + j] * hidden[j];
            }
            out[t] = z;
        }
        self.normalization.denormalize_y(&out)
    }

    pub fn in_training_hull(&self, lengths_abs: &[f64; N_FEATURES]) -> bool {
        self.normalization.in_hull(lengths_abs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Metrics on normalized targets (the model's own normalization), per target
/// and pooled. R^2 uses the evaluation set's own target means.
pub fn evaluate(model: &SurrogateModel, rows: &[LabeledDesign]) -> RegressionMetrics {
    let xs: Vec<[f64; N_FEATURES]> = rows.iter().map(|r| r.features()).collect();
    let ys: Vec<[f64; N_TARGETS]> = rows.iter().map(|r| r.targets()).collect();
    evaluate_xy(model, &xs, &ys)
}

pub fn evaluate_xy(
    model: &SurrogateModel,
    xs: &[[f64; N_FEATURES]],
    ys: &[[f64; N_TARGETS]],
) -> RegressionMetrics {
    assert!(!xs.is_empty() && xs.len() == ys.len());
    let n = xs.len() as f64;
    let preds: Vec<[f64; N_TARGETS]> = xs
        .iter()
        .map(|x| model.normalization.normalize_y(&model.predict(x)))
        .collect();
    let truth: Vec<[f64; N_TARGETS]> =
        ys.iter().map(|y| model.normalization.normalize_y(y)).collect();

    let mut mean = [0.0; N_TARGETS];
    for y in &truth {
        for t in 0..N_TARGETS {
            mean[t] += y[t] / n;
        }
    }
    let mut sse = [0.0; N_TARGETS];
    let mut sst = [0.0; N_TARGETS];
    for (p, y) in preds.iter().zip(&truth) {
        for t in 0..N_TARGETS {
            sse[t] += (p[t] - y[t]).powi(2);
            sst[t] += (y[t] - mean[t]).powi(2);
        }
    }
    let per_target = std::array::from_fn(|t| {
        let mse = sse[t] / n;
        TargetMetrics { r2: 1.0 - sse[t] / sst[t].max(1e-300), mse, rmse: mse.sqrt() }
    });
    let tot_sse: f64 = sse.iter().sum();
    let tot_sst: f64 = sst.iter().sum();
    let mse = tot_sse / (n * N_TARGETS as f64);
    let aggregate = TargetMetrics { r2: 1.0 - tot_sse / tot_sst.max(1e-300), mse, rmse: mse.sqrt() };
    RegressionMetrics { per_target, aggregate }
}

/// Worst relative disagreement between the analytic backprop gradient and a
/// central-difference estimate of it, on a small seeded fixture (10 rows,
/// 8 hidden units). The fixture is redrawn until every hidden pre-activation
/// keeps a safe margin from its ReLU kink, so the loss is locally smooth at
/// the test point and the finite difference is trustworthy.
#[cfg(any(test, feature = "test-oracle"))]
pub fn gradient_fd_max_rel_error(seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let h = 8;
    let mut xs: Vec<[f64; N_FEATURES]> = Vec::new();
    let mut ys: Vec<[f64; N_TARGETS]> = Vec::new();
    let mut p = Params { w1: vec![], b1: vec![], w2: vec![], b2: vec![], h };
    let mut drawn = false;
    for _ in 0..64 {
        xs = (0..10).map(|_| std::array::from_fn(|_| rng.gen_range(0.1..1.0))).collect();
        ys = (0..10).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        p = Params {
            w1: (0..h * N_FEATURES).map(|_| rng.gen_range(-0.7..0.7)).collect(),
            b1: (0..h).map(|_| rng.gen_range(0.2..0.4)).collect(),
            w2: (0..N_TARGETS * h).map(|_| rng.gen_range(-0.7..0.7)).collect(),
            b2: (0..N_TARGETS).map(|_| rng.gen_range(-0.2..0.2)).collect(),
            h,
        };
        let mut min_abs_z = f64::MAX;
        for x in &xs {
            for j in 0..h {
                let mut z = p.b1[j];
                for k in 0..N_FEATURES {
                    z += p.w1[j * N_FEATURES + k] * x[k];
                }
                min_abs_z = min_abs_z.min(z.abs());
            }
        }
        if min_abs_z > 1e-3 {
            drawn = true;
            break;
        }
    }
    assert!(drawn, "no kink-safe fixture found for seed {seed}");

    let hh = 1e-5;
    let n_inv = 1.0 / (xs.len() * N_TARGETS) as f64;
    let loss = |p: &Params| -> f64 {
        let mut s = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let (pred, _) = p.forward(x);
            for t in 0..N_TARGETS {
                s += (pred[t] - y[t]).powi(2);
            }
        }
        s * n_inv
    };
    let g = p.chunk_gradient(&xs, &ys);
    let analytic: Vec<f64> =
        g.w1.iter().chain(&g.b1).chain(&g.w2).chain(&g.b2).map(|v| v * n_inv).collect();

    let mut worst = 0.0f64;
    let mut flat_idx = 0usize;
    let mut check = |vec_sel: fn(&mut Params) -> &mut Vec<f64>, len: usize, p: &mut Params| {
        for i in 0..len {
            let orig = vec_sel(p)[i];
            vec_sel(p)[i] = orig + hh;
            let up = loss(p);
            vec_sel(p)[i] = orig - hh;
            let dn = loss(p);
            vec_sel(p)[i] = orig;
            let fd = (up - dn) / (2.0 * hh);
            let a = analytic[flat_idx];
            let denom = a.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(((a - fd) / denom).abs());
            flat_idx += 1;
        }
    };
    check(|p| &mut p.w1, h * N_FEATURES, &mut p);
    check(|p| &mut p.b1, h, &mut p);
    check(|p| &mut p.w2, N_TARGETS * h, &mut p);
    check(|p| &mut p.b2, N_TARGETS, &mut p);
    assert_eq!(flat_idx, analytic.len());
    worst
}
