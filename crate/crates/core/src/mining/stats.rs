//! Pearson and Spearman correlation with two-sided t-approximation p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MiningError;

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MiningError> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(MiningError::ZeroVariance);
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks with ties averaged, 1-based.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite value"));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MiningError> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Two-sided p-value for a correlation of `r` over `n` samples.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    #[serde(deserialize_with = "super::de_null_nan")]
    pub pearson_r: f64,
    #[serde(deserialize_with = "super::de_null_nan")]
    pub pearson_p: f64,
    #[serde(deserialize_with = "super::de_null_nan")]
    pub spearman_rho: f64,
    #[serde(deserialize_with = "super::de_null_nan")]
    pub spearman_p: f64,
    pub pearson_significant: bool,
    pub spearman_significant: bool,
    /// False when either column had zero variance; the pair is then reported
    /// as not significant with NaN coefficients.
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub variable_names: Vec<String>,
    pub objective_names: Vec<String>,
    pub alpha: f64,
    pub n: usize,
    /// pairs[variable][objective]
    pub pairs: Vec<Vec<PairStat>>,
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variable,objective,pearson_r,pearson_p,spearman_rho,spearman_p,significant\n",
        );
        for (vi, vn) in self.variable_names.iter().enumerate() {
            for (oi, on) in self.objective_names.iter().enumerate() {
                let p = &self.pairs[vi][oi];
                out.push_str(&format!(
                    "{vn},{on},{},{},{},{},{}\n",
                    p.pearson_r,
                    p.pearson_p,
                    p.spearman_rho,
                    p.spearman_p,
                    p.pearson_significant && p.spearman_significant
                ));
            }
        }
        out
    }
}

pub fn correlations(
    x: &[Vec<f64>],
    variable_names: &[&str],
    y: &[Vec<f64>],
    objective_names: &[&str],
    alpha: f64,
) -> Result<CorrelationReport, MiningError> {
    if x.len() < 3 {
        return Err(MiningError::TooFewSamples { have: x.len(), need: 3 });
    }
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let column = |m: &[Vec<f64>], k: usize| -> Vec<f64> { m.iter().map(|r| r[k]).collect() };
    let mut pairs = Vec::with_capacity(variable_names.len());
    for vi in 0..variable_names.len() {
        let xv = column(x, vi);
        let mut row = Vec::with_capacity(objective_names.len());
        for oi in 0..objective_names.len() {
            let yo = column(y, oi);
            let stat = match (pearson(&xv, &yo), spearman(&xv, &yo)) {
                (Ok(r), Ok(rho)) => {
                    let pp = correlation_p_value(r, n);
                    let sp = correlation_p_value(rho, n);
                    PairStat {
                        pearson_r: r,
                        pearson_p: pp,
                        spearman_rho: rho,
                        spearman_p: sp,
                        pearson_significant: pp < alpha,
                        spearman_significant: sp < alpha,
                        defined: true,
                    }
                }
                _ => PairStat {
                    pearson_r: f64::NAN,
                    pearson_p: 1.0,
                    spearman_rho: f64::NAN,
                    spearman_p: 1.0,
                    pearson_significant: false,
                    spearman_significant: false,
                    defined: false,
                },
            };
            row.push(stat);
        }
        pairs.push(row);
    }
    Ok(CorrelationReport {
        variable_names: variable_names.iter().map(|s| s.to_string()).collect(),
        objective_names: objective_names.iter().map(|s| s.to_string()).collect(),
        alpha,
        n,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn exact_linear_relation_scores_one() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -2.0 * v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_nonlinear_keeps_spearman_at_one() {
        let x: Vec<f64> = (-25..=25).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&x, &y).unwrap() < 1.0 - 1e-6);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_transforms() {
        let x = vec![0.3, 1.9, 0.2, 4.4, 2.2, 3.0, 0.9];
        let y = vec![5.0, 2.0, 7.5, 0.4, 2.0, 1.1, 4.0];
        let base = spearman(&x, &y).unwrap();
        let xt: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let yt: Vec<f64> = y.iter().map(|v| v.sqrt()).collect();
        // Strictly monotone maps preserve the rank vectors, hence the value.
        assert_eq!(spearman(&xt, &yt).unwrap(), base);
    }

    #[test]
    fn shuffled_pair_shows_no_correlation() {
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        let x: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let mut y = x.clone();
        y.shuffle(&mut rng);
        let r = pearson(&x, &y).unwrap();
        assert!(r.abs() < 0.1, "null correlation too large: {r}");
        let p = correlation_p_value(r, 1000);
        assert!(p > 0.01);
    }

    #[test]
    fn ties_get_averaged_ranks() {
        let ranks = average_ranks(&[2.0, 1.0, 2.0, 5.0]);
        assert_eq!(ranks, vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn p_values_match_reference_points() {
        // r = 0.5, n = 20: t = 2.4495, two-sided p = 0.02477.
        let p = correlation_p_value(0.5, 20);
        assert!((p - 0.024770).abs() < 1e-5, "p = {p}");
        // r = -0.3, n = 50: t = -2.1788, two-sided p = 0.03429.
        let p = correlation_p_value(-0.3, 50);
        assert!((p - 0.034286).abs() < 1e-5, "p = {p}");
        assert_eq!(correlation_p_value(1.0, 20), 0.0);
        assert_eq!(correlation_p_value(-1.0, 20), 0.0);
    }

    #[test]
    fn zero_variance_pair_is_reported_not_significant() {
        let x = vec![vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, 1.5]];
        let y = vec![vec![0.2], vec![0.9], vec![0.4]];
        let rep = correlations(&x, &["const", "varies"], &y, &["obj"], 0.05).unwrap();
        let p = &rep.pairs[0][0];
        assert!(!p.defined && !p.pearson_significant && !p.spearman_significant);
        assert!(p.pearson_r.is_nan());
        assert!(rep.pairs[1][0].defined);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 3);
        // The undefined pair's NaNs become JSON nulls and must read back.
        let text = serde_json::to_string(&rep).unwrap();
        let back: CorrelationReport = serde_json::from_str(&text).unwrap();
        assert!(!back.pairs[0][0].defined && back.pairs[0][0].pearson_r.is_nan());
        assert_eq!(back.pairs[1][0], rep.pairs[1][0]);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            correlations(&x, &["v"], &y, &["o"], 0.05),
            Err(MiningError::TooFewSamples { have: 2, need: 3 })
        ));
    }
}
