//! Survey aggregation, regressions, within-participant contrasts and
//! Bland-Altman agreement.
//!
//! p-values come from a self-contained regularized incomplete beta
//! (continued fraction, modified Lentz) so the numbers do not depend on a
//! statistics crate.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::recording::mean;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// distributions

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + even * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + even / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + odd * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + odd / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Student t CDF.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Upper-tail p-value of an F statistic.
pub fn f_upper_p(f: f64, df1: f64, df2: f64) -> f64 {
    if f.is_nan() || f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// survey

pub const TLX_RANGE: (f64, f64) = (0.0, 21.0);
pub const FLOW_RANGE: (f64, f64) = (1.0, 7.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub nasa_tlx: [f64; 6],
    /// Challenge, fluency, absorption.
    pub flow_items: [f64; 3],
}

impl SurveyResponse {
    pub fn new(nasa_tlx: [f64; 6], flow_items: [f64; 3]) -> Result<Self> {
        let r = SurveyResponse { nasa_tlx, flow_items };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        if let Some(v) = self.nasa_tlx.iter().find(|&&v| !within(v, TLX_RANGE)) {
            return Err(Error::Data(format!("NASA-TLX rating {v} outside 0–21")));
        }
        if let Some(v) = self.flow_items.iter().find(|&&v| !within(v, FLOW_RANGE)) {
            return Err(Error::Data(format!("flow rating {v} outside 1–7")));
        }
        Ok(())
    }
}

/// `(tlx_total, flow_mean)`: sum of the six TLX items, mean of the flow items.
pub fn aggregate_survey(r: &SurveyResponse) -> Result<(f64, f64)> {
    r.validate()?;
    Ok((r.nasa_tlx.iter().sum(), r.flow_items.iter().sum::<f64>() / 3.0))
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Standardizes values within each participant (sample SD). Output order
/// matches the input.
pub fn z_standardize<S: AsRef<str>>(participants: &[S], values: &[f64]) -> Result<Vec<f64>> {
    if participants.len() != values.len() {
        return Err(Error::Data("participants and values differ in length".into()));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in participants.iter().enumerate() {
        groups.entry(p.as_ref()).or_default().push(i);
    }
    let mut out = vec![0.0; values.len()];
    for (p, idx) in groups {
        let v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        if v.len() < 2 {
            return Err(Error::Data(format!("participant `{p}` has fewer than 2 values")));
        }
        let (m, sd) = (mean(&v), sample_sd(&v));
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(p.to_string()));
        }
        for (&i, x) in idx.iter().zip(v) {
            out[i] = (x - m) / sd;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// regression

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionModel {
    Linear,
    QuadraticOrthogonal,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Gram-Schmidt quadratic basis: `p1 = x − x̄`, `p2 = x² − c0 − c1·p1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalBasis {
    pub x_mean: f64,
    pub c0: f64,
    pub c1: f64,
}

impl OrthogonalBasis {
    pub fn fit(x: &[f64]) -> Self {
        let x_mean = mean(x);
        let p1: Vec<f64> = x.iter().map(|v| v - x_mean).collect();
        let q: Vec<f64> = x.iter().map(|v| v * v).collect();
        let c0 = mean(&q);
        let c1 = dot(&q, &p1) / dot(&p1, &p1);
        OrthogonalBasis { x_mean, c0, c1 }
    }

    /// `[p0, p1, p2]` at `x`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let p1 = x - self.x_mean;
        [1.0, p1, x * x - self.c0 - self.c1 * p1]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub model: RegressionModel,
    pub n: usize,
    pub df_residual: usize,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub residual_se: f64,
    /// Coefficient covariance, row-major `p × p`.
    pub covariance: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<OrthogonalBasis>,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    fn design_row(&self, x: f64) -> Vec<f64> {
        match (self.model, self.basis) {
            (RegressionModel::QuadraticOrthogonal, Some(b)) => b.eval(x).to_vec(),
            _ => vec![1.0, x],
        }
    }

    /// Fitted value and its standard error (the 1-SE band) at `x`.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let row = self.design_row(x);
        let y = row.iter().zip(&self.coefficients).map(|(a, c)| a * c.estimate).sum();
        let mut var = 0.0;
        for (i, a) in row.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                var += a * b * self.covariance[i][j];
            }
        }
        (y, var.max(0.0).sqrt())
    }
}

/// Ordinary least squares on explicit design columns.
pub fn fit_ols(columns: &[Vec<f64>], names: &[&str], y: &[f64], model: RegressionModel) -> Result<RegressionFit> {
    let n = y.len();
    let p = columns.len();
    if names.len() != p || columns.iter().any(|c| c.len() != n) {
        return Err(Error::Data("design columns do not match y".into()));
    }
    if n <= p {
        return Err(Error::Data(format!("{n} observations for {p} coefficients")));
    }
    let x = DMatrix::from_fn(n, p, |r, c| columns[c][r]);
    let xtx = x.transpose() * &x;
    let inv = xtx
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Data("design matrix is rank deficient".into()))?;
    let beta = &inv * (x.transpose() * DVector::from_column_slice(y));
    let fitted = &x * &beta;
    let y_mean = mean(y);
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ZeroVariance("y".into()));
    }
    let df = n - p;
    let sigma2 = ss_res / df as f64;
    let cov = &inv * sigma2;
    let coefficients = (0..p)
        .map(|i| {
            let se = cov[(i, i)].max(0.0).sqrt();
            let (t, p_value) = if se > 0.0 {
                let t = beta[i] / se;
                (t, t_two_sided_p(t, df as f64))
            } else if beta[i] == 0.0 {
                (0.0, 1.0)
            } else {
                (f64::INFINITY.copysign(beta[i]), 0.0)
            };
            Coefficient {
                name: names[i].to_string(),
                estimate: beta[i],
                std_error: se,
                t,
                p_value,
            }
        })
        .collect();
    Ok(RegressionFit {
        model,
        n,
        df_residual: df,
        coefficients,
        r_squared: (1.0 - ss_res / ss_tot).clamp(0.0, 1.0),
        residual_se: sigma2.sqrt(),
        covariance: (0..p).map(|r| (0..p).map(|c| cov[(r, c)]).collect()).collect(),
        basis: None,
    })
}

/// `y = β0 + β1·x`; coefficients named `intercept` and `slope`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Data("linear fit needs n ≥ 3 paired values".into()));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::ZeroVariance("x".into()));
    }
    fit_ols(&[vec![1.0; x.len()], x.to_vec()], &["intercept", "slope"], y, RegressionModel::Linear)
}

/// Regression on the orthogonal basis `p0, p1, p2`; coefficients named
/// `b0`, `b1`, `b2`.
pub fn fit_quadratic_orthogonal(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    if x.len() != y.len() || x.len() < 4 {
        return Err(Error::Data("quadratic fit needs n ≥ 4 paired values".into()));
    }
    let distinct: BTreeSet<u64> = x.iter().map(|v| v.to_bits()).collect();
    if distinct.len() < 3 {
        return Err(Error::Data("quadratic fit needs ≥ 3 distinct x values".into()));
    }
    let basis = OrthogonalBasis::fit(x);
    let cols: Vec<Vec<f64>> = (0..3).map(|k| x.iter().map(|&v| basis.eval(v)[k]).collect()).collect();
    let mut fit = fit_ols(&cols, &["b0", "b1", "b2"], y, RegressionModel::QuadraticOrthogonal)?;
    fit.basis = Some(basis);
    Ok(fit)
}

// ---------------------------------------------------------------------------
// contrasts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub participant: String,
    pub condition: String,
    pub value: f64,
}

impl Observation {
    pub fn new(participant: impl Into<String>, condition: impl Into<String>, value: f64) -> Self {
        Observation {
            participant: participant.into(),
            condition: condition.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub condition_a: String,
    pub condition_b: String,
    pub n: usize,
    /// Mean of `b − a`.
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastTable {
    pub conditions: Vec<String>,
    pub f: f64,
    pub df_condition: f64,
    pub df_error: f64,
    pub p: f64,
    /// Every participant observed in every condition; the centering
    /// approximation is exact only then.
    pub balanced: bool,
    pub pairs: Vec<Contrast>,
}

/// Within-participant centered omnibus F and Bonferroni-corrected paired t
/// tests. Replicates of a participant/condition cell are averaged first.
/// Conditions keep first-appearance order.
pub fn pairwise_contrasts(obs: &[Observation]) -> Result<ContrastTable> {
    let mut conditions: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for o in obs {
        if !conditions.contains(&o.condition) {
            conditions.push(o.condition.clone());
        }
        cells.entry((o.participant.clone(), o.condition.clone())).or_default().push(o.value);
    }
    if conditions.len() < 2 {
        return Err(Error::Data("contrasts need ≥ 2 conditions".into()));
    }
    let mut by_participant: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((p, c), v) in &cells {
        by_participant.entry(p.clone()).or_default().insert(c.clone(), mean(v));
    }
    by_participant.retain(|_, m| m.len() >= 2);
    if by_participant.is_empty() {
        return Err(Error::Data("no participant observed in ≥ 2 conditions".into()));
    }
    let balanced = by_participant.values().all(|m| m.len() == conditions.len());

    // omnibus on centered cell means
    let mut centered: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut total = 0usize;
    for m in by_participant.values() {
        let pm = m.values().sum::<f64>() / m.len() as f64;
        for (c, v) in m {
            centered.entry(c.as_str()).or_default().push(v - pm);
            total += 1;
        }
    }
    let k = centered.len() as f64;
    let ss_cond: f64 = centered.values().map(|v| v.len() as f64 * mean(v).powi(2)).sum();
    let ss_err: f64 = centered
        .values()
        .map(|v| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let df_condition = k - 1.0;
    let df_error = total as f64 - k - (by_participant.len() as f64 - 1.0);
    let (f, p) = if df_error <= 0.0 {
        (f64::NAN, 1.0)
    } else if ss_err > 0.0 {
        let f = (ss_cond / df_condition) / (ss_err / df_error);
        (f, f_upper_p(f, df_condition, df_error))
    } else if ss_cond > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };

    let m = conditions.len() * (conditions.len() - 1) / 2;
    let mut pairs = Vec::with_capacity(m);
    for (i, a) in conditions.iter().enumerate() {
        for b in &conditions[i + 1..] {
            let d: Vec<f64> = by_participant
                .values()
                .filter_map(|cells| Some(cells.get(b)? - cells.get(a)?))
                .collect();
            let n = d.len();
            let (mean_diff, t, df, raw_p) = if n < 2 {
                (d.first().copied().unwrap_or(f64::NAN), f64::NAN, 0.0, 1.0)
            } else {
                let md = mean(&d);
                let se = sample_sd(&d) / (n as f64).sqrt();
                let df = n as f64 - 1.0;
                if se > 0.0 {
                    let t = md / se;
                    (md, t, df, t_two_sided_p(t, df))
                } else if md == 0.0 {
                    (md, 0.0, df, 1.0)
                } else {
                    (md, f64::INFINITY.copysign(md), df, 0.0)
                }
            };
            pairs.push(Contrast {
                condition_a: a.clone(),
                condition_b: b.clone(),
                n,
                mean_diff,
                t,
                df,
                raw_p,
                adjusted_p: bonferroni(raw_p, m),
            });
        }
    }
    Ok(ContrastTable {
        conditions,
        f,
        df_condition,
        df_error,
        p,
        balanced,
        pairs,
    })
}

pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

// ---------------------------------------------------------------------------
// agreement

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanReport {
    pub n: usize,
    pub mean_abs_diff: f64,
    pub mean_diff: f64,
    /// 1.96 × SD of the differences.
    pub gaussian_loa: f64,
    /// 1.96 × IQR of the differences.
    pub nonparametric_loa: f64,
    /// Empirical 2.5th and 97.5th percentiles of the differences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentile_limits: Option<(f64, f64)>,
    /// `None` when either series has zero variance.
    pub pearson_r: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let sxy: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let sxx: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let syy: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Agreement of paired measurements; differences are `alt − reference`.
pub fn bland_altman(reference: &[f64], alt: &[f64]) -> Result<BlandAltmanReport> {
    if reference.len() != alt.len() {
        return Err(Error::Data(format!(
            "unpaired series: {} vs {} values",
            reference.len(),
            alt.len()
        )));
    }
    let n = reference.len();
    if n < 3 {
        return Err(Error::TooShort { actual: n, minimum: 3 });
    }
    let d: Vec<f64> = alt.iter().zip(reference).map(|(a, r)| a - r).collect();
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    Ok(BlandAltmanReport {
        n,
        mean_abs_diff: d.iter().map(|v| v.abs()).sum::<f64>() / n as f64,
        mean_diff: mean(&d),
        gaussian_loa: 1.96 * sample_sd(&d),
        nonparametric_loa: 1.96 * iqr,
        percentile_limits: Some((quantile(&sorted, 0.025), quantile(&sorted, 0.975))),
        pearson_r: pearson(reference, alt),
    })
}

// ---------------------------------------------------------------------------
// analysis tables

/// One row of the analysis input: band power joined with survey scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub participant: String,
    pub condition: String,
    pub channel: String,
    pub band: String,
    pub power_db: f64,
    #[serde(default)]
    pub tlx_total: Option<f64>,
    #[serde(default)]
    pub flow_mean: Option<f64>,
}

pub fn read_analysis_csv(path: impl AsRef<Path>) -> Result<Vec<AnalysisRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    /// Conditions dropped before the workload/flow regressions.
    pub regression_exclude: Vec<String>,
    /// Average channels per participant/condition before modelling.
    pub average_channels: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            regression_exclude: vec!["closed".into()],
            average_channels: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandModels {
    pub band: String,
    pub contrasts: ContrastTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workload_linear: Option<RegressionFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_linear: Option<RegressionFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_quadratic: Option<RegressionFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub bands: Vec<BandModels>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workload_contrasts: Option<ContrastTable>,
    pub notes: Vec<String>,
}

struct Point {
    participant: String,
    condition: String,
    power: f64,
    tlx: Option<f64>,
    flow: Option<f64>,
}

fn band_points(rows: &[AnalysisRow], band: &str, average: bool) -> Vec<Point> {
    let selected = rows.iter().filter(|r| r.band == band);
    if !average {
        return selected
            .map(|r| Point {
                participant: r.participant.clone(),
                condition: r.condition.clone(),
                power: r.power_db,
                tlx: r.tlx_total,
                flow: r.flow_mean,
            })
            .collect();
    }
    let mut cells: Vec<((String, String), Vec<&AnalysisRow>)> = Vec::new();
    for r in selected {
        let key = (r.participant.clone(), r.condition.clone());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => cells.push((key, vec![r])),
        }
    }
    cells
        .into_iter()
        .map(|((participant, condition), rs)| Point {
            participant,
            condition,
            power: rs.iter().map(|r| r.power_db).sum::<f64>() / rs.len() as f64,
            tlx: rs.iter().find_map(|r| r.tlx_total),
            flow: rs.iter().find_map(|r| r.flow_mean),
        })
        .collect()
}

fn standardized_pairs(points: &[&Point], y: impl Fn(&Point) -> Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let used: Vec<(&Point, f64)> = points.iter().filter_map(|p| Some((*p, y(p)?))).collect();
    let who: Vec<&str> = used.iter().map(|(p, _)| p.participant.as_str()).collect();
    let x = z_standardize(&who, &used.iter().map(|(p, _)| p.power).collect::<Vec<_>>())?;
    let y = z_standardize(&who, &used.iter().map(|(_, v)| *v).collect::<Vec<_>>())?;
    Ok((x, y))
}

/// Per band: condition contrasts on power, plus z-standardized workload and
/// flow regressions on power. A model that cannot be fitted is skipped with
/// a note instead of failing the report.
pub fn analyze(rows: &[AnalysisRow], opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let mut bands: Vec<String> = Vec::new();
    for r in rows {
        if !bands.contains(&r.band) {
            bands.push(r.band.clone());
        }
    }
    if bands.is_empty() {
        return Err(Error::Data("analysis table is empty".into()));
    }
    let mut notes = Vec::new();
    let mut out = Vec::new();
    for band in &bands {
        let points = band_points(rows, band, opts.average_channels);
        let obs: Vec<Observation> = points
            .iter()
            .map(|p| Observation::new(&p.participant, &p.condition, p.power))
            .collect();
        let contrasts = pairwise_contrasts(&obs)?;
        if !contrasts.balanced {
            notes.push(format!("{band}: unbalanced design, centered contrasts are approximate"));
        }
        let kept: Vec<&Point> = points
            .iter()
            .filter(|p| !opts.regression_exclude.contains(&p.condition))
            .collect();
        let mut attempt = |label: &str, r: Result<RegressionFit>| match r {
            Ok(fit) => Some(fit),
            Err(e) => {
                notes.push(format!("{band} {label}: {e}"));
                None
            }
        };
        let workload = standardized_pairs(&kept, |p| p.tlx).and_then(|(x, y)| fit_linear(&x, &y));
        let workload_linear = attempt("workload linear", workload);
        let flow = standardized_pairs(&kept, |p| p.flow);
        let flow_linear = attempt("flow linear", flow.as_ref().map_err(clone_err).and_then(|(x, y)| fit_linear(x, y)));
        let flow_quadratic = attempt(
            "flow quadratic",
            flow.as_ref().map_err(clone_err).and_then(|(x, y)| fit_quadratic_orthogonal(x, y)),
        );
        out.push(BandModels {
            band: band.clone(),
            contrasts,
            workload_linear,
            flow_linear,
            flow_quadratic,
        });
    }

    let first_band = &bands[0];
    let workload_obs: Vec<Observation> = band_points(rows, first_band, true)
        .iter()
        .filter_map(|p| Some(Observation::new(&p.participant, &p.condition, p.tlx?)))
        .collect();
    let workload_contrasts = pairwise_contrasts(&workload_obs).ok();
    Ok(AnalysisReport {
        bands: out,
        workload_contrasts,
        notes,
    })
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::ZeroVariance(s) => Error::ZeroVariance(s.clone()),
        other => Error::Data(other.to_string()),
    }
}

/// Plain-text summary of an analysis report.
pub fn format_report(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let fmt_p = |p: f64| format!("{p:.4}");
    for b in &report.bands {
        let c = &b.contrasts;
        s += &format!(
            "[{}] F({:.0}, {:.0}) = {:.3}, p = {}{}\n",
            b.band,
            c.df_condition,
            c.df_error,
            c.f,
            fmt_p(c.p),
            if c.balanced { "" } else { " (unbalanced)" }
        );
        for pair in &c.pairs {
            s += &format!(
                "  {:>12} vs {:<12} diff {:>8.3}  t {:>8.3}  p {}  p_adj {}\n",
                pair.condition_b,
                pair.condition_a,
                pair.mean_diff,
                pair.t,
                fmt_p(pair.raw_p),
                fmt_p(pair.adjusted_p)
            );
        }
        for (label, fit) in [
            ("workload ~ power", &b.workload_linear),
            ("flow ~ power", &b.flow_linear),
            ("flow ~ power (quadratic)", &b.flow_quadratic),
        ] {
            if let Some(fit) = fit {
                let terms: Vec<String> = fit
                    .coefficients
                    .iter()
                    .map(|c| format!("{} {:.3} (p {})", c.name, c.estimate, fmt_p(c.p_value)))
                    .collect();
                s += &format!("  {label}: R² {:.3}; {}\n", fit.r_squared, terms.join(", "));
            }
        }
    }
    for note in &report.notes {
        s += &format!("note: {note}\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survey_examples() {
        let zero = SurveyResponse::new([0.0; 6], [3.0, 5.0, 7.0]).unwrap();
        assert_eq!(aggregate_survey(&zero).unwrap(), (0.0, 5.0));
        let max = SurveyResponse::new([21.0; 6], [1.0; 3]).unwrap();
        assert_eq!(aggregate_survey(&max).unwrap().0, 126.0);
        assert!(SurveyResponse::new([22.0; 6], [1.0; 3]).is_err());
        assert!(SurveyResponse::new([0.0; 6], [0.0; 3]).is_err());
    }

    #[test]
    fn z_examples() {
        let z = z_standardize(&["a", "a", "a"], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
        match z_standardize(&["a", "a", "b", "b"], &[1.0, 2.0, 4.0, 4.0]) {
            Err(Error::ZeroVariance(p)) => assert_eq!(p, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tabulated_t_quantiles() {
        // two-sided 5% critical values
        for (df, t) in [(1.0, 12.706_204_736_174_7), (10.0, 2.228_138_851_986_27), (30.0, 2.042_272_456_301_24)] {
            assert!((t_two_sided_p(t, df) - 0.05).abs() < 1e-10, "df {df}");
        }
        assert!((t_cdf(0.0, 5.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tabulated_f_quantile() {
        // F(0.95; 2, 10) = 4.102821
        assert!((f_upper_p(4.102_821_015_130_4, 2.0, 10.0) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12);
            fact *= n as f64;
        }
    }

    #[test]
    fn linear_exact_line() {
        let fit = fit_linear(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((fit.coefficient("slope").unwrap().estimate - 1.0).abs() < 1e-12);
        assert!(fit.coefficient("intercept").unwrap().estimate.abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn quadratic_symmetry() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fit = fit_quadratic_orthogonal(&x, &y).unwrap();
        assert!(fit.coefficients[1].estimate.abs() < 1e-9);
        assert!(fit.coefficients[2].estimate > 0.0);
        let fit = fit_quadratic_orthogonal(&x, &x).unwrap();
        assert!(fit.coefficients[2].estimate.abs() < 1e-9);
    }

    #[test]
    fn prediction_band_at_mean() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0 + if *v as i32 % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let fit = fit_linear(&x, &y).unwrap();
        let (yhat, se) = fit.predict(4.5);
        assert!((yhat - 10.0).abs() < 1e-9);
        // at x̄ the SE is σ/√n
        assert!((se - fit.residual_se / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn contrasts_identical_conditions() {
        let obs: Vec<Observation> = ["p1", "p2", "p3"]
            .iter()
            .enumerate()
            .flat_map(|(i, p)| ["a", "b", "c"].map(|c| Observation::new(*p, c, i as f64)))
            .collect();
        let t = pairwise_contrasts(&obs).unwrap();
        assert_eq!(t.f, 0.0);
        assert!(t.pairs.iter().all(|p| p.adjusted_p == 1.0));
        assert!(t.balanced);
    }

    #[test]
    fn single_pair_is_unadjusted() {
        let obs = vec![
            Observation::new("p1", "a", 1.0),
            Observation::new("p1", "b", 2.5),
            Observation::new("p2", "a", 2.0),
            Observation::new("p2", "b", 3.1),
            Observation::new("p3", "a", 0.0),
            Observation::new("p3", "b", 1.9),
        ];
        let t = pairwise_contrasts(&obs).unwrap();
        assert_eq!(t.pairs.len(), 1);
        assert_eq!(t.pairs[0].adjusted_p, t.pairs[0].raw_p);
        // two conditions: F = t²
        assert!((t.f - t.pairs[0].t.powi(2)).abs() < 1e-9);
        assert!((t.p - t.pairs[0].raw_p).abs() < 1e-9);
    }

    #[test]
    fn bland_altman_identity_and_errors() {
        let r = [800.0, 850.0, 900.0, 780.0];
        let rep = bland_altman(&r, &r).unwrap();
        assert_eq!((rep.mean_abs_diff, rep.gaussian_loa, rep.nonparametric_loa), (0.0, 0.0, 0.0));
        assert_eq!(rep.pearson_r, Some(1.0));
        let flat = bland_altman(&[1.0; 4], &r).unwrap();
        assert_eq!(flat.pearson_r, None);
        assert!(bland_altman(&r[..2], &r[..2]).is_err());
        assert!(bland_altman(&r, &r[..3]).is_err());
    }

    #[test]
    fn report_fixture_serialization() {
        let rep = BlandAltmanReport {
            n: 0,
            mean_abs_diff: 1.6,
            mean_diff: 0.0,
            gaussian_loa: 81.0,
            nonparametric_loa: 9.8,
            percentile_limits: None,
            pearson_r: Some(0.94),
        };
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"mean_abs_diff\":1.6"));
        assert!(json.contains("\"gaussian_loa\":81.0"));
        assert!(json.contains("\"nonparametric_loa\":9.8"));
        assert!(json.contains("\"pearson_r\":0.94"));
        assert_eq!(serde_json::from_str::<BlandAltmanReport>(&json).unwrap(), rep);
        let undefined = BlandAltmanReport { pearson_r: None, ..rep };
        assert!(serde_json::to_string(&undefined).unwrap().contains("\"pearson_r\":null"));
    }

    #[test]
    fn analysis_runs_on_small_table() {
        let mut rows = Vec::new();
        for (pi, p) in ["p1", "p2", "p3", "p4"].iter().enumerate() {
            for (ci, c) in ["open", "closed", "easy", "hard"].iter().enumerate() {
                for ch in ["L1", "R1"] {
                    for band in ["theta", "alpha"] {
                        let w = ci as f64 * 10.0 + pi as f64 + if ch == "L1" { 0.3 } else { 0.0 };
                        rows.push(AnalysisRow {
                            participant: p.to_string(),
                            condition: c.to_string(),
                            channel: ch.into(),
                            band: band.into(),
                            power_db: w * 0.1 + ((pi * 7 + ci * 3) % 5) as f64 * 0.05,
                            tlx_total: Some(w),
                            flow_mean: Some(1.0 + ((pi + ci) % 4) as f64),
                        });
                    }
                }
            }
        }
        let rep = analyze(&rows, &AnalysisOptions::default()).unwrap();
        assert_eq!(rep.bands.len(), 2);
        assert_eq!(rep.bands[0].contrasts.pairs.len(), 6);
        assert_eq!(rep.bands[0].workload_linear.as_ref().unwrap().n, 12);
        assert!(format_report(&rep).contains("[theta]"));
    }
}
