//! Standardization and log-wage OLS with absorbed fixed effects.

mod qr;

use std::collections::HashMap;
use std::fmt;

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Corpus, JobAd};
use crate::lexicon::{FeatureKind, FeatureMatrix};
use crate::{Error, Result};

const DEMEAN_TOL: f64 = 1e-10;
const DEMEAN_MAX_PASSES: usize = 10_000;
const PIVOT_TOL: f64 = 1e-10;

/// Column means and sample standard deviations used for the z-transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationMeta {
    pub features: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Z-scores every column with its sample standard deviation.
pub fn standardize(f: &FeatureMatrix) -> Result<(FeatureMatrix, StandardizationMeta)> {
    if f.n_rows() < 2 {
        return Err(Error::TooFewObservations { n: f.n_rows(), required: 1 });
    }
    let p = f.n_cols();
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for c in 0..p {
        let (m, sd) = mean_sd(&f.column(c));
        // Rounding noise on a constant column is far below this.
        if !(sd > 1e-13 * m.abs().max(1.0)) {
            return Err(Error::ZeroVariance(f.feature_names[c].clone()));
        }
        means.push(m);
        sds.push(sd);
    }
    let values = f
        .values()
        .chunks(p)
        .flat_map(|row| row.iter().enumerate().map(|(c, v)| (v - means[c]) / sds[c]).collect::<Vec<_>>())
        .collect();
    let z = FeatureMatrix::new(f.method.clone(), f.ad_ids.clone(), f.feature_names.clone(), FeatureKind::Standardized, values)?;
    Ok((z, StandardizationMeta { features: f.feature_names.clone(), means, sds }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeGroup {
    JobType,
    PostingMonth,
    County,
}

impl FeGroup {
    pub const ALL: [FeGroup; 3] = [FeGroup::JobType, FeGroup::PostingMonth, FeGroup::County];

    pub fn label(self) -> &'static str {
        match self {
            FeGroup::JobType => "Job type FE",
            FeGroup::PostingMonth => "Posting month FE",
            FeGroup::County => "County FE",
        }
    }

    fn key(self, ad: &JobAd) -> String {
        match self {
            FeGroup::JobType => ad.job_type.code().to_string(),
            FeGroup::PostingMonth => format!("{}-{:02}", ad.posting_date.year(), ad.posting_date.month()),
            FeGroup::County => ad.county.trim().to_lowercase(),
        }
    }
}

impl fmt::Display for FeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeGroup::JobType => "job_type",
            FeGroup::PostingMonth => "posting_month",
            FeGroup::County => "county",
        })
    }
}

impl std::str::FromStr for FeGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "job_type" => Ok(FeGroup::JobType),
            "posting_month" => Ok(FeGroup::PostingMonth),
            "county" => Ok(FeGroup::County),
            _ => Err(Error::InvalidParameter(format!("unknown fixed-effect set `{s}`"))),
        }
    }
}

/// The three nested control sets.
pub fn model_fe(model: u8) -> Result<Vec<FeGroup>> {
    match model {
        1 => Ok(vec![]),
        2 => Ok(vec![FeGroup::JobType, FeGroup::PostingMonth]),
        3 => Ok(vec![FeGroup::JobType, FeGroup::PostingMonth, FeGroup::County]),
        _ => Err(Error::InvalidParameter(format!("model must be 1, 2 or 3, got {model}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeType {
    #[default]
    Classical,
    Hc1,
}

#[derive(Debug, Clone)]
pub struct RegressionSpec {
    /// Standardized skill features; rows are matched to the corpus by ad id.
    pub features: FeatureMatrix,
    pub fe_sets: Vec<FeGroup>,
    pub se_type: SeType,
}

/// Group membership for one fixed-effect set, one code per observation.
#[derive(Debug, Clone)]
pub struct FixedEffect {
    pub group: FeGroup,
    pub codes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Absorbed {
    pub group: FeGroup,
    pub levels: usize,
    pub dummies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub min: f64,
    pub max: f64,
    pub sd: f64,
    pub ssr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub n: usize,
    pub coefficients: Vec<Coefficient>,
    pub intercept: Coefficient,
    pub fe_absorbed: Vec<Absorbed>,
    pub se_type: SeType,
    pub dof: usize,
    pub r2: f64,
    pub r2_adj: f64,
    /// Present only when fixed effects were absorbed.
    pub r2_within: Option<f64>,
    pub r2_adj_within: Option<f64>,
    pub residuals: ResidualSummary,
    pub demean_passes: usize,
}

impl RegressionResult {
    pub fn absorbed_dummies(&self) -> usize {
        self.fe_absorbed.iter().map(|a| a.dummies).sum()
    }

    pub fn has_fe(&self, g: FeGroup) -> bool {
        self.fe_absorbed.iter().any(|a| a.group == g)
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> f64 {
    1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0)
}

/// Fits log wage on `spec.features`, absorbing the fixed effects in `spec.fe_sets`.
pub fn fit_ols(spec: &RegressionSpec, corpus: &Corpus) -> Result<RegressionResult> {
    let f = &spec.features;
    let index: HashMap<&str, usize> = corpus.ads.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(f.n_rows());
    for id in &f.ad_ids {
        let i = *index
            .get(id.as_str())
            .ok_or_else(|| Error::Alignment(format!("feature row `{id}` has no advertisement in the corpus")))?;
        rows.push(i);
    }
    if rows.len() != corpus.len() {
        return Err(Error::Alignment(format!("{} feature rows for {} advertisements", rows.len(), corpus.len())));
    }
    let y: Vec<f64> = rows.iter().map(|&i| corpus.ads[i].wage.ln()).collect();
    let fe: Vec<FixedEffect> = spec
        .fe_sets
        .iter()
        .map(|&g| {
            let mut ids: HashMap<String, usize> = HashMap::new();
            let codes = rows
                .iter()
                .map(|&i| {
                    let next = ids.len();
                    *ids.entry(g.key(&corpus.ads[i])).or_insert(next)
                })
                .collect();
            FixedEffect { group: g, codes }
        })
        .collect();
    fit_arrays(&y, f.values(), &f.feature_names, &fe, spec.se_type)
}

fn relabel(codes: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = codes
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Group means of `v` per code, and the largest absolute one.
fn group_means(v: &[f64], codes: &[usize], sizes: &[f64]) -> (Vec<f64>, f64) {
    let mut sums = vec![0.0; sizes.len()];
    for (x, &c) in v.iter().zip(codes) {
        sums[c] += x;
    }
    let means: Vec<f64> = sums.iter().zip(sizes).map(|(s, n)| s / n).collect();
    let max = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (means, max)
}

/// Alternating projections until every group mean of every variable is
/// below the tolerance. Returns the number of passes.
fn demean(vars: &mut [Vec<f64>], fe: &[(Vec<usize>, Vec<f64>)]) -> Result<usize> {
    for pass in 1..=DEMEAN_MAX_PASSES {
        for (codes, sizes) in fe {
            for v in vars.iter_mut() {
                let (means, _) = group_means(v, codes, sizes);
                for (x, &c) in v.iter_mut().zip(codes) {
                    *x -= means[c];
                }
            }
        }
        let worst = fe
            .iter()
            .flat_map(|(codes, sizes)| vars.iter().map(move |v| group_means(v, codes, sizes).1))
            .fold(0.0f64, f64::max);
        if worst < DEMEAN_TOL {
            return Ok(pass);
        }
    }
    Err(Error::InvalidParameter(format!("fixed-effect demeaning did not converge in {DEMEAN_MAX_PASSES} passes")))
}

/// OLS of `y` on the row-major `x` (n × names.len()) plus an intercept,
/// absorbing each fixed-effect set.
pub fn fit_arrays(y: &[f64], x: &[f64], names: &[String], fe: &[FixedEffect], se_type: SeType) -> Result<RegressionResult> {
    let n = y.len();
    let p = names.len();
    if x.len() != n * p {
        return Err(Error::Alignment(format!("design has {} values for {n} rows × {p} columns", x.len())));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in regression data".into()));
    }
    let mut groups = Vec::with_capacity(fe.len());
    let mut absorbed = Vec::with_capacity(fe.len());
    for f in fe {
        if f.codes.len() != n {
            return Err(Error::Alignment(format!("{} has {} codes for {n} rows", f.group, f.codes.len())));
        }
        let (codes, levels) = relabel(&f.codes);
        let mut sizes = vec![0.0; levels];
        for &c in &codes {
            sizes[c] += 1.0;
        }
        groups.push((codes, sizes));
        absorbed.push(Absorbed { group: f.group, levels, dummies: levels.saturating_sub(1) });
    }
    let k_abs: usize = absorbed.iter().map(|a| a.dummies).sum();
    let required = p + k_abs + 1;
    if n <= required {
        return Err(Error::TooFewObservations { n, required });
    }
    let dof = n - required;

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let x_means: Vec<f64> = (0..p).map(|j| (0..n).map(|i| x[i * p + j]).sum::<f64>() / n as f64).collect();
    let mut vars: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
    vars.push(y.iter().map(|v| v - y_mean).collect());
    for (j, m) in x_means.iter().enumerate() {
        vars.push((0..n).map(|i| x[i * p + j] - m).collect());
    }
    let tss: f64 = vars[0].iter().map(|v| v * v).sum();
    let passes = if groups.is_empty() { 0 } else { demean(&mut vars, &groups)? };
    let yd = vars.remove(0);
    let xd = vars;
    let tss_within: f64 = yd.iter().map(|v| v * v).sum();

    let qr = qr::factor(xd.clone(), &yd, PIVOT_TOL);
    if qr.rank < p {
        let mut dropped: Vec<usize> = qr.perm[qr.rank..].to_vec();
        dropped.sort_unstable();
        return Err(Error::RankDeficient(dropped.into_iter().map(|j| names[j].clone()).collect()));
    }
    let beta = qr.solve();
    let resid: Vec<f64> = (0..n).map(|i| yd[i] - (0..p).map(|j| xd[j][i] * beta[j]).sum::<f64>()).collect();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let sigma2 = ssr / dof as f64;
    let xtx_inv = qr.xtx_inverse();

    let cov: Vec<Vec<f64>> = match se_type {
        SeType::Classical => xtx_inv.iter().map(|row| row.iter().map(|v| v * sigma2).collect()).collect(),
        SeType::Hc1 => {
            let mut meat = vec![vec![0.0; p]; p];
            for (i, e) in resid.iter().enumerate() {
                let e2 = e * e;
                for a in 0..p {
                    let xa = xd[a][i] * e2;
                    for b in a..p {
                        meat[a][b] += xa * xd[b][i];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    meat[a][b] = meat[b][a];
                }
            }
            let scale = n as f64 / dof as f64;
            let left = matmul(&xtx_inv, &meat);
            matmul(&left, &xtx_inv).into_iter().map(|r| r.into_iter().map(|v| v * scale).collect()).collect()
        }
    };

    let tdist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let coef = |name: &str, estimate: f64, var: f64| {
        let std_error = var.max(0.0).sqrt();
        let t_stat = estimate / std_error;
        let p_value = if t_stat.is_nan() { 1.0 } else { (2.0 * tdist.sf(t_stat.abs())).min(1.0) };
        Coefficient { name: name.to_string(), estimate, std_error, t_stat, p_value, stars: stars(p_value).to_string() }
    };
    let coefficients: Vec<Coefficient> = (0..p).map(|j| coef(&names[j], beta[j], cov[j][j])).collect();

    let b0 = y_mean - beta.iter().zip(&x_means).map(|(b, m)| b * m).sum::<f64>();
    let var_ybar = match se_type {
        SeType::Classical => sigma2 / n as f64,
        SeType::Hc1 => ssr / (n as f64 * dof as f64),
    };
    let mut var_b0 = var_ybar;
    for a in 0..p {
        for b in 0..p {
            var_b0 += x_means[a] * cov[a][b] * x_means[b];
        }
    }
    let intercept = coef("Constant", b0, var_b0);

    let r2 = 1.0 - ssr / tss;
    let r2_adj = adjusted_r2(r2, n, p + k_abs);
    let (r2_within, r2_adj_within) = if groups.is_empty() {
        (None, None)
    } else {
        let r2w = 1.0 - ssr / tss_within;
        (Some(r2w), Some(adjusted_r2(r2w, n, p)))
    };
    let residuals = ResidualSummary {
        min: resid.iter().copied().fold(f64::INFINITY, f64::min),
        max: resid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sd: sigma2.sqrt(),
        ssr,
    };
    Ok(RegressionResult {
        n,
        coefficients,
        intercept,
        fe_absorbed: absorbed,
        se_type,
        dof,
        r2,
        r2_adj,
        r2_within,
        r2_adj_within,
        residuals,
        demean_passes: passes,
    })
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b.len();
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| (0..m).map(|k| row[k] * b[k][j]).sum()).collect())
        .collect()
}

/// "+12.4% per SD, p<0.01" style rendering of one standardized coefficient.
pub fn interpret_coefficient(beta: f64, stars: &str) -> String {
    let pct = format!("{:.1}", (100.0 * beta).abs());
    let sign = if pct.trim_start_matches(['0', '.']).is_empty() {
        ""
    } else if beta > 0.0 {
        "+"
    } else {
        "\u{2212}"
    };
    let mut out = format!("{sign}{pct}% per SD");
    match stars {
        "***" => out.push_str(", p<0.01"),
        "**" => out.push_str(", p<0.05"),
        "*" => out.push_str(", p<0.1"),
        _ => {}
    }
    out
}

/// One line per skill: the wage change associated with a one-SD increase.
pub fn coefficient_interpretation(result: &RegressionResult) -> String {
    result
        .coefficients
        .iter()
        .map(|c| format!("{}: {}\n", c.name, interpret_coefficient(c.estimate, &c.stars)))
        .collect()
}

/// Markdown table with one column per model: coefficients with standard
/// errors and stars, FE indicator rows, fit statistics and N.
pub fn render_table(title: &str, models: &[(String, &RegressionResult)]) -> String {
    let mut out = format!("### {title}\n\n|  |");
    for (name, _) in models {
        out.push_str(&format!(" {name} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(models.len()));
    out.push('\n');
    let Some((_, first)) = models.first() else { return out };
    let mut rows: Vec<&str> = first.coefficients.iter().map(|c| c.name.as_str()).collect();
    rows.push("Constant");
    for name in rows {
        let mut est = format!("| {name} |");
        let mut se = String::from("|  |");
        for (_, m) in models {
            let c = if name == "Constant" { Some(&m.intercept) } else { m.coefficient(name) };
            match c {
                Some(c) => {
                    est.push_str(&format!(" {:.3}{} |", c.estimate, c.stars));
                    se.push_str(&format!(" ({:.3}) |", c.std_error));
                }
                None => {
                    est.push_str(" |");
                    se.push_str(" |");
                }
            }
        }
        out.push_str(&est);
        out.push('\n');
        out.push_str(&se);
        out.push('\n');
    }
    for g in FeGroup::ALL {
        out.push_str(&format!("| {} |", g.label()));
        for (_, m) in models {
            out.push_str(if m.has_fe(g) { " Yes |" } else { " No |" });
        }
        out.push('\n');
    }
    out.push_str("| R2adj |");
    for (_, m) in models {
        out.push_str(&format!(" {:.3} |", m.r2_adj));
    }
    out.push_str("\n| R2adj within |");
    for (_, m) in models {
        match m.r2_adj_within {
            Some(v) => out.push_str(&format!(" {v:.3} |")),
            None => out.push_str(" . |"),
        }
    }
    out.push_str("\n| Number of observations |");
    for (_, m) in models {
        out.push_str(&format!(" {} |", m.n));
    }
    out.push('\n');
    out
}
