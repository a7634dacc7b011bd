//! Monte Carlo and asymptotic-variance studies, emitted as CSV tables.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{normalized_asymptotic_variance, AggregationPlan, DenominatorMode, ScaleEstimator};
use crate::io::fmt_f64;
use crate::models::{DriftSpec, ModelSpec};
use crate::seqalg::{validate_clt, VariationSequence};
use crate::simulate::{Sampler, SimConfig};

/// Replicates per configuration at desk scale.
pub const DESK_REPLICATES: usize = 2000;
/// Replicates per configuration at full scale.
pub const FULL_REPLICATES: usize = 10_000;

fn default_replicates() -> usize {
    DESK_REPLICATES
}

fn default_alpha() -> f64 {
    1.0
}

/// Evenly spaced values `from, from + step, ..., to` within `(0, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGrid {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl Default for SGrid {
    fn default() -> Self {
        Self {
            from: 0.1,
            to: 1.9,
            step: 0.1,
        }
    }
}

impl SGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.from > 0.0) || !(self.to < 2.0) || self.to < self.from {
            return Err(Error::InvalidParameter(format!(
                "s-grid {}..{} step {} must lie within (0, 2)",
                self.from, self.to, self.step
            )));
        }
        let count = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        // round to 12 decimals so 0.1 + 2 * 0.1 prints as 0.3
        Ok((0..count)
            .map(|k| ((self.from + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

/// Study description, tagged by `"study"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "kebab-case")]
pub enum StudyConfig {
    Histogram(HistogramConfig),
    VarianceCurve(VarianceCurveConfig),
    AggregationCurve(AggregationCurveConfig),
    DriftRobustness(DriftConfig),
}

impl StudyConfig {
    /// Sets the replicate count of Monte Carlo studies.
    pub fn set_replicates(&mut self, count: usize) {
        match self {
            StudyConfig::Histogram(c) => c.replicates = count,
            StudyConfig::DriftRobustness(c) => c.replicates = count,
            _ => {}
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            StudyConfig::Histogram(c) => Some(c.seed),
            StudyConfig::DriftRobustness(c) => Some(c.seed),
            _ => None,
        }
    }

    pub fn run(&self) -> Result<Table> {
        match self {
            StudyConfig::Histogram(c) => Ok(histogram_study(c)?.to_table()),
            StudyConfig::VarianceCurve(c) => Ok(variance_curve_study(c)?.to_table()),
            StudyConfig::AggregationCurve(c) => Ok(aggregation_curve_study(c)?.to_table()),
            StudyConfig::DriftRobustness(c) => Ok(drift_robustness_study(c)?.to_table()),
        }
    }
}

/// Finite-sample distribution of `C_hat` for several models and sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub models: Vec<ModelSpec>,
    pub ns: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Sequence spec; defaults to `elem{D+1}` for each model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<String>,
    #[serde(default)]
    pub denominator: DenominatorMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// Exponential and the two Matérn models, all with local scale `c`.
pub fn reference_models(c: f64) -> Vec<ModelSpec> {
    vec![
        ModelSpec::Exponential { c },
        ModelSpec::matern32_with_scale(c),
        ModelSpec::matern52_with_scale(c),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance; NaN when `count < 2`.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Moments of `values`, summed in index order.
pub fn summary_stats(values: &[f64]) -> SummaryStats {
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let degenerate = n < 2 || m2 == 0.0;
    SummaryStats {
        count: n,
        mean,
        variance: if n < 2 { f64::NAN } else { m2 * nf / (nf - 1.0) },
        skewness: if degenerate { f64::NAN } else { m3 / m2.powf(1.5) },
        excess_kurtosis: if degenerate {
            f64::NAN
        } else {
            m4 / (m2 * m2) - 3.0
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramCell {
    pub model: ModelSpec,
    pub n: usize,
    pub sequence: String,
    pub c_hats: Vec<f64>,
    pub stats: SummaryStats,
    pub theory_mean: f64,
    pub theory_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramResult {
    pub cells: Vec<HistogramCell>,
}

fn model_label(m: &ModelSpec) -> String {
    serde_json::to_string(m).expect("model serializes")
}

fn resolve_sequence(spec: &Option<String>, d: usize) -> Result<VariationSequence> {
    match spec {
        Some(s) => VariationSequence::from_spec(s),
        None => VariationSequence::elementary(d + 1),
    }
}

/// Estimates `C` on `replicates` draws per `(model, n)`. Replicate `r` uses
/// stream `r` of `seed` in every cell, so cells are paired across models and sizes.
pub fn histogram_study(config: &HistogramConfig) -> Result<HistogramResult> {
    if config.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be >= 1".into()));
    }
    let mut cells = Vec::new();
    for model in &config.models {
        let local = model.local_behavior();
        let a = resolve_sequence(&config.sequence, local.d)?;
        let clt = validate_clt(&a, local.d, local.s);
        if !clt.valid {
            return Err(Error::CltConditionViolated {
                order: a.order(),
                d: local.d,
                s: local.s,
            });
        }
        let vtilde = normalized_asymptotic_variance(&a, local.d, local.s)?;
        let est = ScaleEstimator::new(&a, local.d, local.s, config.denominator)?;
        for &n in &config.ns {
            let sampler = Sampler::new(&SimConfig::with_alpha(*model, n, config.alpha, config.seed))?;
            let c_hats = (0..config.replicates as u64)
                .into_par_iter()
                .map(|r| est.estimate(&sampler.sample(r)).map(|(c, _)| c))
                .collect::<Result<Vec<_>>>()?;
            cells.push(HistogramCell {
                model: *model,
                n,
                sequence: a.label().to_string(),
                stats: summary_stats(&c_hats),
                c_hats,
                theory_mean: local.c,
                theory_variance: local.c * local.c * vtilde / n as f64,
            });
        }
    }
    Ok(HistogramResult { cells })
}

impl HistogramResult {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "kind",
            "model",
            "n",
            "sequence",
            "replicate",
            "c_hat",
            "mean",
            "variance",
            "skewness",
            "excess_kurtosis",
            "theory_mean",
            "theory_variance",
        ]);
        t.comment("finite-sample distribution of C_hat");
        t.comment("kind=replicate rows: one estimate per simulated path (c_hat)");
        t.comment("kind=summary rows: empirical mean/variance/skewness/excess_kurtosis over replicates; theory_variance = C^2 vtilde / n");
        for cell in &self.cells {
            let model = model_label(&cell.model);
            for (r, c) in cell.c_hats.iter().enumerate() {
                t.push(vec![
                    "replicate".into(),
                    model.clone(),
                    cell.n.to_string(),
                    cell.sequence.clone(),
                    r.to_string(),
                    num(*c),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
            }
            t.push(vec![
                "summary".into(),
                model,
                cell.n.to_string(),
                cell.sequence.clone(),
                String::new(),
                String::new(),
                num(cell.stats.mean),
                num(cell.stats.variance),
                num(cell.stats.skewness),
                num(cell.stats.excess_kurtosis),
                num(cell.theory_mean),
                num(cell.theory_variance),
            ]);
        }
        t
    }
}

/// Normalized asymptotic variance as a function of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceCurveConfig {
    #[serde(rename = "D", alias = "d", default)]
    pub d: usize,
    pub sequences: Vec<String>,
    #[serde(default)]
    pub s_grid: SGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub label: String,
    pub s: f64,
    pub vtilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceCurve {
    pub d: usize,
    pub points: Vec<CurvePoint>,
    pub grid: Vec<f64>,
}

/// Grid points at which `a` satisfies the central limit condition.
fn valid_grid(a: &VariationSequence, d: usize, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .copied()
        .filter(|&s| validate_clt(a, d, s).valid)
        .collect()
}

pub fn variance_curve(sequences: &[VariationSequence], d: usize, grid: &SGrid) -> Result<VarianceCurve> {
    let grid = grid.values()?;
    let jobs: Vec<(usize, f64)> = sequences
        .iter()
        .enumerate()
        .flat_map(|(k, a)| valid_grid(a, d, &grid).into_iter().map(move |s| (k, s)))
        .collect();
    let points = jobs
        .par_iter()
        .map(|&(k, s)| {
            Ok(CurvePoint {
                label: sequences[k].label().to_string(),
                s,
                vtilde: normalized_asymptotic_variance(&sequences[k], d, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceCurve { d, points, grid })
}

pub fn variance_curve_study(config: &VarianceCurveConfig) -> Result<VarianceCurve> {
    let seqs = parse_all(&config.sequences)?;
    variance_curve(&seqs, config.d, &config.s_grid)
}

fn parse_all(specs: &[String]) -> Result<Vec<VariationSequence>> {
    specs.iter().map(|s| VariationSequence::from_spec(s)).collect()
}

impl VarianceCurve {
    pub fn values_for(&self, label: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.label == label)
            .map(|p| (p.s, p.vtilde))
            .collect()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["sequence", "D", "s", "vtilde", "efficiency"]);
        t.comment("normalized asymptotic variance vtilde_{a,s}; efficiency = 2 / vtilde");
        t.comment("sequence=cramer-rao rows give the lower bound 2");
        for p in &self.points {
            t.push(vec![
                p.label.clone(),
                self.d.to_string(),
                num(p.s),
                num(p.vtilde),
                num(2.0 / p.vtilde),
            ]);
        }
        for s in &self.grid {
            t.push(vec![
                "cramer-rao".into(),
                self.d.to_string(),
                num(*s),
                num(2.0),
                num(1.0),
            ]);
        }
        t
    }
}

/// Individual and aggregated variances for sets of sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationCurveConfig {
    #[serde(rename = "D", alias = "d", default)]
    pub d: usize,
    pub sets: Vec<Vec<String>>,
    #[serde(default)]
    pub s_grid: SGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationPoint {
    pub set: usize,
    pub s: f64,
    pub labels: Vec<String>,
    pub individual: Vec<f64>,
    /// `None` when the covariance matrix was rejected.
    pub lambda: Option<Vec<f64>>,
    pub vtilde_agg: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationCurve {
    pub d: usize,
    pub points: Vec<AggregationPoint>,
}

pub fn aggregation_curve(
    sets: &[Vec<VariationSequence>],
    d: usize,
    grid: &SGrid,
) -> Result<AggregationCurve> {
    let grid = grid.values()?;
    let mut jobs = Vec::new();
    for (k, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::InvalidParameter(format!("sequence set {k} is empty")));
        }
        for &s in &grid {
            if set.iter().all(|a| validate_clt(a, d, s).valid) {
                jobs.push((k, s));
            }
        }
    }
    let points = jobs
        .par_iter()
        .map(|&(k, s)| {
            let set = &sets[k];
            let individual = set
                .iter()
                .map(|a| normalized_asymptotic_variance(a, d, s))
                .collect::<Result<Vec<_>>>()?;
            let labels = set.iter().map(|a| a.label().to_string()).collect();
            Ok(match AggregationPlan::reduced(set, d, s) {
                Ok(plan) => AggregationPoint {
                    set: k,
                    s,
                    labels,
                    individual,
                    status: if plan.dropped.is_empty() {
                        "ok".into()
                    } else {
                        format!("reduced: dropped {}", plan.dropped.join(" "))
                    },
                    lambda: Some(plan.lambda),
                    vtilde_agg: Some(plan.vtilde_agg),
                },
                Err(e @ Error::SingularMatrix(_)) => AggregationPoint {
                    set: k,
                    s,
                    labels,
                    individual,
                    lambda: None,
                    vtilde_agg: None,
                    status: format!("flagged: {e}"),
                },
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregationCurve { d, points })
}

pub fn aggregation_curve_study(config: &AggregationCurveConfig) -> Result<AggregationCurve> {
    let sets = config
        .sets
        .iter()
        .map(|s| parse_all(s))
        .collect::<Result<Vec<_>>>()?;
    aggregation_curve(&sets, config.d, &config.s_grid)
}

impl AggregationCurve {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["set", "D", "s", "member", "vtilde", "lambda", "status"]);
        t.comment(
            "per set and s: individual vtilde and weight lambda for each member, then the aggregated row",
        );
        t.comment("member=aggregated rows: vtilde_agg = 1 / (1' R^-1 1); status flags near-singular R");
        for p in &self.points {
            for (j, label) in p.labels.iter().enumerate() {
                t.push(vec![
                    p.set.to_string(),
                    self.d.to_string(),
                    num(p.s),
                    label.clone(),
                    num(p.individual[j]),
                    p.lambda.as_ref().map(|l| num(l[j])).unwrap_or_default(),
                    p.status.clone(),
                ]);
            }
            t.push(vec![
                p.set.to_string(),
                self.d.to_string(),
                num(p.s),
                "aggregated".into(),
                p.vtilde_agg.map(num).unwrap_or_default(),
                String::new(),
                p.status.clone(),
            ]);
        }
        t
    }
}

/// Paired runs with and without a deterministic drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub model: ModelSpec,
    pub ns: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub denominator: DenominatorMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCell {
    pub n: usize,
    pub sequence: String,
    pub plain: Vec<f64>,
    pub drifted: Vec<f64>,
    /// `mean(drifted - plain)`.
    pub mc_bias: f64,
    /// `sum_i Delta_{a,i}(f)^2 / denominator`, the exact shift of `E[C_hat]`.
    pub exact_bias: f64,
    pub max_rel_change: f64,
    /// `K_{M,n} = sup_{[0, n^(1-alpha)]} |f^(M)|`.
    pub k_sup: f64,
    /// `n^(-1/4) delta^(D - M + s/2)`; the drift is negligible when `k_sup` is small against it.
    pub k_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftResult {
    pub cells: Vec<DriftCell>,
}

pub fn drift_robustness_study(config: &DriftConfig) -> Result<DriftResult> {
    if config.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be >= 1".into()));
    }
    let local = config.model.local_behavior();
    let a = resolve_sequence(&config.sequence, local.d)?;
    if a.order() <= local.d {
        return Err(Error::InvalidParameter(format!(
            "{} has order {} but the model needs order > D = {}",
            a.label(),
            a.order(),
            local.d
        )));
    }
    let est = ScaleEstimator::new(&a, local.d, local.s, config.denominator)?;
    let m = a.order();
    let mut cells = Vec::new();
    for &n in &config.ns {
        let sampler = Sampler::new(&SimConfig::with_alpha(config.model, n, config.alpha, config.seed))?;
        let delta = sampler.delta();
        let pairs = (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let plain = sampler.sample_with_drift(config.seed, r, None);
                let (c0, _) = est.estimate(&plain)?;
                let c1 = match &config.drift {
                    Some(f) => est.estimate(&plain.with_added(|t| f.value(t)))?.0,
                    None => c0,
                };
                Ok((c0, c1))
            })
            .collect::<Result<Vec<_>>>()?;
        let (plain, drifted): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let diffs: Vec<f64> = drifted.iter().zip(&plain).map(|(b, a)| b - a).collect();
        let max_rel_change = diffs
            .iter()
            .zip(&plain)
            .map(|(d, p)| (d / p).abs())
            .fold(0.0, f64::max);
        let (exact_bias, k_sup) = match &config.drift {
            Some(f) => {
                let drift_path = crate::estimator::PathSample::new(
                    delta,
                    (1..=n).map(|j| f.value(j as f64 * delta)).collect(),
                )?;
                let v = crate::estimator::quadratic_variation(&drift_path, &a)?;
                let t_max = (n as f64).powf(1.0 - config.alpha);
                (v / est.denominator(n, delta), f.sup_derivative(m, t_max))
            }
            None => (0.0, 0.0),
        };
        cells.push(DriftCell {
            n,
            sequence: a.label().to_string(),
            mc_bias: summary_stats(&diffs).mean,
            exact_bias,
            max_rel_change,
            k_sup,
            k_threshold: (n as f64).powf(-0.25) * delta.powf(local.d as f64 - m as f64 + local.s / 2.0),
            plain,
            drifted,
        });
    }
    Ok(DriftResult { cells })
}

impl DriftResult {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "kind",
            "n",
            "sequence",
            "replicate",
            "c_hat_plain",
            "c_hat_drift",
            "abs_change",
            "mc_bias",
            "exact_bias",
            "max_rel_change",
            "k_sup",
            "k_threshold",
        ]);
        t.comment("paired estimates on identical noise with and without drift");
        t.comment("exact_bias = sum_i Delta_{a,i}(f)^2 / denominator; k_sup = sup |f^(M)| over [0, n^(1-alpha)]; k_threshold = n^(-1/4) delta^(D-M+s/2)");
        for c in &self.cells {
            for (r, (p, d)) in c.plain.iter().zip(&c.drifted).enumerate() {
                t.push(vec![
                    "replicate".into(),
                    c.n.to_string(),
                    c.sequence.clone(),
                    r.to_string(),
                    num(*p),
                    num(*d),
                    num((d - p).abs()),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
            }
            t.push(vec![
                "summary".into(),
                c.n.to_string(),
                c.sequence.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                num(c.mc_bias),
                num(c.exact_bias),
                num(c.max_rel_change),
                num(c.k_sup),
                num(c.k_threshold),
            ]);
        }
        t
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        fmt_f64(x)
    }
}

/// CSV table with `#` comment lines ahead of the header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: &str) {
        self.comments.push(line.to_string());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::WriterBuilder::new().from_writer(&mut out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        drop(w);
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }
}
