//! Quadratic a-variations and the moment estimator of the scale parameter `C`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calculus::{remainder_power_closed, series_r2, DEFAULT_RTOL};
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::seqalg::{validate_clt, VariationSequence};

/// Largest `n` accepted by [`exact_variation_moments`].
pub const EXACT_MOMENTS_MAX_N: usize = 5000;
/// Smallest admissible eigenvalue ratio of an aggregation matrix.
pub const EIGEN_RATIO_GUARD: f64 = 1e-10;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

/// Observations `X(j delta)`, `j = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub delta: f64,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl PathSample {
    pub fn new(delta: f64, values: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a path needs at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at index {}",
                j + 1
            )));
        }
        Ok(Self {
            delta,
            values,
            alpha: None,
        })
    }

    /// Grid `delta = n^(-alpha)`.
    pub fn with_alpha(alpha: f64, values: Vec<f64>) -> Result<Self> {
        let delta = (values.len() as f64).powf(-alpha);
        let mut p = Self::new(delta, values)?;
        p.alpha = Some(alpha);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.delta
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.len()).map(|j| self.time(j)).collect()
    }

    /// A copy with `c * X`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// A copy with `f(t_j)` added to each value.
    pub fn with_added<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v + f(self.time(k + 1)))
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }
}

/// Which count normalizes `V_{a,n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DenominatorMode {
    /// `n`, as in the moment estimator's definition.
    #[default]
    #[serde(rename = "paper-n")]
    PaperN,
    /// `n' = n - L + 1`, the number of filtered observations.
    #[serde(rename = "unbiased-nprime")]
    UnbiasedNPrime,
}

impl DenominatorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DenominatorMode::PaperN => "paper-n",
            DenominatorMode::UnbiasedNPrime => "unbiased-nprime",
        }
    }

    fn count(&self, n: usize, n_prime: usize) -> usize {
        match self {
            DenominatorMode::PaperN => n,
            DenominatorMode::UnbiasedNPrime => n_prime,
        }
    }
}

impl fmt::Display for DenominatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DenominatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-n" | "n" => Ok(DenominatorMode::PaperN),
            "unbiased-nprime" | "nprime" => Ok(DenominatorMode::UnbiasedNPrime),
            other => Err(Error::Parse(format!(
                "unknown denominator mode '{other}' (expected paper-n or unbiased-nprime)"
            ))),
        }
    }
}

/// `V_{a,n} = sum_{i=1}^{n'} (sum_j a_j X((i + j) delta))^2`, summed in index order.
pub fn quadratic_variation(path: &PathSample, a: &VariationSequence) -> Result<f64> {
    let taps = a.coefficients();
    if path.len() < taps.len() {
        return Err(Error::PathTooShort {
            n: path.len(),
            len: taps.len(),
        });
    }
    let mut total = 0.0;
    for window in path.values.windows(taps.len()) {
        let d: f64 = window.iter().zip(taps).map(|(x, c)| x * c).sum();
        total += d * d;
    }
    Ok(total)
}

/// `R(0, 1, 2D, |.|^s, a^{2*})`.
pub fn central_remainder(a: &VariationSequence, d: usize, s: f64) -> Result<f64> {
    if a.order() <= d {
        return Err(Error::InvalidParameter(format!(
            "{} has order {} but D = {d} needs order > D",
            a.label(),
            a.order()
        )));
    }
    remainder_power_closed(0, d, s, &a.self_convolution())
}

/// Moment estimator for one sequence with its normalizing constant cached.
#[derive(Debug, Clone)]
pub struct ScaleEstimator {
    sequence: VariationSequence,
    d: usize,
    s: f64,
    mode: DenominatorMode,
    /// `(-1)^D R(0, 1, 2D, |.|^s, a^{2*})`, positive whenever `M > D`.
    signed_r0: f64,
}

impl ScaleEstimator {
    pub fn new(a: &VariationSequence, d: usize, s: f64, mode: DenominatorMode) -> Result<Self> {
        let r0 = central_remainder(a, d, s)?;
        let signed_r0 = if d.is_multiple_of(2) { r0 } else { -r0 };
        assert!(
            signed_r0 > 0.0,
            "(-1)^D R(0, 1, 2D, |.|^s, a^2*) must be positive for M > D (got {signed_r0})"
        );
        Ok(Self {
            sequence: a.clone(),
            d,
            s,
            mode,
            signed_r0,
        })
    }

    pub fn sequence(&self) -> &VariationSequence {
        &self.sequence
    }

    pub fn mode(&self) -> DenominatorMode {
        self.mode
    }

    /// `N (-1)^D delta^(2D+s) R(0, 1, 2D, |.|^s, a^{2*})`.
    pub fn denominator(&self, n: usize, delta: f64) -> f64 {
        let n_prime = n + 1 - self.sequence.len();
        let count = self.mode.count(n, n_prime) as f64;
        count * delta.powf(2.0 * self.d as f64 + self.s) * self.signed_r0
    }

    /// Returns `(C_hat, V_an)`.
    pub fn estimate(&self, path: &PathSample) -> Result<(f64, f64)> {
        let v = quadratic_variation(path, &self.sequence)?;
        Ok((v / self.denominator(path.len(), path.delta), v))
    }
}

/// Aggregation details attached to an aggregated estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationSummary {
    pub sequences: Vec<String>,
    pub lambda: Vec<f64>,
    pub individual_c_hat: Vec<f64>,
    pub r_matrix: Vec<Vec<f64>>,
    /// Members given zero weight because they add no asymptotic information.
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub c_hat: f64,
    /// `V_{a,n}`; for aggregated estimates the `lambda`-weighted sum.
    pub v_an: f64,
    pub n: usize,
    pub n_prime: usize,
    pub delta: f64,
    pub d: usize,
    pub s: f64,
    pub denominator_mode: DenominatorMode,
    /// `None` when the central limit condition fails.
    pub vtilde: Option<f64>,
    pub std_error: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub ci_level: f64,
    pub validity: bool,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationSummary>,
}

impl EstimateReport {
    /// Recomputes the confidence interval `C_hat -/+ z std_error` at `level`.
    pub fn with_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("CI level {level} not in (0, 1)")));
        }
        self.ci_level = level;
        self.ci = self.std_error.map(|se| {
            let z = normal_quantile(0.5 + level / 2.0);
            (self.c_hat - z * se, self.c_hat + z * se)
        });
        Ok(self)
    }

    pub const CSV_HEADER: &'static str =
        "c_hat,v_an,n,n_prime,delta,D,s,denominator_mode,vtilde,std_error,ci_lo,ci_hi,ci_level,valid";

    /// One CSV row matching [`EstimateReport::CSV_HEADER`]; missing values are empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(crate::io::fmt_f64).unwrap_or_default();
        let f = crate::io::fmt_f64;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f(self.c_hat),
            f(self.v_an),
            self.n,
            self.n_prime,
            f(self.delta),
            self.d,
            f(self.s),
            self.denominator_mode,
            opt(self.vtilde),
            opt(self.std_error),
            opt(self.ci.map(|c| c.0)),
            opt(self.ci.map(|c| c.1)),
            f(self.ci_level),
            self.validity
        )
    }
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `C_hat = V_{a,n} / [N (-1)^D delta^(2D+s) R(0, 1, 2D, |.|^s, a^{2*})]`.
///
/// A failed central limit condition is reported through `validity` and
/// `diagnostics`; the point estimate is still returned.
pub fn estimate_c(
    path: &PathSample,
    a: &VariationSequence,
    d: usize,
    s: f64,
    mode: DenominatorMode,
) -> Result<EstimateReport> {
    check_s(s)?;
    let est = ScaleEstimator::new(a, d, s, mode)?;
    let (c_hat, v_an) = est.estimate(path)?;
    let clt = validate_clt(a, d, s);
    let vtilde = if clt.valid {
        Some(normalized_asymptotic_variance(a, d, s)?)
    } else {
        None
    };
    let n = path.len();
    let report = EstimateReport {
        c_hat,
        v_an,
        n,
        n_prime: n + 1 - a.len(),
        delta: path.delta,
        d,
        s,
        denominator_mode: mode,
        vtilde,
        std_error: vtilde.map(|v| c_hat * (v / n as f64).sqrt()),
        ci: None,
        ci_level: DEFAULT_CI_LEVEL,
        validity: clt.valid,
        diagnostics: if clt.valid { vec![] } else { vec![clt.diagnostic] },
        aggregation: None,
    };
    report.with_level(DEFAULT_CI_LEVEL)
}

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("s = {s} must lie in (0, 2)")))
    }
}

/// `v~_{a,s} = 2 sum_i R(i, 1, 2D, |.|^s, a^{2*})^2 / R(0, 1, 2D, |.|^s, a^{2*})^2`.
pub fn normalized_asymptotic_variance(a: &VariationSequence, d: usize, s: f64) -> Result<f64> {
    check_s(s)?;
    let b = a.self_convolution();
    let r0 = central_remainder(a, d, s)?;
    let series = series_r2(&b, d, s, DEFAULT_RTOL)?;
    Ok(2.0 * series.value / (r0 * r0))
}

/// Normalized asymptotic covariance matrix of `sqrt(n) C_{a^(j),n} / C`.
pub fn asymptotic_r_matrix(sequences: &[VariationSequence], d: usize, s: f64) -> Result<DMatrix<f64>> {
    check_s(s)?;
    if sequences.is_empty() {
        return Err(Error::InvalidParameter("no sequences given".into()));
    }
    for a in sequences {
        let clt = validate_clt(a, d, s);
        if !clt.valid {
            return Err(Error::CltConditionViolated {
                order: a.order(),
                d,
                s,
            });
        }
    }
    let r0: Vec<f64> = sequences
        .iter()
        .map(|a| central_remainder(a, d, s))
        .collect::<Result<_>>()?;
    let k = sequences.len();
    let mut r = DMatrix::zeros(k, k);
    for j in 0..k {
        for l in j..k {
            let b = sequences[j].convolve(&sequences[l]);
            let v = 2.0 * series_r2(&b, d, s, DEFAULT_RTOL)?.value / (r0[j] * r0[l]);
            r[(j, l)] = v;
            r[(l, j)] = v;
        }
    }
    Ok(r)
}

/// Minimum-variance unit-sum weights `R^{-1} 1 / (1' R^{-1} 1)` and the
/// resulting variance `1 / (1' R^{-1} 1)`.
pub fn aggregate(r: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let k = r.nrows();
    if k == 0 || r.ncols() != k {
        return Err(Error::InvalidParameter(format!(
            "aggregation matrix must be square and non-empty, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let scale = r.amax();
    for j in 0..k {
        for l in 0..j {
            if (r[(j, l)] - r[(l, j)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidParameter(
                    "aggregation matrix is not symmetric".into(),
                ));
            }
        }
    }
    let eig = SymmetricEigen::new(r.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= EIGEN_RATIO_GUARD * max {
        return Err(Error::SingularMatrix(format!(
            "eigenvalue ratio {:e} is below {EIGEN_RATIO_GUARD:e}; the sequences are (nearly) \
             linearly dependent, drop one of them",
            min / max
        )));
    }
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("Cholesky factorization failed; drop a sequence".into()))?;
    let x = chol.solve(&DVector::from_element(k, 1.0));
    let total = x.sum();
    let lambda: Vec<f64> = x.iter().map(|v| v / total).collect();
    Ok((lambda, 1.0 / total))
}

fn eigen_ratio_ok(r: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(r.clone());
    let max = eig.eigenvalues.max();
    max > 0.0 && eig.eigenvalues.min() > EIGEN_RATIO_GUARD * max
}

/// Greedy maximal subset (in index order) whose principal submatrix passes
/// the eigenvalue-ratio guard.
pub fn independent_subset(r: &DMatrix<f64>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..r.nrows() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = r.select_rows(&trial).select_columns(&trial);
        if eigen_ratio_ok(&sub) {
            kept = trial;
        }
    }
    kept
}

/// Like [`aggregate`], but members that make `R` singular are given weight
/// zero instead of failing. Exact singularity arises for sequence sets whose
/// squared transfer functions are linearly dependent (e.g. `seq123` against
/// `elem1` and `elem2`); the dropped members carry no extra asymptotic
/// information, so the optimal variance is unchanged. Returns the weights,
/// the variance and the dropped indices.
pub fn aggregate_reduced(r: &DMatrix<f64>) -> Result<(Vec<f64>, f64, Vec<usize>)> {
    let kept = independent_subset(r);
    if kept.is_empty() {
        return Err(Error::SingularMatrix("no member has positive variance".into()));
    }
    let sub = r.select_rows(&kept).select_columns(&kept);
    let (sub_lambda, vtilde) = aggregate(&sub)?;
    let mut lambda = vec![0.0; r.nrows()];
    for (k, &j) in kept.iter().enumerate() {
        lambda[j] = sub_lambda[k];
    }
    let dropped = (0..r.nrows()).filter(|j| !kept.contains(j)).collect();
    Ok((lambda, vtilde, dropped))
}

/// Sequences, their asymptotic covariance matrix and the optimal weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationPlan {
    #[serde(skip)]
    pub sequences: Vec<VariationSequence>,
    pub labels: Vec<String>,
    pub d: usize,
    pub s: f64,
    #[serde(serialize_with = "serialize_matrix")]
    pub r: DMatrix<f64>,
    pub lambda: Vec<f64>,
    pub vtilde_agg: f64,
    pub dropped: Vec<String>,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    matrix_rows(m).serialize(ser)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl AggregationPlan {
    /// Strict plan: fails when `R` is singular.
    pub fn new(sequences: &[VariationSequence], d: usize, s: f64) -> Result<Self> {
        let r = asymptotic_r_matrix(sequences, d, s)?;
        let (lambda, vtilde_agg) = aggregate(&r)?;
        Ok(Self {
            sequences: sequences.to_vec(),
            labels: sequences.iter().map(|a| a.label().to_string()).collect(),
            d,
            s,
            r,
            lambda,
            vtilde_agg,
            dropped: vec![],
        })
    }

    /// Plan that zero-weights members spanned by the others (see
    /// [`aggregate_reduced`]). Repeated sequences are still rejected.
    pub fn reduced(sequences: &[VariationSequence], d: usize, s: f64) -> Result<Self> {
        for (j, a) in sequences.iter().enumerate() {
            if let Some(b) = sequences[..j]
                .iter()
                .find(|b| b.coefficients() == a.coefficients())
            {
                return Err(Error::SingularMatrix(format!(
                    "sequences {} and {} are identical; drop one of them",
                    b.label(),
                    a.label()
                )));
            }
        }
        let r = asymptotic_r_matrix(sequences, d, s)?;
        let (lambda, vtilde_agg, dropped) = aggregate_reduced(&r)?;
        Ok(Self {
            sequences: sequences.to_vec(),
            labels: sequences.iter().map(|a| a.label().to_string()).collect(),
            d,
            s,
            r,
            lambda,
            vtilde_agg,
            dropped: dropped
                .iter()
                .map(|&j| sequences[j].label().to_string())
                .collect(),
        })
    }

    /// `lambda' R lambda` for arbitrary weights.
    pub fn variance_of(&self, weights: &[f64]) -> f64 {
        let w = DVector::from_column_slice(weights);
        (w.transpose() * &self.r * &w)[(0, 0)]
    }
}

/// `sum_j lambda*_j C_{a^(j),n}` with the weights of [`AggregationPlan::reduced`].
pub fn estimate_c_aggregated(
    path: &PathSample,
    sequences: &[VariationSequence],
    d: usize,
    s: f64,
    mode: DenominatorMode,
) -> Result<EstimateReport> {
    let plan = AggregationPlan::reduced(sequences, d, s)?;
    estimate_with_plan(path, &plan, mode)
}

pub fn estimate_with_plan(
    path: &PathSample,
    plan: &AggregationPlan,
    mode: DenominatorMode,
) -> Result<EstimateReport> {
    let mut individual = Vec::with_capacity(plan.sequences.len());
    let mut c_hat = 0.0;
    let mut v_an = 0.0;
    for (a, lambda) in plan.sequences.iter().zip(&plan.lambda) {
        let (c, v) = ScaleEstimator::new(a, plan.d, plan.s, mode)?.estimate(path)?;
        individual.push(c);
        c_hat += lambda * c;
        v_an += lambda * v;
    }
    let n = path.len();
    let max_len = plan.sequences.iter().map(|a| a.len()).max().unwrap_or(1);
    let vtilde = plan.vtilde_agg;
    let report = EstimateReport {
        c_hat,
        v_an,
        n,
        n_prime: n + 1 - max_len,
        delta: path.delta,
        d: plan.d,
        s: plan.s,
        denominator_mode: mode,
        vtilde: Some(vtilde),
        std_error: Some(c_hat.abs() * (vtilde / n as f64).sqrt()),
        ci: None,
        ci_level: DEFAULT_CI_LEVEL,
        validity: true,
        diagnostics: plan
            .dropped
            .iter()
            .map(|l| format!("{l} is asymptotically a combination of the other sequences; weight set to 0"))
            .collect(),
        aggregation: Some(AggregationSummary {
            sequences: plan.labels.clone(),
            lambda: plan.lambda.clone(),
            individual_c_hat: individual,
            r_matrix: matrix_rows(&plan.r),
            dropped: plan.dropped.clone(),
        }),
    };
    report.with_level(DEFAULT_CI_LEVEL)
}

/// Exact `E[V_{a,n}]` and `Var(V_{a,n})` for a Gaussian model observed at
/// `t_j = j delta`, via `Var(V) = 2 sum_{i,i'} Cov(Delta_i, Delta_i')^2`.
///
/// All built-in models have stationary increments, so the covariance of the
/// filtered observations depends on the lag only:
/// `Cov(Delta_i, Delta_i') = -sum_m (a^{2*})_m V((i - i' + m) delta)`.
pub fn exact_variation_moments(
    model: &ModelSpec,
    a: &VariationSequence,
    n: usize,
    delta: f64,
) -> Result<(f64, f64)> {
    model.validate()?;
    if n > EXACT_MOMENTS_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "n = {n} exceeds the exact-moment limit {EXACT_MOMENTS_MAX_N}"
        )));
    }
    if n < a.len() {
        return Err(Error::PathTooShort { n, len: a.len() });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} must be positive"
        )));
    }
    let n_prime = n + 1 - a.len();
    let b = a.self_convolution();
    let gamma: Vec<f64> = (0..n_prime as i64)
        .map(|h| {
            -b.iter()
                .map(|(m, bm)| bm * model.semivariogram((h + m) as f64 * delta))
                .sum::<f64>()
        })
        .collect();
    let mean = n_prime as f64 * gamma[0];
    let mut var = n_prime as f64 * gamma[0] * gamma[0];
    for (h, g) in gamma.iter().enumerate().skip(1) {
        var += 2.0 * (n_prime - h) as f64 * g * g;
    }
    Ok((mean, 2.0 * var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqalg::reference_zoo;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(spec: &str) -> VariationSequence {
        VariationSequence::from_spec(spec).unwrap()
    }

    #[test]
    fn quadratic_variation_examples() {
        let constant = PathSample::new(0.1, vec![2.5; 20]).unwrap();
        for a in reference_zoo() {
            assert!(quadratic_variation(&constant, &a).unwrap() < 1e-20);
        }
        let linear = PathSample::new(0.1, (1..=20).map(|j| j as f64 * 0.1).collect()).unwrap();
        assert!(quadratic_variation(&linear, &seq("elem2")).unwrap() < 1e-24);
        let zigzag = PathSample::new(1.0, vec![0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(quadratic_variation(&zigzag, &seq("-1,1")).unwrap(), 4.0);
        let short = PathSample::new(1.0, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            quadratic_variation(&short, &seq("elem3")),
            Err(Error::PathTooShort { n: 2, len: 4 })
        ));
    }

    #[test]
    fn path_sample_validation() {
        assert!(PathSample::new(0.0, vec![1.0, 2.0]).is_err());
        assert!(PathSample::new(0.1, vec![1.0]).is_err());
        assert!(PathSample::new(0.1, vec![1.0, f64::NAN]).is_err());
        let p = PathSample::with_alpha(0.5, vec![0.0; 100]).unwrap();
        assert_relative_eq!(p.delta, 0.1, max_relative = 1e-15);
    }

    #[test]
    fn estimator_for_increments_of_order_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let path = PathSample::new(0.02, values).unwrap();
        let r = estimate_c(&path, &seq("elem1"), 0, 1.0, DenominatorMode::PaperN).unwrap();
        assert_relative_eq!(r.c_hat, r.v_an / (2.0 * 50.0 * 0.02), max_relative = 1e-14);
        assert_eq!(r.n_prime, 49);
        assert!((r.vtilde.unwrap() - 2.0).abs() < 1e-10);
        let u = estimate_c(&path, &seq("elem1"), 0, 1.0, DenominatorMode::UnbiasedNPrime).unwrap();
        assert_relative_eq!(u.c_hat, r.c_hat * 50.0 / 49.0, max_relative = 1e-14);
    }

    #[test]
    fn constant_path_gives_zero() {
        let path = PathSample::new(0.1, vec![1.0; 30]).unwrap();
        let r = estimate_c(&path, &seq("elem2"), 1, 0.5, DenominatorMode::PaperN).unwrap();
        assert_eq!(r.c_hat, 0.0);
    }

    #[test]
    fn homogeneity_and_polynomial_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..80).map(|_| rng.random::<f64>() - 0.5).collect();
        let path = PathSample::new(1.0 / 80.0, values).unwrap();
        for (a, d) in [("elem2", 1), ("elem3", 0), ("daub3", 1), ("seq123", 0)] {
            let a = seq(a);
            for mode in [DenominatorMode::PaperN, DenominatorMode::UnbiasedNPrime] {
                let base = estimate_c(&path, &a, d, 0.8, mode).unwrap().c_hat;
                let scaled = estimate_c(&path.scaled(3.0), &a, d, 0.8, mode).unwrap().c_hat;
                assert_relative_eq!(scaled, 9.0 * base, max_relative = 1e-12);
                let m = a.order();
                let drift = move |t: f64| (0..m).map(|k| (k as f64 + 1.5) * t.powi(k as i32)).sum::<f64>();
                let drifted = estimate_c(&path.with_added(drift), &a, d, 0.8, mode)
                    .unwrap()
                    .c_hat;
                assert_relative_eq!(drifted, base, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn invalid_clt_is_flagged_not_rejected() {
        let path = PathSample::new(0.01, (0..100).map(|j| (j as f64).sin()).collect()).unwrap();
        let r = estimate_c(&path, &seq("elem1"), 0, 1.6, DenominatorMode::PaperN).unwrap();
        assert!(!r.validity);
        assert!(r.vtilde.is_none() && r.ci.is_none());
        assert!(r.diagnostics[0].contains("M > D+s/2+1/4"));
    }

    #[test]
    fn vtilde_anchor_and_rejection() {
        let v = normalized_asymptotic_variance(&seq("elem1"), 0, 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        assert!(matches!(
            normalized_asymptotic_variance(&seq("elem1"), 0, 1.6),
            Err(Error::CltConditionViolated { .. })
        ));
    }

    #[test]
    fn r_matrix_properties() {
        let seqs = vec![seq("elem1"), seq("elem2")];
        let r = asymptotic_r_matrix(&seqs, 0, 1.0).unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-10);
        assert_eq!(r[(0, 1)], r[(1, 0)]);
        let v2 = normalized_asymptotic_variance(&seqs[1], 0, 1.0).unwrap();
        assert!((r[(1, 1)] - v2).abs() < 1e-12 * v2);
        let one = asymptotic_r_matrix(&seqs[..1], 0, 1.0).unwrap();
        assert_eq!(one.shape(), (1, 1));
        let dup = asymptotic_r_matrix(&[seq("elem2"), seq("elem2")], 0, 1.0).unwrap();
        assert!(matches!(aggregate(&dup), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn aggregate_examples() {
        let (l, v) = aggregate(&DMatrix::from_element(1, 1, 3.5)).unwrap();
        assert_eq!(l, vec![1.0]);
        assert_relative_eq!(v, 3.5, max_relative = 1e-15);
        let (l, v) = aggregate(&DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(l[0], 0.5);
        assert_relative_eq!(l[1], 0.5);
        assert_relative_eq!(v, 0.5);
    }

    #[test]
    fn aggregate_beats_random_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let g = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
            let r = &g * g.transpose() + DMatrix::identity(3, 3) * 0.1;
            let (l, v) = aggregate(&r).unwrap();
            assert_relative_eq!(l.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
            let lv = DVector::from_vec(l);
            assert_relative_eq!((lv.transpose() * &r * &lv)[(0, 0)], v, max_relative = 1e-10);
            // first-order condition: R lambda is constant
            let rl = &r * &lv;
            for x in rl.iter() {
                assert_relative_eq!(*x, rl[0], max_relative = 1e-9);
            }
            for _ in 0..1000 {
                let mut w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                let sum: f64 = w.iter().sum();
                if sum.abs() < 1e-3 {
                    continue;
                }
                w.iter_mut().for_each(|x| *x /= sum);
                let w = DVector::from_vec(w);
                assert!((w.transpose() * &r * &w)[(0, 0)] >= v * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn spectrally_dependent_sets_are_reduced() {
        // |a(w)|^2 of seq123 is 16u - 3u^2 with u = 2 - 2cos(w): a combination of elem1 and elem2
        let set = vec![seq("elem1"), seq("seq123"), seq("elem2"), seq("daub2")];
        let r = asymptotic_r_matrix(&set, 0, 0.7).unwrap();
        assert!(matches!(aggregate(&r), Err(Error::SingularMatrix(_))));
        let plan = AggregationPlan::reduced(&set, 0, 0.7).unwrap();
        // kept in index order: elem1, seq123 already span elem2
        assert_eq!(plan.dropped, vec!["elem2".to_string()]);
        assert_eq!(plan.lambda[2], 0.0);
        assert_relative_eq!(
            plan.variance_of(&plan.lambda),
            plan.vtilde_agg,
            max_relative = 1e-10
        );
        let strict = AggregationPlan::new(&[seq("elem1"), seq("elem2"), seq("daub2")], 0, 0.7).unwrap();
        assert_relative_eq!(strict.vtilde_agg, plan.vtilde_agg, max_relative = 1e-8);
        for j in 0..4 {
            assert!(plan.vtilde_agg <= r[(j, j)] * (1.0 + 1e-12));
        }
        assert!(AggregationPlan::reduced(&[seq("elem2"), seq("elem2")], 0, 1.0).is_err());
    }

    #[test]
    fn aggregation_of_one_sequence_matches_single_estimate() {
        let path = PathSample::new(0.01, (0..100).map(|j| ((j * j) as f64).sin()).collect()).unwrap();
        let a = seq("elem2");
        let single = estimate_c(&path, &a, 0, 1.2, DenominatorMode::PaperN).unwrap();
        let agg = estimate_c_aggregated(&path, &[a], 0, 1.2, DenominatorMode::PaperN).unwrap();
        assert_eq!(single.c_hat, agg.c_hat);
        assert_relative_eq!(single.vtilde.unwrap(), agg.vtilde.unwrap(), max_relative = 1e-14);
    }

    /// Brute force over the full covariance matrix of the observations.
    fn moments_from_matrix(model: &ModelSpec, a: &VariationSequence, n: usize, delta: f64) -> (f64, f64) {
        let t: Vec<f64> = (1..=n).map(|j| j as f64 * delta).collect();
        let k = DMatrix::from_fn(n, n, |i, j| model.covariance(t[i], t[j]));
        let taps = a.coefficients();
        let n_prime = n + 1 - taps.len();
        let cov = DMatrix::from_fn(n_prime, n_prime, |i, ip| {
            let mut c = 0.0;
            for (p, ap) in taps.iter().enumerate() {
                for (q, aq) in taps.iter().enumerate() {
                    c += ap * aq * k[(i + p, ip + q)];
                }
            }
            c
        });
        (cov.trace(), 2.0 * cov.iter().map(|c| c * c).sum::<f64>())
    }

    #[test]
    fn exact_moments_match_matrix_oracle() {
        let models = [
            ModelSpec::Exponential { c: 3.0 },
            ModelSpec::Fbm { c: 1.0, s: 0.7 },
            ModelSpec::Matern32 { theta: 2.0 },
            ModelSpec::GeneralizedExponential { c: 1.5, s: 1.2 },
        ];
        for model in &models {
            for a in [seq("elem1"), seq("elem2"), seq("daub2")] {
                let (m, v) = exact_variation_moments(model, &a, 40, 0.05).unwrap();
                let (mo, vo) = moments_from_matrix(model, &a, 40, 0.05);
                assert_relative_eq!(m, mo, max_relative = 1e-8);
                assert_relative_eq!(v, vo, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn exact_moments_examples() {
        let n = 100;
        let delta = 1.0 / n as f64;
        let (m, _) =
            exact_variation_moments(&ModelSpec::Fbm { c: 1.0, s: 1.0 }, &seq("elem1"), n, delta).unwrap();
        assert_relative_eq!(m, 99.0 * 2.0 * delta, max_relative = 1e-13);
        let (m, _) = exact_variation_moments(
            &ModelSpec::Exponential { c: 3.0 },
            &seq("elem1"),
            200,
            1.0 / 200.0,
        )
        .unwrap();
        let ratio = m / (200.0 * 3.0 * (1.0 / 200.0) * 2.0);
        assert!((0.95..=1.05).contains(&ratio), "{ratio}");
        assert!(
            exact_variation_moments(&ModelSpec::Exponential { c: 1.0 }, &seq("elem1"), 5001, 1e-3).is_err()
        );
    }

    #[test]
    fn unbiased_mode_is_exact_for_power_variogram() {
        let model = ModelSpec::Fbm { c: 2.0, s: 0.6 };
        let n = 64;
        let delta = 1.0 / n as f64;
        for a in reference_zoo() {
            let (mean, _) = exact_variation_moments(&model, &a, n, delta).unwrap();
            let est = ScaleEstimator::new(&a, 0, 0.6, DenominatorMode::UnbiasedNPrime).unwrap();
            assert_relative_eq!(mean / est.denominator(n, delta), 2.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn denominator_modes_parse() {
        assert_eq!(
            "paper-n".parse::<DenominatorMode>().unwrap(),
            DenominatorMode::PaperN
        );
        assert_eq!(
            "nprime".parse::<DenominatorMode>().unwrap(),
            DenominatorMode::UnbiasedNPrime
        );
        assert!("x".parse::<DenominatorMode>().is_err());
        assert_eq!(
            serde_json::to_string(&DenominatorMode::UnbiasedNPrime).unwrap(),
            "\"unbiased-nprime\""
        );
    }
}
