//! Finite zero-sum variation sequences and their algebra.
//!
//! A [`VariationSequence`] `a = (a_0, ..., a_{L-1})` has zero sum, length
//! `L(a)` and order `M(a)`, the index of its first non-vanishing discrete
//! moment `sum_j a_j j^M`. A [`Filter`] is the more general object produced
//! by convolution: a finite list of taps anchored at an arbitrary (possibly
//! negative) index.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-sum tolerance for exactly specified sequences, relative to `max |a_j|`.
pub const ZERO_SUM_TOL: f64 = 1e-9;
/// Relaxed zero-sum tolerance for the rounded Daubechies presets.
pub const ROUNDED_ZERO_SUM_TOL: f64 = 1e-6;
/// Relative threshold below which a discrete moment is treated as vanishing.
pub const MOMENT_TOL: f64 = 1e-6;

const DAUB2: [f64; 4] = [-0.1830127, -0.3169873, 1.1830127, -0.6830127];
const DAUB3: [f64; 6] = [
    0.0498175,
    0.12083221,
    -0.19093442,
    -0.650365,
    1.14111692,
    -0.47046721,
];

/// Preset names accepted by [`VariationSequence::from_spec`].
pub const PRESETS: [&str; 7] = ["elem1", "elem2", "elem3", "elem4", "seq123", "daub2", "daub3"];

/// Taps `b_j` for `j = offset, ..., offset + len - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    offset: i64,
    taps: Vec<f64>,
}

impl Filter {
    pub fn new(offset: i64, taps: Vec<f64>) -> Self {
        Self { offset, taps }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// First and last index of the support.
    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.taps.len() as i64 - 1)
    }

    /// Largest `|j|` over the support.
    pub fn radius(&self) -> i64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    /// Iterates over `(j, b_j)`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.taps
            .iter()
            .enumerate()
            .map(move |(k, &b)| (self.offset + k as i64, b))
    }

    /// Coefficient at index `j` (zero outside the support).
    pub fn get(&self, j: i64) -> f64 {
        let k = j - self.offset;
        if k < 0 || k as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[k as usize]
        }
    }

    /// Discrete moment `sum_j b_j j^k`.
    pub fn moment(&self, k: u32) -> f64 {
        self.iter().map(|(j, b)| b * (j as f64).powi(k as i32)).sum()
    }

    fn max_abs(&self) -> f64 {
        self.taps.iter().fold(0.0_f64, |m, b| m.max(b.abs()))
    }

    fn moment_scale(&self, k: u32) -> f64 {
        let span = (self.radius() + 1) as f64;
        self.max_abs() * span.powi(k as i32)
    }

    /// Whether the `k`-th moment is numerically zero.
    pub fn moment_vanishes(&self, k: u32) -> bool {
        self.moment(k).abs() <= MOMENT_TOL * self.moment_scale(k)
    }

    /// Index of the first non-vanishing moment; 0 when the taps do not sum to zero.
    pub fn order(&self) -> usize {
        let max_k = self.taps.len() as u32 + 1;
        (0..=max_k)
            .find(|&k| !self.moment_vanishes(k))
            .map(|k| k as usize)
            .unwrap_or(max_k as usize + 1)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let (lo, hi) = self.support();
        if lo != -hi {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..=hi).all(|j| (self.get(j) - self.get(-j)).abs() <= tol * scale)
    }

    /// Correlation-type convolution `c_j = sum_{k - l = j} b_k b'_l`.
    pub fn convolve(&self, other: &Filter) -> Filter {
        let (lo_a, _) = self.support();
        let (_, hi_b) = other.support();
        let offset = lo_a - hi_b;
        let mut taps = vec![0.0; self.len() + other.len() - 1];
        for (k, &a) in self.taps.iter().enumerate() {
            for (l, &b) in other.taps.iter().enumerate() {
                // j - offset = k + (len_b - 1 - l)
                taps[k + other.len() - 1 - l] += a * b;
            }
        }
        Filter::new(offset, taps)
    }

    /// Ordinary (polynomial-product) convolution `c_j = sum_{k + l = j} b_k b'_l`.
    pub fn cascade(&self, other: &Filter) -> Filter {
        let mut taps = vec![0.0; self.len() + other.len() - 1];
        for (k, &a) in self.taps.iter().enumerate() {
            for (l, &b) in other.taps.iter().enumerate() {
                taps[k + l] += a * b;
            }
        }
        Filter::new(self.offset + other.offset, taps)
    }
}

/// A finite zero-sum sequence `a_0, ..., a_{L-1}` with non-zero end taps.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSequence {
    filter: Filter,
    order: usize,
    label: String,
}

impl VariationSequence {
    /// Validates `coefficients` with the strict zero-sum tolerance.
    pub fn new(coefficients: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::with_tolerance(coefficients, label, ZERO_SUM_TOL)
    }

    pub fn with_tolerance(
        coefficients: Vec<f64>,
        label: impl Into<String>,
        zero_sum_tol: f64,
    ) -> Result<Self> {
        let label = label.into();
        if coefficients.len() < 2 {
            return Err(Error::InvalidSequence(format!(
                "{label}: at least two coefficients are required"
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSequence(format!("{label}: non-finite coefficient")));
        }
        if coefficients[0] == 0.0 || coefficients[coefficients.len() - 1] == 0.0 {
            return Err(Error::InvalidSequence(format!(
                "{label}: first and last coefficients must be non-zero"
            )));
        }
        let max_abs = coefficients.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let sum: f64 = coefficients.iter().sum();
        if sum.abs() > zero_sum_tol * max_abs {
            return Err(Error::InvalidSequence(format!(
                "{label}: coefficients sum to {sum:e}, expected 0"
            )));
        }
        let len = coefficients.len();
        let filter = Filter::new(0, coefficients);
        let order = (1..len as u32)
            .find(|&k| !filter.moment_vanishes(k))
            .ok_or_else(|| Error::InvalidSequence(format!("{label}: all moments up to {} vanish", len - 1)))?
            as usize;
        Ok(Self { filter, order, label })
    }

    /// Signed binomial sequence `a_j = (-1)^{k-j} C(k, j)`, `j = 0..=k`.
    pub fn elementary(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSequence(
                "elementary sequence of order 0 has a single coefficient".into(),
            ));
        }
        let mut coefficients = Vec::with_capacity(k + 1);
        let mut binom = 1.0_f64;
        for j in 0..=k {
            let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            coefficients.push(sign * binom);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        Self::new(coefficients, format!("elem{k}"))
    }

    /// Rounded Daubechies high-pass taps with 2 or 3 vanishing moments.
    pub fn daubechies(order: u32) -> Result<Self> {
        let taps: &[f64] = match order {
            2 => &DAUB2,
            3 => &DAUB3,
            other => return Err(Error::UnsupportedOrder(other)),
        };
        Self::with_tolerance(taps.to_vec(), format!("daub{order}"), ROUNDED_ZERO_SUM_TOL)
    }

    /// Parses a preset name (`elem1`..`elem4`, `elemK`, `seq123`, `daub2`, `daub3`)
    /// or an explicit comma-separated coefficient list.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "seq123" => return Self::new(vec![-1.0, -2.0, 3.0], "seq123"),
            "daub2" => return Self::daubechies(2),
            "daub3" => return Self::daubechies(3),
            _ => {}
        }
        if let Some(k) = spec.strip_prefix("elem") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::Parse(format!("unknown sequence preset '{spec}'")))?;
            return Self::elementary(k);
        }
        let coefficients = spec
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad coefficient '{t}' in '{spec}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coefficients, spec.to_string())
    }

    pub fn coefficients(&self) -> &[f64] {
        self.filter.taps()
    }

    pub fn filter(&self) -> &Filter {
        &self.filter
    }

    pub fn len(&self) -> usize {
        self.filter.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `M(a)`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `a * a'` in the correlation sense `b_j = sum_{k - l = j} a_k a'_l`.
    pub fn convolve(&self, other: &VariationSequence) -> Filter {
        self.filter.convolve(&other.filter)
    }

    /// `a^{2*}`: symmetric, length `2L - 1`, order `2M`.
    pub fn self_convolution(&self) -> Filter {
        self.filter.convolve(&self.filter)
    }

    /// Ordinary product of the two sequences as polynomials; orders add.
    pub fn cascade(&self, other: &VariationSequence) -> Result<Self> {
        let f = self.filter.cascade(&other.filter);
        Self::new(f.taps().to_vec(), format!("{}.{}", self.label, other.label))
    }
}

impl fmt::Display for VariationSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (", self.label)?;
        for (k, c) in self.coefficients().iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Splits a sequence list. Items are separated by `;`; without a `;` a
/// comma-separated list of preset names is a list of presets, anything else
/// is a single explicit coefficient list.
pub fn parse_sequence_list(spec: &str) -> Result<Vec<VariationSequence>> {
    let spec = spec.trim();
    if spec.contains(';') {
        return spec
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(VariationSequence::from_spec)
            .collect();
    }
    let tokens: Vec<&str> = spec.split(',').map(str::trim).collect();
    if tokens.iter().all(|t| is_preset_name(t)) {
        tokens.into_iter().map(VariationSequence::from_spec).collect()
    } else {
        Ok(vec![VariationSequence::from_spec(spec)?])
    }
}

fn is_preset_name(token: &str) -> bool {
    PRESETS.contains(&token)
        || token
            .strip_prefix("elem")
            .is_some_and(|k| !k.is_empty() && k.chars().all(|c| c.is_ascii_digit()))
}

/// The seven sequences compared in the `D = 0` variance study.
pub fn reference_zoo() -> Vec<VariationSequence> {
    PRESETS
        .iter()
        .map(|p| VariationSequence::from_spec(p).expect("presets are valid"))
        .collect()
}

/// Outcome of [`validate_clt`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltCheck {
    pub valid: bool,
    pub diagnostic: String,
}

/// Checks `M(a) > D + s/2 + 1/4`, the condition for a `sqrt(n)` central limit theorem.
pub fn validate_clt(a: &VariationSequence, d: usize, s: f64) -> CltCheck {
    let bound = d as f64 + s / 2.0 + 0.25;
    let m = a.order();
    if (m as f64) > bound {
        CltCheck {
            valid: true,
            diagnostic: format!("{}: M = {m} > D + s/2 + 1/4 = {bound}", a.label()),
        }
    } else {
        CltCheck {
            valid: false,
            diagnostic: format!(
                "{}: M > D+s/2+1/4 fails (M = {m}, bound = {bound}); with M = D+1 and \
                 s >= 3/2 the variance of V_an decays slower than 1/n and the central limit \
                 theorem no longer holds",
                a.label()
            ),
        }
    }
}

/// Random sequence of order at least `min_order`: `elementary(min_order)`
/// cascaded with a short random filter.
pub fn random_sequence<R: Rng + ?Sized>(min_order: usize, rng: &mut R) -> VariationSequence {
    let base = VariationSequence::elementary(min_order).expect("min_order >= 1");
    loop {
        let len = rng.random_range(1..=3usize);
        let taps: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        if taps[0].abs() < 1e-3 || taps[len - 1].abs() < 1e-3 {
            continue;
        }
        let f = base.filter().cascade(&Filter::new(0, taps));
        if let Ok(seq) = VariationSequence::new(f.taps().to_vec(), "random") {
            if seq.order() >= min_order {
                return seq;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn elementary_coefficients() {
        assert_eq!(
            VariationSequence::elementary(1).unwrap().coefficients(),
            &[-1.0, 1.0]
        );
        assert_eq!(
            VariationSequence::elementary(2).unwrap().coefficients(),
            &[1.0, -2.0, 1.0]
        );
        assert_eq!(
            VariationSequence::elementary(4).unwrap().coefficients(),
            &[1.0, -4.0, 6.0, -4.0, 1.0]
        );
        for k in 1..=6 {
            let a = VariationSequence::elementary(k).unwrap();
            assert_eq!(a.len(), k + 1);
            assert_eq!(a.order(), k);
        }
        assert!(VariationSequence::elementary(0).is_err());
    }

    #[test]
    fn daubechies_presets() {
        let d2 = VariationSequence::daubechies(2).unwrap();
        assert_eq!(d2.coefficients(), &DAUB2);
        assert_eq!(d2.order(), 2);
        let d3 = VariationSequence::daubechies(3).unwrap();
        assert_eq!(d3.coefficients()[3], -0.650365);
        assert_eq!(d3.order(), 3);
        assert!(matches!(
            VariationSequence::daubechies(4),
            Err(Error::UnsupportedOrder(4))
        ));
    }

    #[test]
    fn order_examples() {
        let a = VariationSequence::new(vec![-1.0, 1.0], "a").unwrap();
        assert_eq!(a.order(), 1);
        let a = VariationSequence::new(vec![-1.0, -2.0, 3.0], "a").unwrap();
        assert_eq!(a.order(), 1);
        let e3 = VariationSequence::elementary(3).unwrap();
        assert_eq!(e3.filter().moment(1), 0.0);
        assert_eq!(e3.filter().moment(2), 0.0);
        assert_eq!(e3.filter().moment(3), 6.0);
        assert_eq!(e3.order(), 3);
    }

    #[test]
    fn rejects_malformed() {
        assert!(VariationSequence::new(vec![1.0], "x").is_err());
        assert!(VariationSequence::new(vec![1.0, 1.0], "x").is_err());
        assert!(VariationSequence::new(vec![0.0, 1.0, -1.0], "x").is_err());
        assert!(VariationSequence::new(vec![1.0, f64::NAN, -1.0], "x").is_err());
    }

    #[test]
    fn convolution_of_first_differences() {
        let e1 = VariationSequence::elementary(1).unwrap();
        let b = e1.self_convolution();
        assert_eq!(b.support(), (-1, 1));
        assert_eq!(b.taps(), &[-1.0, 2.0, -1.0]);
        assert_eq!(b.order(), 2);
        assert!(b.is_symmetric(0.0));
    }

    #[test]
    fn convolution_support_and_order() {
        let a = VariationSequence::from_spec("seq123").unwrap();
        let b = VariationSequence::elementary(3).unwrap();
        let c = a.convolve(&b);
        assert_eq!(c.support(), (-(b.len() as i64 - 1), a.len() as i64 - 1));
        assert_eq!(c.order(), a.order() + b.order());
        // (a * a')_j = (a' * a)_{-j}
        let d = b.convolve(&a);
        for j in -6..=6 {
            assert_eq!(c.get(j), d.get(-j));
        }
    }

    #[test]
    fn cascade_of_elementary_is_elementary() {
        let e2 = VariationSequence::elementary(2).unwrap();
        let e3 = VariationSequence::elementary(3).unwrap();
        let e5 = VariationSequence::elementary(5).unwrap();
        assert_eq!(e2.cascade(&e3).unwrap().coefficients(), e5.coefficients());
    }

    #[test]
    fn self_convolution_moments() {
        for a in reference_zoo() {
            let b = a.self_convolution();
            assert_eq!(b.len(), 2 * a.len() - 1);
            assert!(b.is_symmetric(1e-12), "{}", a.label());
            assert_eq!(b.order(), 2 * a.order(), "{}", a.label());
        }
    }

    #[test]
    fn clt_validation() {
        let e1 = VariationSequence::elementary(1).unwrap();
        let e2 = VariationSequence::elementary(2).unwrap();
        assert!(validate_clt(&e1, 0, 1.0).valid);
        let bad = validate_clt(&e1, 0, 1.6);
        assert!(!bad.valid);
        assert!(bad.diagnostic.contains("M > D+s/2+1/4"));
        assert!(validate_clt(&e2, 1, 1.0).valid);
        assert!(!validate_clt(&e1, 0, 1.5).valid);
    }

    #[test]
    fn spec_parsing() {
        let list = parse_sequence_list("elem1,seq123,elem2,daub2").unwrap();
        let labels: Vec<_> = list.iter().map(|a| a.label().to_string()).collect();
        assert_eq!(labels, ["elem1", "seq123", "elem2", "daub2"]);
        let single = parse_sequence_list("1,-2,1").unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].order(), 2);
        let mixed = parse_sequence_list("elem1; 1,-3,3,-1").unwrap();
        assert_eq!(mixed.len(), 2);
        assert_eq!(mixed[1].order(), 3);
        assert!(VariationSequence::from_spec("wavelet").is_err());
        assert!(VariationSequence::from_spec("1,2").is_err());
    }

    #[test]
    fn random_sequences_have_requested_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            for _ in 0..50 {
                let a = random_sequence(d, &mut rng);
                assert!(a.order() >= d);
            }
        }
    }
}
