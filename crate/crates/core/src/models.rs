//! Variogram and covariance models with their local behavior at the origin.
//!
//! Every model has a semivariogram whose `2D`-th derivative behaves like
//! `V^(2D)(0) + C (-1)^D |h|^s` near zero; [`LocalBehavior`] carries
//! `(D, s, C)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(D, s, C)` of the local expansion of the semivariogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBehavior {
    #[serde(rename = "D")]
    pub d: usize,
    pub s: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl LocalBehavior {
    pub fn new(d: usize, s: f64, c: f64) -> Result<Self> {
        if !(s > 0.0 && s < 2.0) {
            return Err(Error::InvalidParameter(format!("s = {s} must lie in (0, 2)")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C = {c} must be positive")));
        }
        Ok(Self { d, s, c })
    }

    /// Local Hölder index `H = D + s/2`.
    pub fn holder_index(&self) -> f64 {
        self.d as f64 + self.s / 2.0
    }
}

/// Model descriptor, serialized as `{"model": "exp", "C": 3}` and friends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelSpec {
    /// `k(h) = exp(-C|h|)`.
    #[serde(rename = "exp")]
    Exponential {
        #[serde(rename = "C")]
        c: f64,
    },
    /// `k(h) = exp(-C|h|^s)`, `0 < s < 2`.
    #[serde(rename = "genexp")]
    GeneralizedExponential {
        #[serde(rename = "C")]
        c: f64,
        s: f64,
    },
    /// `k(h) = (1 - (C/2)|h|^s)^+`, `0 < s <= 1`.
    #[serde(rename = "slepian")]
    Slepian {
        #[serde(rename = "C")]
        c: f64,
        s: f64,
    },
    /// Matérn with `nu = 3/2` and range `theta`.
    #[serde(rename = "matern32")]
    Matern32 { theta: f64 },
    /// Matérn with `nu = 5/2` and range `theta`.
    #[serde(rename = "matern52")]
    Matern52 { theta: f64 },
    /// Fractional Brownian motion, `Cov(B(u), B(t)) = C(|u|^s + |t|^s - |u - t|^s)`.
    #[serde(rename = "fbm")]
    Fbm {
        #[serde(rename = "C")]
        c: f64,
        s: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
    }
}

fn smoothness(v: f64, upper: f64, inclusive: bool) -> Result<()> {
    let ok = v > 0.0 && if inclusive { v <= upper } else { v < upper };
    if ok {
        Ok(())
    } else {
        let bracket = if inclusive { ']' } else { ')' };
        Err(Error::InvalidParameter(format!(
            "s = {v} must lie in (0, {upper}{bracket}"
        )))
    }
}

/// `1 - (1 + x) e^{-x}` without cancellation for small `x`.
fn matern32_deficit(x: f64) -> f64 {
    if x < 0.5 {
        // sum_{k>=2} (-1)^k (k-1) x^k / k!
        let mut term = x; // x^k / k! for k = 1
        let mut sum = 0.0;
        for k in 2..40 {
            term *= x / k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (k - 1) as f64 * term;
        }
        sum
    } else {
        1.0 - (1.0 + x) * (-x).exp()
    }
}

/// `1 - (1 + x + x^2/3) e^{-x}` without cancellation for small `x`.
fn matern52_deficit(x: f64) -> f64 {
    if x < 0.5 {
        // -sum_{k>=2} (-1)^k x^k / k! (1 - k + k(k-1)/3)
        let mut term = x;
        let mut sum = 0.0;
        for k in 2..40 {
            term *= x / k as f64;
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum -= sign * term * (1.0 - kf + kf * (kf - 1.0) / 3.0);
        }
        sum
    } else {
        1.0 - (1.0 + x + x * x / 3.0) * (-x).exp()
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Exponential { c } => positive("C", c),
            ModelSpec::GeneralizedExponential { c, s } => {
                positive("C", c)?;
                smoothness(s, 2.0, false)
            }
            ModelSpec::Slepian { c, s } => {
                positive("C", c)?;
                smoothness(s, 1.0, true)?;
                if c >= 2.0 {
                    return Err(Error::InvalidParameter(format!(
                        "Slepian model requires C < 2 in k(h) = (1 - (C/2)|h|^s)^+, got {c}"
                    )));
                }
                Ok(())
            }
            ModelSpec::Matern32 { theta } | ModelSpec::Matern52 { theta } => positive("theta", theta),
            ModelSpec::Fbm { c, s } => {
                positive("C", c)?;
                smoothness(s, 2.0, false)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Exponential { .. } => "exp",
            ModelSpec::GeneralizedExponential { .. } => "genexp",
            ModelSpec::Slepian { .. } => "slepian",
            ModelSpec::Matern32 { .. } => "matern32",
            ModelSpec::Matern52 { .. } => "matern52",
            ModelSpec::Fbm { .. } => "fbm",
        }
    }

    pub fn is_stationary(&self) -> bool {
        !matches!(self, ModelSpec::Fbm { .. })
    }

    /// Matérn range whose local scale equals `target_c` (`nu = 3/2`).
    pub fn matern32_with_scale(target_c: f64) -> Self {
        ModelSpec::Matern32 {
            theta: (6.0 * 3f64.sqrt() / target_c).cbrt(),
        }
    }

    /// Matérn range whose local scale equals `target_c` (`nu = 5/2`).
    pub fn matern52_with_scale(target_c: f64) -> Self {
        ModelSpec::Matern52 {
            theta: (200.0 * 5f64.sqrt() / (3.0 * target_c)).powf(0.2),
        }
    }

    /// Stationary autocovariance `k(h)`; `None` for FBM.
    pub fn autocovariance(&self, h: f64) -> Option<f64> {
        let h = h.abs();
        Some(match *self {
            ModelSpec::Exponential { c } => (-c * h).exp(),
            ModelSpec::GeneralizedExponential { c, s } => (-c * h.powf(s)).exp(),
            ModelSpec::Slepian { c, s } => (1.0 - 0.5 * c * h.powf(s)).max(0.0),
            ModelSpec::Matern32 { theta } => {
                let x = 3f64.sqrt() * h / theta;
                (1.0 + x) * (-x).exp()
            }
            ModelSpec::Matern52 { theta } => {
                let x = 5f64.sqrt() * h / theta;
                (1.0 + x + x * x / 3.0) * (-x).exp()
            }
            ModelSpec::Fbm { .. } => return None,
        })
    }

    /// `V(h) = E[(X(t+h) - X(t))^2] / 2`.
    pub fn semivariogram(&self, h: f64) -> f64 {
        let h = h.abs();
        match *self {
            ModelSpec::Exponential { c } => -(-c * h).exp_m1(),
            ModelSpec::GeneralizedExponential { c, s } => -(-c * h.powf(s)).exp_m1(),
            ModelSpec::Slepian { c, s } => (0.5 * c * h.powf(s)).min(1.0),
            ModelSpec::Matern32 { theta } => matern32_deficit(3f64.sqrt() * h / theta),
            ModelSpec::Matern52 { theta } => matern52_deficit(5f64.sqrt() * h / theta),
            ModelSpec::Fbm { c, s } => c * h.powf(s),
        }
    }

    /// `Cov(X(t), X(u))`.
    pub fn covariance(&self, t: f64, u: f64) -> f64 {
        match *self {
            ModelSpec::Fbm { c, s } => c * (t.abs().powf(s) + u.abs().powf(s) - (t - u).abs().powf(s)),
            _ => self.autocovariance(t - u).expect("stationary model"),
        }
    }

    /// `(D, s, C)` of hypothesis H1.
    pub fn local_behavior(&self) -> LocalBehavior {
        let (d, s, c) = match *self {
            ModelSpec::Exponential { c } => (0, 1.0, c),
            ModelSpec::GeneralizedExponential { c, s } => (0, s, c),
            ModelSpec::Slepian { c, s } => (0, s, c / 2.0),
            ModelSpec::Matern32 { theta } => (1, 1.0, 6.0 * 3f64.sqrt() / theta.powi(3)),
            ModelSpec::Matern52 { theta } => (2, 1.0, 200.0 * 5f64.sqrt() / (3.0 * theta.powi(5))),
            ModelSpec::Fbm { c, s } => (0, s, c),
        };
        LocalBehavior { d, s, c }
    }

    /// Which of the standing hypotheses H0-H3 hold for sampling step `n^{-alpha}`.
    pub fn hypothesis_report(&self, alpha: f64) -> Result<HypothesisReport> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} must lie in (0, 1]"
            )));
        }
        self.validate()?;
        let infill = alpha == 1.0;
        let (h1_h2, h3, note) = match *self {
            ModelSpec::Exponential { .. } => (true, alpha > 0.5, "H3 iff alpha > 1/2"),
            ModelSpec::GeneralizedExponential { s, .. } => {
                (true, 1.0 / (2.0 * alpha) < s, "H3 iff 1/(2 alpha) < s")
            }
            ModelSpec::Slepian { .. } => (infill, infill, "H0-H3 established in the infill situation only"),
            ModelSpec::Matern32 { .. } | ModelSpec::Matern52 { .. } => {
                // s = 1 for both half-integer cases
                (
                    true,
                    1.0 < 2.0 - 1.0 / (2.0 * alpha),
                    "H3 iff s < 2 - 1/(2 alpha)",
                )
            }
            ModelSpec::Fbm { .. } => (true, true, "exact power variogram, remainder r = 0"),
        };
        Ok(HypothesisReport {
            alpha,
            h0: true,
            h1: h1_h2,
            h2: h1_h2,
            h3,
            note: note.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub alpha: f64,
    pub h0: bool,
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub note: String,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.h0 && self.h1 && self.h2 && self.h3
    }
}

/// Deterministic mean function added to simulated paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftSpec {
    /// `f(t) = sum_k c_k t^k`.
    #[serde(rename = "poly")]
    Poly(Vec<f64>),
    /// `f(t) = amp * sin(2 pi freq t)`.
    #[serde(rename = "sine")]
    Sine { amp: f64, freq: f64 },
}

impl DriftSpec {
    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }

    /// `f^{(m)}(t)`.
    pub fn derivative(&self, m: usize, t: f64) -> f64 {
        match self {
            DriftSpec::Poly(coeffs) => {
                // Horner on the m-th derivative coefficients
                let mut acc = 0.0;
                for k in (m..coeffs.len()).rev() {
                    let falling: f64 = ((k - m + 1)..=k).map(|r| r as f64).product();
                    acc = acc * t + coeffs[k] * falling;
                }
                acc
            }
            DriftSpec::Sine { amp, freq } => {
                let w = 2.0 * PI * freq;
                let phase = w * t + m as f64 * PI / 2.0;
                amp * w.powi(m as i32) * phase.sin()
            }
        }
    }

    /// Degree for polynomial drifts (`None` for non-polynomial ones).
    pub fn degree(&self) -> Option<usize> {
        match self {
            DriftSpec::Poly(c) => Some(c.iter().rposition(|&x| x != 0.0).unwrap_or(0)),
            DriftSpec::Sine { .. } => None,
        }
    }

    /// `K_{M,n} = sup_{t in [0, t_max]} |f^{(M)}(t)|`, evaluated on a fine grid.
    pub fn sup_derivative(&self, m: usize, t_max: f64) -> f64 {
        const POINTS: usize = 4096;
        (0..=POINTS)
            .map(|k| self.derivative(m, t_max * k as f64 / POINTS as f64).abs())
            .fold(0.0, f64::max)
    }
}
