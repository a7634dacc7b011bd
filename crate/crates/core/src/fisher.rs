//! Fisher information for `C` from the increments of a process `Y_C`.
//!
//! `Y_C` is the `D`-th derivative of the observed process. Two families are
//! built in: fractional Brownian motion with `V_C(h) = C|h|^s`, and the
//! Slepian-type process with autocovariance `k_C(h) = (1 - (C/2)|h|^s)^+`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Fbm,
    Slepian,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbm" => Ok(FamilyKind::Fbm),
            "slepian" => Ok(FamilyKind::Slepian),
            other => Err(Error::Parse(format!(
                "unknown family '{other}' (expected fbm or slepian)"
            ))),
        }
    }
}

/// Increments `Y_C(i delta) - Y_C((i-1) delta)`, `i = 2..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementFamily {
    pub kind: FamilyKind,
    pub d: usize,
    pub s: f64,
    pub n: usize,
    pub delta: f64,
}

impl IncrementFamily {
    pub fn new(kind: FamilyKind, d: usize, s: f64, n: usize, delta: f64) -> Result<Self> {
        let upper = match kind {
            FamilyKind::Fbm => 2.0,
            FamilyKind::Slepian => 1.0,
        };
        let s_ok = s > 0.0 && (s < upper || (kind == FamilyKind::Slepian && s == 1.0));
        if !s_ok {
            return Err(Error::InvalidParameter(format!(
                "s = {s} out of range for {kind:?}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!("n = {n} must be at least 3")));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        Ok(Self { kind, d, s, n, delta })
    }

    /// Infill grid `delta = 1/n`.
    pub fn infill(kind: FamilyKind, d: usize, s: f64, n: usize) -> Result<Self> {
        Self::new(kind, d, s, n, 1.0 / n as f64)
    }

    /// Semivariogram of `Y_C`.
    pub fn semivariogram(&self, c: f64, h: f64) -> f64 {
        let p = h.abs().powf(self.s);
        match self.kind {
            FamilyKind::Fbm => c * p,
            FamilyKind::Slepian => (0.5 * c * p).min(1.0),
        }
    }

    /// Whether `R_C = C R_1` holds near `c` (always for FBM; for the Slepian
    /// family while every lag stays inside the linear part of `k_C`).
    pub fn is_linear_at(&self, c: f64) -> bool {
        match self.kind {
            FamilyKind::Fbm => true,
            FamilyKind::Slepian => 0.5 * c * (self.n as f64 * self.delta).powf(self.s) < 1.0,
        }
    }
}

/// `(n-1) x (n-1)` covariance of the increments of `Y_C`.
pub fn increment_covariance(family: &IncrementFamily, c: f64) -> Result<DMatrix<f64>> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("C = {c} must be positive")));
    }
    let m = family.n - 1;
    let v = |k: i64| family.semivariogram(c, k as f64 * family.delta);
    // Cov(Delta_i, Delta_j) = V(t_i - t_{j-1}) + V(t_{i-1} - t_j) - V(t_i - t_j) - V(t_{i-1} - t_{j-1})
    let by_lag: Vec<f64> = (0..m as i64).map(|k| v(k + 1) + v(k - 1) - 2.0 * v(k)).collect();
    Ok(DMatrix::from_fn(m, m, |i, j| by_lag[i.abs_diff(j)]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    /// `dR_C/dC = R_1`; only valid for linear families.
    Analytic,
    /// Central difference with step `1e-5 C`.
    FiniteDifference,
}

/// `I_C = Tr(R_C^{-1} R' R_C^{-1} R') / 2`, analytic derivative when the family is linear.
pub fn fisher_information(family: &IncrementFamily, c: f64) -> Result<f64> {
    let how = if family.is_linear_at(c) {
        Derivative::Analytic
    } else {
        Derivative::FiniteDifference
    };
    fisher_information_with(family, c, how)
}

pub fn fisher_information_with(family: &IncrementFamily, c: f64, how: Derivative) -> Result<f64> {
    let r = increment_covariance(family, c)?;
    let r_dot = match how {
        Derivative::Analytic => {
            if !family.is_linear_at(c) {
                return Err(Error::InvalidParameter(
                    "analytic derivative requires a family that is linear in C".into(),
                ));
            }
            if family.is_linear_at(1.0) {
                increment_covariance(family, 1.0)?
            } else {
                r.scale(1.0 / c)
            }
        }
        Derivative::FiniteDifference => {
            let h = 1e-5 * c;
            (increment_covariance(family, c + h)? - increment_covariance(family, c - h)?) / (2.0 * h)
        }
    };
    let chol = r
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("increment covariance R_C is not positive definite".into()))?;
    let l = chol.l();
    // X = L^{-1} R' L^{-T}; Tr((R^{-1} R')^2) = ||X||_F^2
    let y = l
        .solve_lower_triangular(&r_dot)
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
    let x = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
    Ok(0.5 * x.norm_squared())
}

/// `1 / I_C`.
pub fn cramer_rao_bound(family: &IncrementFamily, c: f64) -> Result<f64> {
    Ok(1.0 / fisher_information(family, c)?)
}

/// `2 / vtilde`: the Cramér–Rao normalized variance over the estimator's.
pub fn efficiency(vtilde: f64) -> Result<f64> {
    if !(vtilde > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "vtilde = {vtilde} must be positive"
        )));
    }
    Ok(2.0 / vtilde)
}
