//! Discrete a-differences and the integral remainder functional
//!
//! ```text
//! R(i, delta, q, f, b) = - sum_j b_j j^q int_0^1 (1 - eta)^(q-1) / (q-1)! f((i + j eta) delta) d eta
//! ```
//!
//! with `R(i, delta, 0, f, b) = -Delta_{b,i}(f)`. For `f = |.|^s` and a filter
//! whose first `2D` moments vanish, Taylor's formula applied to
//! `|x|^(2D+s) / prod_{r=1}^{2D} (s + r)` (whose `2D`-th derivative is `|x|^s`)
//! gives the closed form used in production:
//!
//! ```text
//! R(i, 1, 2D, |.|^s, b) = - sum_j b_j |i + j|^(2D+s) / prod_{r=1}^{2D} (s + r)
//! ```
//!
//! [`remainder_quadrature`] evaluates the definition directly and serves as
//! the cross-check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::seqalg::Filter;

/// Nodes per quadrature panel.
pub const DEFAULT_NODES: usize = 64;
/// Default relative tolerance of [`series_r2`].
pub const DEFAULT_RTOL: f64 = 1e-10;

const EXPANSION_TERMS: usize = 48;
const MAX_RADIUS: i64 = 1 << 22;

/// `Delta_{b,i}(f) = sum_j b_j f((i + j) delta)`.
pub fn discrete_difference<F: Fn(f64) -> f64>(b: &Filter, f: F, delta: f64, i: i64) -> f64 {
    b.iter().map(|(j, bj)| bj * f((i + j) as f64 * delta)).sum()
}

/// The remainder functional by panel-wise Gauss–Legendre quadrature, with
/// panels split and graded at the point where `(i + j eta) delta = 0`.
pub fn remainder_quadrature<F: Fn(f64) -> f64>(i: i64, delta: f64, q: u32, f: F, b: &Filter) -> f64 {
    remainder_quadrature_with(&GaussLegendre::new(DEFAULT_NODES), i, delta, q, f, b)
}

pub fn remainder_quadrature_with<F: Fn(f64) -> f64>(
    rule: &GaussLegendre,
    i: i64,
    delta: f64,
    q: u32,
    f: F,
    b: &Filter,
) -> f64 {
    if q == 0 {
        return -discrete_difference(b, f, delta, i);
    }
    let norm: f64 = (1..q).map(|r| r as f64).product();
    let mut total = 0.0;
    for (j, bj) in b.iter() {
        if j == 0 || bj == 0.0 {
            continue;
        }
        let g = |eta: f64| (1.0 - eta).powi(q as i32 - 1) * f((i as f64 + j as f64 * eta) * delta);
        // kink of |.|^s at i + j eta = 0
        let kink = -(i as f64) / j as f64;
        let integral = if kink <= 0.0 && i == 0 {
            rule.integrate_graded(0.0, 1.0, g)
        } else if kink > 0.0 && kink < 1.0 {
            -rule.integrate_graded(kink, 0.0, g) + rule.integrate_graded(kink, 1.0, g)
        } else if kink == 1.0 {
            -rule.integrate_graded(1.0, 0.0, g)
        } else {
            rule.integrate(0.0, 1.0, g)
        };
        total += bj * (j as f64).powi(q as i32) * integral / norm;
    }
    -total
}

/// `prod_{r=1}^{2D} (s + r)`.
fn power_normalizer(d: usize, s: f64) -> f64 {
    (1..=2 * d).map(|r| s + r as f64).product()
}

fn check_power_args(d: usize, s: f64, b: &Filter) -> Result<()> {
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::InvalidParameter(format!("s = {s} must lie in (0, 2)")));
    }
    if b.order() < 2 * d {
        return Err(Error::InvalidParameter(format!(
            "closed form of R(i, 1, 2D, |.|^s, b) needs the first 2D = {} moments of b to vanish \
             (filter order {})",
            2 * d,
            b.order()
        )));
    }
    Ok(())
}

/// `R(i, 1, 2D, |.|^s, b)` in closed form.
pub fn remainder_power_closed(i: i64, d: usize, s: f64, b: &Filter) -> Result<f64> {
    check_power_args(d, s, b)?;
    Ok(power_sum(i, d, s, b) / -power_normalizer(d, s))
}

fn power_sum(i: i64, d: usize, s: f64, b: &Filter) -> f64 {
    let p = 2.0 * d as f64 + s;
    b.iter().map(|(j, bj)| bj * ((i + j).abs() as f64).powf(p)).sum()
}

/// `R(i, 1, 2D, |.|^s, b)` for all `i`, switching to the binomial expansion
/// `sum_j b_j |i + j|^p = sum_{k >= M} C(p, k) m_k (+-1)^k |i|^(p-k)` away from
/// the support, where the direct sum would cancel catastrophically.
struct PowerRemainder<'a> {
    b: &'a Filter,
    d: usize,
    s: f64,
    p: f64,
    norm: f64,
    /// `C(p, k) m_k` for `k = 0..EXPANSION_TERMS`, zeroed below the order.
    coeffs: Vec<f64>,
    direct_radius: i64,
}

impl<'a> PowerRemainder<'a> {
    fn new(b: &'a Filter, d: usize, s: f64) -> Self {
        let p = 2.0 * d as f64 + s;
        let order = b.order();
        let mut coeffs = Vec::with_capacity(EXPANSION_TERMS);
        let mut binom = 1.0;
        for k in 0..EXPANSION_TERMS {
            if k > 0 {
                binom *= (p - (k - 1) as f64) / k as f64;
            }
            coeffs.push(if k < order {
                0.0
            } else {
                binom * b.moment(k as u32)
            });
        }
        Self {
            b,
            d,
            s,
            p,
            norm: power_normalizer(d, s),
            coeffs,
            direct_radius: 4 * (b.radius() + 1),
        }
    }

    fn value(&self, i: i64) -> f64 {
        if i.abs() <= self.direct_radius {
            return -power_sum(i, self.d, self.s, self.b) / self.norm;
        }
        let x = i.abs() as f64;
        let sign = if i < 0 { -1.0 } else { 1.0 };
        let mut acc = 0.0;
        let mut pow = x.powf(self.p);
        let mut parity = 1.0;
        for c in &self.coeffs {
            acc += c * parity * pow;
            pow /= x;
            parity *= sign;
        }
        -acc / self.norm
    }

    /// `sum_{|i| > radius} R(i)^2` from the squared expansion and Hurwitz zeta sums.
    fn tail(&self, radius: i64) -> f64 {
        let a = (radius + 1) as f64;
        let kmax = self.coeffs.len();
        let mut total = 0.0;
        for n in (0..2 * kmax - 1).step_by(2) {
            let e: f64 = (n.saturating_sub(kmax - 1)..=n.min(kmax - 1))
                .map(|k| self.coeffs[k] * self.coeffs[n - k])
                .sum();
            if e == 0.0 {
                continue;
            }
            // both signs of i contribute e_n (odd n cancel)
            total += 2.0 * e * hurwitz_zeta(n as f64 - 2.0 * self.p, a);
        }
        total / (self.norm * self.norm)
    }
}

/// Truncated series with convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    pub value: f64,
    /// Number of indices summed term by term.
    pub terms_used: usize,
    pub truncation_radius: i64,
    /// Change of the value when the radius was doubled.
    pub tail_estimate: f64,
    /// Closed-form contribution of `|i| > truncation_radius`.
    pub tail_sum: f64,
}

/// `sum_{i in Z} R(i, 1, 2D, |.|^s, b)^2`.
///
/// Terms with `|i| <= I` are summed explicitly and the remainder is added in
/// closed form; `I` is doubled until two consecutive estimates agree to `rtol`.
pub fn series_r2(b: &Filter, d: usize, s: f64, rtol: f64) -> Result<SeriesResult> {
    check_power_args(d, s, b)?;
    let order = b.order();
    if (order as f64) / 2.0 <= d as f64 + s / 2.0 + 0.25 {
        return Err(Error::CltConditionViolated {
            order: order / 2,
            d,
            s,
        });
    }
    let r = PowerRemainder::new(b, d, s);
    let mut radius = (8 * (b.radius() + 1)).max(32);
    let mut partial: f64 = (-radius..=radius).map(|i| r.value(i).powi(2)).sum();
    let mut estimate = partial + r.tail(radius);
    loop {
        let next_radius = 2 * radius;
        let ring: f64 = (radius + 1..=next_radius)
            .map(|i| r.value(-i).powi(2) + r.value(i).powi(2))
            .sum();
        let next_partial = partial + ring;
        let tail = r.tail(next_radius);
        let next = next_partial + tail;
        let change = (next - estimate).abs();
        if change <= rtol * next.abs() {
            return Ok(SeriesResult {
                value: next,
                terms_used: (2 * next_radius + 1) as usize,
                truncation_radius: next_radius,
                tail_estimate: change,
                tail_sum: tail,
            });
        }
        if next_radius >= MAX_RADIUS {
            return Err(Error::Degenerate(format!(
                "series did not settle to rtol {rtol} (last change {change:e})"
            )));
        }
        radius = next_radius;
        partial = next_partial;
        estimate = next;
    }
}

/// `zeta(sigma, a) = sum_{k >= 0} (a + k)^(-sigma)` for `sigma > 1`, `a > 0`,
/// by Euler–Maclaurin summation.
pub fn hurwitz_zeta(sigma: f64, a: f64) -> f64 {
    assert!(sigma > 1.0, "Hurwitz zeta diverges for sigma = {sigma}");
    const DIRECT: usize = 12;
    // B_{2j} / (2j)!
    const BERNOULLI_OVER_FACT: [f64; 10] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
        -3617.0 / 10670622842880000.0,
        43867.0 / 5109094217170944000.0,
        -174611.0 / 802857662698291200000.0,
    ];
    let mut sum: f64 = (0..DIRECT).map(|k| (a + k as f64).powf(-sigma)).sum();
    let x = a + DIRECT as f64;
    let base = x.powf(-sigma);
    sum += x * base / (sigma - 1.0) + 0.5 * base;
    // rising factorial sigma (sigma + 1) ... (sigma + 2j - 2) times x^(-sigma - 2j + 1)
    let mut rising = sigma;
    let mut pow = base / x;
    for (jm1, c) in BERNOULLI_OVER_FACT.iter().enumerate() {
        let term = c * rising * pow;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        let j = jm1 as f64 + 1.0;
        rising *= (sigma + 2.0 * j - 1.0) * (sigma + 2.0 * j);
        pow /= x * x;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqalg::VariationSequence;

    fn abs_pow(s: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| x.abs().powf(s)
    }

    fn second_difference() -> Filter {
        VariationSequence::elementary(1).unwrap().self_convolution()
    }

    #[test]
    fn discrete_difference_examples() {
        let e1 = VariationSequence::elementary(1).unwrap();
        assert_eq!(discrete_difference(e1.filter(), |x| x, 0.5, 0), 0.5);
        let e2 = VariationSequence::elementary(2).unwrap();
        for (i, delta) in [(0, 0.3), (5, 1.7), (-3, 0.01)] {
            let v = discrete_difference(e2.filter(), |x| 4.0 - 2.5 * x, delta, i);
            assert!(v.abs() < 1e-12);
        }
        assert_eq!(
            discrete_difference(&second_difference(), abs_pow(1.0), 1.0, 0),
            -2.0
        );
    }

    #[test]
    fn remainder_quadrature_examples() {
        let b = second_difference();
        assert_eq!(remainder_quadrature(0, 1.0, 0, abs_pow(1.0), &b), 2.0);
        assert_eq!(remainder_quadrature(2, 1.0, 0, abs_pow(1.0), &b), 0.0);
        let b2 = VariationSequence::elementary(2).unwrap().self_convolution();
        let quad = remainder_quadrature(0, 1.0, 2, abs_pow(1.0), &b2);
        let closed = remainder_power_closed(0, 1, 1.0, &b2).unwrap();
        assert!((quad - closed).abs() < 1e-8, "{quad} vs {closed}");
    }

    #[test]
    fn closed_form_examples() {
        let b = second_difference();
        assert_eq!(remainder_power_closed(0, 0, 1.0, &b).unwrap(), 2.0);
        for s in [0.1, 0.7, 1.9] {
            assert_eq!(remainder_power_closed(0, 0, s, &b).unwrap(), 2.0);
        }
        // second difference has order 2 < 2D = 4
        assert!(remainder_power_closed(0, 2, 1.0, &b).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for d in 0..=2usize {
            let filters = [
                VariationSequence::elementary(d + 1).unwrap().self_convolution(),
                VariationSequence::elementary(d + 2).unwrap().filter().clone(),
            ];
            for b in &filters {
                for s in [0.5, 1.0, 1.5] {
                    for i in -10..=10 {
                        let closed = remainder_power_closed(i, d, s, b).unwrap();
                        let quad = remainder_quadrature(i, 1.0, 2 * d as u32, abs_pow(s), b);
                        assert!(
                            (closed - quad).abs() <= 1e-8 * closed.abs().max(1.0),
                            "D={d} s={s} i={i}: {closed} vs {quad}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn annihilation_of_low_degree_polynomials() {
        // R(i, delta, q, f, a) = 0 when deg f < M(a) - q
        let a = VariationSequence::elementary(5).unwrap();
        let coeffs = [0.3, -1.2, 0.7, 2.0, -0.4];
        for q in 0..4u32 {
            let deg = 4 - q as usize; // deg f = M - q - 1
            let f = |x: f64| coeffs[..=deg].iter().rev().fold(0.0, |acc, c| acc * x + c);
            for i in [-4, 0, 3] {
                let r = remainder_quadrature(i, 0.37, q, f, a.filter());
                assert!(r.abs() < 1e-10, "q={q} i={i}: {r}");
            }
        }
    }

    #[test]
    fn taylor_identity_between_orders() {
        // -Delta_{a,i}(F) = delta^q R(i, delta, q, F^(q), a) when q <= M(a)
        let a = VariationSequence::elementary(3).unwrap();
        let s = 0.6;
        let delta = 0.25;
        let q = 2u32;
        let big_f = move |x: f64| x.abs().powf(s + 2.0) / ((s + 1.0) * (s + 2.0));
        for i in [-5, -2, 0, 1, 4] {
            let lhs = remainder_quadrature(i, delta, 0, big_f, a.filter());
            let rhs = delta.powi(q as i32) * remainder_quadrature(i, delta, q, abs_pow(s), a.filter());
            assert!((lhs - rhs).abs() < 1e-12, "i={i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn series_of_second_difference_is_four() {
        let res = series_r2(&second_difference(), 0, 1.0, DEFAULT_RTOL).unwrap();
        assert!((res.value - 4.0).abs() < 1e-12, "{res:?}");
        assert!(res.tail_estimate <= DEFAULT_RTOL * res.value);
    }

    #[test]
    fn series_bounded_below_by_central_term() {
        for a in crate::seqalg::reference_zoo() {
            let b = a.self_convolution();
            for s in [0.3, 0.9, 1.3] {
                if let Ok(res) = series_r2(&b, 0, s, DEFAULT_RTOL) {
                    let r0 = remainder_power_closed(0, 0, s, &b).unwrap();
                    assert!(res.value >= r0 * r0, "{} s={s}", a.label());
                }
            }
        }
    }

    #[test]
    fn series_rejects_divergent_configuration() {
        assert!(matches!(
            series_r2(&second_difference(), 0, 1.6, DEFAULT_RTOL),
            Err(Error::CltConditionViolated { .. })
        ));
    }

    #[test]
    fn series_matches_brute_force_partial_sums() {
        // Slow decay (M = 1, s = 1.3): R(i)^2 ~ i^(-1.4). Compare against a
        // direct sum to 200000 plus an integral tail estimate.
        let b = second_difference();
        let s = 1.3;
        let res = series_r2(&b, 0, s, DEFAULT_RTOL).unwrap();
        let n = 200_000i64;
        let direct: f64 = (-n..=n)
            .map(|i| {
                let i = i as f64;
                let v = (i + 1.0).abs().powf(s) - 2.0 * i.abs().powf(s) + (i - 1.0).abs().powf(s);
                v * v
            })
            .sum();
        // R(i) ~ s(s-1) i^(s-2) for large i
        let c = s * (s - 1.0);
        let tail = 2.0 * c * c * (n as f64).powf(2.0 * s - 3.0) / (3.0 - 2.0 * s);
        assert!(((direct + tail) - res.value).abs() < 1e-6 * res.value);
    }

    #[test]
    fn series_stable_under_radius_doubling() {
        let b = VariationSequence::elementary(2).unwrap().self_convolution();
        let res = series_r2(&b, 0, 0.5, DEFAULT_RTOL).unwrap();
        let r = PowerRemainder::new(&b, 0, 0.5);
        let at = |radius: i64| -> f64 {
            (-radius..=radius).map(|i| r.value(i).powi(2)).sum::<f64>() + r.tail(radius)
        };
        let a1 = at(res.truncation_radius);
        let a2 = at(2 * res.truncation_radius);
        assert!((a1 - a2).abs() <= DEFAULT_RTOL * a1);
        assert!((a1 - res.value).abs() <= DEFAULT_RTOL * a1);
    }

    #[test]
    fn expansion_agrees_with_direct_values() {
        for a in crate::seqalg::reference_zoo() {
            let b = a.self_convolution();
            let d = if a.order() >= 2 { 1 } else { 0 };
            let r = PowerRemainder::new(&b, d, 0.8);
            for i in [r.direct_radius + 1, r.direct_radius + 7] {
                let direct = -power_sum(i, d, 0.8, &b) / r.norm;
                let expanded = r.value(i);
                let scale = (i as f64).powf(r.p) / r.norm * 1e-12;
                assert!((direct - expanded).abs() < scale, "{} i={i}", a.label());
            }
        }
    }

    #[test]
    fn hurwitz_zeta_values() {
        // zeta(2, 1) = pi^2 / 6, zeta(3, 1) = Apery's constant
        let pi2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - pi2).abs() < 1e-14);
        assert!((hurwitz_zeta(3.0, 1.0) - 1.2020569031595942).abs() < 1e-14);
        // shift identity zeta(s, a) = a^-s + zeta(s, a + 1)
        for s in [1.1, 1.7, 4.3, 30.0] {
            let a = 40.0;
            let lhs = hurwitz_zeta(s, a);
            let rhs = a.powf(-s) + hurwitz_zeta(s, a + 1.0);
            assert!((lhs - rhs).abs() < 1e-14 * lhs, "s={s}");
        }
    }
}
