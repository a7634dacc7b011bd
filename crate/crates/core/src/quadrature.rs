//! Gauss–Legendre and Gauss–Hermite rules.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `int_a^b f`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// `int_a^b f` for an integrand whose only irregularity sits at the endpoint
    /// `a`: geometric panels shrinking toward `a`.
    pub fn integrate_graded<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        const RATIO: f64 = 0.15;
        const LEVELS: usize = 22;
        let len = b - a;
        let mut total = 0.0;
        let mut outer = 1.0;
        for _ in 0..LEVELS {
            let inner = outer * RATIO;
            total += self.integrate(a + len * inner, a + len * outer, &f);
            outer = inner;
        }
        total + self.integrate(a, a + len * outer, &f)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Probabilists' Gauss–Hermite rule: `E[f(Z)] ~ sum_i w_i f(x_i)` for `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let q = GaussLegendre::new(10);
        let v = q.integrate(0.0, 2.0, |x| x.powi(19));
        assert!((v - 2f64.powi(20) / 20.0).abs() < 1e-9 * v);
        let q = GaussLegendre::new(64);
        let w: f64 = q.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn graded_rule_handles_endpoint_power() {
        let q = GaussLegendre::new(32);
        for s in [0.1, 0.5, 1.3] {
            let v = q.integrate_graded(0.0, 1.0, |x| x.powf(s));
            assert!((v - 1.0 / (s + 1.0)).abs() < 1e-13, "s={s}: {v}");
        }
    }

    #[test]
    fn hermite_moments() {
        let q = GaussHermite::new(40);
        assert!((q.expect(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!(q.expect(|x| x).abs() < 1e-13);
        assert!((q.expect(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((q.expect(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!((q.expect(|x| x.powi(6)) - 15.0).abs() < 1e-10);
    }
}
