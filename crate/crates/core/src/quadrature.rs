//! Gauss rules built with the Golub–Welsch eigenvalue method.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = diag[i];
        if i + 1 < n {
            jacobi[(i, i + 1)] = offdiag[i];
            jacobi[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Gauss–Laguerre rule for `∫₀^∞ f(x) e^{-x} dx`.
pub fn gauss_laguerre(n: usize) -> GaussRule {
    let diag: Vec<f64> = (0..n).map(|k| (2 * k + 1) as f64).collect();
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    golub_welsch(&diag, &off, 1.0)
}

/// Gauss–Hermite rule for `∫ f(x) e^{-x²} dx`.
pub fn gauss_hermite(n: usize) -> GaussRule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    golub_welsch(&diag, &off, std::f64::consts::PI.sqrt())
}

/// Expectation rule for a standard normal variable (`E f(N(0,1))`).
pub fn standard_normal_rule(n: usize) -> GaussRule {
    let h = gauss_hermite(n);
    let s2 = std::f64::consts::SQRT_2;
    let norm = std::f64::consts::PI.sqrt();
    GaussRule { nodes: h.nodes.iter().map(|x| x * s2).collect(), weights: h.weights.iter().map(|w| w / norm).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(rule: &GaussRule, f: impl Fn(f64) -> f64) -> f64 {
        rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * f(*x)).sum()
    }

    #[test]
    fn laguerre_integrates_monomials() {
        let rule = gauss_laguerre(64);
        let mut fact = 1.0;
        for k in 0..12 {
            if k > 0 {
                fact *= k as f64;
            }
            let got = apply(&rule, |x| x.powi(k));
            assert!((got - fact).abs() < 1e-9 * fact, "k={k}: {got} vs {fact}");
        }
    }

    #[test]
    fn normal_rule_moments() {
        let rule = standard_normal_rule(64);
        assert!((apply(&rule, |_| 1.0) - 1.0).abs() < 1e-12);
        assert!(apply(&rule, |x| x).abs() < 1e-12);
        assert!((apply(&rule, |x| x * x) - 1.0).abs() < 1e-12);
        assert!((apply(&rule, |x| x.powi(4)) - 3.0).abs() < 1e-10);
        // E cos(N) = e^{-1/2}
        assert!((apply(&rule, f64::cos) - (-0.5f64).exp()).abs() < 1e-12);
    }
}
