//! Exact transition sampler for the 1-D square-root diffusion.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::engine::path_rng;

/// Draws `X(Δ)` given `X(0) = x` for `dX = (b + βX)dt + √(αX) dW`, `β < 0`.
///
/// `X(Δ)/c` is noncentral chi-square with `4b/α` degrees of freedom and
/// noncentrality `x e^{βΔ}/c`, where `c = α(1 − e^{βΔ})/(−4β)`; sampled as a
/// Poisson mixture of central chi-squares.
pub fn cir_exact_step<R: Rng + ?Sized>(b: f64, beta: f64, alpha: f64, x: f64, delta: f64, rng: &mut R) -> f64 {
    debug_assert!(beta < 0.0 && alpha > 0.0 && b > 0.0 && x >= 0.0);
    if delta <= 0.0 {
        return x;
    }
    let decay = (beta * delta).exp();
    let c = alpha * -(beta * delta).exp_m1() / (-4.0 * beta);
    let df = 4.0 * b / alpha;
    let nc = x * decay / c;
    let n = if nc > 0.0 {
        let p: f64 = Poisson::new(nc / 2.0).expect("positive Poisson mean").sample(rng);
        p
    } else {
        0.0
    };
    let shape = df / 2.0 + n;
    let g: f64 = Gamma::new(shape, 2.0).expect("positive gamma shape").sample(rng);
    c * g
}

/// Exact skeleton `x0, X(Δ), …, X(nΔ)` on stream 0 of `seed`.
pub fn cir_exact_path(b: f64, beta: f64, alpha: f64, x0: f64, delta: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = path_rng(seed, 0);
    let mut out = Vec::with_capacity(n + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..n {
        x = cir_exact_step(b, beta, alpha, x, delta, &mut rng);
        out.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_mean() {
        let (b, beta, alpha, x, delta) = (1.0, -1.0, 1.0, 2.0, 0.5);
        let mut rng = path_rng(42, 0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| cir_exact_step(b, beta, alpha, x, delta, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let e = (beta * delta).exp();
        let want = x * e + b * (e - 1.0) / beta;
        assert!((mean - want).abs() < 4.0 * (var / n as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn small_step_stays_close() {
        let mut rng = path_rng(1, 0);
        let mut dev: Vec<f64> =
            (0..1001).map(|_| (cir_exact_step(1.0, -1.0, 1.0, 1.0, 1e-6, &mut rng) - 1.0).abs()).collect();
        dev.sort_by(f64::total_cmp);
        assert!(dev[500] < 5e-3);
        assert_eq!(cir_exact_step(1.0, -1.0, 1.0, 1.0, 0.0, &mut rng), 1.0);
    }

    #[test]
    fn from_zero_is_positive() {
        let mut rng = path_rng(2, 0);
        assert!((0..100).all(|_| cir_exact_step(1.0, -1.0, 1.0, 0.0, 0.1, &mut rng) >= 0.0));
    }
}
