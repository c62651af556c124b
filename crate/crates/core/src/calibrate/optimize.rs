//! Derivative-free simplex minimizer with seeded restarts.

use rand::Rng;

use crate::simulate::path_rng;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Total objective evaluations across all restarts.
    pub max_evaluations: usize,
    /// Extra runs started from a perturbation of the incumbent.
    pub restarts: usize,
    /// Initial simplex edge relative to `max(|x_i|, 1)`.
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub f_tolerance: f64,
    /// ... and every vertex is within this distance of the best one.
    pub x_tolerance: f64,
    pub seed: u64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evaluations: 600,
            restarts: 2,
            initial_step: 0.1,
            f_tolerance: 1e-12,
            x_tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`; non-finite values are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let value = eval(x0, &mut evals);
        return Minimum { x: vec![], value, iterations: 0, evaluations: evals, converged: true };
    }
    let mut rng = path_rng(opts.seed, 0);
    let mut best = x0.to_vec();
    let mut best_value = eval(&best, &mut evals);
    let mut iterations = 0;
    let mut converged = false;
    for run in 0..=opts.restarts {
        let start: Vec<f64> = if run == 0 {
            best.clone()
        } else {
            best.iter().map(|v| v + opts.initial_step * v.abs().max(1.0) * rng.random_range(-0.5..0.5)).collect()
        };
        let mut simplex = vec![start.clone()];
        for i in 0..n {
            let mut p = start.clone();
            p[i] += opts.initial_step * start[i].abs().max(1.0);
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();
        let mut run_converged = false;
        while evals < opts.max_evaluations {
            iterations += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
            simplex = order.iter().map(|i| simplex[*i].clone()).collect();
            values = order.iter().map(|i| values[*i]).collect();
            let spread = values[n] - values[0];
            let size = simplex[1..]
                .iter()
                .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread.is_finite() && spread <= opts.f_tolerance.max(1e-14 * values[0].abs()) && size <= opts.x_tolerance
            {
                run_converged = true;
                break;
            }
            let centroid: Vec<f64> =
                (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
            let along =
                |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < values[0] {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            // outside contraction if the reflection helped at all, inside otherwise
            let xc = along(if fr < values[n] { -0.5 } else { 0.5 });
            let fc = eval(&xc, &mut evals);
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            for i in 1..=n {
                simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                values[i] = eval(&simplex[i], &mut evals);
            }
        }
        let (ib, vb) =
            values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
        if vb <= best_value {
            best_value = vb;
            best = simplex[ib].clone();
        }
        converged = run_converged;
        if evals >= opts.max_evaluations {
            break;
        }
    }
    Minimum { x: best, value: best_value, iterations, evaluations: evals, converged }
}
