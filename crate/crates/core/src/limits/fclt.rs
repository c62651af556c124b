//! Replicate-based diagnostics for the functional central limit and for the
//! rate at which laws started from different points merge.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{closed_form_cov, closed_form_mean, HFunction, Integrator, SCHEMA_VERSION};
use crate::error::{AjdError, Result};
use crate::model::ModelSpec;
use crate::simulate::{path_rng, simulate_at_times, Engine, NullObserver};
use crate::stability::{classify, DEFAULT_MOMENT_ORDER};
use crate::stats;

/// Options for [`fclt_diagnostic`].
#[derive(Debug, Clone)]
pub struct FcltConfig {
    pub h: HFunction,
    pub x0: Vec<f64>,
    pub replicates: usize,
    pub horizon: f64,
    /// Number of equal blocks; block lengths `T/nblocks · 2^j` up to `T` are
    /// used for the variance-scaling fit. Must be a power of two.
    pub nblocks: usize,
    pub burn_in: f64,
    pub dt: f64,
    pub seed: u64,
}

impl FcltConfig {
    pub fn new(h: HFunction, x0: Vec<f64>) -> Self {
        FcltConfig { h, x0, replicates: 500, horizon: 320.0, nblocks: 16, burn_in: 10.0, dt: 1e-2, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcltReport {
    pub schema_version: u32,
    pub h: String,
    pub classification: String,
    pub replicates: usize,
    pub horizon: f64,
    /// `"closed_form"` when the closed-form mean and covariance standardize the
    /// integrals, `"empirical"` otherwise.
    pub standardization: String,
    /// Correlation of standardized integrals with normal scores, per coordinate.
    pub quantile_correlation: Vec<f64>,
    pub z_mean: Vec<f64>,
    pub z_variance: Vec<f64>,
    pub block_lengths: Vec<f64>,
    /// Slope of `log Var(∫₀ᴸ h)` against `log L`; `None` for a degenerate coordinate.
    pub variance_slope: Vec<Option<f64>>,
    pub variance_slope_r2: Vec<Option<f64>>,
    /// `Var(∫₀ᵀ h)/T` over the closed-form long-run variance, when available.
    pub variance_ratio: Option<Vec<f64>>,
}

/// Simulates independent replicates of `∫₀ᵀ h(X(s)) ds`, checks their
/// standardized law against the normal and checks that the variance of the
/// block integrals grows linearly in the block length.
///
/// Only runs when the model is classified (exponentially) ergodic.
pub fn fclt_diagnostic(spec: &ModelSpec, cfg: &FcltConfig) -> Result<FcltReport> {
    let report = classify(spec, DEFAULT_MOMENT_ORDER.max(2.0 * cfg.h.growth_order()))?;
    if !report.classification.is_exp_ergodic() {
        return Err(AjdError::Gate(format!(
            "central limit diagnostics need an ergodic classification, got {}",
            report.classification.label()
        )));
    }
    cfg.h.check(spec.d)?;
    spec.check_state(&cfg.x0)?;
    if cfg.replicates < 10 || !cfg.nblocks.is_power_of_two() || !(cfg.horizon > 0.0) || cfg.burn_in < 0.0 {
        return Err(AjdError::InvalidArgument(
            "need at least 10 replicates, a power-of-two block count, T > 0 and burn-in >= 0".into(),
        ));
    }
    let k = cfg.h.output_dim(spec.d);
    let engine = Engine::new(spec, cfg.dt)?;
    let block = cfg.horizon / cfg.nblocks as f64;

    // blocks[r] holds nblocks × k block integrals of replicate r
    let blocks = (0..cfg.replicates as u64)
        .into_par_iter()
        .map_init(
            || engine.scratch(),
            |sc, r| {
                let mut rng = path_rng(cfg.seed, r);
                let mut x = cfg.x0.clone();
                engine.advance(&mut rng, sc, &mut x, 0.0, cfg.burn_in, &mut NullObserver)?;
                let mut integ = Integrator::new(&cfg.h, spec.d, Some((0.0, block)));
                engine.advance(&mut rng, sc, &mut x, 0.0, cfg.horizon, &mut integ)?;
                integ.finish(cfg.horizon);
                let mut out = integ.chunk.take().expect("chunked integrator").integrals;
                out.resize(cfg.nblocks * k, 0.0);
                Ok(out)
            },
        )
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let prefix = |r: usize, nb: usize, c: usize| -> f64 { (0..nb).map(|j| blocks[r][j * k + c]).sum() };
    let totals: Vec<DVector<f64>> =
        (0..cfg.replicates).map(|r| DVector::from_fn(k, |c, _| prefix(r, cfg.nblocks, c))).collect();

    let closed_form = match cfg.h {
        HFunction::Identity => closed_form_mean(spec).ok().zip(closed_form_cov(spec).ok()),
        _ => None,
    };
    let whitening = closed_form.as_ref().and_then(|(v, sigma)| Some((v.clone(), sigma.clone().cholesky()?)));
    let sqrt_t = cfg.horizon.sqrt();
    let (standardization, z): (&str, Vec<DVector<f64>>) = match &whitening {
        Some((v, chol)) => {
            let center = v * cfg.horizon;
            let z = totals
                .iter()
                .map(|tot| {
                    let c = (tot - &center) / sqrt_t;
                    chol.l().solve_lower_triangular(&c).unwrap_or(c)
                })
                .collect();
            ("closed_form", z)
        }
        None => {
            let z = (0..k)
                .map(|c| {
                    let col: Vec<f64> = totals.iter().map(|t| t[c]).collect();
                    let (m, s) = (stats::mean(&col), stats::variance(&col).sqrt());
                    col.into_iter().map(|v| if s > 0.0 { (v - m) / s } else { 0.0 }).collect::<Vec<_>>()
                })
                .collect::<Vec<_>>();
            let z = (0..cfg.replicates).map(|r| DVector::from_fn(k, |c, _| z[c][r])).collect();
            ("empirical", z)
        }
    };
    let column = |c: usize| -> Vec<f64> { z.iter().map(|v| v[c]).collect() };
    let quantile_correlation = (0..k).map(|c| stats::normal_quantile_correlation(&column(c))).collect();
    let z_mean = (0..k).map(|c| stats::mean(&column(c))).collect();
    let z_variance = (0..k).map(|c| stats::variance(&column(c))).collect();

    let levels: Vec<usize> =
        std::iter::successors(Some(1usize), |n| Some(n * 2)).take_while(|n| *n <= cfg.nblocks).collect();
    let block_lengths: Vec<f64> = levels.iter().map(|n| *n as f64 * block).collect();
    let mut variance_slope = Vec::with_capacity(k);
    let mut variance_slope_r2 = Vec::with_capacity(k);
    for c in 0..k {
        let vars: Vec<f64> = levels
            .iter()
            .map(|nb| stats::variance(&(0..cfg.replicates).map(|r| prefix(r, *nb, c)).collect::<Vec<_>>()))
            .collect();
        if levels.len() < 2 || vars.iter().any(|v| !(*v > 0.0)) {
            variance_slope.push(None);
            variance_slope_r2.push(None);
            continue;
        }
        let lx: Vec<f64> = block_lengths.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = vars.iter().map(|v| v.ln()).collect();
        let fit = stats::linear_fit(&lx, &ly);
        variance_slope.push(Some(fit.slope));
        variance_slope_r2.push(Some(fit.r_squared));
    }

    let variance_ratio = closed_form.map(|(_, sigma)| {
        (0..k)
            .map(|c| {
                let col: Vec<f64> = totals.iter().map(|t| t[c]).collect();
                stats::variance(&col) / cfg.horizon / sigma[(c, c)]
            })
            .collect()
    });

    Ok(FcltReport {
        schema_version: SCHEMA_VERSION,
        h: cfg.h.id(),
        classification: report.classification.label().into(),
        replicates: cfg.replicates,
        horizon: cfg.horizon,
        standardization: standardization.into(),
        quantile_correlation,
        z_mean,
        z_variance,
        block_lengths,
        variance_slope,
        variance_slope_r2,
        variance_ratio,
    })
}

/// Quantile levels at which the empirical laws are compared.
pub const TV_QUANTILE_LEVELS: [f64; 19] =
    [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TvDecayReport {
    pub schema_version: u32,
    pub coord: usize,
    pub times: Vec<f64>,
    /// `max_q |F_a(q) − F_b(q)|` over pooled quantiles, one per time.
    pub distances: Vec<f64>,
    /// Slope of `log distance` against `t` (negative when the laws merge).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Distance between the laws of coordinate `coord` at each time for two
/// starting points, with a log-linear decay fit. Both ensembles share random
/// streams so the difference reflects the starting points only.
pub fn tv_proxy_decay(
    spec: &ModelSpec,
    xa: &[f64],
    xb: &[f64],
    times: &[f64],
    coord: usize,
    paths: usize,
    dt: f64,
    seed: u64,
) -> Result<TvDecayReport> {
    if coord >= spec.d {
        return Err(AjdError::Dimension(format!("coordinate {} out of range for d = {}", coord + 1, spec.d)));
    }
    if times.len() < 3 || paths < 100 {
        return Err(AjdError::InsufficientData("need at least 3 times and 100 paths".into()));
    }
    let a = simulate_at_times(spec, xa, times, dt, paths, seed)?;
    let b = simulate_at_times(spec, xb, times, dt, paths, seed)?;
    let d = spec.d;
    let marginal = |flat: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = flat.chunks(d).map(|s| s[coord]).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let distances: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(fa, fb)| {
            let (sa, sb) = (marginal(fa), marginal(fb));
            let mut pooled = [sa.as_slice(), sb.as_slice()].concat();
            pooled.sort_by(f64::total_cmp);
            TV_QUANTILE_LEVELS
                .iter()
                .map(|l| {
                    let q = stats::quantile_sorted(&pooled, *l);
                    (stats::ecdf_sorted(&sa, q) - stats::ecdf_sorted(&sb, q)).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    if distances.iter().any(|v| *v <= 0.0) {
        return Err(AjdError::InsufficientData("laws coincide at some time; pick earlier times or more paths".into()));
    }
    let logs: Vec<f64> = distances.iter().map(|v| v.ln()).collect();
    let fit = stats::linear_fit(times, &logs);
    Ok(TvDecayReport {
        schema_version: SCHEMA_VERSION,
        coord,
        times: times.to_vec(),
        distances,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;
    use nalgebra::DVector;

    #[test]
    fn gate_rejects_transient() {
        let s = ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(
            0.0,
            DVector::from_element(1, 4.0),
            JumpDist::exponential(2.0).unwrap(),
        );
        let cfg = FcltConfig::new(HFunction::Identity, vec![1.0]);
        assert!(matches!(fclt_diagnostic(&s, &cfg), Err(AjdError::Gate(_))));
    }

    #[test]
    fn ou_integrals_are_normal() {
        let s = ModelSpec::ou(0.0, -1.0, 1.0);
        let mut cfg = FcltConfig::new(HFunction::Identity, vec![0.0]);
        cfg.replicates = 200;
        cfg.horizon = 64.0;
        cfg.seed = 9;
        let r = fclt_diagnostic(&s, &cfg).unwrap();
        assert_eq!(r.standardization, "closed_form");
        assert!(r.quantile_correlation[0] > 0.98, "{r:?}");
        let slope = r.variance_slope[0].unwrap();
        assert!((slope - 1.0).abs() < 0.2, "{r:?}");
        assert!((r.variance_ratio.as_ref().unwrap()[0] - 1.0).abs() < 0.3, "{r:?}");
    }

    #[test]
    fn power_functional_uses_empirical_scale() {
        let s = ModelSpec::cir(1.0, -1.0, 1.0);
        let mut cfg = FcltConfig::new(HFunction::CoordinatePower { coord: 0, power: 2 }, vec![1.0]);
        cfg.replicates = 50;
        cfg.horizon = 16.0;
        let r = fclt_diagnostic(&s, &cfg).unwrap();
        assert_eq!(r.standardization, "empirical");
        assert!(r.variance_ratio.is_none());
        assert!((r.z_mean[0]).abs() < 1e-12 && (r.z_variance[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn merging_laws_decay() {
        let s = ModelSpec::cir(0.5, -0.5, 0.5);
        let times: Vec<f64> = (1..=6).map(f64::from).collect();
        let r = tv_proxy_decay(&s, &[0.2], &[3.0], &times, 0, 4000, 1e-2, 3).unwrap();
        assert!(r.slope < 0.0, "{r:?}");
        assert!(r.distances[0] > r.distances[5]);
    }
}
