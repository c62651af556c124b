//! Generalized Riccati equations for the exponential-affine transform.
//!
//! `E_x[exp(uᵀX(t))] = exp(φ(t,u) + ψ(t,u)ᵀx)` where
//!
//! ```text
//! φ' = ψᵀb + ½ψᵀaψ + λ(θ(ψ) − 1)
//! ψ_i' = ψᵀβ_i + ½ψᵀα_iψ + κ_i(θ(ψ) − 1)
//! ```
//!
//! with `θ` the jump transform and `β_i` the i-th column of `β`.

mod closed_form;

pub use closed_form::{closed_form_oracle, ClosedFormModel};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};
use crate::model::ModelSpec;

/// Exponential-component domain margin: `Re(ψ_j) < θ_j − DOMAIN_MARGIN`.
pub const DOMAIN_MARGIN: f64 = 1e-9;
/// Step-halving error above which a warning is attached.
pub const STEP_ERROR_WARNING: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformSolution {
    pub u: Vec<Complex64>,
    pub grid: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub psi: Vec<Vec<Complex64>>,
    pub step_error_estimate: f64,
    pub warnings: Vec<String>,
}

impl TransformSolution {
    pub fn final_phi(&self) -> Complex64 {
        *self.phi.last().expect("grid is never empty")
    }

    pub fn final_psi(&self) -> &[Complex64] {
        self.psi.last().expect("grid is never empty")
    }

    /// `exp(φ(t) + ψ(t)ᵀx)` at the last grid point.
    pub fn char_fn(&self, x: &[f64]) -> Complex64 {
        let e: Complex64 = self.final_psi().iter().zip(x).map(|(p, xi)| p * xi).sum();
        (self.final_phi() + e).exp()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransformOptions {
    /// Step size; defaults to `min(1e-3, T/1000)`.
    pub dt: Option<f64>,
    /// Accept initial values with positive real parts (exploratory use).
    pub allow_real: bool,
}

impl TransformOptions {
    pub fn with_dt(dt: f64) -> Self {
        TransformOptions { dt: Some(dt), allow_real: false }
    }
}

pub fn default_dt(t: f64) -> f64 {
    (t / 1000.0).min(1e-3)
}

/// Spec coefficients flattened for the ODE right-hand side.
struct RiccatiSystem<'a> {
    spec: &'a ModelSpec,
    d: usize,
    /// Volatility factors with a nonzero `α_i`.
    alpha_idx: Vec<usize>,
    rates: Vec<Option<f64>>,
    jumps_active: bool,
}

impl<'a> RiccatiSystem<'a> {
    fn new(spec: &'a ModelSpec) -> Self {
        let alpha_idx = (0..spec.m).filter(|i| spec.alpha[*i].iter().any(|v| *v != 0.0)).collect();
        let jumps_active = spec.has_jumps();
        RiccatiSystem { spec, d: spec.d, alpha_idx, rates: spec.jumps.exponential_rates(), jumps_active }
    }

    fn quad_form(m: &nalgebra::DMatrix<f64>, psi: &[Complex64]) -> Complex64 {
        let d = psi.len();
        let mut acc = ZERO;
        for i in 0..d {
            let mut row = ZERO;
            for j in 0..d {
                row += psi[j] * m[(i, j)];
            }
            acc += psi[i] * row;
        }
        acc
    }

    fn check_domain(&self, psi: &[Complex64], t: f64) -> Result<()> {
        if !self.jumps_active {
            return Ok(());
        }
        for (j, (p, r)) in psi.iter().zip(&self.rates).enumerate() {
            if let Some(rate) = r {
                if p.re >= rate - DOMAIN_MARGIN {
                    return Err(AjdError::RiccatiDomain {
                        time: t,
                        reason: format!("Re(psi_{}) = {} reached the exponential rate {rate}", j + 1, p.re),
                    });
                }
            }
        }
        if psi.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(AjdError::RiccatiDomain { time: t, reason: "solution blew up".into() });
        }
        Ok(())
    }

    /// Writes `dψ` into `out` and returns `dφ`.
    fn rhs(&self, psi: &[Complex64], out: &mut [Complex64]) -> Result<Complex64> {
        let spec = self.spec;
        let jump = if self.jumps_active { spec.jumps.transform(psi)? - 1.0 } else { ZERO };
        let mut dphi = Self::quad_form(&spec.a, psi) * 0.5 + jump * spec.lambda0;
        for (p, bi) in psi.iter().zip(spec.b.iter()) {
            dphi += p * bi;
        }
        for i in 0..self.d {
            let mut v = jump * spec.kappa[i];
            for j in 0..self.d {
                v += psi[j] * spec.beta[(j, i)];
            }
            out[i] = v;
        }
        for &i in &self.alpha_idx {
            out[i] += Self::quad_form(&spec.alpha[i], psi) * 0.5;
        }
        Ok(dphi)
    }

    /// Fixed-step RK4 over `n` steps of `[0, t_end]`; returns `[φ, ψ…]` at
    /// every `stride`-th step.
    fn integrate(&self, u: &[Complex64], t_end: f64, n: usize, stride: usize) -> Result<Vec<Vec<Complex64>>> {
        let d = self.d;
        let h = if n == 0 { 0.0 } else { t_end / n as f64 };
        let mut phi = ZERO;
        let mut psi = u.to_vec();
        let mut out = Vec::with_capacity(n / stride.max(1) + 1);
        let pack = |phi: Complex64, psi: &[Complex64]| {
            let mut v = Vec::with_capacity(d + 1);
            v.push(phi);
            v.extend_from_slice(psi);
            v
        };
        out.push(pack(phi, &psi));
        let mut k1 = vec![ZERO; d];
        let mut k2 = vec![ZERO; d];
        let mut k3 = vec![ZERO; d];
        let mut k4 = vec![ZERO; d];
        let mut tmp = vec![ZERO; d];
        for step in 0..n {
            let t0 = step as f64 * h;
            self.check_domain(&psi, t0)?;
            let f1 = self.rhs(&psi, &mut k1)?;
            for i in 0..d {
                tmp[i] = psi[i] + k1[i] * (0.5 * h);
            }
            self.check_domain(&tmp, t0 + 0.5 * h)?;
            let f2 = self.rhs(&tmp, &mut k2)?;
            for i in 0..d {
                tmp[i] = psi[i] + k2[i] * (0.5 * h);
            }
            self.check_domain(&tmp, t0 + 0.5 * h)?;
            let f3 = self.rhs(&tmp, &mut k3)?;
            for i in 0..d {
                tmp[i] = psi[i] + k3[i] * h;
            }
            self.check_domain(&tmp, t0 + h)?;
            let f4 = self.rhs(&tmp, &mut k4)?;
            phi += (f1 + f2 * 2.0 + f3 * 2.0 + f4) * (h / 6.0);
            for i in 0..d {
                psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
            if (step + 1) % stride == 0 {
                out.push(pack(phi, &psi));
            }
        }
        self.check_domain(&psi, t_end)?;
        Ok(out)
    }
}

/// Right-hand side `(dφ/dt, dψ/dt)` at `ψ`.
pub fn riccati_rhs(spec: &ModelSpec, psi: &[Complex64]) -> Result<(Complex64, Vec<Complex64>)> {
    spec.check_dimensions()?;
    if psi.len() != spec.d {
        return Err(AjdError::Dimension(format!("psi has length {}, expected {}", psi.len(), spec.d)));
    }
    let sys = RiccatiSystem::new(spec);
    let mut out = vec![ZERO; spec.d];
    let dphi = sys.rhs(psi, &mut out)?;
    Ok((dphi, out))
}

fn check_initial(spec: &ModelSpec, u: &[Complex64], allow_real: bool) -> Result<()> {
    if u.len() != spec.d {
        return Err(AjdError::Dimension(format!("u has length {}, expected {}", u.len(), spec.d)));
    }
    if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(AjdError::InvalidArgument("u must be finite".into()));
    }
    if allow_real {
        return Ok(());
    }
    for (i, z) in u.iter().enumerate() {
        let bad = if i < spec.m { z.re > 1e-12 } else { z.re.abs() > 1e-12 };
        if bad {
            return Err(AjdError::InvalidArgument(format!(
                "u[{}] = {z} is outside the solvable domain (Re u_I <= 0, Re u_J = 0); pass allow_real to override",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Integrates the Riccati system on `[0, t]` with RK4 and a step-halving
/// error estimate. Reported values come from the half-step run.
pub fn solve_transform(spec: &ModelSpec, u: &[Complex64], t: f64, opts: TransformOptions) -> Result<TransformSolution> {
    spec.check_dimensions()?;
    check_initial(spec, u, opts.allow_real)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(AjdError::InvalidArgument(format!("horizon must be finite and nonnegative, got {t}")));
    }
    let dt = opts.dt.unwrap_or_else(|| default_dt(t));
    if t > 0.0 && !(dt > 0.0) {
        return Err(AjdError::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    let n = if t == 0.0 { 0 } else { (t / dt - 1e-9).ceil().max(1.0) as usize };
    let sys = RiccatiSystem::new(spec);
    let coarse = sys.integrate(u, t, n, 1)?;
    let fine = sys.integrate(u, t, 2 * n, 2)?;
    let mut err: f64 = 0.0;
    for (c, f) in coarse.iter().zip(&fine) {
        for (a, b) in c.iter().zip(f) {
            err = err.max((a - b).norm() / 15.0);
        }
    }
    let mut warnings = Vec::new();
    if err > STEP_ERROR_WARNING {
        warnings.push(format!("step-halving error estimate {err:.3e} exceeds {STEP_ERROR_WARNING:.0e}; reduce dt"));
    }
    let h = if n == 0 { 0.0 } else { t / n as f64 };
    let grid = (0..=n).map(|k| if k == n { t } else { k as f64 * h }).collect();
    let phi = fine.iter().map(|v| v[0]).collect();
    let psi = fine.into_iter().map(|mut v| v.split_off(1)).collect();
    Ok(TransformSolution { u: u.to_vec(), grid, phi, psi, step_error_estimate: err, warnings })
}

/// Solves for several initial values in parallel.
pub fn solve_transforms(
    spec: &ModelSpec,
    us: &[Vec<Complex64>],
    t: f64,
    opts: TransformOptions,
) -> Result<Vec<TransformSolution>> {
    us.par_iter().map(|u| solve_transform(spec, u, t, opts)).collect()
}

/// `E_x[exp(uᵀX(t))] = exp(φ(t,u) + ψ(t,u)ᵀx)`.
pub fn char_fn(spec: &ModelSpec, x: &[f64], t: f64, u: &[Complex64]) -> Result<Complex64> {
    char_fn_with(spec, x, t, u, TransformOptions::default())
}

pub fn char_fn_with(spec: &ModelSpec, x: &[f64], t: f64, u: &[Complex64], opts: TransformOptions) -> Result<Complex64> {
    spec.check_state(x)?;
    Ok(solve_transform(spec, u, t, opts)?.char_fn(x))
}

/// Residuals of both compositions of the flow property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiflowResiduals {
    /// `φ(t+s,u) − φ(t,u) − φ(s,ψ(t,u))` and `ψ(t+s,u) − ψ(t,ψ(s,u))`.
    pub printed_order: f64,
    /// `φ(t+s,u) − φ(s,u) − φ(t,ψ(s,u))` and `ψ(t+s,u) − ψ(s,ψ(t,u))`.
    pub swapped_order: f64,
}

fn end_values(spec: &ModelSpec, u: &[Complex64], t: f64) -> Result<(Complex64, Vec<Complex64>)> {
    let opts = TransformOptions { dt: None, allow_real: true };
    let sol = solve_transform(spec, u, t, opts)?;
    Ok((sol.final_phi(), sol.final_psi().to_vec()))
}

fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn semiflow_residuals(spec: &ModelSpec, u: &[Complex64], t: f64, s: f64) -> Result<SemiflowResiduals> {
    check_initial(spec, u, false)?;
    let (phi_ts, psi_ts) = end_values(spec, u, t + s)?;
    let (phi_t, psi_t) = end_values(spec, u, t)?;
    let (phi_s, psi_s) = end_values(spec, u, s)?;
    let (phi_s_of_t, psi_s_of_t) = end_values(spec, &psi_t, s)?;
    let (phi_t_of_s, psi_t_of_s) = end_values(spec, &psi_s, t)?;
    let printed = (phi_ts - phi_t - phi_s_of_t).norm().max(dist(&psi_ts, &psi_t_of_s));
    let swapped = (phi_ts - phi_s - phi_t_of_s).norm().max(dist(&psi_ts, &psi_s_of_t));
    Ok(SemiflowResiduals { printed_order: printed, swapped_order: swapped })
}

/// Residual of the flow property in its printed composition order.
pub fn semiflow_residual(spec: &ModelSpec, u: &[Complex64], t: f64, s: f64) -> Result<f64> {
    Ok(semiflow_residuals(spec, u, t, s)?.printed_order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn jump_cir() -> ModelSpec {
        ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(
            1.0,
            DVector::from_element(1, 1.0),
            JumpDist::exponential(2.0).unwrap(),
        )
    }

    #[test]
    fn rhs_examples() {
        let (dphi, dpsi) = riccati_rhs(&jump_cir(), &[ZERO]).unwrap();
        assert_eq!((dphi, dpsi[0]), (ZERO, ZERO));
        let ou = ModelSpec::ou(0.0, -1.0, 2.0);
        let (dphi, dpsi) = riccati_rhs(&ou, &[c(0.0, 1.0)]).unwrap();
        assert!((dphi - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((dpsi[0] - c(0.0, -1.0)).norm() < 1e-15);
        let cir = ModelSpec::cir(1.0, -1.0, 1.0);
        let (dphi, dpsi) = riccati_rhs(&cir, &[c(-1.0, 0.0)]).unwrap();
        assert!((dphi - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((dpsi[0] - c(1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_initial_value_stays_zero() {
        let sol = solve_transform(&jump_cir(), &[ZERO], 2.0, TransformOptions::default()).unwrap();
        assert!(sol.phi.iter().all(|p| *p == ZERO));
        assert!(sol.psi.iter().all(|p| p[0] == ZERO));
        assert_eq!(sol.grid.len(), 2001);
        assert_eq!(*sol.grid.last().unwrap(), 2.0);
    }

    #[test]
    fn ou_matches_closed_form() {
        let ou = ModelSpec::ou(0.0, -1.0, 2.0);
        let sol = solve_transform(&ou, &[c(0.0, 1.0)], 1.0, TransformOptions::default()).unwrap();
        let e = (-1.0f64).exp();
        assert!((sol.final_psi()[0] - c(0.0, e)).norm() < 1e-12);
        assert!((sol.final_phi() - c(-(1.0 - e * e) / 2.0, 0.0)).norm() < 1e-12);
        assert!(sol.warnings.is_empty());
    }

    #[test]
    fn cir_matches_closed_form() {
        let sol = solve_transform(&ModelSpec::cir(1.0, -1.0, 1.0), &[c(-1.0, 0.0)], 1.0, TransformOptions::default())
            .unwrap();
        let (phi, psi) =
            closed_form_oracle(ClosedFormModel::Cir { b: 1.0, beta: -1.0, alpha: 1.0 }, c(-1.0, 0.0), 1.0).unwrap();
        assert!((sol.final_psi()[0] - psi).norm() < 1e-8);
        assert!((sol.final_phi() - phi).norm() < 1e-8);
    }

    #[test]
    fn ou_stationary_limit() {
        let cf = char_fn(&ModelSpec::ou(0.0, -1.0, 2.0), &[0.0], 20.0, &[c(0.0, 1.0)]).unwrap();
        assert!((cf - c((-0.5f64).exp(), 0.0)).norm() < 1e-6);
        let t0 = char_fn(&jump_cir(), &[1.3], 0.0, &[c(0.0, 0.7)]).unwrap();
        assert!((t0 - c(0.0, 0.7 * 1.3).exp()).norm() < 1e-15);
    }

    #[test]
    fn domain_violation_reports_time() {
        // ψ grows toward the exponential rate for real u with a transient model
        let s = ModelSpec::cir(1.0, 1.0, 1.0).with_jumps(
            1.0,
            DVector::from_element(1, 1.0),
            JumpDist::exponential(2.0).unwrap(),
        );
        let opts = TransformOptions { dt: Some(1e-3), allow_real: true };
        match solve_transform(&s, &[c(1.0, 0.0)], 5.0, opts) {
            Err(AjdError::RiccatiDomain { time, .. }) => assert!(time > 0.0 && time < 5.0),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(matches!(
            solve_transform(&s, &[c(1.0, 0.0)], 1.0, TransformOptions::default()),
            Err(AjdError::InvalidArgument(_))
        ));
    }

    #[test]
    fn semiflow_examples() {
        let ou = ModelSpec::ou(0.0, -1.0, 2.0);
        let u = [c(0.0, 1.0)];
        assert_eq!(semiflow_residual(&ou, &u, 0.7, 0.0).unwrap(), 0.0);
        assert!(semiflow_residual(&ou, &u, 0.5, 0.5).unwrap() < 1e-8);
        let r = semiflow_residuals(&jump_cir(), &u, 0.3, 0.7).unwrap();
        assert!(r.printed_order < 1e-7 && r.swapped_order < 1e-7, "{r:?}");
    }

    #[test]
    fn rk4_order_on_ou() {
        let ou = ModelSpec::ou(0.5, -1.0, 2.0);
        let u = [c(0.0, 1.5)];
        let (phi, psi) = closed_form_oracle(ClosedFormModel::Ou { b: 0.5, beta: -1.0, a: 2.0 }, u[0], 2.0).unwrap();
        let err = |dt: f64| {
            // coarse run only: compare the half-step result's predecessor
            let sys = RiccatiSystem::new(&ou);
            let n = (2.0 / dt).round() as usize;
            let v = sys.integrate(&u, 2.0, n, n).unwrap();
            let last = v.last().unwrap();
            (last[0] - phi).norm().max((last[1] - psi).norm())
        };
        let (e1, e2) = (err(0.2), err(0.1));
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "observed order {order}");
        let est = solve_transform(&ou, &u, 2.0, TransformOptions::with_dt(0.2)).unwrap().step_error_estimate;
        let est2 = solve_transform(&ou, &u, 2.0, TransformOptions::with_dt(0.1)).unwrap().step_error_estimate;
        assert!((est / est2).log2() >= 3.5);
    }
}
