//! Stability classification, Lyapunov matrices and transience rates.

mod generator;

pub use generator::{
    generator_apply, lyapunov_scan, GFamily, GeneratorEvaluator, GeneratorProbe, GeneratorValue, ScanOutcome,
    ScanPoint, ScanReport,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};
use crate::linalg::{self, max_sym_eigenvalue, min_sym_eigenvalue};
use crate::model::ModelSpec;

/// A matrix counts as stable when its spectral abscissa is below `-STABILITY_TOLERANCE`.
pub const STABILITY_TOLERANCE: f64 = 1e-10;

/// Default moment order reported with exponential ergodicity.
pub const DEFAULT_MOMENT_ORDER: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    /// `κ = 0` and `β` stable; `exp_p` is the moment order for which
    /// exponential ergodicity also holds.
    Ergodic {
        exp_p: f64,
    },
    ExpErgodic {
        p: f64,
    },
    #[serde(rename = "TRANSIENT_1D")]
    Transient1d,
    Inconclusive,
}

impl Classification {
    pub fn is_exp_ergodic(&self) -> bool {
        matches!(self, Classification::Ergodic { .. } | Classification::ExpErgodic { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Classification::Ergodic { .. } => "ERGODIC",
            Classification::ExpErgodic { .. } => "EXP_ERGODIC",
            Classification::Transient1d => "TRANSIENT_1D",
            Classification::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eig_beta_max_re: f64,
    pub eig_effective_max_re: f64,
    pub classification: Classification,
    /// Lyapunov matrix of the matrix that decided the classification.
    #[serde(with = "crate::linalg::serde_rows_opt")]
    pub h: Option<DMatrix<f64>>,
    pub notes: String,
}

/// Largest real part over the spectrum of `m`.
pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_stable(m: &DMatrix<f64>) -> bool {
    max_real_eigenvalue(m) < -STABILITY_TOLERANCE
}

/// Solves `MᵀH + HM = −I` through the Kronecker-sum linear system.
pub fn solve_lyapunov(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(AjdError::Dimension("Lyapunov equation needs a square matrix".into()));
    }
    let abscissa = max_real_eigenvalue(m);
    if abscissa >= -STABILITY_TOLERANCE {
        return Err(AjdError::Unstable(abscissa));
    }
    let n = d * d;
    let mt = m.transpose();
    // Column-major vec: vec(MᵀH) = (I⊗Mᵀ)vec(H), vec(HM) = (Mᵀ⊗I)vec(H).
    let mut k = DMatrix::<f64>::zeros(n, n);
    for col in 0..d {
        for i in 0..d {
            for j in 0..d {
                k[(col * d + i, col * d + j)] += mt[(i, j)];
                k[(col * d + i, j * d + i)] += mt[(col, j)];
            }
        }
    }
    let rhs = DVector::from_fn(n, |idx, _| if idx / d == idx % d { -1.0 } else { 0.0 });
    let v = linalg::solve(&k, &rhs)?;
    let h = linalg::symmetrize(&DMatrix::from_column_slice(d, d, v.as_slice()));
    Ok(h)
}

/// `‖MᵀH + HM + I‖_F`.
pub fn lyapunov_residual(m: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (m.transpose() * h + h * m + DMatrix::identity(m.nrows(), m.nrows())).norm()
}

/// Eigenvalue constants of a Lyapunov pair: `γ̲` is the smallest eigenvalue
/// of `−(HM + MᵀH)`, `δ̲`/`δ̄` the extreme eigenvalues of `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConstants {
    pub gamma_lower: f64,
    pub delta_lower: f64,
    pub delta_upper: f64,
}

pub fn lyapunov_constants(m: &DMatrix<f64>, h: &DMatrix<f64>) -> LyapunovConstants {
    let q = -(h * m + m.transpose() * h);
    LyapunovConstants {
        gamma_lower: min_sym_eigenvalue(&q),
        delta_lower: min_sym_eigenvalue(h),
        delta_upper: max_sym_eigenvalue(h),
    }
}

/// Classifies an admissible spec; `p` is the requested moment order.
pub fn classify(spec: &ModelSpec, p: f64) -> Result<StabilityReport> {
    spec.require_admissible()?;
    if !(p > 0.0) {
        return Err(AjdError::InvalidArgument(format!("moment order must be positive, got {p}")));
    }
    let moments = spec.jumps.moments(p)?;
    let eff = spec.effective_beta();
    let eig_beta = max_real_eigenvalue(&spec.beta);
    let eig_eff = max_real_eigenvalue(&eff);
    let kappa_zero = spec.kappa.iter().all(|k| *k == 0.0);
    let stable = |e: f64| e < -STABILITY_TOLERANCE;

    let (classification, h, notes) = if kappa_zero && stable(eig_beta) {
        let c = if moments.finite { Classification::Ergodic { exp_p: p } } else { Classification::Inconclusive };
        (
            c,
            Some(solve_lyapunov(&spec.beta)?),
            format!("state-independent jump rate and beta stable; jump moments of order {p} finite"),
        )
    } else if !kappa_zero && stable(eig_eff) {
        (
            Classification::ExpErgodic { p: p.max(1.0) },
            Some(solve_lyapunov(&eff)?),
            "beta + E(Z) kappa^T stable".to_string(),
        )
    } else if spec.d == 1 && spec.m == 1 && eff[(0, 0)] > 0.0 {
        (Classification::Transient1d, None, format!("beta + kappa E(Z) = {} > 0", eff[(0, 0)]))
    } else {
        let note = if eig_eff.abs() <= STABILITY_TOLERANCE || (kappa_zero && eig_beta.abs() <= STABILITY_TOLERANCE) {
            "boundary case: spectral abscissa within tolerance of zero"
        } else {
            "no sufficient condition applies"
        };
        (Classification::Inconclusive, None, note.to_string())
    };
    Ok(StabilityReport { eig_beta_max_re: eig_beta, eig_effective_max_re: eig_eff, classification, h, notes })
}

fn require_scalar_volatility(spec: &ModelSpec) -> Result<()> {
    if spec.d != 1 || spec.m != 1 {
        return Err(AjdError::InvalidArgument(
            "transience rate needs a 1-D volatility-factor model (d = m = 1)".into(),
        ));
    }
    Ok(())
}

/// `h(ε) = εβ − ε²α/2 + κ(1 − E e^{−εZ})`, the large-state growth rate of
/// the generator on `1 − e^{−εx}`. Its slope at zero is `β + κE(Z)`.
pub fn transience_rate_1d(spec: &ModelSpec, eps: f64) -> Result<f64> {
    require_scalar_volatility(spec)?;
    if !(eps > 0.0) {
        return Err(AjdError::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let laplace = spec.jumps.transform_real(&[-eps])?;
    Ok(eps * spec.beta[(0, 0)] - 0.5 * eps * eps * spec.alpha[0][(0, 0)] + spec.kappa[0] * (1.0 - laplace))
}

/// Best `ε` on an even grid over `(0, eps_max]`, returned with `h(ε)`.
pub fn transience_search(spec: &ModelSpec, eps_max: f64, points: usize) -> Result<(f64, f64)> {
    require_scalar_volatility(spec)?;
    let points = points.max(1);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for k in 1..=points {
        let eps = eps_max * k as f64 / points as f64;
        let h = transience_rate_1d(spec, eps)?;
        if h > best.1 {
            best = (eps, h);
        }
    }
    Ok(best)
}
