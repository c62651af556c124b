use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};

/// Jump-free 1-D models with explicit transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ClosedFormModel {
    /// `dX = (b + βX)dt + √a dW`
    Ou { b: f64, beta: f64, a: f64 },
    /// `dX = (b + βX)dt + √(αX) dW`
    Cir { b: f64, beta: f64, alpha: f64 },
}

/// `(e^{ct} − 1)/c`, continuous at `c = 0`.
fn growth(c: f64, t: f64) -> f64 {
    if c == 0.0 {
        t
    } else {
        (c * t).exp_m1() / c
    }
}

/// Explicit `(φ(t,u), ψ(t,u))`.
///
/// The square-root case uses the principal logarithm, which is the correct
/// branch for `Re(u) ≤ 0` and for real `u` below the explosion pole.
pub fn closed_form_oracle(model: ClosedFormModel, u: Complex64, t: f64) -> Result<(Complex64, Complex64)> {
    if !(t >= 0.0) {
        return Err(AjdError::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    match model {
        ClosedFormModel::Ou { b, beta, a } => {
            let psi = u * (beta * t).exp();
            let phi = u * (b * growth(beta, t)) + u * u * (0.5 * a * growth(2.0 * beta, t));
            Ok((phi, psi))
        }
        ClosedFormModel::Cir { b, beta, alpha } => {
            if alpha == 0.0 {
                return closed_form_oracle(ClosedFormModel::Ou { b, beta, a: 0.0 }, u, t);
            }
            let denom = 1.0 - u * (0.5 * alpha * growth(beta, t));
            if denom.norm() < 1e-12 {
                return Err(AjdError::RiccatiDomain { time: t, reason: "square-root transform hits its pole".into() });
            }
            let psi = u * (beta * t).exp() / denom;
            let phi = -denom.ln() * (2.0 * b / alpha);
            Ok((phi, psi))
        }
    }
}
