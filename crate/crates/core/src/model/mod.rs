//! Model parameters, admissibility checks and affine coefficient evaluation.

mod jumps;

pub use jumps::{Estimate, JumpComponent, JumpDist, JumpKind, JumpMoments, JumpQuadrature, QUADRATURE_NODES};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};
use crate::linalg::{self, min_sym_eigenvalue, symmetrize, PSD_TOLERANCE};

/// Full parameter set of a canonical affine jump-diffusion.
///
/// State space is `ℝ₊^m × ℝ^{d−m}`. Drift `b + βx`, diffusion
/// `a + Σ x_i α_i`, jump intensity `λ + κᵀx`, jump sizes `Z ~ jumps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub d: usize,
    pub m: usize,
    pub a: DMatrix<f64>,
    pub alpha: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
    pub beta: DMatrix<f64>,
    pub lambda0: f64,
    pub kappa: DVector<f64>,
    pub jumps: JumpDist,
}

/// One violated admissibility clause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub admissible: bool,
    pub feller_ok: bool,
    pub violations: Vec<Violation>,
}

/// Drift, diffusion matrix and jump intensity at a state.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub drift: DVector<f64>,
    pub diffusion: DMatrix<f64>,
    pub intensity: f64,
}

/// JSON document layout of a [`ModelSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub d: usize,
    pub m: usize,
    pub a: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub lambda: f64,
    pub kappa: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpDist>,
}

impl ModelSpec {
    /// Builds a spec after checking dimensions only; admissibility is
    /// reported separately by [`ModelSpec::validate`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        a: DMatrix<f64>,
        alpha: Vec<DMatrix<f64>>,
        b: DVector<f64>,
        beta: DMatrix<f64>,
        lambda0: f64,
        kappa: DVector<f64>,
        jumps: JumpDist,
    ) -> Result<Self> {
        let spec = ModelSpec { d: b.len(), m, a, alpha, b, beta, lambda0, kappa, jumps };
        spec.check_dimensions()?;
        Ok(spec)
    }

    /// 1-D square-root diffusion `dX = (b + βX)dt + √(αX) dW`.
    pub fn cir(b: f64, beta: f64, alpha: f64) -> Self {
        Self::scalar(1, 0.0, alpha, b, beta, 0.0, 0.0, JumpDist::none(1))
    }

    /// 1-D Gaussian diffusion `dX = (b + βX)dt + √a dW`.
    pub fn ou(b: f64, beta: f64, a: f64) -> Self {
        Self::scalar(0, a, 0.0, b, beta, 0.0, 0.0, JumpDist::none(1))
    }

    /// Generic 1-D spec.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(m: usize, a: f64, alpha: f64, b: f64, beta: f64, lambda0: f64, kappa: f64, jumps: JumpDist) -> Self {
        ModelSpec {
            d: 1,
            m,
            a: DMatrix::from_element(1, 1, a),
            alpha: vec![DMatrix::from_element(1, 1, alpha)],
            b: DVector::from_element(1, b),
            beta: DMatrix::from_element(1, 1, beta),
            lambda0,
            kappa: DVector::from_element(1, kappa),
            jumps,
        }
    }

    pub fn with_jumps(mut self, lambda0: f64, kappa: DVector<f64>, jumps: JumpDist) -> Self {
        self.lambda0 = lambda0;
        self.kappa = kappa;
        self.jumps = jumps;
        self
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let d = self.d;
        if d == 0 {
            return Err(AjdError::Dimension("d must be at least 1".into()));
        }
        if self.m > d {
            return Err(AjdError::Dimension(format!("m = {} exceeds d = {d}", self.m)));
        }
        let sq = |mat: &DMatrix<f64>, what: &str| -> Result<()> {
            if mat.nrows() != d || mat.ncols() != d {
                return Err(AjdError::Dimension(format!(
                    "{what} is {}x{}, expected {d}x{d}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            Ok(())
        };
        sq(&self.a, "a")?;
        sq(&self.beta, "beta")?;
        if self.alpha.len() != d {
            return Err(AjdError::Dimension(format!("alpha has {} matrices, expected {d}", self.alpha.len())));
        }
        for (i, al) in self.alpha.iter().enumerate() {
            sq(al, &format!("alpha[{}]", i + 1))?;
        }
        if self.b.len() != d {
            return Err(AjdError::Dimension(format!("b has length {}, expected {d}", self.b.len())));
        }
        if self.kappa.len() != d {
            return Err(AjdError::Dimension(format!("kappa has length {}, expected {d}", self.kappa.len())));
        }
        if self.jumps.dim() != d {
            return Err(AjdError::Dimension(format!(
                "jump distribution has dimension {}, expected {d}",
                self.jumps.dim()
            )));
        }
        let finite =
            self.a.iter().chain(self.beta.iter()).chain(self.b.iter()).chain(self.kappa.iter()).all(|v| v.is_finite())
                && self.alpha.iter().all(|al| al.iter().all(|v| v.is_finite()))
                && self.lambda0.is_finite();
        if !finite {
            return Err(AjdError::InvalidArgument("parameters must be finite".into()));
        }
        Ok(())
    }

    /// Checks every admissibility clause and the Feller/non-degeneracy clause.
    pub fn validate(&self) -> Result<ValidationReport> {
        self.check_dimensions()?;
        let (d, m) = (self.d, self.m);
        let mut v = Vec::new();
        let mut push = |field: &str, description: String| v.push(Violation { field: field.to_string(), description });

        let a = symmetrize(&self.a);
        let asym = (&self.a - self.a.transpose()).abs().max();
        if asym > PSD_TOLERANCE {
            push("a", format!("a is not symmetric (max asymmetry {asym:.3e})"));
        }
        let min_a = min_sym_eigenvalue(&a);
        if min_a < -PSD_TOLERANCE {
            push("a", format!("a is not PSD (min eigenvalue {min_a:.3e})"));
        }
        for i in 0..m {
            for j in 0..m {
                if a[(i, j)].abs() > PSD_TOLERANCE {
                    push(
                        "a",
                        format!("a[{},{}] = {} but the volatility block of a must vanish", i + 1, j + 1, a[(i, j)]),
                    );
                }
            }
        }
        let mut feller_ok = true;
        for (k, al) in self.alpha.iter().enumerate() {
            let field = format!("alpha[{}]", k + 1);
            let s = symmetrize(al);
            if k >= m {
                if al.iter().any(|x| x.abs() > PSD_TOLERANCE) {
                    push(&field, format!("alpha[{}] must be zero for a dependent factor", k + 1));
                }
                continue;
            }
            let asym = (al - al.transpose()).abs().max();
            if asym > PSD_TOLERANCE {
                push(&field, format!("alpha[{}] is not symmetric (max asymmetry {asym:.3e})", k + 1));
            }
            let min_e = min_sym_eigenvalue(&s);
            if min_e < -PSD_TOLERANCE {
                push(&field, format!("alpha[{}] is not PSD (min eigenvalue {min_e:.3e})", k + 1));
            }
            for i in 0..m {
                for j in 0..m {
                    if (i, j) != (k, k) && s[(i, j)].abs() > PSD_TOLERANCE {
                        push(
                            &field,
                            format!(
                                "alpha[{}][{},{}] = {} must vanish in the volatility block",
                                k + 1,
                                i + 1,
                                j + 1,
                                s[(i, j)]
                            ),
                        );
                    }
                }
            }
            let akk = s[(k, k)];
            if !(2.0 * self.b[k] > akk && akk > 0.0) {
                feller_ok = false;
                push(
                    &field,
                    format!("Feller: 2b{} = {} must exceed alpha{} = {} > 0", k + 1, 2.0 * self.b[k], k + 1, akk),
                );
            }
        }
        for i in 0..m {
            if self.b[i] < 0.0 {
                push("b", format!("b[{}] = {} < 0 on a volatility factor", i + 1, self.b[i]));
            }
            for j in 0..d {
                let bij = self.beta[(i, j)];
                if j >= m && bij != 0.0 {
                    push(
                        "beta",
                        format!("beta[{},{}] = {bij} must vanish (volatility row, dependent column)", i + 1, j + 1),
                    );
                }
                if j < m && j != i && bij < 0.0 {
                    push(
                        "beta",
                        format!("beta[{},{}] = {bij} < 0 off the diagonal of the volatility block", i + 1, j + 1),
                    );
                }
            }
        }
        if self.lambda0 < 0.0 {
            push("lambda", format!("lambda = {} < 0", self.lambda0));
        }
        for i in 0..d {
            let k = self.kappa[i];
            if i < m && k < 0.0 {
                push("kappa", format!("kappa[{}] = {k} < 0", i + 1));
            }
            if i >= m && k != 0.0 {
                push("kappa", format!("kappa[{}] = {k} must vanish for a dependent factor", i + 1));
            }
        }
        for msg in self.jumps.support_violations(m) {
            push("jumps", format!("jump support leaves the state space: {msg}"));
        }
        if m < d {
            let ajj = a.view((m, m), (d - m, d - m)).into_owned();
            let min_j = min_sym_eigenvalue(&ajj);
            if min_j <= PSD_TOLERANCE {
                push("a", format!("dependent block of a must be positive definite (min eigenvalue {min_j:.3e})"));
            }
        }
        Ok(ValidationReport { admissible: v.is_empty(), feller_ok, violations: v })
    }

    /// Fails with [`AjdError::NotAdmissible`] listing the violations.
    pub fn require_admissible(&self) -> Result<()> {
        let r = self.validate()?;
        if r.admissible {
            Ok(())
        } else {
            let msgs: Vec<String> = r.violations.iter().map(|v| format!("{}: {}", v.field, v.description)).collect();
            Err(AjdError::NotAdmissible(msgs.join("; ")))
        }
    }

    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(AjdError::Dimension(format!("state has length {}, expected {}", x.len(), self.d)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AjdError::InvalidArgument("state must be finite".into()));
        }
        for (i, v) in x.iter().enumerate().take(self.m) {
            if *v < 0.0 {
                return Err(AjdError::OutsideStateSpace(format!("x[{}] = {v} < 0 on a volatility factor", i + 1)));
            }
        }
        Ok(())
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b + &self.beta * x
    }

    /// `a + Σ x_i α_i`, symmetrized.
    pub fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.a.clone();
        for (i, al) in self.alpha.iter().enumerate().take(self.m) {
            out += al * x[i];
        }
        symmetrize(&out)
    }

    pub fn intensity(&self, x: &DVector<f64>) -> f64 {
        self.lambda0 + self.kappa.dot(x)
    }

    pub fn eval_coefficients(&self, x: &[f64]) -> Result<Coefficients> {
        self.check_state(x)?;
        let xv = DVector::from_column_slice(x);
        Ok(Coefficients { drift: self.drift(&xv), diffusion: self.diffusion(&xv), intensity: self.intensity(&xv) })
    }

    /// A factor `σ(x)` with `σσᵀ` equal to the diffusion matrix at `x`.
    pub fn diffusion_factor(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let c = self.eval_coefficients(x)?;
        linalg::psd_factor(&c.diffusion)
    }

    /// `β + E(Z)κᵀ`, the drift matrix corrected for mean jump feedback.
    pub fn effective_beta(&self) -> DMatrix<f64> {
        &self.beta + self.jumps.mean() * self.kappa.transpose()
    }

    pub fn has_jumps(&self) -> bool {
        !self.jumps.is_zero() && (self.lambda0 > 0.0 || self.kappa.iter().any(|k| *k != 0.0))
    }

    pub fn from_document(doc: SpecDocument) -> Result<Self> {
        let d = doc.d;
        if d == 0 {
            return Err(AjdError::Dimension("d must be at least 1".into()));
        }
        let a = linalg::from_rows(&doc.a, d, "a")?;
        let beta = linalg::from_rows(&doc.beta, d, "beta")?;
        if doc.alpha.len() != d {
            return Err(AjdError::Dimension(format!("alpha has {} matrices, expected {d}", doc.alpha.len())));
        }
        let alpha = doc
            .alpha
            .iter()
            .enumerate()
            .map(|(i, rows)| linalg::from_rows(rows, d, &format!("alpha[{}]", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        let jumps = doc.jumps.unwrap_or_else(|| JumpDist::none(d));
        let spec = ModelSpec {
            d,
            m: doc.m,
            a,
            alpha,
            b: DVector::from_vec(doc.b),
            beta,
            lambda0: doc.lambda,
            kappa: DVector::from_vec(doc.kappa),
            jumps,
        };
        spec.check_dimensions()?;
        Ok(spec)
    }

    pub fn to_document(&self) -> SpecDocument {
        SpecDocument {
            d: self.d,
            m: self.m,
            a: linalg::to_rows(&self.a),
            alpha: self.alpha.iter().map(linalg::to_rows).collect(),
            b: self.b.iter().copied().collect(),
            beta: linalg::to_rows(&self.beta),
            lambda: self.lambda0,
            kappa: self.kappa.iter().copied().collect(),
            jumps: Some(self.jumps.clone()),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("spec document serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_factor() -> ModelSpec {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let alpha1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        ModelSpec::new(
            1,
            a,
            vec![alpha1, DMatrix::zeros(2, 2)],
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.5, -1.0]),
            0.5,
            DVector::from_vec(vec![1.0, 0.0]),
            JumpDist::product(vec![
                JumpComponent::Exponential { rate: 2.0 },
                JumpComponent::Gaussian { mean: 0.1, variance: 0.04 },
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn cir_is_admissible() {
        let r = ModelSpec::cir(1.0, -1.0, 1.0).validate().unwrap();
        assert!(r.admissible && r.feller_ok, "{r:?}");
    }

    #[test]
    fn feller_violation_reported() {
        let r = ModelSpec::cir(1.0, -1.0, 3.0).validate().unwrap();
        assert!(!r.admissible);
        assert!(!r.feller_ok);
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].description.contains("Feller"));
    }

    #[test]
    fn nonzero_volatility_block_of_a() {
        let mut s = two_factor();
        assert!(s.validate().unwrap().admissible);
        s.a[(0, 0)] = 1.0;
        let r = s.validate().unwrap();
        assert!(!r.admissible);
        assert!(r.violations.iter().any(|v| v.field == "a" && v.description.contains("volatility block")));
    }

    #[test]
    fn structural_clauses() {
        let mut s = two_factor();
        s.beta[(0, 1)] = 0.3;
        s.kappa[1] = 1.0;
        s.lambda0 = -1.0;
        let r = s.validate().unwrap();
        let fields: Vec<&str> = r.violations.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"beta") && fields.contains(&"kappa") && fields.contains(&"lambda"), "{fields:?}");
    }

    #[test]
    fn degenerate_dependent_block() {
        let mut s = two_factor();
        s.a[(1, 1)] = 0.0;
        assert!(!s.validate().unwrap().admissible);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let mut s = two_factor();
        s.b = DVector::from_vec(vec![1.0]);
        assert!(matches!(s.validate(), Err(AjdError::Dimension(_))));
    }

    #[test]
    fn edge_cases_m_zero_and_m_d() {
        assert!(ModelSpec::ou(0.0, -1.0, 2.0).validate().unwrap().admissible);
        assert!(ModelSpec::cir(1.0, -1.0, 1.0).validate().unwrap().admissible);
    }

    #[test]
    fn coefficients_example() {
        let s = ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(
            0.5,
            DVector::from_element(1, 2.0),
            JumpDist::exponential(2.0).unwrap(),
        );
        let c = s.eval_coefficients(&[2.0]).unwrap();
        assert_eq!(c.drift[0], -1.0);
        assert_eq!(c.diffusion[(0, 0)], 2.0);
        assert_eq!(c.intensity, 4.5);
        let z = s.eval_coefficients(&[0.0]).unwrap();
        assert_eq!((z.drift[0], z.diffusion[(0, 0)], z.intensity), (1.0, 0.0, 0.5));
        assert!(matches!(s.eval_coefficients(&[-1.0]), Err(AjdError::OutsideStateSpace(_))));
    }

    #[test]
    fn diffusion_factor_examples() {
        let s = ModelSpec::cir(1.0, -1.0, 1.0);
        assert!((s.diffusion_factor(&[4.0]).unwrap()[(0, 0)] - 2.0).abs() < 1e-14);
        let t = two_factor();
        let f = t.diffusion_factor(&[0.0, 3.0]).unwrap();
        assert!(f.row(0).iter().all(|v| *v == 0.0) && f.column(0).iter().all(|v| *v == 0.0));
        let x = [1.7, -0.4];
        let f = t.diffusion_factor(&x).unwrap();
        let c = t.eval_coefficients(&x).unwrap();
        assert!((&f * f.transpose() - c.diffusion).norm() < 1e-10);
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let s = two_factor();
        let back = ModelSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let doc = r#"{"d":1,"m":1,"a":[[0]],"alpha":[[[1]]],"b":[1],"beta":[[-1]],"lambda":0,"kappa":[0]}"#;
        let cir = ModelSpec::from_json(doc).unwrap();
        assert!(cir.jumps.is_zero());
        let bad = r#"{"d":2,"m":1,"a":[[0]],"alpha":[[[1]]],"b":[1],"beta":[[-1]],"lambda":0,"kappa":[0]}"#;
        assert!(matches!(ModelSpec::from_json(bad), Err(AjdError::Dimension(_))));
    }
}
