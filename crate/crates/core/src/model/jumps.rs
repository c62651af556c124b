//! Jump-size distributions on the canonical state space.
//!
//! Two families are supported: a point mass at `z0`, and independent products
//! whose volatility coordinates are exponential or point masses and whose
//! dependent coordinates are Gaussian or point masses. Both have closed-form
//! mean, second moment and extended transform `E exp(uᵀZ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};
use crate::quadrature::{gauss_laguerre, standard_normal_rule};

/// One coordinate of a product jump distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JumpComponent {
    Exponential { rate: f64 },
    Point { value: f64 },
    Gaussian { mean: f64, variance: f64 },
}

impl JumpComponent {
    fn mean(&self) -> f64 {
        match *self {
            JumpComponent::Exponential { rate } => 1.0 / rate,
            JumpComponent::Point { value } => value,
            JumpComponent::Gaussian { mean, .. } => mean,
        }
    }

    fn second_moment(&self) -> f64 {
        match *self {
            JumpComponent::Exponential { rate } => 2.0 / (rate * rate),
            JumpComponent::Point { value } => value * value,
            JumpComponent::Gaussian { mean, variance } => mean * mean + variance,
        }
    }

    fn transform(&self, u: Complex64) -> Result<Complex64> {
        match *self {
            JumpComponent::Exponential { rate } => {
                if u.re >= rate {
                    return Err(AjdError::TransformDomain(format!("Re(u) = {} >= exponential rate {rate}", u.re)));
                }
                Ok(Complex64::new(rate, 0.0) / (Complex64::new(rate, 0.0) - u))
            }
            JumpComponent::Point { value } => Ok((u * value).exp()),
            JumpComponent::Gaussian { mean, variance } => Ok((u * mean + 0.5 * variance * u * u).exp()),
        }
    }

    fn is_random(&self) -> bool {
        match *self {
            JumpComponent::Point { .. } => false,
            JumpComponent::Gaussian { variance, .. } => variance > 0.0,
            JumpComponent::Exponential { .. } => true,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpComponent::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            JumpComponent::Point { value } => value,
            JumpComponent::Gaussian { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
        }
    }

    /// Quadrature nodes/weights for this coordinate with `n` Gauss points.
    fn rule(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        match *self {
            JumpComponent::Point { value } => (vec![value], vec![1.0]),
            JumpComponent::Exponential { rate } => {
                let r = gauss_laguerre(n);
                (r.nodes.iter().map(|t| t / rate).collect(), r.weights)
            }
            JumpComponent::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    return (vec![mean], vec![1.0]);
                }
                let r = standard_normal_rule(n);
                let s = variance.sqrt();
                (r.nodes.iter().map(|t| mean + s * t).collect(), r.weights)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpKind {
    Degenerate { z0: Vec<f64> },
    Product { components: Vec<JumpComponent> },
}

/// Jump-size distribution ν with cached first and second moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JumpKind", into = "JumpKind")]
pub struct JumpDist {
    kind: JumpKind,
    mean: DVector<f64>,
    second_moment: DMatrix<f64>,
}

impl From<JumpDist> for JumpKind {
    fn from(d: JumpDist) -> Self {
        d.kind
    }
}

impl TryFrom<JumpKind> for JumpDist {
    type Error = AjdError;

    fn try_from(kind: JumpKind) -> Result<Self> {
        JumpDist::new(kind)
    }
}

/// Moments returned by [`JumpDist::moments`].
#[derive(Debug, Clone)]
pub struct JumpMoments {
    pub mean: DVector<f64>,
    pub second_moment: DMatrix<f64>,
    /// `E‖Z‖^p`.
    pub abs_moment: f64,
    pub finite: bool,
}

impl JumpDist {
    pub fn new(kind: JumpKind) -> Result<Self> {
        let (mean, second_moment) = match &kind {
            JumpKind::Degenerate { z0 } => {
                if z0.is_empty() || z0.iter().any(|v| !v.is_finite()) {
                    return Err(AjdError::InvalidArgument(
                        "degenerate jump z0 must be a finite, nonempty vector".into(),
                    ));
                }
                let z = DVector::from_column_slice(z0);
                let zz = &z * z.transpose();
                (z, zz)
            }
            JumpKind::Product { components } => {
                if components.is_empty() {
                    return Err(AjdError::InvalidArgument("product jump distribution needs components".into()));
                }
                for (i, c) in components.iter().enumerate() {
                    let ok = match *c {
                        JumpComponent::Exponential { rate } => rate.is_finite() && rate > 0.0,
                        JumpComponent::Point { value } => value.is_finite(),
                        JumpComponent::Gaussian { mean, variance } => {
                            mean.is_finite() && variance.is_finite() && variance >= 0.0
                        }
                    };
                    if !ok {
                        return Err(AjdError::InvalidArgument(format!("jump component {} is invalid: {c:?}", i + 1)));
                    }
                }
                let n = components.len();
                let mean = DVector::from_iterator(n, components.iter().map(JumpComponent::mean));
                let mut second = &mean * mean.transpose();
                for (i, c) in components.iter().enumerate() {
                    second[(i, i)] = c.second_moment();
                }
                (mean, second)
            }
        };
        Ok(JumpDist { kind, mean, second_moment })
    }

    pub fn degenerate(z0: Vec<f64>) -> Result<Self> {
        Self::new(JumpKind::Degenerate { z0 })
    }

    pub fn product(components: Vec<JumpComponent>) -> Result<Self> {
        Self::new(JumpKind::Product { components })
    }

    /// Point mass at the origin, used for jump-free models.
    pub fn none(d: usize) -> Self {
        Self::new(JumpKind::Degenerate { z0: vec![0.0; d.max(1)] }).expect("zero vector is a valid jump")
    }

    /// 1-D exponential jumps with the given rate.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::product(vec![JumpComponent::Exponential { rate }])
    }

    pub fn kind(&self) -> &JumpKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn second_moment(&self) -> &DMatrix<f64> {
        &self.second_moment
    }

    /// Mean, second moment and `E‖Z‖^p`.
    ///
    /// Every supported family has moments of all orders, so `finite` is
    /// always true; the flag exists for callers that gate on it.
    pub fn moments(&self, p: f64) -> Result<JumpMoments> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(AjdError::InvalidArgument(format!("moment order must be positive, got {p}")));
        }
        let abs_moment = match &self.kind {
            JumpKind::Degenerate { z0 } => z0.iter().map(|v| v * v).sum::<f64>().powf(p / 2.0),
            JumpKind::Product { .. } if p == 2.0 => self.second_moment.trace(),
            JumpKind::Product { .. } => {
                let q = JumpQuadrature::new(self);
                q.expect(|z| z.iter().map(|v| v * v).sum::<f64>().powf(p / 2.0)).value
            }
        };
        Ok(JumpMoments {
            mean: self.mean.clone(),
            second_moment: self.second_moment.clone(),
            abs_moment,
            finite: abs_moment.is_finite(),
        })
    }

    /// Extended transform `∫ exp(uᵀz) ν(dz)`.
    pub fn transform(&self, u: &[Complex64]) -> Result<Complex64> {
        if u.len() != self.dim() {
            return Err(AjdError::Dimension(format!(
                "transform argument has length {}, expected {}",
                u.len(),
                self.dim()
            )));
        }
        match &self.kind {
            JumpKind::Degenerate { z0 } => {
                let s: Complex64 = u.iter().zip(z0).map(|(ui, zi)| ui * zi).sum();
                Ok(s.exp())
            }
            JumpKind::Product { components } => {
                let mut acc = Complex64::new(1.0, 0.0);
                for (c, ui) in components.iter().zip(u) {
                    acc *= c.transform(*ui)?;
                }
                Ok(acc)
            }
        }
    }

    /// Real-argument transform `E exp(uᵀZ)`.
    pub fn transform_real(&self, u: &[f64]) -> Result<f64> {
        let uc: Vec<Complex64> = u.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        Ok(self.transform(&uc)?.re)
    }

    /// Per-coordinate exponential rates; the transform requires `Re(u_i) < rate`.
    pub fn exponential_rates(&self) -> Vec<Option<f64>> {
        match &self.kind {
            JumpKind::Degenerate { z0 } => vec![None; z0.len()],
            JumpKind::Product { components } => components
                .iter()
                .map(|c| match *c {
                    JumpComponent::Exponential { rate } => Some(rate),
                    _ => None,
                })
                .collect(),
        }
    }

    /// True when ν is the point mass at zero (no effective jumps).
    pub fn is_zero(&self) -> bool {
        matches!(&self.kind, JumpKind::Degenerate { z0 } if z0.iter().all(|v| *v == 0.0))
    }

    /// Draws one jump into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.kind {
            JumpKind::Degenerate { z0 } => out.copy_from_slice(z0),
            JumpKind::Product { components } => {
                for (o, c) in out.iter_mut().zip(components) {
                    *o = c.sample(rng);
                }
            }
        }
    }

    /// Support clauses violated for a state space with `m` volatility factors.
    pub fn support_violations(&self, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        match &self.kind {
            JumpKind::Degenerate { z0 } => {
                for (i, v) in z0.iter().enumerate().take(m) {
                    if *v < 0.0 {
                        out.push(format!("z0[{}] = {v} < 0 on a volatility factor", i + 1));
                    }
                }
            }
            JumpKind::Product { components } => {
                for (i, c) in components.iter().enumerate() {
                    let bad = if i < m {
                        match *c {
                            JumpComponent::Exponential { .. } => None,
                            JumpComponent::Point { value } if value >= 0.0 => None,
                            JumpComponent::Point { value } => Some(format!("point mass {value} < 0")),
                            JumpComponent::Gaussian { .. } => {
                                Some("Gaussian component on a volatility factor".to_string())
                            }
                        }
                    } else {
                        match *c {
                            JumpComponent::Exponential { .. } => {
                                Some("exponential component on a dependent factor".to_string())
                            }
                            _ => None,
                        }
                    };
                    if let Some(msg) = bad {
                        out.push(format!("component {}: {msg}", i + 1));
                    }
                }
            }
        }
        out
    }

    fn components(&self) -> Vec<JumpComponent> {
        match &self.kind {
            JumpKind::Degenerate { z0 } => z0.iter().map(|v| JumpComponent::Point { value: *v }).collect(),
            JumpKind::Product { components } => components.clone(),
        }
    }
}

/// A numerical expectation with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Expectation operator `E f(Z)` over a jump distribution.
///
/// Tensor Gauss rules (Laguerre for exponential, Hermite for Gaussian
/// coordinates) when at most three coordinates are random; Monte Carlo with a
/// fixed seed beyond that. The quadrature error estimate is the difference
/// between the 64-point and 32-point rules.
#[derive(Debug, Clone)]
pub struct JumpQuadrature {
    dim: usize,
    method: QuadMethod,
}

#[derive(Debug, Clone)]
enum QuadMethod {
    Tensor { fine: TensorRule, coarse: TensorRule },
    MonteCarlo { samples: Vec<f64> },
}

#[derive(Debug, Clone)]
struct TensorRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

pub const QUADRATURE_NODES: usize = 64;
const MC_FALLBACK_DIMS: usize = 3;
const MC_SAMPLES: usize = 1 << 16;
const MC_SEED: u64 = 0x6a75_6d70;

fn tensor_rule(components: &[JumpComponent], n: usize) -> TensorRule {
    let d = components.len();
    let mut nodes: Vec<f64> = vec![];
    let mut weights: Vec<f64> = vec![1.0];
    let mut current: Vec<Vec<f64>> = vec![vec![]];
    for c in components {
        let (xs, ws) = c.rule(n);
        let mut next_pts = Vec::with_capacity(current.len() * xs.len());
        let mut next_w = Vec::with_capacity(current.len() * xs.len());
        for (p, w) in current.iter().zip(&weights) {
            for (x, wx) in xs.iter().zip(&ws) {
                let mut q = p.clone();
                q.push(*x);
                next_pts.push(q);
                next_w.push(w * wx);
            }
        }
        current = next_pts;
        weights = next_w;
    }
    for p in &current {
        debug_assert_eq!(p.len(), d);
        nodes.extend_from_slice(p);
    }
    TensorRule { nodes, weights }
}

impl JumpQuadrature {
    pub fn new(dist: &JumpDist) -> Self {
        let comps = dist.components();
        let dim = comps.len();
        let random = comps.iter().filter(|c| c.is_random()).count();
        let method = if random <= MC_FALLBACK_DIMS {
            QuadMethod::Tensor {
                fine: tensor_rule(&comps, QUADRATURE_NODES),
                coarse: tensor_rule(&comps, QUADRATURE_NODES / 2),
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED);
            let mut samples = vec![0.0; MC_SAMPLES * dim];
            for chunk in samples.chunks_mut(dim) {
                dist.sample_into(&mut rng, chunk);
            }
            QuadMethod::MonteCarlo { samples }
        };
        JumpQuadrature { dim, method }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.method, QuadMethod::MonteCarlo { .. })
    }

    pub fn expect<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Estimate {
        match &self.method {
            QuadMethod::Tensor { fine, coarse } => {
                let dim = self.dim.max(1);
                let mut apply =
                    |r: &TensorRule| -> f64 { r.nodes.chunks(dim).zip(&r.weights).map(|(z, w)| w * f(z)).sum() };
                let v = apply(fine);
                let c = apply(coarse);
                Estimate { value: v, std_error: (v - c).abs() }
            }
            QuadMethod::MonteCarlo { samples } => {
                let n = samples.len() / self.dim;
                let mut mean = 0.0;
                let mut m2 = 0.0;
                for (k, z) in samples.chunks(self.dim).enumerate() {
                    let y = f(z);
                    let delta = y - mean;
                    mean += delta / (k + 1) as f64;
                    m2 += delta * (y - mean);
                }
                let var = m2 / (n - 1) as f64;
                Estimate { value: mean, std_error: (var / n as f64).sqrt() }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_moments() {
        let j = JumpDist::exponential(2.0).unwrap();
        let m = j.moments(2.0).unwrap();
        assert_eq!(m.mean[0], 0.5);
        assert_eq!(m.second_moment[(0, 0)], 0.5);
        assert!(m.finite);
        // E Z^1 = 1/θ through quadrature
        let m1 = j.moments(1.0).unwrap();
        assert!((m1.abs_moment - 0.5).abs() < 1e-10);
    }

    #[test]
    fn degenerate_moments_and_transform() {
        let j = JumpDist::degenerate(vec![1.0, -2.0]).unwrap();
        let m = j.moments(3.0).unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, -2.0]);
        assert_eq!(m.second_moment[(0, 1)], -2.0);
        assert!((m.abs_moment - 5f64.powf(1.5)).abs() < 1e-12);
        let u = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5)];
        let want = (u[0] * 1.0 + u[1] * -2.0).exp();
        assert!((j.transform(&u).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn transform_basics() {
        let j = JumpDist::exponential(2.0).unwrap();
        let c = |re: f64, im: f64| Complex64::new(re, im);
        assert!((j.transform(&[c(0.0, 0.0)]).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!((j.transform(&[c(-1.0, 0.0)]).unwrap().re - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(j.transform(&[c(2.0, 0.0)]), Err(AjdError::TransformDomain(_))));
        assert!(matches!(j.transform(&[c(2.5, 1.0)]), Err(AjdError::TransformDomain(_))));
    }

    #[test]
    fn product_second_moment() {
        let j = JumpDist::product(vec![
            JumpComponent::Exponential { rate: 1.0 },
            JumpComponent::Gaussian { mean: 0.0, variance: 1.0 },
        ])
        .unwrap();
        let s = j.second_moment();
        assert_eq!(s[(0, 0)], 2.0);
        assert_eq!(s[(1, 1)], 1.0);
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn support_checks() {
        let j = JumpDist::product(vec![
            JumpComponent::Gaussian { mean: 0.0, variance: 1.0 },
            JumpComponent::Exponential { rate: 1.0 },
        ])
        .unwrap();
        assert_eq!(j.support_violations(1).len(), 2);
        assert!(j.support_violations(0).len() == 1);
        assert!(JumpDist::degenerate(vec![-1.0]).unwrap().support_violations(1).len() == 1);
        assert!(JumpDist::degenerate(vec![-1.0]).unwrap().support_violations(0).is_empty());
    }

    #[test]
    fn invalid_components_rejected() {
        assert!(JumpDist::exponential(0.0).is_err());
        assert!(JumpDist::product(vec![JumpComponent::Gaussian { mean: 0.0, variance: -1.0 }]).is_err());
        assert!(JumpDist::degenerate(vec![]).is_err());
    }

    #[test]
    fn quadrature_matches_transform() {
        let j = JumpDist::product(vec![
            JumpComponent::Exponential { rate: 2.0 },
            JumpComponent::Gaussian { mean: 0.1, variance: 0.04 },
        ])
        .unwrap();
        let q = JumpQuadrature::new(&j);
        let est = q.expect(|z| (-0.7 * z[0] + 0.3 * z[1]).exp());
        let exact = j.transform_real(&[-0.7, 0.3]).unwrap();
        assert!((est.value - exact).abs() < 1e-12);
        assert!(est.std_error < 1e-10);
    }

    #[test]
    fn many_random_dims_fall_back_to_monte_carlo() {
        let comps = vec![JumpComponent::Exponential { rate: 1.0 }; 4];
        let j = JumpDist::product(comps).unwrap();
        let q = JumpQuadrature::new(&j);
        assert!(q.is_monte_carlo());
        let est = q.expect(|z| z.iter().sum());
        assert!((est.value - 4.0).abs() < 4.0 * est.std_error);
        assert!(est.std_error > 0.0);
    }

    #[test]
    fn json_round_trip() {
        let j = JumpDist::product(vec![JumpComponent::Exponential { rate: 2.0 }, JumpComponent::Point { value: 0.5 }])
            .unwrap();
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"kind\":\"product\""));
        let back: JumpDist = serde_json::from_str(&s).unwrap();
        assert_eq!(back, j);
        assert!(serde_json::from_str::<JumpDist>(
            r#"{"kind":"product","components":[{"type":"exponential","rate":-1}]}"#
        )
        .is_err());
    }
}
