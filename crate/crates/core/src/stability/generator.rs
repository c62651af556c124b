//! Generator evaluation on Lyapunov test functions and radial scans.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify, lyapunov_constants, Classification, LyapunovConstants};
use crate::error::{AjdError, Result};
use crate::model::{JumpDist, JumpKind, JumpQuadrature, ModelSpec};

/// Test-function family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GFamily {
    /// `log(1 + ‖x‖²_H)`
    Log,
    /// `(1 + ‖x‖²_H)^{p/2}`
    Power { p: f64 },
    /// `1 − e^{−εx}` (1-D only)
    ExpNeg { eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorProbe {
    pub family: GFamily,
    pub h: DMatrix<f64>,
}

impl GeneratorProbe {
    pub fn new(family: GFamily, h: DMatrix<f64>) -> Self {
        GeneratorProbe { family, h }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self.family {
            GFamily::Log => (1.0 + self.quad(x)).ln(),
            GFamily::Power { p } => (1.0 + self.quad(x)).powf(p / 2.0),
            GFamily::ExpNeg { eps } => 1.0 - (-eps * x[0]).exp(),
        }
    }

    fn quad(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.h * x))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.family {
            GFamily::Log => {
                let q = self.quad(x);
                &self.h * x * (2.0 / (1.0 + q))
            }
            GFamily::Power { p } => {
                let q = self.quad(x);
                &self.h * x * (p * (1.0 + q).powf(p / 2.0 - 1.0))
            }
            GFamily::ExpNeg { eps } => DVector::from_element(1, eps * (-eps * x[0]).exp()),
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self.family {
            GFamily::Log => {
                let q = self.quad(x);
                let hx = &self.h * x;
                &self.h * (2.0 / (1.0 + q)) - &hx * hx.transpose() * (4.0 / ((1.0 + q) * (1.0 + q)))
            }
            GFamily::Power { p } => {
                let q = self.quad(x);
                let hx = &self.h * x;
                &self.h * (p * (1.0 + q).powf(p / 2.0 - 1.0))
                    + &hx * hx.transpose() * (p * (p - 2.0) * (1.0 + q).powf(p / 2.0 - 2.0))
            }
            GFamily::ExpNeg { eps } => DMatrix::from_element(1, 1, -eps * eps * (-eps * x[0]).exp()),
        }
    }
}

/// `(𝒢g, ℒg, 𝒜g)` at one state, with `g(x)` and the jump-integral error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValue {
    pub g: f64,
    pub diffusion_part: f64,
    pub jump_part: f64,
    pub total: f64,
    pub jump_std_error: f64,
}

/// Reusable evaluator holding the jump quadrature rule.
pub struct GeneratorEvaluator<'a> {
    spec: &'a ModelSpec,
    probe: &'a GeneratorProbe,
    quad: Option<JumpQuadrature>,
}

impl<'a> GeneratorEvaluator<'a> {
    pub fn new(spec: &'a ModelSpec, probe: &'a GeneratorProbe) -> Result<Self> {
        spec.check_dimensions()?;
        match probe.family {
            GFamily::ExpNeg { eps } => {
                if spec.d != 1 {
                    return Err(AjdError::InvalidArgument("exponential probe is 1-D only".into()));
                }
                if !(eps > 0.0) {
                    return Err(AjdError::InvalidArgument("exponential probe needs eps > 0".into()));
                }
            }
            GFamily::Power { p } if !(p > 0.0) => {
                return Err(AjdError::InvalidArgument("power probe needs p > 0".into()));
            }
            _ => {
                if probe.h.nrows() != spec.d || probe.h.ncols() != spec.d {
                    return Err(AjdError::Dimension(format!("probe H must be {0}x{0}", spec.d)));
                }
            }
        }
        if let GFamily::Power { p } = probe.family {
            if !spec.jumps.moments(p)?.finite {
                return Err(AjdError::InvalidArgument(format!("jump moment of order {p} is infinite")));
            }
        }
        let needs_quad = spec.has_jumps()
            && !matches!(spec.jumps.kind(), JumpKind::Degenerate { .. })
            && !matches!(probe.family, GFamily::ExpNeg { .. });
        let quad = needs_quad.then(|| JumpQuadrature::new(&spec.jumps));
        Ok(GeneratorEvaluator { spec, probe, quad })
    }

    pub fn apply(&self, x: &[f64]) -> Result<GeneratorValue> {
        let spec = self.spec;
        spec.check_state(x)?;
        let xv = DVector::from_column_slice(x);
        let g = self.probe.value(&xv);
        let grad = self.probe.gradient(&xv);
        let hess = self.probe.hessian(&xv);
        let diffusion = spec.diffusion(&xv);
        let diffusion_part = grad.dot(&spec.drift(&xv)) + 0.5 * (hess.component_mul(&diffusion)).sum();

        let intensity = spec.intensity(&xv);
        let (mean_increment, se) =
            if intensity == 0.0 || spec.jumps.is_zero() { (0.0, 0.0) } else { self.jump_increment(&xv, g) };
        let jump_part = intensity * mean_increment;
        Ok(GeneratorValue {
            g,
            diffusion_part,
            jump_part,
            total: diffusion_part + jump_part,
            jump_std_error: intensity * se,
        })
    }

    /// `E[g(x+Z) − g(x)]` and its numerical error.
    fn jump_increment(&self, x: &DVector<f64>, gx: f64) -> (f64, f64) {
        let jumps: &JumpDist = &self.spec.jumps;
        if let GFamily::ExpNeg { eps } = self.probe.family {
            let laplace = jumps.transform_real(&[-eps]).expect("negative argument is always in the domain");
            return ((-eps * x[0]).exp() * (1.0 - laplace), 0.0);
        }
        match (&self.quad, jumps.kind()) {
            (_, JumpKind::Degenerate { z0 }) => {
                let shifted = x + DVector::from_column_slice(z0);
                (self.probe.value(&shifted) - gx, 0.0)
            }
            (Some(q), _) => {
                let mut buf = x.clone();
                let est = q.expect(|z| {
                    for i in 0..z.len() {
                        buf[i] = x[i] + z[i];
                    }
                    self.probe.value(&buf) - gx
                });
                (est.value, est.std_error)
            }
            (None, _) => unreachable!("quadrature is built whenever jumps are random"),
        }
    }
}

/// One-shot `(𝒢g, ℒg, 𝒜g)` at `x`.
pub fn generator_apply(spec: &ModelSpec, probe: &GeneratorProbe, x: &[f64]) -> Result<GeneratorValue> {
    GeneratorEvaluator::new(spec, probe)?.apply(x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    pub radius: f64,
    pub direction: usize,
    pub state: Vec<f64>,
    pub value: GeneratorValue,
    /// `𝒜g` for the log probe, `𝒜g / g` otherwise.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScanOutcome {
    /// Score is below `-c` at every sampled point with radius ≥ `k_star`.
    Pass { k_star: f64, c: f64 },
    /// The drift condition fails at the largest radius.
    Fail { state: Vec<f64>, score: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub probe: GFamily,
    pub classification: Classification,
    pub outcome: ScanOutcome,
    /// Eigenvalue constants of the probe's `H` against `β + E(Z)κᵀ`.
    pub constants: LyapunovConstants,
    pub points: Vec<ScanPoint>,
}

impl ScanReport {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, ScanOutcome::Pass { .. })
    }
}

/// Evaluates the drift condition along rays `r · direction` and reports the
/// smallest sampled radius beyond which it holds everywhere.
pub fn lyapunov_scan(
    spec: &ModelSpec,
    probe: &GeneratorProbe,
    radii: &[f64],
    directions: &[Vec<f64>],
) -> Result<ScanReport> {
    let report = classify(spec, super::DEFAULT_MOMENT_ORDER)?;
    if report.classification == Classification::Inconclusive {
        return Err(AjdError::Gate("scan needs a conclusive classification".into()));
    }
    if radii.is_empty() || directions.is_empty() {
        return Err(AjdError::InvalidArgument("scan needs radii and directions".into()));
    }
    let mut radii: Vec<f64> = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    let units = directions
        .iter()
        .map(|v| {
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if v.len() != spec.d || n == 0.0 {
                return Err(AjdError::InvalidArgument("directions must be nonzero d-vectors".into()));
            }
            Ok(v.iter().map(|c| c / n).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let eval = GeneratorEvaluator::new(spec, probe)?;
    let jobs: Vec<(f64, usize)> = radii.iter().flat_map(|r| (0..units.len()).map(move |k| (*r, k))).collect();
    let points = jobs
        .par_iter()
        .map(|&(r, k)| {
            let state: Vec<f64> = units[k].iter().map(|c| c * r).collect();
            let value = eval.apply(&state)?;
            let score = match probe.family {
                GFamily::Log => value.total,
                _ => value.total / value.g,
            };
            Ok(ScanPoint { radius: r, direction: k, state, value, score })
        })
        .collect::<Result<Vec<_>>>()?;

    // Walk radii from the outside in while the condition keeps holding.
    let mut k_star = None;
    let mut c = f64::INFINITY;
    for r in radii.iter().rev() {
        let ring = points.iter().filter(|p| p.radius == *r);
        let worst = ring.map(|p| p.score).fold(f64::NEG_INFINITY, f64::max);
        if !(worst < 0.0) {
            break;
        }
        k_star = Some(*r);
        c = c.min(-worst);
    }
    let outcome = match k_star {
        Some(k) => ScanOutcome::Pass { k_star: k, c },
        None => {
            let rmax = *radii.last().expect("nonempty");
            let worst = points
                .iter()
                .filter(|p| p.radius == rmax)
                .max_by(|a, b| a.score.total_cmp(&b.score))
                .expect("nonempty");
            ScanOutcome::Fail { state: worst.state.clone(), score: worst.score }
        }
    };
    let constants = lyapunov_constants(&spec.effective_beta(), &probe.h);
    Ok(ScanReport { probe: probe.family, classification: report.classification, outcome, constants, points })
}
