//! Moment conditions built from the conditional characteristic function, a
//! GMM objective and a derivative-free fit on skeleton data.

mod optimize;
mod params;

pub use optimize::{nelder_mead, Minimum, NelderMeadOptions};
pub use params::ParamRef;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};
use crate::limits::SCHEMA_VERSION;
use crate::model::{ModelSpec, SpecDocument};
use crate::riccati::{solve_transform, TransformOptions};
use crate::simulate::SkeletonSample;
use crate::stability::{classify, DEFAULT_MOMENT_ORDER};

/// Default frequency multipliers along each coordinate direction.
pub const DEFAULT_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

/// Purely imaginary frequencies at which the conditional characteristic
/// function is matched, and the sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGrid {
    pub u_points: Vec<Vec<Complex64>>,
    pub delta: f64,
}

impl MomentGrid {
    pub fn new(u_points: Vec<Vec<Complex64>>, delta: f64) -> Result<Self> {
        if u_points.is_empty() {
            return Err(AjdError::InvalidArgument("moment grid is empty".into()));
        }
        if !(delta > 0.0) {
            return Err(AjdError::InvalidArgument(format!("sampling interval must be positive, got {delta}")));
        }
        let d = u_points[0].len();
        for (k, u) in u_points.iter().enumerate() {
            if u.len() != d {
                return Err(AjdError::Dimension("moment grid points differ in length".into()));
            }
            if u.iter().any(|z| z.re != 0.0 || !z.im.is_finite()) {
                return Err(AjdError::InvalidArgument("moment grid points must be purely imaginary".into()));
            }
            if u_points[..k].contains(u) {
                return Err(AjdError::InvalidArgument("moment grid points must be distinct".into()));
            }
        }
        Ok(MomentGrid { u_points, delta })
    }

    /// `u = i·s·e_j` for every scale `s` and coordinate `j`.
    pub fn from_scales(d: usize, delta: f64, scales: &[f64]) -> Result<Self> {
        let mut pts = Vec::with_capacity(d * scales.len());
        for j in 0..d {
            for s in scales {
                let mut u = vec![Complex64::new(0.0, 0.0); d];
                u[j] = Complex64::new(0.0, *s);
                pts.push(u);
            }
        }
        Self::new(pts, delta)
    }

    pub fn default_for(d: usize, delta: f64) -> Result<Self> {
        Self::from_scales(d, delta, &DEFAULT_SCALES)
    }

    pub fn dim(&self) -> usize {
        self.u_points[0].len()
    }

    /// Number of real moment conditions (real and imaginary parts stacked).
    pub fn n_conditions(&self) -> usize {
        2 * self.u_points.len()
    }
}

/// `(φ(Δ,u), ψ(Δ,u))` for every grid point.
#[derive(Debug, Clone)]
pub struct GridTransforms {
    pub phi: Vec<Complex64>,
    pub psi: Vec<Vec<Complex64>>,
}

pub fn grid_transforms(spec: &ModelSpec, grid: &MomentGrid) -> Result<GridTransforms> {
    if grid.dim() != spec.d {
        return Err(AjdError::Dimension(format!("grid has dimension {}, spec has d = {}", grid.dim(), spec.d)));
    }
    let sols = grid
        .u_points
        .par_iter()
        .map(|u| solve_transform(spec, u, grid.delta, TransformOptions::default()))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridTransforms {
        phi: sols.iter().map(|s| s.final_phi()).collect(),
        psi: sols.iter().map(|s| s.final_psi().to_vec()).collect(),
    })
}

fn residuals_into(grid: &MomentGrid, tr: &GridTransforms, x: &[f64], y: &[f64], out: &mut [Complex64]) {
    for (k, u) in grid.u_points.iter().enumerate() {
        let uy: Complex64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
        let expo: Complex64 = tr.phi[k] + tr.psi[k].iter().zip(x).map(|(a, b)| a * b).sum::<Complex64>();
        out[k] = uy.exp() - expo.exp();
    }
}

/// `e^{uᵀy} − exp(φ(Δ,u) + ψ(Δ,u)ᵀx)` for each grid point `u`; conditionally
/// mean zero given `X(0) = x` under the true parameters.
pub fn moment_residual(spec: &ModelSpec, grid: &MomentGrid, x: &[f64], y: &[f64]) -> Result<Vec<Complex64>> {
    let tr = grid_transforms(spec, grid)?;
    if x.len() != spec.d || y.len() != spec.d {
        return Err(AjdError::Dimension(format!("states must have length {}", spec.d)));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); grid.u_points.len()];
    residuals_into(grid, &tr, x, y, &mut out);
    Ok(out)
}

fn check_data(spec: &ModelSpec, data: &SkeletonSample, grid: &MomentGrid) -> Result<()> {
    if data.d != spec.d {
        return Err(AjdError::Dimension(format!("data has dimension {}, spec has d = {}", data.d, spec.d)));
    }
    if data.states.len() < 2 * data.d {
        return Err(AjdError::InsufficientData("need at least one transition".into()));
    }
    if (data.delta - grid.delta).abs() > 1e-9 * grid.delta.max(1.0) {
        return Err(AjdError::InvalidArgument(format!(
            "data sampling interval {} differs from the grid's {}",
            data.delta, grid.delta
        )));
    }
    Ok(())
}

/// Sample mean of the residuals over all transitions.
pub fn mean_residual(spec: &ModelSpec, data: &SkeletonSample, grid: &MomentGrid) -> Result<Vec<Complex64>> {
    check_data(spec, data, grid)?;
    let tr = grid_transforms(spec, grid)?;
    Ok(mean_with(data, grid, &tr))
}

fn mean_with(data: &SkeletonSample, grid: &MomentGrid, tr: &GridTransforms) -> Vec<Complex64> {
    let k = grid.u_points.len();
    let n = data.n();
    let zero = || vec![Complex64::new(0.0, 0.0); k];
    let sum = (0..n)
        .into_par_iter()
        .fold(
            || (zero(), zero()),
            |(mut acc, mut buf), i| {
                residuals_into(grid, tr, data.state(i), data.state(i + 1), &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                (acc, buf)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(zero, |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        });
    sum.into_iter().map(|v| v / n as f64).collect()
}

/// `[Re g₁, Im g₁, Re g₂, Im g₂, …]`.
pub fn stack(g: &[Complex64]) -> Vec<f64> {
    g.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// `ḡᵀWḡ` with `ḡ` the stacked mean residual; `W = I` when `weight` is None.
///
/// Parameters that are not admissible, or whose transform cannot be solved
/// at the grid, give `+∞` so an optimizer steers away from them.
pub fn gmm_objective(
    spec: &ModelSpec,
    data: &SkeletonSample,
    grid: &MomentGrid,
    weight: Option<&DMatrix<f64>>,
) -> Result<f64> {
    check_data(spec, data, grid)?;
    if let Some(w) = weight {
        let n = grid.n_conditions();
        if w.nrows() != n || w.ncols() != n {
            return Err(AjdError::Dimension(format!("weight must be {n}x{n}")));
        }
    }
    if !spec.validate()?.admissible {
        return Ok(f64::INFINITY);
    }
    let tr = match grid_transforms(spec, grid) {
        Ok(tr) => tr,
        Err(AjdError::RiccatiDomain { .. } | AjdError::TransformDomain(_) | AjdError::NotAdmissible(_)) => {
            return Ok(f64::INFINITY)
        }
        Err(e) => return Err(e),
    };
    let g = stack(&mean_with(data, grid, &tr));
    let value = match weight {
        None => g.iter().map(|v| v * v).sum(),
        Some(w) => {
            let gv = nalgebra::DVector::from_vec(g);
            (gv.transpose() * w * &gv)[(0, 0)]
        }
    };
    Ok(if value.is_finite() { value.max(0.0) } else { f64::INFINITY })
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub optimizer: NelderMeadOptions,
    pub weight: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedParam {
    pub name: String,
    pub initial: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub schema_version: u32,
    pub params: Vec<FittedParam>,
    pub spec: SpecDocument,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub classification: String,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.estimate)
    }
}

/// Minimizes the GMM objective over the `free` entries of `template`,
/// starting from the template values. Deterministic for fixed options.
pub fn fit(
    data: &SkeletonSample,
    template: &ModelSpec,
    free: &[ParamRef],
    grid: &MomentGrid,
    opts: &FitOptions,
) -> Result<FitResult> {
    template.require_admissible()?;
    check_data(template, data, grid)?;
    for (k, p) in free.iter().enumerate() {
        p.check(template.d)?;
        if free[..k].contains(p) {
            return Err(AjdError::InvalidArgument(format!("parameter {p} listed twice")));
        }
    }
    let initial: Vec<f64> = free.iter().map(|p| p.get(template)).collect();
    let build = |x: &[f64]| {
        let mut s = template.clone();
        for (p, v) in free.iter().zip(x) {
            p.set(&mut s, *v);
        }
        s
    };
    let mut failure = None;
    let min = nelder_mead(
        |x| match gmm_objective(&build(x), data, grid, opts.weight.as_ref()) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        &initial,
        &opts.optimizer,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let spec = build(&min.x);
    let mut warnings = Vec::new();
    if !min.converged {
        warnings.push(format!("optimizer stopped after {} evaluations without meeting the tolerance", min.evaluations));
    }
    let classification = match classify(&spec, DEFAULT_MOMENT_ORDER) {
        Ok(r) => {
            if !r.classification.is_exp_ergodic() {
                warnings.push(format!(
                    "fitted model is classified {}; ergodic averages need not converge",
                    r.classification.label()
                ));
            }
            r.classification.label().to_string()
        }
        Err(e) => {
            warnings.push(format!("fitted model could not be classified: {e}"));
            "UNCLASSIFIED".to_string()
        }
    };
    Ok(FitResult {
        schema_version: SCHEMA_VERSION,
        params: free
            .iter()
            .zip(initial.iter().zip(&min.x))
            .map(|(p, (i, e))| FittedParam { name: p.to_string(), initial: *i, estimate: *e })
            .collect(),
        spec: spec.to_document(),
        objective: min.value,
        iterations: min.iterations,
        evaluations: min.evaluations,
        converged: min.converged,
        classification,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::cir_exact_path;

    fn cir_data(n: usize, seed: u64) -> SkeletonSample {
        SkeletonSample { d: 1, delta: 0.5, states: cir_exact_path(1.0, -1.0, 1.0, 1.0, 0.5, n, seed), seed, dt: 0.0 }
    }

    #[test]
    fn grid_rules() {
        let g = MomentGrid::default_for(2, 0.5).unwrap();
        assert_eq!(g.u_points.len(), 6);
        assert_eq!(g.n_conditions(), 12);
        assert!(MomentGrid::new(vec![], 0.5).is_err());
        assert!(MomentGrid::new(vec![vec![Complex64::new(1.0, 0.0)]], 0.5).is_err());
        let u = vec![Complex64::new(0.0, 1.0)];
        assert!(MomentGrid::new(vec![u.clone(), u], 0.5).is_err());
    }

    #[test]
    fn zero_frequency_residual_vanishes() {
        let s = ModelSpec::cir(1.0, -1.0, 1.0);
        let g = MomentGrid::new(vec![vec![Complex64::new(0.0, 0.0)]], 0.5).unwrap();
        let r = moment_residual(&s, &g, &[0.7], &[2.3]).unwrap();
        assert!(r[0].norm() < 1e-12);
    }

    #[test]
    fn identity_weight_single_point_is_squared_modulus() {
        let s = ModelSpec::cir(1.0, -1.0, 1.0);
        let data = cir_data(2000, 1);
        let g = MomentGrid::new(vec![vec![Complex64::new(0.0, 1.0)]], 0.5).unwrap();
        let m = mean_residual(&s, &data, &g).unwrap();
        let obj = gmm_objective(&s, &data, &g, None).unwrap();
        assert!((obj - m[0].norm_sqr()).abs() < 1e-15);
        let w = DMatrix::identity(2, 2);
        assert!((gmm_objective(&s, &data, &g, Some(&w)).unwrap() - obj).abs() < 1e-15);
    }

    #[test]
    fn inadmissible_is_infinite() {
        let data = cir_data(100, 2);
        let g = MomentGrid::default_for(1, 0.5).unwrap();
        let bad = ModelSpec::cir(-1.0, -1.0, 1.0);
        assert_eq!(gmm_objective(&bad, &data, &g, None).unwrap(), f64::INFINITY);
    }

    #[test]
    fn empty_free_set_returns_template() {
        let s = ModelSpec::cir(1.0, -1.0, 1.0);
        let data = cir_data(500, 3);
        let g = MomentGrid::default_for(1, 0.5).unwrap();
        let r = fit(&data, &s, &[], &g, &FitOptions::default()).unwrap();
        assert!(r.params.is_empty());
        assert_eq!(ModelSpec::from_document(r.spec).unwrap(), s);
        assert!((r.objective - gmm_objective(&s, &data, &g, None).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn recovers_beta_on_moderate_sample() {
        let data = cir_data(20_000, 4);
        let g = MomentGrid::default_for(1, 0.5).unwrap();
        let start = ModelSpec::cir(1.0, -0.5, 1.0);
        let r = fit(&data, &start, &[ParamRef::Beta(0, 0)], &g, &FitOptions::default()).unwrap();
        let beta = r.estimate("beta[1,1]").unwrap();
        assert!((beta + 1.0).abs() < 0.2, "{r:?}");
        assert!(r.warnings.is_empty(), "{r:?}");
        let again = fit(&data, &start, &[ParamRef::Beta(0, 0)], &g, &FitOptions::default()).unwrap();
        assert_eq!(again.params[0].estimate, beta);
    }

    #[test]
    fn transient_fit_is_flagged() {
        use crate::model::JumpDist;
        use nalgebra::DVector;
        let s = ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(
            0.0,
            DVector::from_element(1, 4.0),
            JumpDist::exponential(2.0).unwrap(),
        );
        let data = cir_data(200, 5);
        let g = MomentGrid::default_for(1, 0.5).unwrap();
        let r = fit(&data, &s, &[], &g, &FitOptions::default()).unwrap();
        assert_eq!(r.classification, "TRANSIENT_1D");
        assert!(!r.warnings.is_empty());
    }
}
