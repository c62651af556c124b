//! Ergodic averages, batch-means variances and closed-form long-run limits.

mod fclt;
mod hfun;

pub use fclt::{fclt_diagnostic, tv_proxy_decay, FcltConfig, FcltReport, TvDecayReport};
pub use hfun::HFunction;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};
use crate::linalg;
use crate::model::ModelSpec;
use crate::simulate::{path_rng, Engine, Observer, PathSample, SkeletonSample};
use crate::stability::{max_real_eigenvalue, STABILITY_TOLERANCE};

/// Version tag written into every report.
pub const SCHEMA_VERSION: u32 = 1;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Cap on the default number of batches.
pub const MAX_DEFAULT_BATCHES: usize = 200;

/// `min(⌊√n⌋, 200)`.
pub fn default_batch_count(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).min(MAX_DEFAULT_BATCHES)
}

/// Trapezoidal integrator of `h` along diffusion segments.
struct Integrator<'a> {
    h: &'a HFunction,
    h0: Vec<f64>,
    h1: Vec<f64>,
    total: Vec<f64>,
    elapsed: f64,
    /// Optional split of the integral into consecutive chunks of equal length.
    chunk: Option<ChunkState>,
}

struct ChunkState {
    length: f64,
    boundary: f64,
    current: Vec<f64>,
    integrals: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(h: &'a HFunction, d: usize, chunk: Option<(f64, f64)>) -> Self {
        let k = h.output_dim(d);
        Integrator {
            h,
            h0: vec![0.0; k],
            h1: vec![0.0; k],
            total: vec![0.0; k],
            elapsed: 0.0,
            chunk: chunk.map(|(start, length)| ChunkState {
                length,
                boundary: start + length,
                current: vec![0.0; k],
                integrals: vec![],
            }),
        }
    }

    /// Closes the last chunk if it ended within rounding of `t_end`.
    fn finish(&mut self, t_end: f64) {
        if let Some(c) = &mut self.chunk {
            if t_end >= c.boundary - 1e-9 * c.length.max(1.0) {
                c.integrals.extend_from_slice(&c.current);
                c.current.iter_mut().for_each(|v| *v = 0.0);
                c.boundary += c.length;
            }
        }
    }
}

impl Observer for Integrator<'_> {
    fn segment(&mut self, t0: f64, x0: &[f64], t1: f64, x1: &[f64]) {
        let w = t1 - t0;
        self.h.eval(x0, &mut self.h0);
        self.h.eval(x1, &mut self.h1);
        if let Some(c) = &mut self.chunk {
            let mid = 0.5 * (t0 + t1);
            while mid >= c.boundary {
                c.integrals.extend_from_slice(&c.current);
                c.current.iter_mut().for_each(|v| *v = 0.0);
                c.boundary += c.length;
            }
            for (k, acc) in c.current.iter_mut().enumerate() {
                *acc += 0.5 * (self.h0[k] + self.h1[k]) * w;
            }
        }
        for (k, acc) in self.total.iter_mut().enumerate() {
            *acc += 0.5 * (self.h0[k] + self.h1[k]) * w;
        }
        self.elapsed += w;
    }
}

/// `(1/T)∫₀ᵀ h(X(s)) ds` by the trapezoid rule between recorded epochs;
/// across a jump the left limit closes the preceding segment.
pub fn time_average(path: &PathSample, h: &HFunction) -> Result<Vec<f64>> {
    if path.is_empty() {
        return Err(AjdError::InsufficientData("empty path".into()));
    }
    h.check(path.d)?;
    let k = h.output_dim(path.d);
    if path.len() == 1 || path.horizon() == 0.0 {
        let mut out = vec![0.0; k];
        h.eval(path.state(0), &mut out);
        return Ok(out);
    }
    let mut integ = Integrator::new(h, path.d, None);
    path.replay(&mut integ);
    Ok(integ.total.iter().map(|v| v / integ.elapsed).collect())
}

/// `(1/n)Σ_{i=1}^{n} h(X(iΔ))`; the initial observation is not included.
pub fn skeleton_average(skel: &SkeletonSample, h: &HFunction) -> Result<Vec<f64>> {
    h.check(skel.d)?;
    let n = skel.n();
    if n == 0 {
        return Err(AjdError::InsufficientData("skeleton has no transitions".into()));
    }
    let k = h.output_dim(skel.d);
    let mut acc = vec![0.0; k];
    let mut buf = vec![0.0; k];
    for i in 1..=n {
        h.eval(skel.state(i), &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    Ok(acc.into_iter().map(|v| v / n as f64).collect())
}

/// Nonoverlapping batch-means estimate of the long-run covariance of a
/// vector series stored flat (`dim` values per observation):
/// `(b/(k−1)) Σ_j (m_j − m̄)(m_j − m̄)ᵀ` with batch length `b`, `k` batches.
pub fn batch_means_variance(series: &[f64], dim: usize, nbatches: usize) -> Result<DMatrix<f64>> {
    if dim == 0 || series.len() % dim != 0 {
        return Err(AjdError::Dimension(format!("series length {} is not a multiple of {dim}", series.len())));
    }
    let n = series.len() / dim;
    if nbatches < 2 {
        return Err(AjdError::InvalidArgument("batch means need at least 2 batches".into()));
    }
    if n < 10 * nbatches {
        return Err(AjdError::InsufficientData(format!(
            "{n} observations for {nbatches} batches (need {})",
            10 * nbatches
        )));
    }
    let len = n / nbatches;
    let means: Vec<DVector<f64>> = (0..nbatches)
        .map(|j| {
            let mut m = DVector::zeros(dim);
            for i in j * len..(j + 1) * len {
                for c in 0..dim {
                    m[c] += series[i * dim + c];
                }
            }
            m / len as f64
        })
        .collect();
    let grand = means.iter().fold(DVector::zeros(dim), |acc, m| acc + m) / nbatches as f64;
    let mut out = DMatrix::zeros(dim, dim);
    for m in &means {
        let c = m - &grand;
        out += &c * c.transpose();
    }
    Ok(out * (len as f64 / (nbatches - 1) as f64))
}

fn effective_inverse(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    spec.check_dimensions()?;
    let eff = spec.effective_beta();
    let abscissa = max_real_eigenvalue(&eff);
    if abscissa >= -STABILITY_TOLERANCE {
        return Err(AjdError::Unstable(abscissa));
    }
    Ok(-linalg::inverse(&eff)?)
}

/// Stationary mean `v = −(β + E(Z)κᵀ)⁻¹(b + λE(Z))`.
pub fn closed_form_mean(spec: &ModelSpec) -> Result<DVector<f64>> {
    effective_inverse(spec)?;
    let eff = spec.effective_beta();
    let rhs = -(&spec.b + spec.jumps.mean() * spec.lambda0);
    linalg::solve(&eff, &rhs)
}

/// Long-run covariance of the identity time average,
/// `Σ = A(a + λE ZZᵀ)Aᵀ + Σ_{i≤m} v_i A(α_i + κ_i E ZZᵀ)Aᵀ` with
/// `A = −(β + E(Z)κᵀ)⁻¹`.
pub fn closed_form_cov(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let a_mat = effective_inverse(spec)?;
    let v = closed_form_mean(spec)?;
    let ezz = spec.jumps.second_moment();
    let mut inner = linalg::symmetrize(&spec.a) + ezz * spec.lambda0;
    for i in 0..spec.m {
        inner += (linalg::symmetrize(&spec.alpha[i]) + ezz * spec.kappa[i]) * v[i];
    }
    Ok(linalg::symmetrize(&(&a_mat * inner * a_mat.transpose())))
}

/// Ergodic average with batch-means error bars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub schema_version: u32,
    pub h: String,
    /// `"continuous"` (time average) or `"skeleton"`.
    pub mode: String,
    /// Averaging horizon `T` (continuous) or number of observations (skeleton).
    pub horizon: f64,
    pub average: Vec<f64>,
    pub batch_count: usize,
    /// Long-run covariance estimate (per unit time, or per observation).
    #[serde(with = "crate::linalg::serde_rows")]
    pub bm_variance: DMatrix<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub target: Option<Vec<f64>>,
    pub z_scores: Option<Vec<f64>>,
}

impl ErgodicReport {
    /// True when every coordinate of the target lies inside the 95% interval.
    pub fn target_covered(&self) -> Option<bool> {
        let t = self.target.as_ref()?;
        Some(self.average.iter().zip(t).zip(&self.ci_halfwidth).all(|((a, t), w)| (a - t).abs() <= *w))
    }

    fn with_target(mut self, target: Option<Vec<f64>>) -> Result<Self> {
        if let Some(t) = &target {
            if t.len() != self.average.len() {
                return Err(AjdError::Dimension(format!(
                    "target has length {}, expected {}",
                    t.len(),
                    self.average.len()
                )));
            }
            let se: Vec<f64> = self.ci_halfwidth.iter().map(|w| w / Z95).collect();
            self.z_scores = Some(self.average.iter().zip(t).zip(&se).map(|((a, t), s)| (a - t) / s).collect());
        }
        self.target = target;
        Ok(self)
    }
}

/// Options for a single long ergodic run.
#[derive(Debug, Clone)]
pub struct ErgodicRunConfig {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub seed: u64,
    /// Number of equal chunks the integral is split into for batch means.
    pub chunks: usize,
    pub nbatches: Option<usize>,
}

impl ErgodicRunConfig {
    pub fn new(x0: Vec<f64>, horizon: f64, dt: f64, seed: u64) -> Self {
        let chunks = ((horizon / dt).round() as usize).clamp(1, 10_000);
        ErgodicRunConfig { x0, horizon, burn_in: 0.0, dt, seed, chunks, nbatches: None }
    }
}

/// Streams one long path and reports its time average of `h` with a
/// batch-means 95% interval; nothing but chunk integrals is stored.
pub fn ergodic_run(
    spec: &ModelSpec,
    h: &HFunction,
    cfg: &ErgodicRunConfig,
    target: Option<Vec<f64>>,
) -> Result<ErgodicReport> {
    h.check(spec.d)?;
    spec.check_state(&cfg.x0)?;
    if !(cfg.horizon > 0.0) || cfg.chunks == 0 || cfg.burn_in < 0.0 {
        return Err(AjdError::InvalidArgument("ergodic run needs T > 0, burn-in >= 0 and at least one chunk".into()));
    }
    let engine = Engine::new(spec, cfg.dt)?;
    let mut rng = path_rng(cfg.seed, 0);
    let mut sc = engine.scratch();
    let mut x = cfg.x0.clone();
    if cfg.burn_in > 0.0 {
        engine.advance(&mut rng, &mut sc, &mut x, 0.0, cfg.burn_in, &mut crate::simulate::NullObserver)?;
    }
    let chunk_len = cfg.horizon / cfg.chunks as f64;
    let mut integ = Integrator::new(h, spec.d, Some((0.0, chunk_len)));
    engine.advance(&mut rng, &mut sc, &mut x, 0.0, cfg.horizon, &mut integ)?;
    integ.finish(cfg.horizon);
    let k = h.output_dim(spec.d);
    let chunk_state = integ.chunk.take().expect("chunked integrator");
    let averages: Vec<f64> = chunk_state.integrals.iter().map(|v| v / chunk_len).collect();
    let nchunks = averages.len() / k;
    let nb = cfg.nbatches.unwrap_or_else(|| default_batch_count(nchunks));
    let bm = batch_means_variance(&averages, k, nb)? * chunk_len;
    let average: Vec<f64> = integ.total.iter().map(|v| v / cfg.horizon).collect();
    let ci = (0..k).map(|i| Z95 * (bm[(i, i)].max(0.0) / cfg.horizon).sqrt()).collect();
    ErgodicReport {
        schema_version: SCHEMA_VERSION,
        h: h.id(),
        mode: "continuous".into(),
        horizon: cfg.horizon,
        average,
        batch_count: nb,
        bm_variance: bm,
        ci_halfwidth: ci,
        target: None,
        z_scores: None,
    }
    .with_target(target)
}

/// Skeleton average of `h` with a batch-means interval.
pub fn skeleton_report(
    skel: &SkeletonSample,
    h: &HFunction,
    nbatches: Option<usize>,
    target: Option<Vec<f64>>,
) -> Result<ErgodicReport> {
    let average = skeleton_average(skel, h)?;
    let k = average.len();
    let n = skel.n();
    let mut series = Vec::with_capacity(n * k);
    let mut buf = vec![0.0; k];
    for i in 1..=n {
        h.eval(skel.state(i), &mut buf);
        series.extend_from_slice(&buf);
    }
    let nb = nbatches.unwrap_or_else(|| default_batch_count(n));
    let bm = batch_means_variance(&series, k, nb)?;
    let ci = (0..k).map(|i| Z95 * (bm[(i, i)].max(0.0) / n as f64).sqrt()).collect();
    ErgodicReport {
        schema_version: SCHEMA_VERSION,
        h: h.id(),
        mode: "skeleton".into(),
        horizon: n as f64,
        average,
        batch_count: nb,
        bm_variance: bm,
        ci_halfwidth: ci,
        target: None,
        z_scores: None,
    }
    .with_target(target)
}
