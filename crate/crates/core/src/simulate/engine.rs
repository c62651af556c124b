//! Euler stepping with full truncation and per-step jump thinning.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{AjdError, Result};
use crate::linalg::{min_sym_eigenvalue, psd_factor_slice};
use crate::model::ModelSpec;

/// Identifier written into path metadata.
pub const SCHEME_ID: &str = "euler-full-truncation/thinning";
/// Retries with a doubled dominating-rate margin before giving up.
pub const MAX_THINNING_RETRIES: u32 = 5;
/// Default Euler step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Per-path random stream: the master seed selects the key, the path index
/// selects the stream, so any path can be regenerated on its own.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Receives the simulated path as it is generated.
pub trait Observer {
    /// Diffusion move from `(t0, x0)` to `(t1, x1)` with no jump in between.
    fn segment(&mut self, t0: f64, x0: &[f64], t1: f64, x1: &[f64]);

    /// Jump at `t` from the left limit `pre` to `post`.
    fn jump(&mut self, _t: f64, _pre: &[f64], _post: &[f64]) {}

    /// Checked after every step; returning true ends the run early.
    fn stop(&self) -> bool {
        false
    }
}

/// Observer that ignores everything.
pub struct NullObserver;

impl Observer for NullObserver {
    fn segment(&mut self, _: f64, _: &[f64], _: f64, _: &[f64]) {}
}

/// Immutable, shareable stepping data for one spec.
pub struct Engine<'a> {
    spec: &'a ModelSpec,
    d: usize,
    m: usize,
    dt: f64,
    b: Vec<f64>,
    beta: Vec<f64>,
    a: Vec<f64>,
    alpha: Vec<(usize, Vec<f64>)>,
    lambda0: f64,
    kappa: Vec<f64>,
    jumps_on: bool,
}

/// Mutable per-path buffers.
pub struct Scratch {
    xp: Vec<f64>,
    mu: Vec<f64>,
    diff: Vec<f64>,
    work: Vec<f64>,
    sigma: Vec<f64>,
    done: Vec<bool>,
    wh: Vec<f64>,
    wprev: Vec<f64>,
    ws: Vec<f64>,
    xt: Vec<f64>,
    post: Vec<f64>,
}

impl Scratch {
    pub fn new(d: usize) -> Self {
        Scratch {
            xp: vec![0.0; d],
            mu: vec![0.0; d],
            diff: vec![0.0; d * d],
            work: vec![0.0; d * d],
            sigma: vec![0.0; d * d],
            done: vec![false; d],
            wh: vec![0.0; d],
            wprev: vec![0.0; d],
            ws: vec![0.0; d],
            xt: vec![0.0; d],
            post: vec![0.0; d],
        }
    }
}

fn flat(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    (0..d * d).map(|k| m[(k / d, k % d)]).collect()
}

impl<'a> Engine<'a> {
    /// Requires an admissible spec and a positive step.
    pub fn new(spec: &'a ModelSpec, dt: f64) -> Result<Self> {
        spec.require_admissible()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(AjdError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let alpha = (0..spec.m)
            .filter(|i| spec.alpha[*i].iter().any(|v| *v != 0.0))
            .map(|i| (i, flat(&crate::linalg::symmetrize(&spec.alpha[i]))))
            .collect();
        Ok(Engine {
            spec,
            d: spec.d,
            m: spec.m,
            dt,
            b: spec.b.iter().copied().collect(),
            beta: flat(&spec.beta),
            a: flat(&crate::linalg::symmetrize(&spec.a)),
            alpha,
            lambda0: spec.lambda0,
            kappa: spec.kappa.iter().copied().collect(),
            jumps_on: spec.has_jumps(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(self.d)
    }

    fn truncate(&self, x: &mut [f64]) {
        for v in x.iter_mut().take(self.m) {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    fn intensity(&self, x: &[f64]) -> f64 {
        self.lambda0 + self.kappa.iter().zip(x).map(|(k, v)| k * v).sum::<f64>()
    }

    /// Drift, diffusion and its factor at the truncated state.
    fn coefficients(&self, x: &[f64], sc: &mut Scratch) -> Result<()> {
        let d = self.d;
        sc.xp.copy_from_slice(x);
        self.truncate(&mut sc.xp);
        for i in 0..d {
            let mut v = self.b[i];
            for j in 0..d {
                v += self.beta[i * d + j] * sc.xp[j];
            }
            sc.mu[i] = v;
        }
        sc.diff.copy_from_slice(&self.a);
        for (i, al) in &self.alpha {
            let xi = sc.xp[*i];
            if xi != 0.0 {
                for (dst, src) in sc.diff.iter_mut().zip(al) {
                    *dst += xi * src;
                }
            }
        }
        if d == 1 {
            sc.sigma[0] = sc.diff[0].max(0.0).sqrt();
            return Ok(());
        }
        sc.work.copy_from_slice(&sc.diff);
        if psd_factor_slice(d, &mut sc.work, &mut sc.sigma, &mut sc.done).is_err() {
            let m = nalgebra::DMatrix::from_row_slice(d, d, &sc.diff);
            return Err(AjdError::Indefinite { min_eigenvalue: min_sym_eigenvalue(&m) });
        }
        Ok(())
    }

    /// `out = x + μ s + σ w`, truncated.
    fn euler_point(&self, x: &[f64], s: f64, w: &[f64], sc: &Scratch, out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            let mut v = x[i] + sc.mu[i] * s;
            for k in 0..d {
                v += sc.sigma[i * d + k] * w[k];
            }
            out[i] = v;
        }
        self.truncate(out);
    }

    /// Advances `x` over `[t, t + h]`, reporting segments and jumps.
    pub fn step<R: Rng, O: Observer>(
        &self,
        rng: &mut R,
        sc: &mut Scratch,
        t: f64,
        h: f64,
        x: &mut [f64],
        obs: &mut O,
    ) -> Result<()> {
        let d = self.d;
        let end = t + h;
        let mut t_cur = t;
        'outer: loop {
            let hh = end - t_cur;
            if hh <= 0.0 {
                return Ok(());
            }
            self.coefficients(x, sc)?;
            let sq = hh.sqrt();
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                sc.wh[k] = z * sq;
            }
            if self.jumps_on {
                let base = self.intensity(&sc.xp);
                let mut unit = 0.0;
                for i in 0..self.m {
                    if self.kappa[i] != 0.0 {
                        unit += self.kappa[i] * (sc.mu[i].abs() * hh + 3.0 * (sc.diff[i * d + i].max(0.0) * hh).sqrt());
                    }
                }
                let mut retry = 0u32;
                'attempt: loop {
                    let lbar = base + unit * f64::from(1u32 << retry);
                    if lbar <= 0.0 {
                        break 'attempt;
                    }
                    let mut s_prev = 0.0;
                    sc.wprev.iter_mut().for_each(|v| *v = 0.0);
                    let mut s = 0.0;
                    loop {
                        let e: f64 = rng.sample(Exp1);
                        s += e / lbar;
                        if s >= hh {
                            break 'attempt;
                        }
                        // Brownian bridge from (s_prev, W(s_prev)) to (hh, W(hh)).
                        let span = hh - s_prev;
                        let frac = (s - s_prev) / span;
                        let sd = ((s - s_prev) * (hh - s) / span).sqrt();
                        for k in 0..d {
                            let z: f64 = rng.sample(StandardNormal);
                            sc.ws[k] = sc.wprev[k] + frac * (sc.wh[k] - sc.wprev[k]) + sd * z;
                        }
                        let mut xt = std::mem::take(&mut sc.xt);
                        self.euler_point(x, s, &sc.ws, sc, &mut xt);
                        sc.xt = xt;
                        let lam = self.intensity(&sc.xt);
                        if lam > lbar {
                            retry += 1;
                            if retry > MAX_THINNING_RETRIES {
                                return Err(AjdError::Thinning { time: t_cur + s, retries: MAX_THINNING_RETRIES });
                            }
                            continue 'attempt;
                        }
                        let u: f64 = rng.random();
                        if u * lbar < lam {
                            let tau = t_cur + s;
                            obs.segment(t_cur, x, tau, &sc.xt);
                            self.spec.jumps.sample_into(rng, &mut sc.post);
                            for i in 0..d {
                                sc.post[i] += sc.xt[i];
                            }
                            obs.jump(tau, &sc.xt, &sc.post);
                            x.copy_from_slice(&sc.post);
                            t_cur = tau;
                            continue 'outer;
                        }
                        s_prev = s;
                        sc.wprev.copy_from_slice(&sc.ws);
                    }
                }
            }
            let mut xt = std::mem::take(&mut sc.xt);
            self.euler_point(x, hh, &sc.wh, sc, &mut xt);
            obs.segment(t_cur, x, end, &xt);
            x.copy_from_slice(&xt);
            sc.xt = xt;
            return Ok(());
        }
    }

    /// Advances over `[t0, t1]` in equal steps no longer than `dt`.
    /// Returns false if the observer stopped the run.
    pub fn advance<R: Rng, O: Observer>(
        &self,
        rng: &mut R,
        sc: &mut Scratch,
        x: &mut [f64],
        t0: f64,
        t1: f64,
        obs: &mut O,
    ) -> Result<bool> {
        if t1 <= t0 {
            return Ok(!obs.stop());
        }
        let n = ((t1 - t0) / self.dt - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        for k in 0..n {
            let ta = t0 + k as f64 * h;
            let tb = if k + 1 == n { t1 } else { t0 + (k + 1) as f64 * h };
            self.step(rng, sc, ta, tb - ta, x, obs)?;
            if obs.stop() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;
    use nalgebra::DVector;

    struct Counter {
        jumps: usize,
        segments: usize,
        min_x: f64,
    }

    impl Observer for Counter {
        fn segment(&mut self, _: f64, _: &[f64], _: f64, x1: &[f64]) {
            self.segments += 1;
            self.min_x = self.min_x.min(x1[0]);
        }
        fn jump(&mut self, _: f64, pre: &[f64], post: &[f64]) {
            assert!(post[0] >= pre[0]);
            self.jumps += 1;
        }
    }

    #[test]
    fn no_jumps_without_intensity() {
        let spec = ModelSpec::cir(1.0, -1.0, 1.0);
        let e = Engine::new(&spec, 1e-2).unwrap();
        let mut rng = path_rng(1, 0);
        let mut sc = e.scratch();
        let mut x = [1.0];
        let mut c = Counter { jumps: 0, segments: 0, min_x: f64::INFINITY };
        e.advance(&mut rng, &mut sc, &mut x, 0.0, 10.0, &mut c).unwrap();
        assert_eq!(c.jumps, 0);
        assert_eq!(c.segments, 1000);
        assert!(c.min_x >= 0.0);
    }

    #[test]
    fn truncation_keeps_volatility_nonnegative() {
        // strong noise near zero: Euler would go negative without truncation
        let spec = ModelSpec::cir(0.2, -1.0, 0.3);
        let e = Engine::new(&spec, 0.05).unwrap();
        let mut rng = path_rng(7, 3);
        let mut sc = e.scratch();
        let mut x = [0.0];
        let mut c = Counter { jumps: 0, segments: 0, min_x: f64::INFINITY };
        e.advance(&mut rng, &mut sc, &mut x, 0.0, 200.0, &mut c).unwrap();
        assert!(c.min_x >= 0.0);
    }

    #[test]
    fn constant_rate_jump_count() {
        let spec =
            ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(2.0, DVector::zeros(1), JumpDist::exponential(2.0).unwrap());
        let e = Engine::new(&spec, 1e-2).unwrap();
        let mut rng = path_rng(11, 0);
        let mut sc = e.scratch();
        let mut x = [1.0];
        let mut c = Counter { jumps: 0, segments: 0, min_x: f64::INFINITY };
        let t = 5000.0;
        e.advance(&mut rng, &mut sc, &mut x, 0.0, t, &mut c).unwrap();
        let expected = 2.0 * t;
        assert!((c.jumps as f64 - expected).abs() < 4.0 * expected.sqrt(), "{} jumps", c.jumps);
    }

    #[test]
    fn same_stream_same_path() {
        let spec = ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(
            0.5,
            DVector::from_element(1, 1.0),
            JumpDist::exponential(2.0).unwrap(),
        );
        let e = Engine::new(&spec, 1e-2).unwrap();
        let run = |stream| {
            let mut rng = path_rng(5, stream);
            let mut sc = e.scratch();
            let mut x = [1.0];
            e.advance(&mut rng, &mut sc, &mut x, 0.0, 20.0, &mut NullObserver).unwrap();
            x[0]
        };
        assert_eq!(run(2).to_bits(), run(2).to_bits());
        assert_ne!(run(2).to_bits(), run(3).to_bits());
    }
}
