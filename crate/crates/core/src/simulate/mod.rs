//! Path and skeleton simulation.

mod engine;
mod exact;

pub use engine::{path_rng, Engine, NullObserver, Observer, Scratch, DEFAULT_DT, MAX_THINNING_RETRIES, SCHEME_ID};
pub use exact::{cir_exact_path, cir_exact_step};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AjdError, Result};
use crate::model::{JumpDist, ModelSpec};

/// A simulated path: grid epochs plus jump epochs.
///
/// States are stored flat (`d` values per record). A record flagged as a jump
/// holds the post-jump state; its left limit is kept in `pre_jump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub d: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub is_jump: Vec<bool>,
    /// Left limits at jump records, in record order.
    pub pre_jump: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub scheme: String,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.d..(k + 1) * self.d]
    }

    pub fn jump_epochs(&self) -> Vec<f64> {
        self.times.iter().zip(&self.is_jump).filter(|(_, j)| **j).map(|(t, _)| *t).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }

    /// Replays the path as diffusion segments and jumps.
    pub fn replay<O: Observer>(&self, obs: &mut O) {
        let mut pre_idx = 0;
        for k in 1..self.len() {
            let right = if self.is_jump[k] {
                let p = &self.pre_jump[pre_idx * self.d..(pre_idx + 1) * self.d];
                pre_idx += 1;
                p
            } else {
                self.state(k)
            };
            obs.segment(self.times[k - 1], self.state(k - 1), self.times[k], right);
            if self.is_jump[k] {
                obs.jump(self.times[k], right, self.state(k));
            }
        }
    }
}

/// Observations `X(0), X(Δ), …, X(nΔ)` of a single path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSample {
    pub d: usize,
    pub delta: f64,
    pub states: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
}

impl SkeletonSample {
    /// Number of transitions `n`.
    pub fn n(&self) -> usize {
        self.states.len() / self.d - 1
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.d..(k + 1) * self.d]
    }

    /// Consecutive pairs `(X(kΔ), X((k+1)Δ))`.
    pub fn transitions(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        (0..self.n()).map(move |k| (self.state(k), self.state(k + 1)))
    }
}

struct Recorder {
    path: PathSample,
}

impl Observer for Recorder {
    fn segment(&mut self, _t0: f64, _x0: &[f64], t1: f64, x1: &[f64]) {
        self.path.times.push(t1);
        self.path.states.extend_from_slice(x1);
        self.path.is_jump.push(false);
    }

    fn jump(&mut self, _t: f64, pre: &[f64], post: &[f64]) {
        let d = self.path.d;
        let n = self.path.states.len();
        self.path.states[n - d..].copy_from_slice(post);
        *self.path.is_jump.last_mut().expect("segment precedes jump") = true;
        self.path.pre_jump.extend_from_slice(pre);
    }
}

fn check_run(spec: &ModelSpec, x0: &[f64], horizon: f64, dt: f64) -> Result<()> {
    spec.check_state(x0)?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(AjdError::InvalidArgument(format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    if horizon > 0.0 && dt > horizon {
        return Err(AjdError::InvalidArgument(format!("dt = {dt} exceeds the horizon {horizon}")));
    }
    Ok(())
}

/// Simulates one path on `[0, T]` using stream `path_index` of `seed`.
pub fn simulate_path_stream(
    spec: &ModelSpec,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    path_index: u64,
) -> Result<PathSample> {
    check_run(spec, x0, horizon, dt)?;
    let engine = Engine::new(spec, dt)?;
    let d = spec.d;
    let mut rec = Recorder {
        path: PathSample {
            d,
            times: vec![0.0],
            states: x0.to_vec(),
            is_jump: vec![false],
            pre_jump: vec![],
            seed,
            path_index,
            dt,
            scheme: SCHEME_ID.to_string(),
        },
    };
    let mut rng = path_rng(seed, path_index);
    let mut sc = engine.scratch();
    let mut x = x0.to_vec();
    engine.advance(&mut rng, &mut sc, &mut x, 0.0, horizon, &mut rec)?;
    Ok(rec.path)
}

pub fn simulate_path(spec: &ModelSpec, x0: &[f64], horizon: f64, dt: f64, seed: u64) -> Result<PathSample> {
    simulate_path_stream(spec, x0, horizon, dt, seed, 0)
}

/// Independent paths `0..count`, generated in parallel.
pub fn simulate_paths(
    spec: &ModelSpec,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    (0..count as u64).into_par_iter().map(|k| simulate_path_stream(spec, x0, horizon, dt, seed, k)).collect()
}

struct Last;

impl Observer for Last {
    fn segment(&mut self, _: f64, _: &[f64], _: f64, _: &[f64]) {}
}

/// Δ-skeleton of the path with stream `path_index`.
pub fn simulate_skeleton_stream(
    spec: &ModelSpec,
    x0: &[f64],
    delta: f64,
    n: usize,
    dt: f64,
    seed: u64,
    path_index: u64,
) -> Result<SkeletonSample> {
    if !(delta > 0.0) {
        return Err(AjdError::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    check_run(spec, x0, delta * n as f64, dt.min(delta))?;
    let engine = Engine::new(spec, dt)?;
    let mut states = Vec::with_capacity((n + 1) * spec.d);
    states.extend_from_slice(x0);
    let mut rng = path_rng(seed, path_index);
    let mut sc = engine.scratch();
    let mut x = x0.to_vec();
    for k in 0..n {
        engine.advance(&mut rng, &mut sc, &mut x, k as f64 * delta, (k + 1) as f64 * delta, &mut Last)?;
        states.extend_from_slice(&x);
    }
    Ok(SkeletonSample { d: spec.d, delta, states, seed, dt })
}

pub fn simulate_skeleton(
    spec: &ModelSpec,
    x0: &[f64],
    delta: f64,
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<SkeletonSample> {
    simulate_skeleton_stream(spec, x0, delta, n, dt, seed, 0)
}

/// `X(T)` for `count` independent paths from `x0`, flat `count × d`.
///
/// Path `k` uses stream `k`, so two calls with the same seed and different
/// starts are driven by common random numbers.
pub fn simulate_endpoints(
    spec: &ModelSpec,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_run(spec, x0, horizon, dt.min(horizon.max(f64::MIN_POSITIVE)))?;
    let engine = Engine::new(spec, dt)?;
    let rows = (0..count as u64)
        .into_par_iter()
        .map_init(
            || engine.scratch(),
            |sc, k| {
                let mut rng = path_rng(seed, k);
                let mut x = x0.to_vec();
                engine.advance(&mut rng, sc, &mut x, 0.0, horizon, &mut Last)?;
                Ok(x)
            },
        )
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(rows.concat())
}

/// States at each of the increasing `times` for `count` paths from `x0`:
/// `out[j]` is flat `count × d` at `times[j]`. Stream `k` drives path `k`.
pub fn simulate_at_times(
    spec: &ModelSpec,
    x0: &[f64],
    times: &[f64],
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    spec.check_state(x0)?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(AjdError::InvalidArgument("times must be nonnegative and nondecreasing".into()));
    }
    let engine = Engine::new(spec, dt)?;
    let per_path = (0..count as u64)
        .into_par_iter()
        .map_init(
            || engine.scratch(),
            |sc, k| {
                let mut rng = path_rng(seed, k);
                let mut x = x0.to_vec();
                let mut t = 0.0;
                let mut out = Vec::with_capacity(times.len() * x0.len());
                for &target in times {
                    engine.advance(&mut rng, sc, &mut x, t, target, &mut Last)?;
                    t = target.max(t);
                    out.extend_from_slice(&x);
                }
                Ok(out)
            },
        )
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let d = spec.d;
    Ok((0..times.len())
        .map(|j| per_path.iter().flat_map(|p| p[j * d..(j + 1) * d].iter().copied()).collect())
        .collect())
}

/// Observer recording the first time `‖x‖_∞` reaches a level.
struct Passage {
    level: f64,
    hit: Option<f64>,
}

impl Observer for Passage {
    fn segment(&mut self, _: f64, _: &[f64], t1: f64, x1: &[f64]) {
        if self.hit.is_none() && x1.iter().any(|v| v.abs() >= self.level) {
            self.hit = Some(t1);
        }
    }

    fn jump(&mut self, t: f64, _: &[f64], post: &[f64]) {
        if self.hit.is_none() && post.iter().any(|v| v.abs() >= self.level) {
            self.hit = Some(t);
        }
    }

    fn stop(&self) -> bool {
        self.hit.is_some()
    }
}

/// First times `‖X(t)‖_∞ ≥ level` on `[0, T]` (checked at step ends and
/// jump epochs); `None` for paths that never get there.
pub fn first_passage_times(
    spec: &ModelSpec,
    x0: &[f64],
    level: f64,
    horizon: f64,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    check_run(spec, x0, horizon, dt)?;
    let engine = Engine::new(spec, dt)?;
    (0..count as u64)
        .into_par_iter()
        .map_init(
            || engine.scratch(),
            |sc, k| {
                let mut rng = path_rng(seed, k);
                let mut x = x0.to_vec();
                let mut obs = Passage { level, hit: None };
                if x.iter().any(|v| v.abs() >= level) {
                    return Ok(Some(0.0));
                }
                engine.advance(&mut rng, sc, &mut x, 0.0, horizon, &mut obs)?;
                Ok(obs.hit)
            },
        )
        .collect()
}

/// Fraction of passage times at or before each of `times`.
pub fn escape_fractions(passages: &[Option<f64>], times: &[f64]) -> Vec<f64> {
    let n = passages.len().max(1) as f64;
    times.iter().map(|t| passages.iter().filter(|p| matches!(p, Some(h) if *h <= *t)).count() as f64 / n).collect()
}

/// One draw from the jump distribution.
pub fn sample_jump<R: Rng + ?Sized>(dist: &JumpDist, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; dist.dim()];
    dist.sample_into(rng, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpComponent;
    use nalgebra::DVector;

    fn jump_cir() -> ModelSpec {
        ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(
            1.0,
            DVector::from_element(1, 1.0),
            JumpDist::exponential(2.0).unwrap(),
        )
    }

    #[test]
    fn path_records_jumps() {
        let p = simulate_path(&jump_cir(), &[1.0], 50.0, 1e-2, 3).unwrap();
        assert_eq!(p.len(), 5001 + p.jump_epochs().len());
        assert_eq!(p.pre_jump.len(), p.jump_epochs().len());
        assert!(!p.jump_epochs().is_empty());
        assert!(p.states.iter().all(|v| *v >= 0.0));
        assert!(p.times.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*p.times.last().unwrap(), 50.0);
    }

    #[test]
    fn jump_free_path_has_no_jump_epochs() {
        let p = simulate_path(&ModelSpec::cir(1.0, -1.0, 1.0), &[1.0], 1.0, 1e-3, 1).unwrap();
        assert!(p.jump_epochs().is_empty());
        assert_eq!(p.len(), 1001);
    }

    #[test]
    fn skeleton_is_path_restriction() {
        let spec = jump_cir();
        let sk = simulate_skeleton(&spec, &[1.0], 0.5, 40, 0.01, 9).unwrap();
        let p = simulate_path(&spec, &[1.0], 20.0, 0.01, 9).unwrap();
        for k in 0..=40 {
            let t = 0.5 * k as f64;
            let idx = p.times.iter().rposition(|s| (s - t).abs() < 1e-9 && true).unwrap();
            assert!((p.state(idx)[0] - sk.state(k)[0]).abs() < 1e-9, "k={k}");
        }
        let again = simulate_skeleton(&spec, &[1.0], 0.5, 40, 0.01, 9).unwrap();
        assert_eq!(sk, again);
        let empty = simulate_skeleton(&spec, &[1.0], 0.5, 0, 0.01, 9).unwrap();
        assert_eq!(empty.states, vec![1.0]);
    }

    #[test]
    fn outside_state_space_rejected() {
        assert!(matches!(simulate_path(&jump_cir(), &[-1.0], 1.0, 0.1, 0), Err(AjdError::OutsideStateSpace(_))));
        assert!(matches!(
            simulate_path(&ModelSpec::cir(1.0, -1.0, 3.0), &[1.0], 1.0, 0.1, 0),
            Err(AjdError::NotAdmissible(_))
        ));
    }

    #[test]
    fn endpoints_use_common_random_numbers() {
        let spec = jump_cir();
        let a = simulate_endpoints(&spec, &[1.0], 1.0, 0.01, 8, 4).unwrap();
        let b = simulate_endpoints(&spec, &[1.0], 1.0, 0.01, 8, 4).unwrap();
        assert_eq!(a, b);
        let p3 = simulate_path_stream(&spec, &[1.0], 1.0, 0.01, 4, 3).unwrap();
        assert_eq!(p3.state(p3.len() - 1)[0], a[3]);
    }

    #[test]
    fn passage_and_escape() {
        let spec = ModelSpec::cir(1.0, -1.0, 1.0).with_jumps(
            0.0,
            DVector::from_element(1, 4.0),
            JumpDist::exponential(2.0).unwrap(),
        );
        let hits = first_passage_times(&spec, &[1.0], 50.0, 30.0, 1e-2, 20, 1).unwrap();
        let f = escape_fractions(&hits, &[0.0, 30.0]);
        assert_eq!(f[0], 0.0);
        assert!(f[1] > 0.5);
    }

    #[test]
    fn replay_reproduces_segments() {
        struct Sum(f64, usize);
        impl Observer for Sum {
            fn segment(&mut self, t0: f64, _: &[f64], t1: f64, _: &[f64]) {
                self.0 += t1 - t0;
            }
            fn jump(&mut self, _: f64, pre: &[f64], post: &[f64]) {
                assert!(post[0] >= pre[0]);
                self.1 += 1;
            }
        }
        let p = simulate_path(&jump_cir(), &[1.0], 10.0, 1e-2, 2).unwrap();
        let mut s = Sum(0.0, 0);
        p.replay(&mut s);
        assert!((s.0 - 10.0).abs() < 1e-9);
        assert_eq!(s.1, p.jump_epochs().len());
    }

    #[test]
    fn product_jump_samples_respect_support() {
        let dist = JumpDist::product(vec![
            JumpComponent::Exponential { rate: 1.0 },
            JumpComponent::Gaussian { mean: 0.0, variance: 1.0 },
        ])
        .unwrap();
        let mut rng = path_rng(0, 0);
        for _ in 0..1000 {
            assert!(sample_jump(&dist, &mut rng)[0] >= 0.0);
        }
        let z = JumpDist::degenerate(vec![0.3, -1.0]).unwrap();
        assert_eq!(sample_jump(&z, &mut rng), vec![0.3, -1.0]);
    }
}
