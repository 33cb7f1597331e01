//! Branching Brownian motion with binary branching, simulated exactly.
//!
//! Each particle moves as a standard Brownian motion for an exponential
//! lifetime and then splits into two at its current position. Lineages are
//! followed depth-first; positions at a checkpoint are drawn from the exact
//! Gaussian increment and the remaining lifetime is redrawn (memorylessness).

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::measure::{Atom, PointConfiguration, Window};
use crate::model::Model;
use crate::rng::{derive_seed, rng_from_seed, std_exp, stream, ReplicaRng};
use crate::sampler::RandomMeasureSample;

pub const DEFAULT_BRANCH_RATE: f64 = 0.5;
pub const DEFAULT_MAX_PARTICLES: usize = 10_000_000;
/// Redraws allowed per replica when `W_t ≤ 0`.
pub const MAX_RETRIES: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmParams {
    pub horizon: f64,
    pub branch_rate: f64,
    pub initial_positions: Vec<f64>,
    pub seed: u64,
    pub max_particles: usize,
}

impl BbmParams {
    /// One particle at 0, branching rate 1/2.
    pub fn new(horizon: f64, seed: u64) -> Self {
        BbmParams {
            horizon,
            branch_rate: DEFAULT_BRANCH_RATE,
            initial_positions: vec![0.0],
            seed,
            max_particles: DEFAULT_MAX_PARTICLES,
        }
    }

    pub fn with_initial(mut self, positions: Vec<f64>) -> Self {
        self.initial_positions = positions;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        BbmParams {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive and finite"));
        }
        if !(self.branch_rate > 0.0 && self.branch_rate.is_finite()) {
            return Err(invalid("branch_rate", "must be positive and finite"));
        }
        if self.initial_positions.is_empty() || self.initial_positions.iter().any(|x| !x.is_finite()) {
            return Err(invalid("initial_positions", "need at least one finite position"));
        }
        let expected = (self.branch_rate * self.horizon).exp() * self.initial_positions.len() as f64;
        if expected > self.max_particles as f64 / 10.0 {
            return Err(Error::ParticleOverflow {
                cap: self.max_particles,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BbmSnapshot {
    pub particles: PointConfiguration,
    pub w_t: f64,
    pub t: f64,
}

impl BbmSnapshot {
    pub fn count(&self) -> usize {
        self.particles.len()
    }

    /// `Σ e^{X_i - t}`.
    pub fn additive(&self) -> f64 {
        additive_martingale(self.particles.positions(), self.t)
    }

    /// Union of two snapshots taken at the same time.
    pub fn merge(&self, other: &BbmSnapshot) -> Result<BbmSnapshot> {
        if self.t != other.t {
            return Err(invalid("t", "snapshots must share the same time"));
        }
        Ok(BbmSnapshot {
            particles: self.particles.superpose(&other.particles),
            w_t: self.w_t + other.w_t,
            t: self.t,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub w_t: f64,
    pub n_t: u64,
    pub additive: f64,
}

/// `W_t = Σ (t - X_i) e^{X_i - t}`.
pub fn derivative_martingale<I: IntoIterator<Item = f64>>(positions: I, t: f64) -> f64 {
    positions.into_iter().map(|x| (t - x) * (x - t).exp()).sum()
}

pub fn additive_martingale<I: IntoIterator<Item = f64>>(positions: I, t: f64) -> f64 {
    positions.into_iter().map(|x| (x - t).exp()).sum()
}

/// `-t + (3/2) log t - log W`.
pub fn recentering_shift(t: f64, w: f64) -> f64 {
    -t + 1.5 * t.ln() - w.ln()
}

/// Runs one path and calls `visit(k, x)` for every particle alive at
/// checkpoint `k` (the last checkpoint is the horizon).
fn run<F: FnMut(usize, f64)>(params: &BbmParams, checkpoints: &[f64], mut visit: F) -> Result<()> {
    let mut rng: ReplicaRng = rng_from_seed(params.seed);
    let rate = params.branch_rate;
    let mut alive_at_end = 0usize;
    // (position, time, index of the next checkpoint)
    let mut stack: Vec<(f64, f64, usize)> = params
        .initial_positions
        .iter()
        .rev()
        .map(|&x| (x, 0.0, 0))
        .collect();
    while let Some((mut x, mut s, mut k)) = stack.pop() {
        loop {
            let life = std_exp(&mut rng) / rate;
            let c = checkpoints[k];
            if s + life < c {
                let z: f64 = rng.sample(StandardNormal);
                x += life.sqrt() * z;
                s += life;
                stack.push((x, s, k));
                continue;
            }
            let z: f64 = rng.sample(StandardNormal);
            x += (c - s).sqrt() * z;
            s = c;
            visit(k, x);
            k += 1;
            if k == checkpoints.len() {
                alive_at_end += 1;
                if alive_at_end > params.max_particles {
                    return Err(Error::ParticleOverflow {
                        cap: params.max_particles,
                    });
                }
                break;
            }
        }
    }
    Ok(())
}

fn checked_checkpoints(params: &BbmParams, checkpoints: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    let mut cps = checkpoints.to_vec();
    if cps.iter().any(|&c| !(c > 0.0) || c > params.horizon)
        || cps.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(invalid(
            "checkpoints",
            "must be strictly ascending within (0, horizon]",
        ));
    }
    if cps.last() != Some(&params.horizon) {
        cps.push(params.horizon);
    }
    Ok(cps)
}

pub fn simulate(params: &BbmParams) -> Result<BbmSnapshot> {
    Ok(simulate_traced(params, &[])?.0)
}

/// One path: the snapshot at the horizon together with the trace at each
/// checkpoint (the horizon is appended if missing).
pub fn simulate_traced(params: &BbmParams, checkpoints: &[f64]) -> Result<(BbmSnapshot, Vec<TracePoint>)> {
    let cps = checked_checkpoints(params, checkpoints)?;
    let last = cps.len() - 1;
    let mut trace: Vec<TracePoint> = cps
        .iter()
        .map(|&t| TracePoint {
            t,
            w_t: 0.0,
            n_t: 0,
            additive: 0.0,
        })
        .collect();
    let mut positions = Vec::new();
    run(params, &cps, |k, x| {
        let p = &mut trace[k];
        let e = (x - p.t).exp();
        p.w_t += (p.t - x) * e;
        p.additive += e;
        p.n_t += 1;
        if k == last {
            positions.push(x);
        }
    })?;
    let t = params.horizon;
    let w_t = derivative_martingale(positions.iter().copied(), t);
    let snapshot = BbmSnapshot {
        particles: PointConfiguration::from_positions(positions)?,
        w_t,
        t,
    };
    Ok((snapshot, trace))
}

/// `(t, W_t, N_t, Σ e^{X-t})` at each checkpoint of one path; the horizon is
/// appended if missing.
pub fn martingale_trace(params: &BbmParams, checkpoints: &[f64]) -> Result<Vec<TracePoint>> {
    Ok(simulate_traced(params, checkpoints)?.1)
}

/// Particles translated by `-t + (3/2) log t - log W_t`.
pub fn extremal_process(snapshot: &BbmSnapshot) -> Result<PointConfiguration> {
    if !(snapshot.w_t > 0.0) {
        return Err(Error::NonpositiveMartingale(snapshot.w_t));
    }
    Ok(snapshot
        .particles
        .translate(recentering_shift(snapshot.t, snapshot.w_t)))
}

/// Independent paths with seeds `derive_seed(params.seed, PRIMARY, i)`.
pub fn simulate_many(params: &BbmParams, replicas: u64, exec: Execution) -> Result<Vec<BbmSnapshot>> {
    params.validate()?;
    exec.try_map(replicas, |i| {
        simulate(&params.with_seed(derive_seed(params.seed, stream::PRIMARY, i)))
    })
}

/// Slope and intercept of `log(-log F̂(z))` against `z` at the empirical
/// deciles of `maxima`. For a Gumbel-family law `exp(-C e^{-z})` the slope is
/// `-1`.
pub fn gumbel_shape_fit(maxima: &[f64]) -> (f64, f64) {
    let mut xs = maxima.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let (mut zs, mut ys) = (Vec::new(), Vec::new());
    for q in 1..10 {
        let p = q as f64 / 10.0;
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        zs.push(xs[idx]);
        ys.push((-p.ln()).ln());
    }
    let mz = zs.iter().sum::<f64>() / zs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = zs.iter().zip(&ys).map(|(z, y)| (z - mz) * (y - my)).sum();
    let sxx: f64 = zs.iter().map(|z| (z - mz) * (z - mz)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mz)
}

/// Recentred BBM extremal process as a [`Model`]. Draws with `W_t ≤ 0` are
/// discarded, counted, and redrawn from a fresh sub-seed.
#[derive(Debug)]
pub struct RecenteredBbm {
    pub params: BbmParams,
    /// Time at which the derivative martingale used for centring is read;
    /// `None` means the horizon.
    pub centering_time: Option<f64>,
    attempts: AtomicU64,
    discarded: AtomicU64,
}

impl RecenteredBbm {
    pub fn new(params: BbmParams) -> Result<Self> {
        params.validate()?;
        Ok(RecenteredBbm {
            params,
            centering_time: None,
            attempts: AtomicU64::new(0),
            discarded: AtomicU64::new(0),
        })
    }

    pub fn centred_at(mut self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= self.params.horizon) {
            return Err(invalid("centering_time", "must lie in (0, horizon]"));
        }
        self.centering_time = Some(s);
        Ok(self)
    }

    pub fn discarded(&self) -> u64 {
        self.discarded.load(Ordering::Relaxed)
    }

    pub fn discard_rate(&self) -> f64 {
        let a = self.attempts.load(Ordering::Relaxed);
        if a == 0 {
            0.0
        } else {
            self.discarded() as f64 / a as f64
        }
    }
}

impl Model for RecenteredBbm {
    fn label(&self) -> String {
        let w = self
            .centering_time
            .map_or(String::new(), |s| format!("; W at {s}"));
        format!(
            "recentred bbm[t={}; {} initial{w}]",
            self.params.horizon,
            self.params.initial_positions.len()
        )
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        for k in 0..MAX_RETRIES {
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let params = self.params.with_seed(derive_seed(seed, stream::BBM_RETRY, k));
            let snap = match self.centering_time {
                None => simulate(&params)?,
                Some(s) => {
                    let (snap, trace) = simulate_traced(&params, &[s])?;
                    BbmSnapshot {
                        w_t: trace[0].w_t,
                        ..snap
                    }
                }
            };
            match extremal_process(&snap) {
                Ok(z) => return restricted(&z, window),
                Err(Error::NonpositiveMartingale(_)) => {
                    self.discarded.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::NonpositiveMartingale(0.0))
    }
}

fn restricted(z: &PointConfiguration, window: Window) -> Result<RandomMeasureSample> {
    let kept: Vec<Atom> = z
        .atoms()
        .iter()
        .copied()
        .filter(|a| window.contains(a.position))
        .collect();
    Ok(RandomMeasureSample::atomic(PointConfiguration::new(kept)?))
}

/// BBM particles centred by the deterministic `-t + (3/2) log t` only. With
/// two initial particles this is the union of two independent BBMs.
#[derive(Debug, Clone)]
pub struct CenteredBbm {
    pub params: BbmParams,
}

impl Model for CenteredBbm {
    fn label(&self) -> String {
        format!(
            "centred bbm[t={}; {} initial]",
            self.params.horizon,
            self.params.initial_positions.len()
        )
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        let t = self.params.horizon;
        let snap = simulate(&self.params.with_seed(seed))?;
        restricted(&snap.particles.translate(-t + 1.5 * t.ln()), window)
    }
}

/// `T_{log W} Z`: a recentred extremal process shifted by the derivative
/// martingale `W` of an independent BBM started from `weight_params`.
/// Draws with `W ≤ 0` are redrawn.
#[derive(Debug)]
pub struct MartingaleShifted {
    pub inner: RecenteredBbm,
    pub weight_params: BbmParams,
}

impl Model for MartingaleShifted {
    fn label(&self) -> String {
        format!(
            "T[log W of {} initial]({})",
            self.weight_params.initial_positions.len(),
            self.inner.label()
        )
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        for k in 0..MAX_RETRIES {
            let w = simulate(&self.weight_params.with_seed(derive_seed(seed, stream::SIDE_A, k)))?.w_t;
            if w > 0.0 {
                let by = w.ln();
                let z = self
                    .inner
                    .sample(window.translate(-by), derive_seed(seed, stream::SIDE_B, 0))?;
                return Ok(z.translate(by));
            }
        }
        Err(Error::NonpositiveMartingale(0.0))
    }
}
