//! Event-driven simulation of two interacting walkers.
//!
//! Each particle is a copy of the same walk; particle `i` jumps at rate
//! `λ_i`, so the pair has events at rate `λ̃`. While the particles share a
//! site, the next event is a collision instead of a jump.
//!
//! Between collisions the rate is constant, so a whole segment up to the
//! horizon is drawn at once: `K ~ Poisson(λ̃ h)` events whose embedded moves
//! are run in order. If the particles meet after the `k`-th event with
//! `k < K`, the `(k+1)`-th event is the collision and it happens at
//! `t₀ + h·Beta(k+1, K−k)`, the law of that order statistic. The rest of the
//! segment is discarded and a new one starts from the collision time.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Poisson};
use serde::Serialize;

use crate::collision::{CollisionKernel, CollisionSampler, EnergySplit};
use crate::error::{Error, Result};
use crate::model::{AliasTable, RwisModel, Site, StepSampler};
use crate::rng::{Streams, TrialRng};
use crate::spectral::jump_budget;
use crate::survival::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuetConfig {
    /// A run that would need more events fails with a checkpoint.
    pub max_events: u64,
    /// Capacity of the reservoir sample of collision times.
    pub reservoir: usize,
}

impl Default for DuetConfig {
    fn default() -> Self {
        Self {
            max_events: 100_000_000,
            reservoir: 1_000_000,
        }
    }
}

/// Initial condition; states left as `None` are drawn from `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuetStart {
    pub positions: [Site; 2],
    pub states: Option<[usize; 2]>,
    pub lambda0: f64,
}

impl DuetStart {
    pub fn together(lambda0: f64) -> Self {
        Self {
            positions: [[0, 0]; 2],
            states: None,
            lambda0,
        }
    }
}

/// Complete Markov state of the pair at an event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuetState {
    pub positions: [Site; 2],
    pub states: [usize; 2],
    pub lambda: f64,
    pub clock: f64,
    pub events: u64,
    pub collisions: u64,
}

impl DuetState {
    pub fn together(&self) -> bool {
        self.positions[0] == self.positions[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LastCollision {
    pub time: f64,
    pub site: Site,
    /// Energy split leaving the collision.
    pub lambda_out: f64,
}

#[derive(Debug, Clone)]
pub struct DuetSummary {
    pub state: DuetState,
    pub last_collision: Option<LastCollision>,
    /// Collision times, complete when `log_complete`, otherwise a uniform
    /// reservoir sample; sorted.
    pub collision_times: Vec<f64>,
    pub log_complete: bool,
}

impl DuetSummary {
    /// Gaps between consecutive collisions plus the final gap, censored at
    /// the horizon. The wait before the first collision is excluded because
    /// its law depends on the start.
    pub fn collision_intervals(&self) -> Result<Vec<Observation>> {
        if !self.log_complete {
            return Err(Error::Precondition("collision log was subsampled".into()));
        }
        let t = &self.collision_times;
        let mut out: Vec<Observation> = t.windows(2).map(|w| Observation::event(w[1] - w[0])).collect();
        if let Some(last) = t.last() {
            out.push(Observation::censored(self.state.clock - last));
        }
        Ok(out)
    }
}

struct Reservoir {
    cap: usize,
    seen: u64,
    items: Vec<f64>,
}

impl Reservoir {
    fn push<R: RngCore + ?Sized>(&mut self, x: f64, rng: &mut R) {
        self.seen += 1;
        if self.items.len() < self.cap {
            self.items.push(x);
        } else if self.cap > 0 {
            let j = rng.next_u64() % self.seen;
            if (j as usize) < self.cap {
                self.items[j as usize] = x;
            }
        }
    }
}

/// Probability `p` as a threshold on a uniform `u64`.
fn threshold(p: f64) -> u64 {
    (p * 18_446_744_073_709_551_616.0) as u64
}

/// Walk and collision samplers prepared for repeated runs.
#[derive(Debug, Clone)]
pub struct DuetEngine {
    walk: StepSampler,
    collision: CollisionSampler,
    rho: AliasTable,
    states: usize,
    config: DuetConfig,
}

impl DuetEngine {
    pub fn new(model: &RwisModel, kernel: &CollisionKernel, config: DuetConfig) -> Result<Self> {
        model.require_valid()?;
        let rho: Vec<f64> = model.stationary()?.iter().copied().collect();
        Ok(Self {
            walk: StepSampler::new(model),
            collision: CollisionSampler::new(kernel, model.dim(), &rho),
            rho: AliasTable::new(&rho),
            states: model.states(),
            config,
        })
    }

    pub fn config(&self) -> DuetConfig {
        self.config
    }

    pub fn initial_state<R: RngCore + ?Sized>(&self, start: &DuetStart, rng: &mut R) -> Result<DuetState> {
        EnergySplit::new(start.lambda0)?;
        let states = match start.states {
            Some(s) if s.iter().all(|u| *u < self.states) => s,
            Some(s) => return Err(Error::Precondition(format!("initial states {s:?} out of range"))),
            None => [self.rho.sample(rng), self.rho.sample(rng)],
        };
        Ok(DuetState {
            positions: start.positions,
            states,
            lambda: start.lambda0,
            clock: 0.0,
            events: 0,
            collisions: 0,
        })
    }

    #[inline]
    fn free_step<R: RngCore + ?Sized>(&self, st: &mut DuetState, first: u64, rng: &mut R) {
        let i = (rng.next_u64() >= first) as usize;
        let (x, v) = self.walk.step(st.states[i], rng);
        st.positions[i][0] += x[0];
        st.positions[i][1] += x[1];
        st.states[i] = v;
    }

    fn collide<R: RngCore + ?Sized>(&self, st: &mut DuetState, rng: &mut R) -> Result<LastCollision> {
        let site = st.positions[0];
        st.events += 1;
        st.collisions += 1;
        match self.collision.sample(st.lambda, rng) {
            Some(o) => {
                st.lambda = o.lambda;
                st.states = o.states;
                for (p, z) in st.positions.iter_mut().zip(o.displacements) {
                    p[0] += z[0];
                    p[1] += z[1];
                }
            }
            None => {
                st.lambda = self.collision.sample_energy(st.lambda, rng);
                let split = EnergySplit::new(st.lambda)?;
                self.free_step(st, threshold(split.lambda() / split.total_rate()), rng);
            }
        }
        Ok(LastCollision {
            time: st.clock,
            site,
            lambda_out: st.lambda,
        })
    }

    fn budget_error(&self, st: &DuetState) -> Error {
        Error::EventBudget {
            max_events: self.config.max_events,
            checkpoint: Box::new(st.clone()),
        }
    }

    /// Runs from `state` until `horizon` (absolute time).
    pub fn run<R: RngCore + ?Sized>(&self, state: DuetState, horizon: f64, rng: &mut R) -> Result<DuetSummary> {
        let mut st = state;
        let mut log = Reservoir {
            cap: self.config.reservoir,
            seen: 0,
            items: Vec::new(),
        };
        let mut last = None;
        while st.clock < horizon {
            let split = EnergySplit::new(st.lambda)?;
            let rate = split.total_rate();
            let first = threshold(split.lambda() / rate);
            if st.together() {
                let w: f64 = Exp1.sample(rng);
                let w = w / rate;
                if st.clock + w > horizon {
                    st.clock = horizon;
                    break;
                }
                if st.events >= self.config.max_events {
                    return Err(self.budget_error(&st));
                }
                st.clock += w;
                let c = self.collide(&mut st, rng)?;
                log.push(c.time, rng);
                last = Some(c);
                continue;
            }
            let h = horizon - st.clock;
            let k = Poisson::new(rate * h).map_or(0.0, |p| p.sample(rng)) as u64;
            let t0 = st.clock;
            let mut met = None;
            for i in 1..=k {
                if st.events >= self.config.max_events {
                    st.clock = t0 + h * Beta::new(i as f64, (k - i + 1) as f64).expect("positive shapes").sample(rng);
                    return Err(self.budget_error(&st));
                }
                self.free_step(&mut st, first, rng);
                st.events += 1;
                if st.together() {
                    met = Some(i);
                    break;
                }
            }
            match met {
                Some(i) if i < k => {
                    if st.events >= self.config.max_events {
                        st.clock = t0 + h * Beta::new(i as f64, (k - i + 1) as f64).expect("positive shapes").sample(rng);
                        return Err(self.budget_error(&st));
                    }
                    let b: f64 = Beta::new((i + 1) as f64, (k - i) as f64).expect("positive shapes").sample(rng);
                    st.clock = t0 + h * b;
                    let c = self.collide(&mut st, rng)?;
                    log.push(c.time, rng);
                    last = Some(c);
                }
                _ => st.clock = horizon,
            }
        }
        let log_complete = log.seen as usize <= log.cap;
        let mut collision_times = log.items;
        collision_times.sort_by(f64::total_cmp);
        Ok(DuetSummary {
            state: st,
            last_collision: last,
            collision_times,
            log_complete,
        })
    }
}

/// One run of the pair from `start` up to time `horizon`.
pub fn simulate_duet(
    model: &RwisModel,
    kernel: &CollisionKernel,
    start: &DuetStart,
    horizon: f64,
    config: DuetConfig,
    rng: &mut TrialRng,
) -> Result<DuetSummary> {
    let engine = DuetEngine::new(model, kernel, config)?;
    let state = engine.initial_state(start, rng)?;
    engine.run(state, horizon, rng)
}

/// Position and state of a single walk with jump rate `rate` at time `t`.
pub fn single_walk<R: RngCore + ?Sized>(
    sampler: &StepSampler,
    rate: f64,
    t: f64,
    state: usize,
    rng: &mut R,
) -> (Site, usize) {
    let n = Poisson::new(rate * t).map_or(0.0, |p| p.sample(rng)) as u64;
    sampler.walk(state, n, rng)
}

/// Walk of `η¹ − η²` with internal state `(u¹, u²)` encoded as `u¹ m + u²`,
/// for a fixed energy split.
pub fn difference_walk_model(model: &RwisModel, split: EnergySplit) -> Result<RwisModel> {
    let m = model.states();
    let rate = split.total_rate();
    let (p1, p2) = (split.lambda() / rate, split.lambda2() / rate);
    let by_site: HashMap<Site, &DMatrix<f64>> = model.jumps().iter().map(|j| (j.x, &j.matrix)).collect();
    let mut sites: Vec<Site> = by_site.keys().flat_map(|x| [*x, [-x[0], -x[1]]]).collect();
    sites.sort_unstable();
    sites.dedup();
    let zero = DMatrix::<f64>::zeros(m, m);
    let jumps = sites
        .into_iter()
        .map(|x| {
            let own = by_site.get(&x).copied().unwrap_or(&zero);
            let other = by_site.get(&[-x[0], -x[1]]).copied().unwrap_or(&zero);
            let mat = DMatrix::from_fn(m * m, m * m, |r, c| {
                let (u1, u2) = (r / m, r % m);
                let (v1, v2) = (c / m, c % m);
                let mut p = 0.0;
                if u2 == v2 {
                    p += p1 * own[(u1, v1)];
                }
                if u1 == v1 {
                    p += p2 * other[(u2, v2)];
                }
                p
            });
            (x, mat)
        })
        .collect();
    RwisModel::new(model.dim(), m * m, rate, jumps)
}

/// Times from a collision to the next collision at a fixed energy split,
/// computed through the difference walk; censored at `t_max`.
///
/// The post-collision states and displacements come from `kernel`; its
/// energy draw is ignored.
pub fn difference_first_return(
    model: &RwisModel,
    split: EnergySplit,
    kernel: &CollisionKernel,
    t_max: f64,
    trials: usize,
    streams: &Streams,
) -> Result<Vec<Observation>> {
    model.require_valid()?;
    let rho: Vec<f64> = model.stationary()?.iter().copied().collect();
    let collision = CollisionSampler::new(kernel, model.dim(), &rho);
    let diff = difference_walk_model(model, split)?;
    let walk = StepSampler::new(&diff);
    let m = model.states();
    let rate = split.total_rate();
    let budget = jump_budget(rate * t_max);
    streams.try_run(trials, |_, rng| {
        let o = collision
            .sample(split.lambda(), rng)
            .ok_or_else(|| Error::Precondition("free-flight kernels have no post-collision law".into()))?;
        let mut d = [
            o.displacements[0][0] - o.displacements[1][0],
            o.displacements[0][1] - o.displacements[1][1],
        ];
        let mut state = o.states[0] * m + o.states[1];
        let mut n = 0u64;
        while d != [0, 0] {
            if n >= budget {
                return Ok(Observation::censored(t_max));
            }
            let (x, v) = walk.step(state, rng);
            d[0] += x[0];
            d[1] += x[1];
            state = v;
            n += 1;
        }
        // n moves to meet, then one more event for the collision itself.
        let t = Gamma::new((n + 1) as f64, 1.0 / rate).expect("positive shape").sample(rng);
        Ok(if t <= t_max {
            Observation::event(t)
        } else {
            Observation::censored(t_max)
        })
    })
}

/// Per-trial observables scaled by the physical horizon `t`.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRow {
    pub trial: usize,
    pub collisions: u64,
    /// `τ_t / t`, absent without collisions.
    pub tau_over_t: Option<f64>,
    /// `|η_c| / √t` for the last collision site.
    pub site_over_sqrt_t: Option<f64>,
    /// `λ` leaving the last collision, or `λ₀` without collisions.
    pub lambda_out: f64,
    pub x1: [f64; 2],
    pub state1: usize,
    pub x2: [f64; 2],
    pub state2: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollisionEnsemble {
    pub events_horizon: f64,
    pub horizon: f64,
    pub rows: Vec<EnsembleRow>,
}

impl CollisionEnsemble {
    pub fn zero_collision_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.collisions == 0).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn lambda_out(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.lambda_out).collect()
    }
}

/// Runs `trials` independent pairs up to `events_horizon / λ̃(λ₀)`, the
/// time at which the initial split would have produced that many events.
pub fn last_collision_ensemble(
    model: &RwisModel,
    kernel: &CollisionKernel,
    start: &DuetStart,
    events_horizon: f64,
    trials: usize,
    config: DuetConfig,
    streams: &Streams,
) -> Result<CollisionEnsemble> {
    let engine = DuetEngine::new(model, kernel, DuetConfig { reservoir: 0, ..config })?;
    let t = events_horizon / EnergySplit::new(start.lambda0)?.total_rate();
    let root = t.sqrt();
    let scale = |p: Site| [p[0] as f64 / root, p[1] as f64 / root];
    let rows = streams.try_run(trials, |trial, rng| {
        let state = engine.initial_state(start, rng)?;
        let s = engine.run(state, t, rng)?;
        let c = s.last_collision;
        Ok::<_, Error>(EnsembleRow {
            trial,
            collisions: s.state.collisions,
            tau_over_t: c.map(|c| c.time / t),
            site_over_sqrt_t: c.map(|c| ((c.site[0] * c.site[0] + c.site[1] * c.site[1]) as f64).sqrt() / root),
            lambda_out: c.map_or(start.lambda0, |c| c.lambda_out),
            x1: scale(s.state.positions[0]),
            state1: s.state.states[0],
            x2: scale(s.state.positions[1]),
            state2: s.state.states[1],
        })
    })?;
    Ok(CollisionEnsemble {
        events_horizon,
        horizon: t,
        rows,
    })
}
