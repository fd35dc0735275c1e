//! First-return time tail of two-dimensional walks.
//!
//! Trials run the embedded jump chain from the origin until it comes back to
//! the origin, then attach a `Gamma(n, λ)` time to the `n`-th jump. A trial
//! that has not returned within the number of jumps that could fit before
//! `t_max` (with overwhelming probability) is censored at `t_max`.

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{RwisModel, StepSampler};
use crate::rng::Streams;
use crate::survival::{KaplanMeier, Observation};

/// Fewer survivors than this at the largest grid time flags the estimate.
pub const MIN_SURVIVORS: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct ReturnTailRow {
    pub t: f64,
    pub survivors: usize,
    pub tail_est: f64,
    pub tail_est_times_log: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnTailReport {
    /// `2π√|σ|`.
    pub constant: f64,
    pub trials: usize,
    pub censored: usize,
    pub t_max: f64,
    /// Set when fewer than [`MIN_SURVIVORS`] trials survive the last grid time.
    pub low_count: bool,
    pub rows: Vec<ReturnTailRow>,
}

/// Jump budget for censoring at `λ t_max`: the `Gamma(n, 1)` lower tail at
/// this `n` is below `e^{−40}`.
pub(crate) fn jump_budget(lambda_t_max: f64) -> u64 {
    (lambda_t_max + 12.0 * lambda_t_max.sqrt() + 40.0).ceil() as u64
}

/// Draws one first-return time, or `None` if none happens by `t_max`.
pub fn sample_first_return<R: RngCore + ?Sized>(
    sampler: &StepSampler,
    rate: f64,
    start_state: usize,
    t_max: f64,
    rng: &mut R,
) -> Option<f64> {
    let budget = jump_budget(rate * t_max);
    let mut pos = [0i64; 2];
    let mut state = start_state;
    for n in 1..=budget {
        let (x, v) = sampler.step(state, rng);
        pos[0] += x[0];
        pos[1] += x[1];
        state = v;
        if pos == [0, 0] {
            let time = Gamma::new(n as f64, 1.0 / rate).expect("positive shape").sample(rng);
            return (time <= t_max).then_some(time);
        }
    }
    None
}

fn draw_state<R: RngCore + ?Sized>(rho: &DVector<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in rho.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    rho.len() - 1
}

/// Kaplan–Meier estimate of `P(τ > t)` on `t_grid` from `trials` walks with
/// initial state drawn from `ρ`.
pub fn first_return_tail(
    model: &RwisModel,
    t_grid: &[f64],
    trials: usize,
    t_max: f64,
    streams: &Streams,
) -> Result<ReturnTailReport> {
    if model.dim() != 2 {
        return Err(Error::Precondition("first-return tail needs d = 2".into()));
    }
    if t_grid.iter().any(|t| *t > t_max || *t <= 0.0) {
        return Err(Error::Precondition("grid times must lie in (0, t_max]".into()));
    }
    model.require_valid()?;
    let moments = model.moments()?;
    let constant = 2.0 * std::f64::consts::PI * moments.sigma.determinant().sqrt();
    let sampler = StepSampler::new(model);
    let rate = model.rate();
    let rho = moments.rho.clone();
    let obs: Vec<Observation> = streams.run(trials, |_, rng| {
        let u0 = draw_state(&rho, rng);
        match sample_first_return(&sampler, rate, u0, t_max, rng) {
            Some(t) => Observation::event(t),
            None => Observation::censored(t_max),
        }
    });
    let censored = obs.iter().filter(|o| !o.event).count();
    let km = KaplanMeier::fit(&obs);
    let rows: Vec<ReturnTailRow> = t_grid
        .iter()
        .map(|&t| {
            let s = km.survival(t);
            let (lo, hi) = km.confidence_interval(t, 0.95);
            ReturnTailRow {
                t,
                survivors: km.at_risk_after(t),
                tail_est: s,
                tail_est_times_log: s * (rate * t).ln(),
                ci_lo: lo,
                ci_hi: hi,
            }
        })
        .collect();
    let low_count = rows.last().is_some_and(|r| r.survivors < MIN_SURVIVORS);
    Ok(ReturnTailReport {
        constant,
        trials,
        censored,
        t_max,
        low_count,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{persistent1d, simple2d};

    #[test]
    fn simple2d_constant_is_pi() {
        let r = first_return_tail(&simple2d(), &[10.0], 200, 100.0, &Streams::new(1, "rt")).unwrap();
        assert!((r.constant - std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_models_are_refused() {
        let r = first_return_tail(&persistent1d(0.7).unwrap(), &[1.0], 10, 10.0, &Streams::new(1, "rt"));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn tail_is_monotone() {
        let grid = [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0];
        let r = first_return_tail(&simple2d(), &grid, 2000, 1000.0, &Streams::new(4, "rt")).unwrap();
        assert!(r.rows.windows(2).all(|w| w[1].tail_est <= w[0].tail_est));
        assert!(r.rows.iter().all(|row| row.ci_lo <= row.tail_est && row.tail_est <= row.ci_hi));
    }
}
