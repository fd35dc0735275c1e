//! Scaled-type Markov renewal processes.
//!
//! Waits are `X_λ = X₁/λ`, where `X₁` has a fixed law `F` and the scale
//! parameters `Λ₀ = λ₀, Λ₁, …` form a Markov chain on `[a, b]`. Renewals
//! happen at `R₀ = 0` and `R_{k+1} = R_k + X_{Λ_k}`. At time `t`,
//! `N_t = #{k : R_k ≤ t}` (the renewal at zero included), the age is
//! `t − R_{N_t−1}`, the residual is `R_{N_t} − t` and the current type is
//! `Λ_{N_t−1}`, the parameter of the wait covering `t`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::collision::{EnergyLaw, StationaryLaw};
use crate::error::{Error, Result};
use crate::rng::{open01, Streams};
use crate::stats::{ks_one_sample, quantile_ci_sorted, quantile_sorted, sorted, NeumaierSum};

/// Hard cap on renewals per path.
pub const MAX_RENEWALS: u64 = 1_000_000_000;

/// Law of `X₁`, sampled by inversion from a single uniform so that
/// threshold queries need no sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TailFamily {
    /// `1 − F(t) = 1/log(e + t)`.
    SlowLog,
    /// `1 − F(t) = e^{−t}`.
    Exponential,
    /// Lomax: `1 − F(t) = (1 + t)^{−β}`.
    Pareto { beta: f64 },
}

impl TailFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Pareto { beta } if !(*beta > 0.0 && beta.is_finite()) => {
                Err(Error::Precondition(format!("Pareto index β = {beta} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// `1 − F(t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self {
            Self::SlowLog => 1.0 / (std::f64::consts::E + t).ln(),
            Self::Exponential => (-t).exp(),
            Self::Pareto { beta } => (-beta * t.ln_1p()).exp(),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }

    /// `X₁` from `u ∈ (0, 1)`; decreasing in `u`. May be `+∞` for the
    /// slowly varying tail.
    pub fn from_uniform(&self, u: f64) -> f64 {
        match self {
            Self::SlowLog => (1.0 / u).exp() - std::f64::consts::E,
            Self::Exponential => -u.ln(),
            Self::Pareto { beta } => (-u.ln() / beta).exp_m1(),
        }
    }

    /// `ln X₁` from `u`, finite even when `X₁` overflows.
    pub fn log_from_uniform(&self, u: f64) -> f64 {
        match self {
            // ln(e^{1/u} − e) = 1/u + ln(1 − e^{1 − 1/u})
            Self::SlowLog => 1.0 / u + (-(1.0 - 1.0 / u).exp()).ln_1p(),
            _ => self.from_uniform(u).ln(),
        }
    }

    /// Whether the `X₁` drawn from `u` exceeds `r`, decided on the
    /// uniform scale.
    pub fn exceeds(&self, u: f64, r: f64) -> bool {
        u < self.survival(r)
    }

    /// Light tails have finite mean; the others are routed separately in
    /// order-statistic diagnostics.
    pub fn name(&self) -> String {
        match self {
            Self::SlowLog => "slow_log".into(),
            Self::Exponential => "exponential".into(),
            Self::Pareto { beta } => format!("pareto({beta})"),
        }
    }
}

/// Parameter chain: an energy kernel on `[0, 1]` mapped affinely onto
/// `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct ParamChain {
    pub law: EnergyLaw,
    pub lo: f64,
    pub hi: f64,
}

impl ParamChain {
    pub fn new(law: EnergyLaw, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Precondition(format!("parameter interval [{lo}, {hi}] must satisfy 0 < a ≤ b")));
        }
        Ok(Self { law, lo, hi })
    }

    /// Chain that never moves.
    pub fn constant(lambda: f64) -> Result<Self> {
        Self::new(EnergyLaw::Identity, lambda, lambda)
    }

    pub fn step<R: RngCore + ?Sized>(&self, lambda: f64, rng: &mut R) -> f64 {
        if matches!(self.law, EnergyLaw::Identity) {
            return lambda;
        }
        let width = self.hi - self.lo;
        let e = if width > 0.0 { (lambda - self.lo) / width } else { 0.0 };
        self.lo + width * self.law.sample(e, rng)
    }

    /// CDF of the stationary law on `[lo, hi]` when the energy kernel has a
    /// registered one.
    pub fn stationary_cdf(&self) -> Option<impl Fn(f64) -> f64> {
        let law: StationaryLaw = self.law.closed_form()?;
        let (lo, width) = (self.lo, self.hi - self.lo);
        Some(move |x: f64| law.cdf((x - lo) / width))
    }
}

/// Scaled-type Markov renewal process.
#[derive(Debug, Clone)]
pub struct Stmrp {
    pub tail: TailFamily,
    pub chain: ParamChain,
    pub lambda0: f64,
}

impl Stmrp {
    pub fn new(tail: TailFamily, chain: ParamChain, lambda0: f64) -> Result<Self> {
        tail.validate()?;
        if !(chain.lo..=chain.hi).contains(&lambda0) {
            return Err(Error::Precondition(format!(
                "λ₀ = {lambda0} outside [{}, {}]",
                chain.lo, chain.hi
            )));
        }
        Ok(Self { tail, chain, lambda0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenewalObservation {
    pub n_t: u64,
    pub age: f64,
    /// `+∞` when the covering wait overflows `f64`.
    pub residual: f64,
    pub current_type: f64,
    pub last_renewal: f64,
}

/// Renewal observables at time `t`.
pub fn sample_path<R: RngCore + ?Sized>(p: &Stmrp, t: f64, rng: &mut R) -> Result<RenewalObservation> {
    let mut lambda = p.lambda0;
    let mut s = NeumaierSum::default();
    let mut n: u64 = 1;
    loop {
        let u = open01(rng);
        let remaining = t - s.value();
        let x = p.tail.from_uniform(u) / lambda;
        if p.tail.exceeds(u, lambda * remaining) {
            return Ok(RenewalObservation {
                n_t: n,
                age: remaining,
                residual: x - remaining,
                current_type: lambda,
                last_renewal: s.value(),
            });
        }
        s.add(x);
        n += 1;
        if n > MAX_RENEWALS {
            return Err(Error::TooManyRenewals(MAX_RENEWALS));
        }
        lambda = p.chain.step(lambda, rng);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AgeResidualRow {
    pub t: f64,
    pub age_q10: f64,
    pub age_median: f64,
    pub age_q90: f64,
    pub age_median_ci: (f64, f64),
    pub residual_q10: f64,
    pub residual_median: f64,
    pub residual_q90: f64,
    pub mean_renewals: f64,
}

/// Quantiles of `Y_t/t` and `Z_t/t` on a time grid.
pub fn age_residual_law(p: &Stmrp, t_grid: &[f64], trials: usize, streams: &Streams) -> Result<Vec<AgeResidualRow>> {
    t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let obs = streams.child(&format!("t{k}")).try_run(trials, |_, rng| sample_path(p, t, rng))?;
            let ages = sorted(&obs.iter().map(|o| o.age / t).collect::<Vec<_>>());
            let res = sorted(&obs.iter().map(|o| o.residual / t).collect::<Vec<_>>());
            Ok(AgeResidualRow {
                t,
                age_q10: quantile_sorted(&ages, 0.1),
                age_median: quantile_sorted(&ages, 0.5),
                age_q90: quantile_sorted(&ages, 0.9),
                age_median_ci: quantile_ci_sorted(&ages, 0.5, 0.95),
                residual_q10: quantile_sorted(&res, 0.1),
                residual_median: quantile_sorted(&res, 0.5),
                residual_q90: quantile_sorted(&res, 0.9),
                mean_renewals: obs.iter().map(|o| o.n_t as f64).sum::<f64>() / trials as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CurrentTypeLaw {
    pub t: f64,
    pub samples: Vec<f64>,
    /// Share of paths with no renewal after time zero.
    pub no_renewal_fraction: f64,
    /// KS distance to the stationary law of the chain, when registered.
    pub ks_to_stationary: Option<f64>,
}

pub fn current_type_law(p: &Stmrp, t: f64, trials: usize, streams: &Streams) -> Result<CurrentTypeLaw> {
    let obs = streams.try_run(trials, |_, rng| sample_path(p, t, rng))?;
    let samples: Vec<f64> = obs.iter().map(|o| o.current_type).collect();
    let no_renewal_fraction = obs.iter().filter(|o| o.n_t == 1).count() as f64 / trials as f64;
    let ks_to_stationary = p.chain.stationary_cdf().map(|cdf| ks_one_sample(&samples, cdf));
    Ok(CurrentTypeLaw {
        t,
        samples,
        no_renewal_fraction,
        ks_to_stationary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderStatistics {
    pub n: usize,
    /// Per-trial `X_{n−1,n}/X_{n,n}`.
    pub gap_ratios: Vec<f64>,
    /// Per-trial `S_n/X_{n,n}`.
    pub sum_ratios: Vec<f64>,
}

impl OrderStatistics {
    pub fn gap_quartiles(&self) -> [f64; 3] {
        let s = sorted(&self.gap_ratios);
        [0.25, 0.5, 0.75].map(|p| quantile_sorted(&s, p))
    }

    pub fn sum_quartiles(&self) -> [f64; 3] {
        let s = sorted(&self.sum_ratios);
        [0.25, 0.5, 0.75].map(|p| quantile_sorted(&s, p))
    }
}

/// Dominance of the largest of `n` iid waits, computed in log space.
pub fn order_statistic_dominance(tail: TailFamily, n: usize, trials: usize, streams: &Streams) -> Result<OrderStatistics> {
    tail.validate()?;
    if n == 0 {
        return Err(Error::Precondition("order statistics need n ≥ 1".into()));
    }
    let pairs = streams.run(trials, |_, rng| {
        let logs: Vec<f64> = (0..n).map(|_| tail.log_from_uniform(open01(rng))).collect();
        let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &l in &logs {
            if l > top {
                second = top;
                top = l;
            } else if l > second {
                second = l;
            }
        }
        if n == 1 {
            return (1.0, 1.0);
        }
        let mut sum = NeumaierSum::default();
        logs.iter().for_each(|l| sum.add((l - top).exp()));
        ((second - top).exp(), sum.value())
    });
    Ok(OrderStatistics {
        n,
        gap_ratios: pairs.iter().map(|p| p.0).collect(),
        sum_ratios: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Relative accuracy requested from each quadrature piece.
const LAPLACE_TOL: f64 = 1e-11;

/// `1 − φ(z) = z ∫₀^∞ e^{−zx} (1 − F(x)) dx`.
///
/// The range is split at `1/z`. Below it `x = e^s − 1` spreads the
/// logarithmic scales; above it `x = e^s/z` and the integrand is negligible
/// past `s = 4`.
pub fn laplace_complement(tail: TailFamily, z: f64) -> Result<f64> {
    if z.is_nan() || z <= 0.0 {
        return Err(Error::Precondition(format!("Laplace argument z = {z} must be positive")));
    }
    let head = |s: f64| {
        let x = s.exp_m1();
        z * (-z * x).exp() * tail.survival(x) * s.exp()
    };
    let tailpart = |s: f64| {
        let x = s.exp() / z;
        z * (-z * x).exp() * tail.survival(x) * x
    };
    let a = quadrature::integrate(head, 0.0, (1.0 / z).ln_1p(), LAPLACE_TOL);
    let b = quadrature::integrate(tailpart, 0.0, 4.0, LAPLACE_TOL);
    let value = a.integral + b.integral;
    let err = a.error_estimate + b.error_estimate;
    if !value.is_finite() || err > 1e-6 * value.abs().max(1e-300) {
        return Err(Error::Quadrature(format!(
            "1 − φ({z}) = {value} with error estimate {err}"
        )));
    }
    Ok(value)
}

#[derive(Debug, Clone, Serialize)]
pub struct LaplaceRow {
    pub z: f64,
    pub one_minus_phi: f64,
    /// `1 − F(1/z)`.
    pub tail_at_inverse: f64,
    pub ratio: f64,
}

pub fn tauberian_checks(tail: TailFamily, z_grid: &[f64]) -> Result<Vec<LaplaceRow>> {
    tail.validate()?;
    z_grid
        .iter()
        .map(|&z| {
            let v = laplace_complement(tail, z)?;
            let l = tail.survival(1.0 / z);
            Ok(LaplaceRow {
                z,
                one_minus_phi: v,
                tail_at_inverse: l,
                ratio: v / l,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewalFunctionEstimate {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    /// `Û(t)(1 − F(t))`.
    pub scaled: f64,
    pub scaled_se: f64,
}

/// `U(t) = E N_t` for the process with constant parameter 1.
pub fn renewal_function(tail: TailFamily, t: f64, trials: usize, streams: &Streams) -> Result<RenewalFunctionEstimate> {
    let p = Stmrp::new(tail, ParamChain::constant(1.0)?, 1.0)?;
    let n: Vec<f64> = streams
        .try_run(trials, |_, rng| sample_path(&p, t, rng))?
        .iter()
        .map(|o| o.n_t as f64)
        .collect();
    let e = crate::stats::mean_estimate(&n);
    let l = tail.survival(t);
    Ok(RenewalFunctionEstimate {
        t,
        mean: e.value,
        se: e.se,
        scaled: e.value * l,
        scaled_se: e.se * l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(tail: TailFamily, lambda: f64) -> Stmrp {
        Stmrp::new(tail, ParamChain::constant(lambda).unwrap(), lambda).unwrap()
    }

    #[test]
    fn slowlog_inversion_and_threshold() {
        let t = TailFamily::SlowLog;
        let u = 0.3;
        let x = t.from_uniform(u);
        assert!((t.survival(x) - u).abs() < 1e-14);
        assert!(t.exceeds(u, x * 0.999) && !t.exceeds(u, x * 1.001));
        assert!((t.log_from_uniform(u) - x.ln()).abs() < 1e-12);
        // Overflowing draws keep a finite logarithm.
        assert!(t.from_uniform(1e-3).is_infinite());
        assert!((t.log_from_uniform(1e-3) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn exponential_constant_rate_counts() {
        let p = constant(TailFamily::Exponential, 1.0);
        let n: Vec<f64> = Streams::new(1, "pp")
            .run(20_000, |_, rng| sample_path(&p, 10.0, rng).unwrap().n_t as f64);
        let m = crate::stats::mean_estimate(&n);
        // N_t = 1 + Poisson(λt).
        assert!((m.value - 11.0).abs() < 4.0 * m.se);
    }

    #[test]
    fn constant_chain_type_is_exact() {
        let p = constant(TailFamily::SlowLog, 0.4);
        let law = current_type_law(&p, 1e6, 500, &Streams::new(2, "ct")).unwrap();
        assert!(law.samples.iter().all(|x| *x == 0.4));
    }

    #[test]
    fn path_brackets_time() {
        let chain = ParamChain::new(EnergyLaw::Uniform, 0.1, 1.0).unwrap();
        let p = Stmrp::new(TailFamily::Pareto { beta: 1.5 }, chain, 0.5).unwrap();
        let mut rng = Streams::new(3, "br").rng(0);
        for _ in 0..2000 {
            let o = sample_path(&p, 50.0, &mut rng).unwrap();
            assert!(o.last_renewal <= 50.0 && o.age >= 0.0 && o.residual > 0.0);
            assert!((o.last_renewal + o.age - 50.0).abs() < 1e-9);
            assert!((0.1..=1.0).contains(&o.current_type));
        }
    }

    #[test]
    fn exponential_laplace_closed_form() {
        for z in [1e-3, 0.1, 1.0, 10.0] {
            let v = laplace_complement(TailFamily::Exponential, z).unwrap();
            assert!((v - z / (1.0 + z)).abs() < 1e-9, "{z}: {v}");
        }
    }

    #[test]
    fn slowlog_laplace_ratio() {
        let rows = tauberian_checks(TailFamily::SlowLog, &[1e-6, 1e-9]).unwrap();
        for r in rows {
            assert!((0.9..=1.1).contains(&r.ratio), "{r:?}");
        }
    }

    #[test]
    fn order_statistics_route_tail_classes() {
        let s = Streams::new(4, "os");
        let slow = order_statistic_dominance(TailFamily::SlowLog, 1000, 400, &s).unwrap();
        let pareto = order_statistic_dominance(TailFamily::Pareto { beta: 0.5 }, 1000, 400, &s).unwrap();
        let exp = order_statistic_dominance(TailFamily::Exponential, 1000, 400, &s).unwrap();
        let (a, b, c) = (slow.gap_quartiles(), pareto.gap_quartiles(), exp.gap_quartiles());
        assert!(a[2] < b[0] && b[2] < c[0], "{a:?} {b:?} {c:?}");
        assert!(slow.sum_quartiles()[1] < 1.01);
        let one = order_statistic_dominance(TailFamily::SlowLog, 1, 3, &s).unwrap();
        assert_eq!(one.gap_ratios, vec![1.0; 3]);
    }

    proptest! {
        #[test]
        fn threshold_query_agrees_with_sample(u in 1e-6f64..1.0, r in 0.0f64..1e6, beta in 0.2f64..3.0) {
            for t in [TailFamily::SlowLog, TailFamily::Exponential, TailFamily::Pareto { beta }] {
                let x = t.from_uniform(u);
                // Skip draws within rounding of the threshold.
                if (x - r).abs() > 1e-9 * r.max(1.0) {
                    prop_assert_eq!(t.exceeds(u, r), x > r);
                }
            }
        }
    }
}
