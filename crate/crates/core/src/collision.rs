//! Energy-exchange collisions and the induced energy chain.
//!
//! Total energy is normalised so that the speeds of the two particles are
//! `λ` and `√(1 − λ²)`. A collision redraws `λ` from a kernel `g(λ₋, ·)`,
//! redraws both internal states and moves the particles by a pair of
//! displacements `(z¹, z²)` with `|z^i|∞ ≤ 1`.

use std::path::Path;

use rand::RngCore;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AliasTable, Site};
use crate::rng::{open01, Streams, TrialRng};
use crate::stats::{ks_two_sample, linear_fit, sorted};

/// Random draws of `λ₊` are clamped to this interval.
pub const LAMBDA_MIN: f64 = 1e-9;
pub const LAMBDA_MAX: f64 = 1.0 - 1e-9;

fn clamp_lambda(x: f64) -> f64 {
    x.clamp(LAMBDA_MIN, LAMBDA_MAX)
}

/// Energy split `(λ, √(1 − λ²))`; only `λ` is stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergySplit {
    lambda: f64,
}

impl EnergySplit {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Precondition(format!("energy split λ = {lambda} outside [0, 1]")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda2(&self) -> f64 {
        (1.0 - self.lambda * self.lambda).max(0.0).sqrt()
    }

    pub fn rates(&self) -> [f64; 2] {
        [self.lambda, self.lambda2()]
    }

    /// `λ̃ = λ + √(1 − λ²) ∈ [1, √2]`.
    pub fn total_rate(&self) -> f64 {
        self.lambda + self.lambda2()
    }
}

/// Tabulated kernel on equal-width bins of `[0, 1]`; within a bin the
/// outgoing `λ₊` is uniform.
#[derive(Debug, Clone)]
pub struct TabulatedKernel {
    bins: usize,
    rows: Vec<Vec<f64>>,
    tables: Vec<AliasTable>,
}

#[derive(Debug, Deserialize)]
struct TabulatedRecord {
    lambda_minus_bin: usize,
    lambda_plus_bin: usize,
    mass: f64,
}

impl TabulatedKernel {
    /// Rows are normalised; every row needs positive mass.
    pub fn new(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        let bins = rows.len();
        if bins == 0 || rows.iter().any(|r| r.len() != bins) {
            return Err(Error::Precondition("tabulated kernel must be square and nonempty".into()));
        }
        for (i, r) in rows.iter_mut().enumerate() {
            if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Precondition(format!("row {i} has a negative or non-finite mass")));
            }
            let s: f64 = r.iter().sum();
            if s <= 0.0 {
                return Err(Error::Precondition(format!("row {i} of the tabulated kernel has no mass")));
            }
            r.iter_mut().for_each(|v| *v /= s);
        }
        let tables = rows.iter().map(|r| AliasTable::new(r)).collect();
        Ok(Self { bins, rows, tables })
    }

    /// Reads `lambda_minus_bin,lambda_plus_bin,mass` records.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let records: Vec<TabulatedRecord> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
        let bins = records
            .iter()
            .map(|r| r.lambda_minus_bin.max(r.lambda_plus_bin) + 1)
            .max()
            .unwrap_or(0);
        let mut rows = vec![vec![0.0; bins]; bins];
        for r in records {
            rows[r.lambda_minus_bin][r.lambda_plus_bin] += r.mass;
        }
        Self::new(rows)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    fn bin_of(&self, x: f64) -> usize {
        ((x * self.bins as f64) as usize).min(self.bins - 1)
    }

    fn sample<R: RngCore + ?Sized>(&self, lambda_minus: f64, rng: &mut R) -> f64 {
        let b = self.tables[self.bin_of(lambda_minus)].sample(rng);
        (b as f64 + open01(rng)) / self.bins as f64
    }

    /// Stationary bin probabilities of the bin-to-bin chain.
    pub fn stationary_bins(&self) -> Result<Vec<f64>> {
        let q = nalgebra::DMatrix::from_fn(self.bins, self.bins, |i, j| self.rows[i][j]);
        Ok(crate::model::stationary_of(&q)?.iter().copied().collect())
    }
}

/// The energy kernel `g(λ₋, ·)`.
#[derive(Debug, Clone)]
pub enum EnergyLaw {
    /// `λ₊² ~ Uniform(0, 1)` independently of `λ₋`.
    Uniform,
    /// `λ₊² ~ Beta(κλ₋² + 1, κ(1 − λ₋²) + 1)`.
    Sticky { kappa: f64 },
    /// `λ₊ = √(1 − λ₋²)`: the particles trade speeds. Period two.
    Swap,
    /// `λ₊ = λ₋`: energies never change.
    Identity,
    Tabulated(TabulatedKernel),
}

impl EnergyLaw {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Sticky { .. } => "sticky",
            Self::Swap => "swap",
            Self::Identity => "identity",
            Self::Tabulated(_) => "tabulated",
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, lambda_minus: f64, rng: &mut R) -> f64 {
        match self {
            Self::Uniform => clamp_lambda(open01(rng).sqrt()),
            Self::Sticky { kappa } => {
                let e = lambda_minus * lambda_minus;
                let beta = Beta::new(kappa * e + 1.0, kappa * (1.0 - e) + 1.0).expect("positive Beta parameters");
                clamp_lambda(beta.sample(rng).sqrt())
            }
            Self::Swap => clamp_lambda((1.0 - lambda_minus * lambda_minus).max(0.0).sqrt()),
            Self::Identity => lambda_minus,
            Self::Tabulated(t) => clamp_lambda(t.sample(lambda_minus, rng)),
        }
    }

    /// Registered stationary law, when one is known in closed form.
    pub fn closed_form(&self) -> Option<StationaryLaw> {
        match self {
            Self::Uniform => Some(StationaryLaw::Uniform),
            Self::Tabulated(t) => t.stationary_bins().ok().map(|probs| StationaryLaw::Piecewise { probs }),
            _ => None,
        }
    }
}

/// Stationary law `ρ_s` of the energy chain.
#[derive(Debug, Clone)]
pub enum StationaryLaw {
    /// CDF `x²` on `[0, 1]`.
    Uniform,
    /// Point mass.
    Atom(f64),
    /// Uniform within equal-width bins with the given probabilities.
    Piecewise { probs: Vec<f64> },
    /// Sorted sample from a long chain run.
    Empirical(Vec<f64>),
}

impl StationaryLaw {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Uniform => x.clamp(0.0, 1.0).powi(2),
            Self::Atom(a) => (x >= *a) as u8 as f64,
            Self::Piecewise { probs } => {
                let n = probs.len() as f64;
                let pos = (x.clamp(0.0, 1.0) * n).min(n);
                let full = pos.floor() as usize;
                let mut c: f64 = probs[..full.min(probs.len())].iter().sum();
                if full < probs.len() {
                    c += probs[full] * (pos - full as f64);
                }
                c
            }
            Self::Empirical(s) => s.partition_point(|v| *v <= x) as f64 / s.len() as f64,
        }
    }

    /// Density for absolutely continuous laws.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            Self::Uniform => Some(if (0.0..=1.0).contains(&x) { 2.0 * x } else { 0.0 }),
            Self::Piecewise { probs } => {
                let n = probs.len();
                Some(if (0.0..=1.0).contains(&x) {
                    probs[((x * n as f64) as usize).min(n - 1)] * n as f64
                } else {
                    0.0
                })
            }
            _ => None,
        }
    }

    /// Atoms `(location, mass)` for discrete laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::Atom(a) => Some(vec![(*a, 1.0)]),
            Self::Empirical(s) => {
                let w = 1.0 / s.len() as f64;
                Some(s.iter().map(|v| (*v, w)).collect())
            }
            _ => None,
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform => clamp_lambda(open01(rng).sqrt()),
            Self::Atom(a) => *a,
            Self::Piecewise { probs } => {
                let u = open01(rng);
                let mut acc = 0.0;
                let n = probs.len();
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc || i == n - 1 {
                        return clamp_lambda((i as f64 + open01(rng)) / n as f64);
                    }
                }
                unreachable!()
            }
            Self::Empirical(s) => s[((open01(rng) * s.len() as f64) as usize).min(s.len() - 1)],
        }
    }

    /// `E f(λ)`, by midpoint quadrature for continuous laws.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self {
            Self::Uniform | Self::Piecewise { .. } => {
                // λ = sin θ removes the square-root endpoint behaviour of
                // typical integrands such as √(1 − λ²).
                let n = 20_000;
                let h = std::f64::consts::FRAC_PI_2 / n as f64;
                (0..n)
                    .map(|i| {
                        let th = (i as f64 + 0.5) * h;
                        let l = th.sin();
                        f(l) * self.density(l).unwrap_or(0.0) * th.cos() * h
                    })
                    .sum()
            }
            _ => self.atoms().unwrap_or_default().iter().map(|(x, w)| w * f(*x)).sum(),
        }
    }

    pub fn median(&self) -> f64 {
        match self {
            Self::Uniform => 0.5f64.sqrt(),
            Self::Empirical(s) => crate::stats::quantile_sorted(s, 0.5),
            _ => {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < 0.5 {
                        lo = mid
                    } else {
                        hi = mid
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// Law of the post-collision internal states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionLaw {
    /// Independent draws from the stationary law `ρ`.
    Stationary,
    Uniform,
}

/// Law of the collision displacements `(z¹, z²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementLaw {
    /// Independent uniform over `{0, ±e₁, ±e₂}` for each particle,
    /// conditioned on at least one particle moving.
    UniformPair,
    /// No interaction: one particle, chosen with probability `λ_i/λ̃`,
    /// makes an ordinary step of its own walk.
    FreeFlight,
}

#[derive(Debug, Clone)]
pub struct CollisionKernel {
    pub energy: EnergyLaw,
    pub direction: DirectionLaw,
    pub displacement: DisplacementLaw,
}

impl CollisionKernel {
    pub fn new(energy: EnergyLaw) -> Self {
        Self {
            energy,
            direction: DirectionLaw::Stationary,
            displacement: DisplacementLaw::UniformPair,
        }
    }

    /// Identity energies and free-flight displacements: the two walks are
    /// independent.
    pub fn non_interacting() -> Self {
        Self {
            energy: EnergyLaw::Identity,
            direction: DirectionLaw::Stationary,
            displacement: DisplacementLaw::FreeFlight,
        }
    }
}

/// Outcome of one collision with a displacement law other than free flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionOutcome {
    pub lambda: f64,
    pub states: [usize; 2],
    pub displacements: [Site; 2],
}

/// Kernel prepared for a given internal-state space.
#[derive(Debug, Clone)]
pub struct CollisionSampler {
    kernel: CollisionKernel,
    states: AliasTable,
    moves: Vec<Site>,
}

impl CollisionSampler {
    pub fn new(kernel: &CollisionKernel, dim: usize, rho: &[f64]) -> Self {
        let weights: Vec<f64> = match kernel.direction {
            DirectionLaw::Stationary => rho.to_vec(),
            DirectionLaw::Uniform => vec![1.0; rho.len()],
        };
        let moves = if dim == 1 {
            vec![[0, 0], [1, 0], [-1, 0]]
        } else {
            vec![[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]]
        };
        Self {
            kernel: kernel.clone(),
            states: AliasTable::new(&weights),
            moves,
        }
    }

    pub fn kernel(&self) -> &CollisionKernel {
        &self.kernel
    }

    pub fn sample_energy<R: RngCore + ?Sized>(&self, lambda_minus: f64, rng: &mut R) -> f64 {
        self.kernel.energy.sample(lambda_minus, rng)
    }

    /// Full collision draw; `None` for free-flight kernels, whose moves are
    /// made by the walk itself.
    pub fn sample<R: RngCore + ?Sized>(&self, lambda_minus: f64, rng: &mut R) -> Option<CollisionOutcome> {
        if self.kernel.displacement == DisplacementLaw::FreeFlight {
            return None;
        }
        let lambda = self.sample_energy(lambda_minus, rng);
        let states = [self.states.sample(rng), self.states.sample(rng)];
        let k = self.moves.len() as u64;
        let pair = loop {
            let a = (rng.next_u64() % k) as usize;
            let b = (rng.next_u64() % k) as usize;
            if a != 0 || b != 0 {
                break (a, b);
            }
        };
        Some(CollisionOutcome {
            lambda,
            states,
            displacements: [self.moves[pair.0], self.moves[pair.1]],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMethod {
    ClosedForm,
    Longrun,
}

/// Comparison of two long runs from different starts.
#[derive(Debug, Clone, Serialize)]
pub struct LongrunDiagnostic {
    pub starts: (f64, f64),
    pub steps: usize,
    pub ks: f64,
    /// Three combined standard errors, from lag-one effective sample sizes.
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct StationaryEstimate {
    pub law: StationaryLaw,
    pub diagnostic: Option<LongrunDiagnostic>,
}

fn chain_path(law: &EnergyLaw, start: f64, n: usize, rng: &mut TrialRng) -> Vec<f64> {
    let burn = n / 10;
    let mut x = start;
    for _ in 0..burn {
        x = law.sample(x, rng);
    }
    (0..n)
        .map(|_| {
            x = law.sample(x, rng);
            x
        })
        .collect()
}

/// Effective sample size `n (1 − r₁)/(1 + r₁)` with the lag-one
/// autocorrelation `r₁` floored at 0.
fn effective_size(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = crate::stats::mean(x);
    let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if var == 0.0 {
        return n;
    }
    let lag: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let r = (lag / var).clamp(0.0, 0.999_999);
    n * (1.0 - r) / (1.0 + r)
}

/// Stationary law of the energy chain.
///
/// `ClosedForm` returns the registered law (an error when none is known);
/// `Longrun` runs the chain `n` steps after a burn-in of `n/10` from the
/// first start and compares it with a second run from the other start.
pub fn stationary_energy(
    law: &EnergyLaw,
    method: StationaryMethod,
    n: usize,
    starts: (f64, f64),
    streams: &Streams,
) -> Result<StationaryEstimate> {
    match method {
        StationaryMethod::ClosedForm => law
            .closed_form()
            .map(|law| StationaryEstimate { law, diagnostic: None })
            .ok_or_else(|| Error::Precondition(format!("no closed-form stationary law for the {} kernel", law.name()))),
        StationaryMethod::Longrun => {
            if n < 10_000 {
                return Err(Error::Precondition(format!("long run needs n ≥ 10⁴, got {n}")));
            }
            let paths = streams.run(2, |i, rng| chain_path(law, if i == 0 { starts.0 } else { starts.1 }, n, rng));
            let ks = ks_two_sample(&paths[0], &paths[1]);
            let threshold = 3.0 * (1.0 / effective_size(&paths[0]) + 1.0 / effective_size(&paths[1])).sqrt();
            let diagnostic = LongrunDiagnostic {
                starts,
                steps: n,
                ks,
                threshold,
                flagged: ks > threshold,
            };
            Ok(StationaryEstimate {
                law: StationaryLaw::Empirical(sorted(&paths[0])),
                diagnostic: Some(diagnostic),
            })
        }
    }
}

/// Weighted sample representing `(1 − F) Σ_{n ≤ n_max} Fⁿ gⁿ(λ₀, ·)`.
///
/// Each value is `λ_n` of an independent chain path with `n` drawn from the
/// geometric law truncated at `n_max`; all values share the weight
/// `(1 − F^{n_max+1}) / samples`.
#[derive(Debug, Clone)]
pub struct TransientMixture {
    pub values: Vec<f64>,
    pub weight: f64,
    pub n_max: u64,
}

impl TransientMixture {
    pub fn total_mass(&self) -> f64 {
        self.weight * self.values.len() as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weight * self.values.iter().filter(|v| **v <= x).count() as f64
    }
}

/// Smallest `n_max` with `F^{n_max+1} ≤ 1e−9`.
pub fn mixture_truncation(f: f64) -> u64 {
    if f <= 0.0 {
        0
    } else {
        ((1e-9f64.ln() / f.ln()).ceil() as u64).saturating_sub(1)
    }
}

pub fn transient_mixture(
    law: &EnergyLaw,
    return_probability: f64,
    lambda0: f64,
    samples: usize,
    streams: &Streams,
) -> Result<TransientMixture> {
    let f = return_probability;
    if !(0.0..1.0).contains(&f) {
        return Err(Error::Precondition(format!("return probability F = {f} must lie in [0, 1)")));
    }
    EnergySplit::new(lambda0)?;
    let n_max = mixture_truncation(f);
    let values = streams.run(samples, |_, rng| {
        // P(n > k) = F^{k+1}; inversion of the truncated geometric law.
        let n = if f == 0.0 {
            0
        } else {
            let u = open01(rng);
            let mass = 1.0 - f.powf(n_max as f64 + 1.0);
            ((1.0 - u * mass).ln() / f.ln()).floor().min(n_max as f64) as u64
        };
        let mut x = lambda0;
        for _ in 0..n {
            x = law.sample(x, rng);
        }
        x
    });
    let weight = (1.0 - f.powf(n_max as f64 + 1.0)) / samples as f64;
    Ok(TransientMixture { values, weight, n_max })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicityReport {
    pub rows: Vec<(u64, f64)>,
    /// Statistical resolution `3√(2/samples)`.
    pub noise_floor: f64,
    /// Fitted `κ` in `KS ≈ C e^{−κ n}` over points above the noise floor.
    pub decay_rate: Option<f64>,
    /// Raised when the distance at the last grid point neither sits at the
    /// noise floor nor fell below half of its first value.
    pub non_ergodic: bool,
}

/// KS distance between `gⁿ(λ₀, ·)` and `gⁿ(λ₀′, ·)` estimated from
/// `samples` independent chains per start.
pub fn ergodicity_diagnostic(
    law: &EnergyLaw,
    starts: (f64, f64),
    n_grid: &[u64],
    samples: usize,
    streams: &Streams,
) -> Result<ErgodicityReport> {
    if starts.0 == starts.1 {
        return Err(Error::Precondition("ergodicity diagnostic needs two distinct starts".into()));
    }
    let max_n = n_grid.iter().copied().max().unwrap_or(0);
    let run = |start: f64, tag: &str| -> Vec<Vec<f64>> {
        streams.child(tag).run(samples, |_, rng| {
            let mut x = start;
            let mut snaps = Vec::with_capacity(n_grid.len());
            for step in 1..=max_n {
                x = law.sample(x, rng);
                if n_grid.contains(&step) {
                    snaps.push(x);
                }
            }
            snaps
        })
    };
    let a = run(starts.0, "a");
    let b = run(starts.1, "b");
    let mut grid: Vec<u64> = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let rows: Vec<(u64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let xa: Vec<f64> = a.iter().map(|s| s[k]).collect();
            let xb: Vec<f64> = b.iter().map(|s| s[k]).collect();
            (*n, ks_two_sample(&xa, &xb))
        })
        .collect();
    let noise_floor = 3.0 * (2.0 / samples as f64).sqrt();
    let above: Vec<_> = rows.iter().filter(|r| r.1 > noise_floor).collect();
    let decay_rate = (above.len() >= 2).then(|| {
        let x: Vec<f64> = above.iter().map(|r| r.0 as f64).collect();
        let y: Vec<f64> = above.iter().map(|r| r.1.ln()).collect();
        -linear_fit(&x, &y).slope
    });
    let non_ergodic = match (rows.first(), rows.last()) {
        (Some(first), Some(last)) => last.1 > noise_floor && last.1 > 0.5 * first.1,
        _ => false,
    };
    Ok(ErgodicityReport {
        rows,
        noise_floor,
        decay_rate,
        non_ergodic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use proptest::prelude::*;
    use rand::SeedableRng;

    proptest! {
        #[test]
        fn kernels_keep_energy_on_the_circle(lm in 0.0f64..=1.0, kappa in 0.1f64..20.0, seed in any::<u64>()) {
            let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
            for law in [EnergyLaw::Uniform, EnergyLaw::Sticky { kappa }, EnergyLaw::Swap, EnergyLaw::Identity] {
                let l = law.sample(lm, &mut rng);
                prop_assert!((0.0..=1.0).contains(&l));
                let r = EnergySplit::new(l).unwrap().total_rate();
                prop_assert!((1.0 - 1e-12..=2f64.sqrt() + 1e-12).contains(&r));
            }
        }
    }

    #[test]
    fn split_invariants() {
        let s = EnergySplit::new(0.6).unwrap();
        assert!((s.lambda2() - 0.8).abs() < 1e-15);
        assert!((s.total_rate() - 1.4).abs() < 1e-15);
        assert!(EnergySplit::new(1.2).is_err());
        assert_eq!(EnergySplit::new(1.0).unwrap().total_rate(), 1.0);
    }

    #[test]
    fn swap_from_six_tenths() {
        let mut rng = Streams::new(0, "s").rng(0);
        assert!((EnergyLaw::Swap.sample(0.6, &mut rng) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn uniform_kernel_cdf_is_square() {
        let mut rng = Streams::new(1, "u").rng(0);
        let draws: Vec<f64> = (0..100_000).map(|_| EnergyLaw::Uniform.sample(0.3, &mut rng)).collect();
        assert!(ks_one_sample(&draws, |x| x * x) <= 0.01);
    }

    #[test]
    fn closed_form_one_step_invariance() {
        let mut rng = Streams::new(2, "inv").rng(0);
        let law = StationaryLaw::Uniform;
        let pushed: Vec<f64> = (0..100_000)
            .map(|_| {
                let x = law.sample(&mut rng);
                EnergyLaw::Uniform.sample(x, &mut rng)
            })
            .collect();
        assert!(ks_one_sample(&pushed, |x| law.cdf(x)) <= 0.01);
    }

    #[test]
    fn tabulated_kernel_and_its_stationary_law() {
        let t = TabulatedKernel::new(vec![vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        // Bin chain [[1/4, 3/4], [1/2, 1/2]] has stationary (2/5, 3/5).
        let probs = t.stationary_bins().unwrap();
        assert!((probs[0] - 0.4).abs() < 1e-12);
        let law = EnergyLaw::Tabulated(t).closed_form().unwrap();
        assert!((law.cdf(0.5) - 0.4).abs() < 1e-12);
        assert!((law.cdf(0.75) - 0.7).abs() < 1e-12);
        let mut rng = Streams::new(3, "tab").rng(0);
        let pushed: Vec<f64> = (0..50_000)
            .map(|_| {
                let x = law.sample(&mut rng);
                let kernel = EnergyLaw::Tabulated(TabulatedKernel::new(vec![vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap());
                kernel.sample(x, &mut rng)
            })
            .collect();
        assert!(ks_one_sample(&pushed, |x| law.cdf(x)) <= 0.015);
    }

    #[test]
    fn tabulated_kernel_rejects_empty_rows() {
        assert!(TabulatedKernel::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn collision_respects_range_and_conservation() {
        let s = CollisionSampler::new(&CollisionKernel::new(EnergyLaw::Uniform), 2, &[0.25; 4]);
        let mut rng = Streams::new(4, "c").rng(0);
        for _ in 0..10_000 {
            let o = s.sample(0.5, &mut rng).unwrap();
            assert!(o.lambda >= LAMBDA_MIN && o.lambda <= LAMBDA_MAX);
            let split = EnergySplit::new(o.lambda).unwrap();
            assert!((split.lambda().powi(2) + split.lambda2().powi(2) - 1.0).abs() < 1e-15);
            assert!(o.displacements != [[0, 0], [0, 0]]);
            assert!(o.displacements.iter().all(|z| z[0].abs() + z[1].abs() <= 1));
            assert!(o.states.iter().all(|u| *u < 4));
        }
    }

    #[test]
    fn closed_form_needs_registered_law() {
        let s = Streams::new(5, "cf");
        assert!(matches!(
            stationary_energy(&EnergyLaw::Uniform, StationaryMethod::ClosedForm, 0, (0.1, 0.9), &s)
                .unwrap()
                .law,
            StationaryLaw::Uniform
        ));
        assert!(stationary_energy(&EnergyLaw::Swap, StationaryMethod::ClosedForm, 0, (0.1, 0.9), &s).is_err());
    }

    #[test]
    fn swap_long_run_is_flagged() {
        let est = stationary_energy(&EnergyLaw::Swap, StationaryMethod::Longrun, 10_000, (0.1, 0.9), &Streams::new(6, "lr")).unwrap();
        assert!(est.diagnostic.unwrap().flagged);
    }

    #[test]
    fn transient_mixture_limits() {
        let s = Streams::new(7, "tm");
        let point = transient_mixture(&EnergyLaw::Uniform, 0.0, 0.3, 1000, &s).unwrap();
        assert!(point.values.iter().all(|v| *v == 0.3));
        assert!((point.total_mass() - 1.0).abs() < 1e-12);
        let half = transient_mixture(&EnergyLaw::Sticky { kappa: 4.0 }, 0.5, 0.3, 1000, &s).unwrap();
        assert!((half.total_mass() - 1.0).abs() <= 1e-9);
        assert_eq!(mixture_truncation(0.5), 29);
    }

    #[test]
    fn transient_mixture_uniform_kernel_law() {
        let f = 0.6;
        let m = transient_mixture(&EnergyLaw::Uniform, f, 0.3, 100_000, &Streams::new(8, "tm")).unwrap();
        // (1 − F)δ_{0.3} + F·(CDF x²)
        let target = |x: f64| (1.0 - f) * ((x >= 0.3) as u8 as f64) + f * x * x;
        let ks = [0.1, 0.29, 0.31, 0.5, 0.8]
            .iter()
            .map(|x| (m.cdf(*x) - target(*x)).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "{ks}");
    }

    #[test]
    fn expectations_of_uniform_law() {
        let law = StationaryLaw::Uniform;
        assert!((law.expect(|l| l) - 2.0 / 3.0).abs() < 1e-7);
        assert!((law.expect(|l| (1.0 - l * l).sqrt()) - 2.0 / 3.0).abs() < 1e-7);
        assert!((law.median() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ergodicity_of_builtin_kernels() {
        let s = Streams::new(9, "erg");
        let grid = [1, 2, 5, 10];
        let u = ergodicity_diagnostic(&EnergyLaw::Uniform, (0.1, 0.9), &grid, 4000, &s).unwrap();
        assert!(!u.non_ergodic);
        assert!(u.rows.iter().all(|r| r.1 <= u.noise_floor));
        let w = ergodicity_diagnostic(&EnergyLaw::Swap, (0.1, 0.9), &grid, 4000, &s).unwrap();
        assert!(w.non_ergodic);
    }
}
