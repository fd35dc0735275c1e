//! The Gaussian mixture limit law of the rescaled pair and tests against it.
//!
//! With `λ ~ ρ_s`, the scaled positions are independent centred Gaussians
//! with covariances `λσ` and `√(1 − λ²)σ`, and the two internal states are
//! independent draws from `ρ`.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::collision::StationaryLaw;
use crate::duet::single_walk;
use crate::error::{Error, Result};
use crate::model::{AliasTable, DirectionGrid, RwisModel, StepSampler};
use crate::rng::Streams;
use crate::stats::{covariance, ks_one_sample, ks_two_sample, ks_two_sample_p, normal_cdf, Estimate};

/// One draw of `(x¹, u¹, x², u²)`; internal states are arc indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixturePoint {
    pub x1: [f64; 2],
    pub state1: usize,
    pub x2: [f64; 2],
    pub state2: usize,
}

#[derive(Debug, Clone)]
pub struct MixtureLaw {
    dim: usize,
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    sigma_det: f64,
    rho: Vec<f64>,
    rho_table: AliasTable,
    grid: DirectionGrid,
    energy: StationaryLaw,
}

impl MixtureLaw {
    pub fn new(model: &RwisModel, energy: StationaryLaw) -> Result<Self> {
        model.require_valid()?;
        let sigma = model.asymptotic_covariance()?;
        let rho: Vec<f64> = model.stationary()?.iter().copied().collect();
        Self::from_parts(sigma, rho, energy)
    }

    pub fn from_parts(sigma: DMatrix<f64>, rho: Vec<f64>, energy: StationaryLaw) -> Result<Self> {
        let dim = sigma.nrows();
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Precondition("σ is not positive definite".into()))?;
        let sigma_inv = chol.inverse();
        let l = chol.l();
        Ok(Self {
            dim,
            sigma_det: sigma.determinant(),
            sigma,
            chol: l,
            sigma_inv,
            rho_table: AliasTable::new(&rho),
            grid: DirectionGrid::new(rho.len())?,
            rho,
            energy,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn grid(&self) -> DirectionGrid {
        self.grid
    }

    pub fn energy(&self) -> &StationaryLaw {
        &self.energy
    }

    fn gaussian<R: RngCore + ?Sized>(&self, scale: f64, rng: &mut R) -> [f64; 2] {
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        let x = &self.chol * z * scale.sqrt();
        [x[0], if self.dim == 2 { x[1] } else { 0.0 }]
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> MixturePoint {
        let lambda = self.energy.sample(rng);
        let lambda2 = (1.0 - lambda * lambda).max(0.0).sqrt();
        MixturePoint {
            x1: self.gaussian(lambda, rng),
            state1: self.rho_table.sample(rng),
            x2: self.gaussian(lambda2, rng),
            state2: self.rho_table.sample(rng),
        }
    }

    /// `x ↦ xᵀσ⁻¹x`.
    fn quad(&self, x: &[f64; 2]) -> f64 {
        let v = DVector::from_fn(self.dim, |i, _| x[i]);
        (v.transpose() * &self.sigma_inv * &v)[(0, 0)]
    }

    /// Product of the two Gaussian densities at split `λ`, without the
    /// `c^{−d/2}` normalisations, which are returned separately as powers.
    fn gaussian_pair(&self, q1: f64, q2: f64, lambda: f64, lambda2: f64) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).powi(self.dim as i32) * self.sigma_det;
        let e1 = if q1 == 0.0 { 0.0 } else { -q1 / (2.0 * lambda) };
        let e2 = if q2 == 0.0 { 0.0 } else { -q2 / (2.0 * lambda2) };
        (e1 + e2).exp() / norm
    }

    /// Density with respect to Lebesgue measure on `(ℝ^d × S)²`; a state
    /// contributes `ρ_j / |arc|`.
    pub fn density(&self, p: &MixturePoint) -> Result<f64> {
        let (q1, q2) = (self.quad(&p.x1), self.quad(&p.x2));
        let half = self.dim as f64 / 2.0;
        let states = self.rho[p.state1] * self.rho[p.state2] / self.grid.arc_length().powi(2);
        let spatial = if let Some(atoms) = self.energy.atoms() {
            atoms
                .iter()
                .map(|&(l, w)| {
                    let l2 = (1.0 - l * l).max(0.0).sqrt();
                    w * self.gaussian_pair(q1, q2, l, l2) / (l * l2).powf(half)
                })
                .sum()
        } else {
            // λ = sin θ: the (1 − λ²)^{−d/4} factor meets dλ = cos θ dθ.
            let f = |th: f64| {
                let (l, l2) = (th.sin(), th.cos());
                if l <= 0.0 || l2 <= 0.0 {
                    return 0.0;
                }
                let fs = self.energy.density(l).unwrap_or(0.0);
                fs * self.gaussian_pair(q1, q2, l, l2) * l2 / (l * l2).powf(half)
            };
            let out = quadrature::integrate(f, 0.0, std::f64::consts::FRAC_PI_2, 1e-14);
            if !out.integral.is_finite() {
                return Err(Error::Quadrature(format!("mixture density integral {}", out.integral)));
            }
            out.integral
        };
        Ok(spatial * states)
    }
}

/// `n` independent draws from the mixture.
pub fn sample_mixture(law: &MixtureLaw, n: usize, streams: &Streams) -> Vec<MixturePoint> {
    streams.run(n, |_, rng| law.sample(rng))
}

fn euclid(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Sum metric on `(ℝ^d × S)²` with the shorter-arc distance on `S`.
pub fn point_distance(grid: &DirectionGrid, a: &MixturePoint, b: &MixturePoint) -> f64 {
    euclid(&a.x1, &b.x1) + grid.distance(a.state1, b.state1) + euclid(&a.x2, &b.x2) + grid.distance(a.state2, b.state2)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitConfig {
    pub permutations: usize,
    /// Each sample is truncated to its first `cap` points for the energy
    /// statistic; the points are iid so truncation is an unbiased subsample.
    pub cap: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            permutations: 199,
            cap: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalKs {
    pub name: String,
    pub ks: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub energy_distance: f64,
    /// `n₁n₂/(n₁+n₂)` times the energy distance.
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub n_sim: usize,
    pub n_ref: usize,
    pub marginals: Vec<MarginalKs>,
    /// `Cov(|x¹|², |x²|²)` in each sample.
    pub energy_cov_sim: Estimate,
    pub energy_cov_ref: Estimate,
}

/// Pair sums `(S_AA, S_AB, S_BB)` over `i < j` for a labelling.
fn pair_sums(dist: &[f32], n: usize, labels: &[bool]) -> [f64; 3] {
    let mut s = [0.0f64; 3];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let mut acc = [0.0f64; 2];
        for j in (i + 1)..n {
            acc[labels[j] as usize] += row[j] as f64;
        }
        if labels[i] {
            s[1] += acc[0];
            s[2] += acc[1];
        } else {
            s[0] += acc[0];
            s[1] += acc[1];
        }
    }
    s
}

fn energy_from_sums(s: [f64; 3], n1: usize, n2: usize) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    2.0 * s[1] / (a * b) - 2.0 * s[0] / (a * a) - 2.0 * s[2] / (b * b)
}

/// Two-sample energy test of `simulated` against `reference` with a
/// permutation p-value, plus per-coordinate KS distances.
pub fn two_sample_fit(
    simulated: &[MixturePoint],
    reference: &[MixturePoint],
    grid: &DirectionGrid,
    config: FitConfig,
    streams: &Streams,
) -> Result<FitReport> {
    if simulated.len() < 2 || reference.len() < 2 {
        return Err(Error::Precondition("two-sample fit needs at least two points per sample".into()));
    }
    let a = &simulated[..simulated.len().min(config.cap)];
    let b = &reference[..reference.len().min(config.cap)];
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<&MixturePoint> = a.iter().chain(b.iter()).collect();
    let mut dist = vec![0f32; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = point_distance(grid, pooled[i], pooled[j]) as f32;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let labels: Vec<bool> = (0..n).map(|i| i >= n1).collect();
    let observed = energy_from_sums(pair_sums(&dist, n, &labels), n1, n2);
    let permuted = streams.run(config.permutations, |_, rng| {
        let mut l = labels.clone();
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            l.swap(i, j);
        }
        energy_from_sums(pair_sums(&dist, n, &l), n1, n2)
    });
    let exceed = permuted.iter().filter(|e| **e >= observed).count();
    let p_value = (1 + exceed) as f64 / (1 + config.permutations) as f64;

    let coordinate = |pts: &[MixturePoint], k: usize| -> Vec<f64> {
        pts.iter()
            .map(|p| match k {
                0 => p.x1[0],
                1 => p.x1[1],
                2 => p.x2[0],
                3 => p.x2[1],
                4 => p.state1 as f64,
                _ => p.state2 as f64,
            })
            .collect()
    };
    let names = ["x1_1", "x1_2", "x2_1", "x2_2", "state1", "state2"];
    let dims_used: Vec<usize> = if simulated.iter().chain(reference).all(|p| p.x1[1] == 0.0 && p.x2[1] == 0.0) {
        vec![0, 2, 4, 5]
    } else {
        (0..6).collect()
    };
    let marginals = dims_used
        .into_iter()
        .map(|k| {
            let (x, y) = (coordinate(simulated, k), coordinate(reference, k));
            MarginalKs {
                name: names[k].into(),
                ks: ks_two_sample(&x, &y),
                p_value: ks_two_sample_p(&x, &y),
            }
        })
        .collect();
    let energies = |pts: &[MixturePoint]| -> (Vec<f64>, Vec<f64>) {
        pts.iter()
            .map(|p| (p.x1[0].powi(2) + p.x1[1].powi(2), p.x2[0].powi(2) + p.x2[1].powi(2)))
            .unzip()
    };
    let (s1, s2) = energies(simulated);
    let (r1, r2) = energies(reference);
    Ok(FitReport {
        energy_distance: observed,
        statistic: observed * (n1 * n2) as f64 / n as f64,
        p_value,
        permutations: config.permutations,
        n_sim: n1,
        n_ref: n2,
        marginals,
        energy_cov_sim: covariance(&s1, &s2),
        energy_cov_ref: covariance(&r1, &r2),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    pub lambda: f64,
    pub t: f64,
    pub trials: usize,
    /// KS of each coordinate of `η_t/√(λtσ_ll)` against `N(0, 1)`.
    pub coordinate_ks: Vec<f64>,
    /// KS of `η_tᵀ(λtσ)⁻¹η_t` against `χ²_d`.
    pub radial_ks: f64,
    /// Largest CDF gap between the internal state and `ρ`.
    pub state_ks: f64,
}

/// Single-walk central limit check at rate `λ`.
pub fn clt_check(model: &RwisModel, lambda: f64, t: f64, trials: usize, streams: &Streams) -> Result<CltReport> {
    model.require_valid()?;
    let sigma = model.asymptotic_covariance()?;
    let rho: Vec<f64> = model.stationary()?.iter().copied().collect();
    let d = model.dim();
    let sampler = StepSampler::new(model);
    let ends = streams.run(trials, |_, rng| single_walk(&sampler, lambda, t, 0, rng));
    let cov = &sigma * (lambda * t);
    let inv = cov
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("σ is singular".into()))?;
    let coordinate_ks = (0..d)
        .map(|l| {
            let sd = cov[(l, l)].sqrt();
            let y: Vec<f64> = ends.iter().map(|e| e.0[l] as f64 / sd).collect();
            ks_one_sample(&y, normal_cdf)
        })
        .collect();
    let r2: Vec<f64> = ends
        .iter()
        .map(|e| {
            let v = DVector::from_fn(d, |i, _| e.0[i] as f64);
            (v.transpose() * &inv * &v)[(0, 0)]
        })
        .collect();
    let chi = ChiSquared::new(d as f64).expect("positive df");
    let radial_ks = ks_one_sample(&r2, |x| chi.cdf(x));
    let mut counts = vec![0usize; rho.len()];
    ends.iter().for_each(|e| counts[e.1] += 1);
    let (mut emp, mut theo, mut state_ks) = (0.0, 0.0, 0.0f64);
    for (c, r) in counts.iter().zip(&rho) {
        emp += *c as f64 / trials as f64;
        theo += r;
        state_ks = state_ks.max((emp - theo).abs());
    }
    Ok(CltReport {
        lambda,
        t,
        trials,
        coordinate_ks,
        radial_ks,
        state_ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{directional2d, simple1d, simple2d};
    use crate::stats::chi_square_gof;

    fn simple2d_uniform() -> MixtureLaw {
        MixtureLaw::new(&simple2d(), StationaryLaw::Uniform).unwrap()
    }

    #[test]
    fn atom_law_is_product_of_gaussians() {
        let law = MixtureLaw::new(&simple2d(), StationaryLaw::Atom(0.6)).unwrap();
        let p = MixturePoint {
            x1: [0.3, -0.2],
            state1: 0,
            x2: [0.1, 0.5],
            state2: 0,
        };
        // σ = I/2, so λσ = 0.3 I and √(1−λ²)σ = 0.4 I.
        let g = |x: [f64; 2], c: f64| (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * c)).exp() / (2.0 * std::f64::consts::PI * c);
        let expected = g(p.x1, 0.3) * g(p.x2, 0.4);
        assert!((law.density(&p).unwrap() / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_mixture_normalises() {
        // σ = I/2 makes the density radial in each block; integrate
        // (2πr₁)(2πr₂) h over r₁, r₂ ∈ [0, 6] with Gauss–Legendre panels.
        let law = simple2d_uniform();
        let (nodes, weights) = gauss_legendre_8();
        let panels = 24;
        let h = 6.0 / panels as f64;
        let mut radii = Vec::new();
        for k in 0..panels {
            for (x, w) in nodes.iter().zip(&weights) {
                radii.push((k as f64 * h + (x + 1.0) * h / 2.0, w * h / 2.0));
            }
        }
        let mut total = 0.0;
        for &(r1, w1) in &radii {
            for &(r2, w2) in &radii {
                let p = MixturePoint {
                    x1: [r1, 0.0],
                    state1: 0,
                    x2: [r2, 0.0],
                    state2: 0,
                };
                total += w1 * w2 * 4.0 * std::f64::consts::PI.powi(2) * r1 * r2 * law.density(&p).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
        let x = [
            -0.960_289_856_497_536_3,
            -0.796_666_477_413_626_7,
            -0.525_532_409_916_329,
            -0.183_434_642_495_649_8,
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        let w = [
            0.101_228_536_290_376_26,
            0.222_381_034_453_374_47,
            0.313_706_645_877_887_3,
            0.362_683_783_378_362,
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_47,
            0.101_228_536_290_376_26,
        ];
        (x, w)
    }

    #[test]
    fn sampler_matches_density_on_cells() {
        // One-dimensional positions keep the cell integrals two-dimensional.
        let law = MixtureLaw::new(&simple1d(), StationaryLaw::Uniform).unwrap();
        let edges = [-10.0, -1.2, -0.6, -0.25, 0.0, 0.25, 0.6, 1.2, 10.0];
        let (nodes, weights) = gauss_legendre_8();
        let cells = edges.len() - 1;
        let mut probs = Vec::new();
        for i in 0..cells {
            for j in 0..cells {
                let mut p = 0.0;
                // Split each cell into sub-panels for accuracy near the origin.
                let sub = 4;
                for si in 0..sub {
                    for sj in 0..sub {
                        let (a0, a1) = (edges[i], edges[i + 1]);
                        let (b0, b1) = (edges[j], edges[j + 1]);
                        let ha = (a1 - a0) / sub as f64;
                        let hb = (b1 - b0) / sub as f64;
                        for (x, wx) in nodes.iter().zip(&weights) {
                            for (y, wy) in nodes.iter().zip(&weights) {
                                let pt = MixturePoint {
                                    x1: [a0 + ha * (si as f64 + (x + 1.0) / 2.0), 0.0],
                                    state1: 0,
                                    x2: [b0 + hb * (sj as f64 + (y + 1.0) / 2.0), 0.0],
                                    state2: 0,
                                };
                                p += wx * wy * ha * hb / 4.0 * law.density(&pt).unwrap();
                            }
                        }
                    }
                }
                probs.push(p);
            }
        }
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
        let pts = sample_mixture(&law, 1_000_000, &Streams::new(1, "mx"));
        let mut counts = vec![0.0; cells * cells];
        let bin = |x: f64| edges.partition_point(|e| *e <= x).clamp(1, cells) - 1;
        for p in &pts {
            counts[bin(p.x1[0]) * cells + bin(p.x2[0])] += 1.0;
        }
        let chi = chi_square_gof(&counts, &probs, 5.0);
        assert!(chi.p_value > 0.001, "{chi:?}");
    }

    #[test]
    fn energy_test_accepts_same_law_and_rejects_other() {
        let law = simple2d_uniform();
        let s = Streams::new(2, "fit");
        let a = sample_mixture(&law, 600, &s.child("a"));
        let b = sample_mixture(&law, 600, &s.child("b"));
        let cfg = FitConfig {
            permutations: 99,
            cap: 600,
        };
        let same = two_sample_fit(&a, &b, &law.grid(), cfg, &s.child("p")).unwrap();
        assert!(same.p_value > 0.01, "{same:?}");
        let other = MixtureLaw::new(&simple2d(), StationaryLaw::Atom(0.99)).unwrap();
        let c = sample_mixture(&other, 600, &s.child("c"));
        let diff = two_sample_fit(&a, &c, &law.grid(), cfg, &s.child("p")).unwrap();
        assert!(diff.p_value <= 0.02, "{diff:?}");
    }

    #[test]
    fn mixture_energies_are_negatively_correlated() {
        let law = simple2d_uniform();
        let pts = sample_mixture(&law, 50_000, &Streams::new(3, "cov"));
        let (e1, e2): (Vec<f64>, Vec<f64>) = pts
            .iter()
            .map(|p| (p.x1[0].powi(2) + p.x1[1].powi(2), p.x2[0].powi(2) + p.x2[1].powi(2)))
            .unzip();
        let c = covariance(&e1, &e2);
        assert!(c.value + 3.0 * c.se < 0.0, "{c:?}");
    }

    #[test]
    fn clt_for_directional_walk() {
        let r = clt_check(&directional2d(), 0.6, 2000.0, 20_000, &Streams::new(4, "clt")).unwrap();
        assert!(r.radial_ks < 0.02, "{r:?}");
        assert!(r.state_ks < 0.02, "{r:?}");
    }
}
