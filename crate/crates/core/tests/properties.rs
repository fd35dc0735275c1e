//! Cross-module properties at desk scale.

use rwis::collision::{
    stationary_energy, transient_mixture, CollisionKernel, EnergyLaw, EnergySplit, StationaryLaw, StationaryMethod,
};
use rwis::duet::{difference_first_return, simulate_duet, single_walk, DuetConfig, DuetStart};
use rwis::mixture::{sample_mixture, two_sample_fit, FitConfig, MixtureLaw, MixturePoint};
use rwis::model::{directional2d, persistent1d, simple2d, StepSampler};
use rwis::renewal::{sample_path, ParamChain, Stmrp, TailFamily};
use rwis::rng::Streams;
use rwis::stats::{correlation, covariance, ks_one_sample, ks_two_sample_p, mean_estimate};
use rwis::survival::KaplanMeier;

#[test]
fn sigma_matches_monte_carlo_covariance() {
    for (model, seed) in [(persistent1d(0.7).unwrap(), 1), (directional2d(), 2)] {
        let sigma = model.asymptotic_covariance().unwrap();
        let sampler = StepSampler::new(&model);
        let lt = 2000.0;
        let ends = Streams::new(seed, "sigma").run(40_000, |_, rng| single_walk(&sampler, 1.0, lt, 0, rng).0);
        let d = model.dim();
        for l in 0..d {
            for m in 0..d {
                let x: Vec<f64> = ends.iter().map(|e| e[l] as f64 / lt.sqrt()).collect();
                let y: Vec<f64> = ends.iter().map(|e| e[m] as f64 / lt.sqrt()).collect();
                let c = covariance(&x, &y);
                assert!(c.z_score(sigma[(l, m)]) < 3.5, "{l}{m}: {c:?} vs {}", sigma[(l, m)]);
            }
        }
    }
}

#[test]
fn transient_mixture_near_one_approaches_stationary_law() {
    let m = transient_mixture(&EnergyLaw::Uniform, 0.999, 0.2, 20_000, &Streams::new(3, "tm")).unwrap();
    assert!((m.total_mass() - 1.0).abs() <= 1e-9);
    let ks = m.values.iter().map(|x| (m.cdf(*x) - x * x).abs()).fold(0.0, f64::max);
    assert!(ks <= 0.05, "{ks}");
}

#[test]
fn sticky_long_runs_agree_and_are_invariant() {
    let law = EnergyLaw::Sticky { kappa: 4.0 };
    let est = stationary_energy(&law, StationaryMethod::Longrun, 1_000_000, (0.1, 0.9), &Streams::new(4, "st")).unwrap();
    let diag = est.diagnostic.unwrap();
    assert!(diag.ks <= 0.02 && !diag.flagged, "{diag:?}");
    let mut rng = Streams::new(5, "push").rng(0);
    let pushed: Vec<f64> = (0..100_000).map(|_| law.sample(est.law.sample(&mut rng), &mut rng)).collect();
    assert!(ks_one_sample(&pushed, |x| est.law.cdf(x)) <= 0.01);
}

#[test]
fn constant_type_scales_time() {
    // With a frozen type λ the waits are W/λ, so N_t at type λ has the law
    // of N_{λt} at type 1.
    let s = Streams::new(6, "scale");
    let tail = TailFamily::Pareto { beta: 1.5 };
    let counts = |lambda: f64, t: f64, k: &str| -> Vec<f64> {
        let p = Stmrp::new(tail, ParamChain::constant(lambda).unwrap(), lambda).unwrap();
        s.child(k).run(20_000, |_, rng| sample_path(&p, t, rng).unwrap().n_t as f64)
    };
    let (a, b) = (counts(0.1, 1e4, "a"), counts(1.0, 1e3, "b"));
    assert!(ks_two_sample_p(&a, &b) > 0.01);
}

#[test]
fn renewal_counts_are_sandwiched() {
    let t = 1e4;
    let tail = TailFamily::Pareto { beta: 1.5 };
    let count = |chain: ParamChain, l0: f64, k: &str| {
        let p = Stmrp::new(tail, chain, l0).unwrap();
        let n: Vec<f64> = Streams::new(7, k).run(20_000, |_, rng| sample_path(&p, t, rng).unwrap().n_t as f64);
        mean_estimate(&n)
    };
    let fast = count(ParamChain::constant(1.0).unwrap(), 1.0, "b");
    let mixed = count(ParamChain::new(EnergyLaw::Uniform, 0.1, 1.0).unwrap(), 0.5, "m");
    let slow = count(ParamChain::constant(0.1).unwrap(), 0.1, "a");
    let slack = |x: &rwis::stats::Estimate, y: &rwis::stats::Estimate| 3.0 * (x.se * x.se + y.se * y.se).sqrt();
    assert!(fast.value + slack(&fast, &mixed) >= mixed.value, "{fast:?} {mixed:?}");
    assert!(mixed.value + slack(&mixed, &slow) >= slow.value, "{mixed:?} {slow:?}");
}

#[test]
fn rate_change_is_a_time_change() {
    let model = directional2d();
    let sampler = StepSampler::new(&model);
    let s = Streams::new(8, "time");
    let slow: Vec<f64> = s.child("a").run(20_000, |_, rng| single_walk(&sampler, 0.5, 400.0, 1, rng).0[0] as f64);
    let fast: Vec<f64> = s.child("b").run(20_000, |_, rng| single_walk(&sampler, 1.0, 200.0, 1, rng).0[0] as f64);
    assert!(ks_two_sample_p(&slow, &fast) > 0.01);
}

fn energies(points: &[MixturePoint]) -> (Vec<f64>, Vec<f64>) {
    points
        .iter()
        .map(|p| (p.x1[0].powi(2) + p.x1[1].powi(2), p.x2[0].powi(2) + p.x2[1].powi(2)))
        .unzip()
}

#[test]
fn mixture_covariance_identity_and_anticorrelation() {
    let law = MixtureLaw::new(&simple2d(), StationaryLaw::Uniform).unwrap();
    let pts = sample_mixture(&law, 1_000_000, &Streams::new(9, "mix"));
    let x: Vec<f64> = pts.iter().map(|p| p.x1[0]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.x2[0]).collect();
    // σ = I/2 and E λ = E √(1 − λ²) = 2/3 under the uniform-energy law.
    assert!(covariance(&x, &x).z_score(1.0 / 3.0) < 3.0);
    assert!(covariance(&y, &y).z_score(1.0 / 3.0) < 3.0);
    let (e1, e2) = energies(&pts);
    let c = covariance(&e1, &e2);
    assert!(c.interval(0.99).1 < 0.0, "{c:?}");
    // Each |x_i|² has conditional mean equal to its rate, so the covariance
    // is Cov(λ, √(1 − λ²)) = π/8 − 4/9.
    assert!(c.z_score(std::f64::consts::PI / 8.0 - 4.0 / 9.0) < 3.5, "{c:?}");
}

#[test]
fn uniform_mixture_is_exchangeable() {
    let law = MixtureLaw::new(&directional2d(), StationaryLaw::Uniform).unwrap();
    let s = Streams::new(10, "swap");
    let a = sample_mixture(&law, 800, &s.child("a"));
    let b: Vec<MixturePoint> = sample_mixture(&law, 800, &s.child("b"))
        .into_iter()
        .map(|p| MixturePoint {
            x1: p.x2,
            state1: p.state2,
            x2: p.x1,
            state2: p.state1,
        })
        .collect();
    let cfg = FitConfig {
        permutations: 99,
        cap: 800,
    };
    assert!(two_sample_fit(&a, &b, &law.grid(), cfg, &s.child("p")).unwrap().p_value > 0.01);
}

#[test]
fn free_particles_are_uncorrelated() {
    let model = directional2d();
    let start = DuetStart {
        positions: [[0, 0]; 2],
        states: None,
        lambda0: 0.8,
    };
    let ends = Streams::new(11, "free").run(10_000, |_, rng| {
        simulate_duet(&model, &CollisionKernel::non_interacting(), &start, 100.0, DuetConfig::default(), rng)
            .unwrap()
            .state
            .positions
    });
    let a: Vec<f64> = ends.iter().map(|p| p[0][0] as f64).collect();
    let b: Vec<f64> = ends.iter().map(|p| p[1][0] as f64).collect();
    let r = correlation(&a, &b);
    assert!(r.value.abs() < 3.0 * r.se, "{r:?}");
}

#[test]
fn collision_energies_stay_on_the_circle() {
    let model = simple2d();
    let mut rng = Streams::new(12, "circle").rng(0);
    let kernel = CollisionKernel::new(EnergyLaw::Sticky { kappa: 2.0 });
    for _ in 0..200 {
        let s = simulate_duet(&model, &kernel, &DuetStart::together(0.3), 500.0, DuetConfig::default(), &mut rng).unwrap();
        let split = EnergySplit::new(s.state.lambda).unwrap();
        let r = split.total_rate();
        assert!((1.0..=2f64.sqrt() + 1e-15).contains(&r));
    }
}

#[test]
fn one_dimensional_pairs_meet_quickly() {
    let kernel = CollisionKernel::new(EnergyLaw::Identity);
    let split = EnergySplit::new(0.6).unwrap();
    let s = Streams::new(13, "ret");
    let flat = difference_first_return(&persistent1d(0.7).unwrap(), split, &kernel, 1e4, 4000, &s).unwrap();
    let plane = difference_first_return(&simple2d(), split, &kernel, 1e4, 4000, &s).unwrap();
    let (a, b) = (KaplanMeier::fit(&flat), KaplanMeier::fit(&plane));
    assert!(a.survival(1e4) < 0.05 && b.survival(1e4) > 0.15, "{} {}", a.survival(1e4), b.survival(1e4));
}

#[test]
fn meeting_times_rescale_with_the_total_rate() {
    // For the simple walk the embedded difference chain does not depend on
    // the split, so λ̃·τ has the same law for every split.
    let kernel = CollisionKernel::new(EnergyLaw::Identity);
    let s = Streams::new(14, "resc");
    let scaled = |lambda: f64, k: &str| -> Vec<f64> {
        let split = EnergySplit::new(lambda).unwrap();
        difference_first_return(&simple2d(), split, &kernel, 1e3, 5000, &s.child(k))
            .unwrap()
            .iter()
            .map(|o| if o.event { o.time * split.total_rate() } else { f64::INFINITY })
            .collect()
    };
    let (a, b) = (scaled(0.6, "a"), scaled(0.95, "b"));
    let cap = 1e3;
    let clip = |v: Vec<f64>| v.into_iter().map(|x| x.min(cap)).collect::<Vec<_>>();
    assert!(ks_two_sample_p(&clip(a), &clip(b)) > 0.01);
}
