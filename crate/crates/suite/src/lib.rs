//! Acceptance criteria for the rwis toolkit, each with its tolerances
//! pinned here. The `acceptance` test target runs them and prints one
//! PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};

use rwis::collision::{CollisionKernel, EnergyLaw, StationaryLaw};
use rwis::duet::{last_collision_ensemble, single_walk, DuetConfig, DuetStart, EnsembleRow};
use rwis::mixture::{two_sample_fit, FitConfig, MixtureLaw, MixturePoint};
use rwis::model::{directional2d, persistent1d, simple2d, RwisModel, StepSampler};
use rwis::renewal::{
    age_residual_law, current_type_law, order_statistic_dominance, renewal_function, tauberian_checks, ParamChain,
    Stmrp, TailFamily,
};
use rwis::rng::Streams;
use rwis::spectral::{first_return_tail, fit_rate, llt_error, point_mass};
use rwis::stats::{covariance, ks_one_sample, ks_two_sample, median};

const SEED: u64 = 20_240_917;

// 1: σ against Monte Carlo.
const C1_LAMBDA_T: f64 = 1e4;
const C1_TRIALS: usize = 200_000;
const C1_MAX_Z: f64 = 3.0;

// 2: local limit rate.
const C2_TIMES_1D: [f64; 3] = [100.0, 400.0, 1600.0];
const C2_SLOPE_1D: (f64, f64) = (-1.0, 0.3);
const C2_TIMES_2D: [f64; 3] = [25.0, 50.0, 100.0];
const C2_SLOPE_2D: (f64, f64) = (-1.5, 0.4);

// 3: first-return tail constant.
const C3_TIMES: [f64; 4] = [1e3, 1e4, 1e5, 1e6];
const C3_TRIALS: usize = 100_000;
const C3_MAX_INVERSIONS: usize = 1;
const C3_REL_TOL: f64 = 0.25;

// 4: age dominance.
const C4_TIMES: [f64; 4] = [1e3, 1e6, 1e9, 1e12];
const C4_TRIALS: usize = 10_000;
const C4_MIN_FINAL: f64 = 0.7;
const C4_CONTROL_T: f64 = 1e6;
// The light-tailed control renews about t times per path.
const C4_CONTROL_TRIALS: usize = 1_000;
const C4_CONTROL_MAX: f64 = 0.1;

// 5: current-type law.
const C5_T: f64 = 1e8;
const C5_RANGE: (f64, f64) = (0.1, 1.0);
const C5_TRIALS: usize = 10_000;
const C5_MAX_KS: f64 = 0.05;

// 6: order statistics.
const C6_N: usize = 10_000;
const C6_TRIALS: usize = 1_000;
const C6_MAX_GAP: f64 = 0.2;
const C6_MAX_SUM: f64 = 1.1;
const C6_CONTROL_MIN_GAP: f64 = 0.5;

// 7: Tauberian numerics.
const C7_Z: f64 = 1e-6;
const C7_LAPLACE: (f64, f64) = (0.9, 1.1);
const C7_T: f64 = 1e9;
const C7_TRIALS: usize = 10_000;
const C7_RENEWAL: (f64, f64) = (0.8, 1.2);

// 8: two-particle limit.
const C8_LAMBDA0: f64 = 0.6;
const C8_SEPARATION: i64 = 3;
// The energy test subsamples at most `cap` points per side; below about
// 10⁴ points it cannot separate the mixture from the product null.
const C8_SMOKE: Scale = Scale {
    trials: 2_000,
    ladder: [1e4, 1e5, 1e6],
    cap: 2_000,
};
const C8_FULL: Scale = Scale {
    trials: 10_000,
    ladder: [1e5, 1e6, 1e7],
    cap: 10_000,
};
const C8_CI_LEVEL: f64 = 0.99;
const C8_ALPHA: f64 = 0.01;
const C8_PERMUTATIONS: usize = 199;
const C8_REFERENCE: usize = 10_000;

struct Scale {
    trials: usize,
    ladder: [f64; 3],
    cap: usize,
}

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(x: f64, (centre, tol): (f64, f64)) -> bool {
    (x - centre).abs() <= tol
}

fn criterion1() -> Verdict {
    let models: [(&str, RwisModel); 3] = [
        ("simple2d", simple2d()),
        ("persistent1d", persistent1d(0.7).unwrap()),
        ("directional2d", directional2d()),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, model) in models {
        let sigma = model.asymptotic_covariance().unwrap();
        let sampler = StepSampler::new(&model);
        let ends = Streams::new(SEED, &format!("c1-{name}")).run(C1_TRIALS, |_, rng| {
            single_walk(&sampler, 1.0, C1_LAMBDA_T, 0, rng).0
        });
        let d = model.dim();
        let scaled: Vec<Vec<f64>> = (0..d)
            .map(|l| ends.iter().map(|e| e[l] as f64 / C1_LAMBDA_T.sqrt()).collect())
            .collect();
        let mut z_max = 0.0f64;
        for l in 0..d {
            for m in l..d {
                z_max = z_max.max(covariance(&scaled[l], &scaled[m]).z_score(sigma[(l, m)]));
            }
        }
        worst = worst.max(z_max);
        parts.push(format!("{name} max|z|={z_max:.2}"));
    }
    verdict(worst <= C1_MAX_Z, format!("{} (limit {C1_MAX_Z})", parts.join(", ")))
}

fn slope(model: &RwisModel, times: &[f64], init: &nalgebra::DVector<f64>) -> f64 {
    let points: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| (t * model.rate(), llt_error(model, t, init).unwrap().error_sum))
        .collect();
    fit_rate(&points).slope
}

fn criterion2() -> Verdict {
    let p = persistent1d(0.7).unwrap();
    let s1 = slope(&p, &C2_TIMES_1D, &p.stationary().unwrap());
    let s1_fixed = slope(&p, &C2_TIMES_1D, &point_mass(p.states(), 0));
    let q = simple2d();
    let s2 = slope(&q, &C2_TIMES_2D, &q.stationary().unwrap());
    let (ok1, ok2) = (within(s1, C2_SLOPE_1D), within(s2, C2_SLOPE_2D));
    verdict(
        ok1 && ok2,
        format!(
            "d=1 slope {s1:.3} [{}] (fixed start {s1_fixed:.3}), d=2 slope {s2:.3} [{}]; targets {}±{} and {}±{}",
            pass_word(ok1),
            pass_word(ok2),
            C2_SLOPE_1D.0,
            C2_SLOPE_1D.1,
            C2_SLOPE_2D.0,
            C2_SLOPE_2D.1
        ),
    )
}

fn criterion3() -> Verdict {
    let model = simple2d();
    let t_max = C3_TIMES[C3_TIMES.len() - 1];
    let r = first_return_tail(&model, &C3_TIMES, C3_TRIALS, t_max, &Streams::new(SEED, "c3")).unwrap();
    let target = r.constant;
    // A step away from the constant counts as an inversion only when it
    // exceeds the combined half-widths of the two 95% intervals.
    let half = |row: &rwis::spectral::ReturnTailRow| (row.ci_hi - row.ci_lo) / 2.0 * row.t.ln();
    let inversions = r
        .rows
        .windows(2)
        .filter(|w| {
            let (a, b) = (&w[0], &w[1]);
            (b.tail_est_times_log - target).abs() - (a.tail_est_times_log - target).abs() > half(a) + half(b)
        })
        .count();
    let last = r.rows.last().unwrap().tail_est_times_log;
    let rel = (last - target).abs() / target;
    let values: Vec<String> = r.rows.iter().map(|row| format!("{:.3}", row.tail_est_times_log)).collect();
    verdict(
        inversions <= C3_MAX_INVERSIONS && rel <= C3_REL_TOL,
        format!(
            "(1-F)log t = [{}] vs {target:.4}; inversions {inversions} (max {C3_MAX_INVERSIONS}), rel. error at 1e6 {rel:.3} (max {C3_REL_TOL})",
            values.join(", ")
        ),
    )
}

fn criterion4() -> Verdict {
    let slow = Stmrp::new(TailFamily::SlowLog, ParamChain::constant(1.0).unwrap(), 1.0).unwrap();
    let rows = age_residual_law(&slow, &C4_TIMES, C4_TRIALS, &Streams::new(SEED, "c4")).unwrap();
    let medians: Vec<f64> = rows.iter().map(|r| r.age_median).collect();
    let increasing = medians.windows(2).all(|w| w[1] > w[0]);
    let fin = *medians.last().unwrap();
    let exp = Stmrp::new(TailFamily::Exponential, ParamChain::constant(1.0).unwrap(), 1.0).unwrap();
    let control = age_residual_law(&exp, &[C4_CONTROL_T], C4_CONTROL_TRIALS, &Streams::new(SEED, "c4-control")).unwrap();
    let c = control[0].age_median;
    let shown: Vec<String> = medians.iter().map(|m| format!("{m:.15}")).collect();
    verdict(
        increasing && fin > C4_MIN_FINAL && c < C4_CONTROL_MAX,
        format!(
            "median Y/t = [{}], strictly increasing {increasing}, final > {C4_MIN_FINAL}; exponential control {c:.2e} (< {C4_CONTROL_MAX})",
            shown.join(", ")
        ),
    )
}

fn criterion5() -> Verdict {
    let chain = ParamChain::new(EnergyLaw::Uniform, C5_RANGE.0, C5_RANGE.1).unwrap();
    let law = |lambda0: f64, key: &str| {
        let p = Stmrp::new(TailFamily::SlowLog, chain.clone(), lambda0).unwrap();
        current_type_law(&p, C5_T, C5_TRIALS, &Streams::new(SEED, key)).unwrap()
    };
    let (a, b) = (law(C5_RANGE.0, "c5-a"), law(C5_RANGE.1, "c5-b"));
    let (ka, kb) = (a.ks_to_stationary.unwrap(), b.ks_to_stationary.unwrap());
    let between = ks_two_sample(&a.samples, &b.samples);
    verdict(
        ka <= C5_MAX_KS && kb <= C5_MAX_KS && between <= C5_MAX_KS,
        format!(
            "KS to stationary {ka:.4} (from a), {kb:.4} (from b); between starts {between:.4}; no-renewal share {:.4}/{:.4}; limit {C5_MAX_KS}",
            a.no_renewal_fraction, b.no_renewal_fraction
        ),
    )
}

fn criterion6() -> Verdict {
    let slow = order_statistic_dominance(TailFamily::SlowLog, C6_N, C6_TRIALS, &Streams::new(SEED, "c6")).unwrap();
    let exp =
        order_statistic_dominance(TailFamily::Exponential, C6_N, C6_TRIALS, &Streams::new(SEED, "c6-control")).unwrap();
    let (gap, sum) = (median(&slow.gap_ratios), median(&slow.sum_ratios));
    let control = median(&exp.gap_ratios);
    verdict(
        gap < C6_MAX_GAP && sum < C6_MAX_SUM && control > C6_CONTROL_MIN_GAP,
        format!(
            "median gap {gap:.2e} (< {C6_MAX_GAP}), median sum {sum:.4} (< {C6_MAX_SUM}); exponential gap {control:.4} (> {C6_CONTROL_MIN_GAP})"
        ),
    )
}

fn criterion7() -> Verdict {
    let laplace = tauberian_checks(TailFamily::SlowLog, &[C7_Z]).unwrap()[0].ratio;
    let u = renewal_function(TailFamily::SlowLog, C7_T, C7_TRIALS, &Streams::new(SEED, "c7")).unwrap();
    let in_range = |x: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&x);
    verdict(
        in_range(laplace, C7_LAPLACE) && in_range(u.scaled, C7_RENEWAL),
        format!(
            "(1-phi)log(e+1/z) = {laplace:.4} in {C7_LAPLACE:?}; U(t)(1-F(t)) = {:.4} ± {:.4} in {C7_RENEWAL:?}",
            u.scaled, u.scaled_se
        ),
    )
}

fn points(rows: &[EnsembleRow]) -> Vec<MixturePoint> {
    rows.iter()
        .map(|r| MixturePoint {
            x1: r.x1,
            state1: r.state1,
            x2: r.x2,
            state2: r.state2,
        })
        .collect()
}

fn energies(points: &[MixturePoint]) -> (Vec<f64>, Vec<f64>) {
    points
        .iter()
        .map(|p| (p.x1[0].powi(2) + p.x1[1].powi(2), p.x2[0].powi(2) + p.x2[1].powi(2)))
        .unzip()
}

fn criterion8(full: bool) -> Verdict {
    let scale = if full { C8_FULL } else { C8_SMOKE };
    let model = simple2d();
    let kernel = CollisionKernel::new(EnergyLaw::Uniform);
    let stationary = StationaryLaw::Uniform;
    let top = scale.ladder[2];
    let config = DuetConfig::default();

    // (a) and (b): particles start together, top of the ladder.
    let together = last_collision_ensemble(
        &model,
        &kernel,
        &DuetStart::together(C8_LAMBDA0),
        top,
        scale.trials,
        config,
        &Streams::new(SEED, "c8-together"),
    )
    .unwrap();
    let sim = points(&together.rows);
    let (e1, e2) = energies(&sim);
    let cov = covariance(&e1, &e2);
    let ci = cov.interval(C8_CI_LEVEL);
    let mixture = MixtureLaw::new(&model, stationary.clone()).unwrap();
    let reference = Streams::new(SEED, "c8-reference").run(C8_REFERENCE, |_, rng| mixture.sample(rng));
    let (r1, r2) = energies(&reference);
    let cov_ref = covariance(&r1, &r2);
    let ok_a = ci.1 < 0.0 && cov_ref.value < 0.0;

    let fit = FitConfig {
        permutations: C8_PERMUTATIONS,
        cap: scale.cap,
    };
    let p_mix = two_sample_fit(&sim, &reference, &mixture.grid(), fit, &Streams::new(SEED, "c8-perm"))
        .unwrap()
        .p_value;
    let product = MixtureLaw::new(&model, StationaryLaw::Atom(stationary.median())).unwrap();
    let null = Streams::new(SEED, "c8-product").run(C8_REFERENCE, |_, rng| product.sample(rng));
    let p_prod = two_sample_fit(&sim, &null, &product.grid(), fit, &Streams::new(SEED, "c8-perm-product"))
        .unwrap()
        .p_value;
    let ok_b = p_mix > C8_ALPHA && p_prod < C8_ALPHA;

    // (c): separated start along the ladder. Medians are taken over trials
    // with at least one collision; KS includes the others at λ₀.
    let start = DuetStart {
        positions: [[0, 0], [C8_SEPARATION, 0]],
        states: None,
        lambda0: C8_LAMBDA0,
    };
    let mut ladder = Vec::new();
    for (i, &events) in scale.ladder.iter().enumerate() {
        let e = last_collision_ensemble(
            &model,
            &kernel,
            &start,
            events,
            scale.trials,
            config,
            &Streams::new(SEED, &format!("c8-ladder-{i}")),
        )
        .unwrap();
        let tau: Vec<f64> = e.rows.iter().filter_map(|r| r.tau_over_t).collect();
        let site: Vec<f64> = e.rows.iter().filter_map(|r| r.site_over_sqrt_t).collect();
        let ks = ks_one_sample(&e.lambda_out(), |x| stationary.cdf(x));
        ladder.push([median(&tau), median(&site), ks, e.zero_collision_fraction()]);
    }
    let ok_c = (0..3).all(|k| ladder.windows(2).all(|w| w[1][k] < w[0][k]));
    let rungs: Vec<String> = ladder
        .iter()
        .zip(scale.ladder)
        .map(|(r, ev)| format!("{ev:.0e}: tau/t {:.4} site {:.4} KS {:.4} zero {:.3}", r[0], r[1], r[2], r[3]))
        .collect();

    // The reduced run is required to pass (a) and (c); (b) needs full scale.
    let pass = ok_a && ok_c && (ok_b || !full);
    verdict(
        pass,
        format!(
            "{} scale, {} trials. (a) [{}] cov {:.4}, {:.0}% CI [{:.4}, {:.4}], mixture cov {:.4}; \
             (b) [{}{}] p(mixture) {p_mix:.3} > {C8_ALPHA}, p(product at {:.3}) {p_prod:.3} < {C8_ALPHA}; \
             (c) [{}] {}",
            if full { "full" } else { "smoke" },
            scale.trials,
            pass_word(ok_a),
            cov.value,
            C8_CI_LEVEL * 100.0,
            ci.0,
            ci.1,
            cov_ref.value,
            pass_word(ok_b),
            if full { "" } else { ", not required at smoke scale" },
            stationary.median(),
            pass_word(ok_c),
            rungs.join("; ")
        ),
    )
}

/// Runs the harness in-process with a fixed seed and one worker.
fn rwis_run(dir: &Path, args: &[&str]) {
    let _ = std::fs::remove_dir_all(dir);
    let mut argv = vec!["rwis"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--seed", "17", "--workers", "1", "--out", dir.to_str().unwrap()]);
    assert_eq!(rwis_cli::main_with(argv), 0, "rwis {args:?} failed");
}

fn criterion9(root: &Path) -> Verdict {
    let runs: [(&[&str], &str); 3] = [
        (&["simulate-duet", "--t", "2000", "--trials", "300"], "duet.csv"),
        (&["renewal", "--trials", "500", "--times", "1e3,1e6"], "renewal.csv"),
        (&["return-tail", "--trials", "500", "--times", "10,100,1000"], "return_tail.csv"),
    ];
    let mut same = true;
    let mut names = Vec::new();
    for (args, file) in runs {
        let read = |tag: &str| {
            let dir = root.join(format!("{}-{tag}", args[0]));
            rwis_run(&dir, args);
            std::fs::read(dir.join(file)).unwrap()
        };
        let (a, b) = (read("a"), read("b"));
        same &= a == b && !a.is_empty();
        names.push(format!("{file} ({} bytes)", a.len()));
    }
    verdict(same, format!("two runs each, seed 17, workers 1: {} byte-identical {same}", names.join(", ")))
}

pub fn pass_word(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub run: Box<dyn Fn() -> Verdict>,
}

/// All criteria. `full` selects the full-scale two-particle run; `scratch`
/// receives the output directories of the determinism check.
pub fn criteria(full: bool, scratch: PathBuf) -> Vec<Criterion> {
    let c = |id, name, run: Box<dyn Fn() -> Verdict>| Criterion { id, name, run };
    vec![
        c(1, "sigma vs Monte Carlo", Box::new(criterion1)),
        c(2, "local limit rate", Box::new(criterion2)),
        c(3, "first-return tail constant", Box::new(criterion3)),
        c(4, "age dominance", Box::new(criterion4)),
        c(5, "current-type convergence", Box::new(criterion5)),
        c(6, "order-statistic dominance", Box::new(criterion6)),
        c(7, "Tauberian numerics", Box::new(criterion7)),
        c(8, "two-particle limit", Box::new(move || criterion8(full))),
        c(9, "determinism", Box::new(move || criterion9(&scratch))),
    ]
}
