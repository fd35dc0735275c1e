//! Subcommand pipelines.

use std::path::Path;

use nalgebra::DVector;
use rwis::collision::{
    stationary_energy, CollisionKernel, EnergyLaw, EnergySplit, StationaryLaw, StationaryMethod, TabulatedKernel,
};
use rwis::duet::{last_collision_ensemble, single_walk, DuetConfig, DuetStart};
use rwis::mixture::{two_sample_fit, FitConfig, MixtureLaw, MixturePoint};
use rwis::model::{builtin, load_model, RwisModel, StepSampler, BUILTIN_NAMES};
use rwis::renewal::{
    age_residual_law, current_type_law, order_statistic_dominance, renewal_function, tauberian_checks, ParamChain,
    Stmrp, TailFamily,
};
use rwis::rng::Streams;
use rwis::spectral::{fit_rate, first_return_tail, llt_error, point_mass};
use rwis::stats::{covariance, ks_one_sample, median, quantile_ci_sorted, sorted};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::OutputDir;

type Res = Result<(), CliError>;

pub fn dispatch(name: &str, cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    match name {
        "validate" => validate(cfg, out),
        "sigma" => sigma(cfg, out),
        "llt-check" => llt_check(cfg, out),
        "return-tail" => return_tail(cfg, out),
        "simulate-duet" => simulate_duet(cfg, out),
        "renewal" => renewal(cfg, out),
        "mixture-test" => mixture_test(cfg, out),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

pub fn model(cfg: &ExperimentConfig) -> Result<RwisModel, CliError> {
    if BUILTIN_NAMES.contains(&cfg.model.as_str()) {
        Ok(builtin(&cfg.model)?)
    } else {
        Ok(load_model(Path::new(&cfg.model))?)
    }
}

pub fn energy_law(name: &str, kappa: f64, table: Option<&Path>) -> Result<EnergyLaw, CliError> {
    Ok(match name {
        "uniform" => EnergyLaw::Uniform,
        "sticky" => EnergyLaw::Sticky { kappa },
        "swap" => EnergyLaw::Swap,
        "identity" => EnergyLaw::Identity,
        "tabulated" => {
            let path = table.ok_or_else(|| CliError::Usage("tabulated kernel needs kernel.table".into()))?;
            EnergyLaw::Tabulated(TabulatedKernel::from_csv(path)?)
        }
        other => return Err(CliError::Usage(format!("unknown energy kernel {other}"))),
    })
}

fn kernel(cfg: &ExperimentConfig) -> Result<CollisionKernel, CliError> {
    let k = &cfg.kernel;
    Ok(CollisionKernel {
        energy: energy_law(&k.energy, k.kappa, k.table.as_deref())?,
        direction: k.direction,
        displacement: k.displacement,
    })
}

fn streams(cfg: &ExperimentConfig, out: &mut OutputDir, name: &str, count: usize) -> Streams {
    let s = Streams::new(cfg.seed, name);
    out.stream(&s, name, count);
    s
}

#[derive(Serialize)]
struct ConditionRow<'a> {
    condition: &'a str,
    passed: bool,
    detail: &'a str,
}

fn validate(cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    let report = model(cfg)?.validate();
    let rows: Vec<_> = report
        .conditions
        .iter()
        .map(|c| ConditionRow {
            condition: c.name,
            passed: c.passed,
            detail: &c.detail,
        })
        .collect();
    out.csv("validate.csv", &rows)?;
    out.json("validate.json", &report)?;
    let failed: Vec<_> = report.conditions.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ValidationFailed(failed.join(", ")))
    }
}

#[derive(Serialize)]
struct SigmaRow {
    l: usize,
    m: usize,
    sigma: f64,
    mc_cov: Option<f64>,
    mc_se: Option<f64>,
}

fn sigma(cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    let m = model(cfg)?;
    m.require_valid()?;
    let moments = m.moments()?;
    let d = m.dim();
    let trials = cfg.sigma.trials;
    let lt = cfg.sigma.lambda_t;
    let mc = if trials > 1 {
        let s = streams(cfg, out, "sigma", trials);
        let sampler = StepSampler::new(&m);
        let ends = s.run(trials, |_, rng| single_walk(&sampler, 1.0, lt, 0, rng).0);
        let scaled: Vec<Vec<f64>> = (0..d)
            .map(|l| ends.iter().map(|e| e[l] as f64 / lt.sqrt()).collect())
            .collect();
        Some(scaled)
    } else {
        None
    };
    let mut rows = Vec::new();
    for l in 0..d {
        for k in 0..d {
            let est = mc.as_ref().map(|x| covariance(&x[l], &x[k]));
            rows.push(SigmaRow {
                l,
                m: k,
                sigma: moments.sigma[(l, k)],
                mc_cov: est.map(|e| e.value),
                mc_se: est.map(|e| e.se),
            });
        }
    }
    out.csv("sigma.csv", &rows)?;
    let sigma: Vec<Vec<f64>> = moments.sigma.row_iter().map(|r| r.iter().copied().collect()).collect();
    out.json(
        "sigma.json",
        &json!({
            "model": cfg.model,
            "sigma": sigma,
            "determinant": moments.sigma.determinant(),
            "rho": moments.rho.iter().collect::<Vec<_>>(),
            "second_eigenvalue": m.second_eigenvalue(),
            "monte_carlo": { "trials": trials, "lambda_t": lt },
        }),
    )
}

#[derive(Serialize)]
struct LltCsvRow {
    t: f64,
    error_sum: f64,
}

fn llt_check(cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    let m = model(cfg)?;
    m.require_valid()?;
    let init: DVector<f64> = match cfg.llt.start.as_str() {
        "stationary" => m.stationary()?,
        s => {
            let u: usize = s
                .parse()
                .map_err(|_| CliError::Usage(format!("llt start must be `stationary` or a state index, got {s}")))?;
            if u >= m.states() {
                return Err(CliError::Usage(format!("state {u} out of range")));
            }
            point_mass(m.states(), u)
        }
    };
    let rows: Vec<LltCsvRow> = cfg
        .llt
        .times
        .iter()
        .map(|&t| llt_error(&m, t, &init).map(|r| LltCsvRow { t, error_sum: r.error_sum }))
        .collect::<Result<_, _>>()?;
    out.csv("llt.csv", &rows)?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.t * m.rate(), r.error_sum)).collect();
    let fit = (points.len() >= 2).then(|| fit_rate(&points));
    out.json(
        "llt.json",
        &json!({
            "model": cfg.model,
            "dim": m.dim(),
            "start": cfg.llt.start,
            "expected_slope": -((m.dim() + 1) as f64) / 2.0,
            "fit": fit.map(|f| json!({ "slope": f.slope, "intercept": f.intercept, "ci95": [f.ci.0, f.ci.1] })),
        }),
    )
}

fn return_tail(cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    let m = model(cfg)?;
    let rc = &cfg.return_tail;
    let t_max = rc.t_max.unwrap_or_else(|| rc.times.iter().copied().fold(0.0, f64::max));
    let s = streams(cfg, out, "return-tail", rc.trials);
    let report = first_return_tail(&m, &rc.times, rc.trials, t_max, &s)?;
    out.csv("return_tail.csv", &report.rows)?;
    out.json(
        "return_tail.json",
        &json!({
            "model": cfg.model,
            "constant": report.constant,
            "trials": report.trials,
            "censored": report.censored,
            "t_max": report.t_max,
            "low_count": report.low_count,
        }),
    )
}

/// Per-trial duet record; also the input format of `mixture-test`.
#[derive(Debug, Serialize, Deserialize)]
pub struct DuetRow {
    pub trial: usize,
    pub tau_over_t: Option<f64>,
    pub eta_c_over_sqrt_t: Option<f64>,
    pub lambda_out: f64,
    pub x1: f64,
    pub y1: f64,
    pub eps1: usize,
    pub x2: f64,
    pub y2: f64,
    pub eps2: usize,
    pub n_collisions: u64,
}

fn simulate_duet(cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    let m = model(cfg)?;
    let k = kernel(cfg)?;
    let dc = &cfg.duet;
    let split = EnergySplit::new(dc.lambda0)?;
    let start = DuetStart {
        positions: [[0, 0], dc.separation],
        states: None,
        lambda0: dc.lambda0,
    };
    let config = DuetConfig {
        max_events: dc.max_events,
        reservoir: 0,
    };
    let s = streams(cfg, out, "simulate-duet", dc.trials);
    let ens = last_collision_ensemble(&m, &k, &start, dc.t * split.total_rate(), dc.trials, config, &s)?;
    let rows: Vec<DuetRow> = ens
        .rows
        .iter()
        .map(|r| DuetRow {
            trial: r.trial,
            tau_over_t: r.tau_over_t,
            eta_c_over_sqrt_t: r.site_over_sqrt_t,
            lambda_out: r.lambda_out,
            x1: r.x1[0],
            y1: r.x1[1],
            eps1: r.state1,
            x2: r.x2[0],
            y2: r.x2[1],
            eps2: r.state2,
            n_collisions: r.collisions,
        })
        .collect();
    out.csv("duet.csv", &rows)?;
    let tau: Vec<f64> = ens.rows.iter().filter_map(|r| r.tau_over_t).collect();
    let site: Vec<f64> = ens.rows.iter().filter_map(|r| r.site_over_sqrt_t).collect();
    let ks = k.energy.closed_form().map(|law| ks_one_sample(&ens.lambda_out(), |x| law.cdf(x)));
    let med = |x: &[f64]| (!x.is_empty()).then(|| median(x));
    out.json(
        "duet.json",
        &json!({
            "model": cfg.model,
            "kernel": k.energy.name(),
            "t": ens.horizon,
            "trials": dc.trials,
            "zero_collision_fraction": ens.zero_collision_fraction(),
            "median_tau_over_t": med(&tau),
            "median_eta_c_over_sqrt_t": med(&site),
            "ks_lambda_out_vs_stationary": ks,
        }),
    )
}

#[derive(Serialize)]
struct RenewalRow {
    axis: &'static str,
    point: f64,
    statistic: &'static str,
    value: f64,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    tail_class: String,
}

fn tail_family(name: &str, beta: f64) -> Result<TailFamily, CliError> {
    Ok(match name {
        "slow_log" => TailFamily::SlowLog,
        "exponential" => TailFamily::Exponential,
        "pareto" => TailFamily::Pareto { beta },
        other => return Err(CliError::Usage(format!("unknown tail family {other}"))),
    })
}

fn renewal(cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    let rc = &cfg.renewal;
    let tail = tail_family(&rc.tail, rc.beta)?;
    let chain = if rc.chain == "constant" {
        ParamChain::constant(rc.lambda0)?
    } else {
        ParamChain::new(energy_law(&rc.chain, rc.kappa, None)?, rc.a, rc.b)?
    };
    let p = Stmrp::new(tail, chain, rc.lambda0)?;
    let class = tail.name();
    let mut rows = Vec::new();
    let row = |axis, point, statistic, value, ci: Option<(f64, f64)>| RenewalRow {
        axis,
        point,
        statistic,
        value,
        ci_lo: ci.map(|c| c.0),
        ci_hi: ci.map(|c| c.1),
        tail_class: class.clone(),
    };

    let s = streams(cfg, out, "renewal-age", rc.trials * rc.times.len());
    for r in age_residual_law(&p, &rc.times, rc.trials, &s)? {
        rows.push(row("t", r.t, "median_age_over_t", r.age_median, Some(r.age_median_ci)));
        rows.push(row("t", r.t, "q10_age_over_t", r.age_q10, None));
        rows.push(row("t", r.t, "q90_age_over_t", r.age_q90, None));
        rows.push(row("t", r.t, "median_residual_over_t", r.residual_median, None));
        rows.push(row("t", r.t, "mean_renewals", r.mean_renewals, None));
    }
    let s = streams(cfg, out, "renewal-type", rc.trials * rc.times.len());
    for (k, &t) in rc.times.iter().enumerate() {
        let law = current_type_law(&p, t, rc.trials, &s.child(&format!("t{k}")))?;
        let sorted_types = sorted(&law.samples);
        rows.push(row(
            "t",
            t,
            "median_current_type",
            median(&law.samples),
            Some(quantile_ci_sorted(&sorted_types, 0.5, 0.95)),
        ));
        rows.push(row("t", t, "no_renewal_fraction", law.no_renewal_fraction, None));
        if let Some(ks) = law.ks_to_stationary {
            rows.push(row("t", t, "ks_current_type_vs_stationary", ks, None));
        }
    }
    let s = streams(cfg, out, "renewal-order", rc.trials * rc.order_n.len());
    for (k, &n) in rc.order_n.iter().enumerate() {
        let os = order_statistic_dominance(tail, n, rc.trials, &s.child(&format!("n{k}")))?;
        let g = os.gap_quartiles();
        let q = os.sum_quartiles();
        rows.push(row("n", n as f64, "median_gap_ratio", g[1], Some((g[0], g[2]))));
        rows.push(row("n", n as f64, "median_sum_ratio", q[1], Some((q[0], q[2]))));
    }
    for r in tauberian_checks(tail, &rc.z)? {
        rows.push(row("z", r.z, "laplace_ratio", r.ratio, None));
    }
    if let Some(t) = rc.renewal_t {
        let s = streams(cfg, out, "renewal-function", rc.trials);
        let u = renewal_function(tail, t, rc.trials, &s)?;
        let ci = (u.scaled - 1.96 * u.scaled_se, u.scaled + 1.96 * u.scaled_se);
        rows.push(row("t", t, "renewal_function_times_tail", u.scaled, Some(ci)));
    }
    out.csv("renewal.csv", &rows)?;
    out.json(
        "renewal.json",
        &json!({ "tail": class, "chain": rc.chain, "interval": [rc.a, rc.b], "lambda0": rc.lambda0, "rows": rows.len() }),
    )
}

pub fn read_duet_csv(path: &Path) -> Result<Vec<MixturePoint>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<DuetRow>()
        .map(|row| {
            let row = row?;
            Ok(MixturePoint {
                x1: [row.x1, row.y1],
                state1: row.eps1,
                x2: [row.x2, row.y2],
                state2: row.eps2,
            })
        })
        .collect()
}

fn mixture_test(cfg: &ExperimentConfig, out: &mut OutputDir) -> Res {
    let mc = &cfg.mixture;
    let input = mc
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("mixture-test needs --input or mixture.input".into()))?;
    let simulated = read_duet_csv(input)?;
    let m = model(cfg)?;
    let k = kernel(cfg)?;
    let stationary: StationaryLaw = match mc.stationary.as_str() {
        "closed_form" => stationary_energy(&k.energy, StationaryMethod::ClosedForm, 0, (0.1, 0.9), &Streams::new(cfg.seed, "unused"))?.law,
        "longrun" => {
            let s = streams(cfg, out, "mixture-longrun", 2);
            stationary_energy(&k.energy, StationaryMethod::Longrun, mc.longrun_steps, (0.1, 0.9), &s)?.law
        }
        other => return Err(CliError::Usage(format!("unknown stationary method {other}"))),
    };
    let energy = match mc.reference.as_str() {
        "mixture" => stationary,
        "product" => StationaryLaw::Atom(mc.product_lambda.unwrap_or_else(|| stationary.median())),
        other => return Err(CliError::Usage(format!("unknown reference {other}"))),
    };
    let law = MixtureLaw::new(&m, energy)?;
    let s = streams(cfg, out, "mixture-reference", mc.samples);
    let reference: Vec<MixturePoint> = s.run(mc.samples, |_, rng| law.sample(rng));
    let s = streams(cfg, out, "mixture-permutation", mc.permutations);
    let report = two_sample_fit(
        &simulated,
        &reference,
        &law.grid(),
        FitConfig {
            permutations: mc.permutations,
            cap: mc.cap,
        },
        &s,
    )?;
    out.csv("mixture_marginals.csv", &report.marginals)?;
    out.json("mixture_fit.json", &report)
}
