//! Right-censored survival estimation.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    /// `true` for an observed event, `false` for right censoring.
    pub event: bool,
}

impl Observation {
    pub fn event(time: f64) -> Self {
        Self { time, event: true }
    }

    pub fn censored(time: f64) -> Self {
        Self { time, event: false }
    }
}

/// Kaplan–Meier product-limit estimator with Greenwood variance.
#[derive(Debug, Clone)]
pub struct KaplanMeier {
    times: Vec<f64>,
    survival: Vec<f64>,
    greenwood: Vec<f64>,
    at_risk_after: Vec<usize>,
    n: usize,
}

/// Distinct times with (events, censorings), in increasing order.
fn tabulate(obs: &[Observation]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<_> = obs.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for o in sorted {
        match out.last_mut() {
            Some(last) if last.0 == o.time => {
                if o.event {
                    last.1 += 1
                } else {
                    last.2 += 1
                }
            }
            _ => out.push((o.time, o.event as usize, (!o.event) as usize)),
        }
    }
    out
}

impl KaplanMeier {
    pub fn fit(obs: &[Observation]) -> Self {
        let mut at_risk = obs.len();
        let mut s = 1.0;
        let mut gw = 0.0;
        let mut km = Self {
            times: Vec::new(),
            survival: Vec::new(),
            greenwood: Vec::new(),
            at_risk_after: Vec::new(),
            n: obs.len(),
        };
        for (t, d, c) in tabulate(obs) {
            if d > 0 {
                s *= 1.0 - d as f64 / at_risk as f64;
                if at_risk > d {
                    gw += d as f64 / (at_risk as f64 * (at_risk - d) as f64);
                }
            }
            at_risk -= d + c;
            km.times.push(t);
            km.survival.push(s);
            km.greenwood.push(gw);
            km.at_risk_after.push(at_risk);
        }
        km
    }

    fn index(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|x| *x <= t);
        k.checked_sub(1)
    }

    /// `Ŝ(t) = P̂(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        self.index(t).map_or(1.0, |i| self.survival[i])
    }

    /// Number of subjects still under observation strictly after `t`.
    pub fn at_risk_after(&self, t: f64) -> usize {
        self.index(t).map_or(self.n, |i| self.at_risk_after[i])
    }

    /// Greenwood standard error of `Ŝ(t)`.
    pub fn std_error(&self, t: f64) -> f64 {
        self.index(t)
            .map_or(0.0, |i| self.survival[i] * self.greenwood[i].sqrt())
    }

    /// Pointwise interval on the log(−log) scale, clipped to `[0, 1]`.
    pub fn confidence_interval(&self, t: f64, level: f64) -> (f64, f64) {
        let s = self.survival(t);
        let Some(i) = self.index(t) else {
            return (1.0, 1.0);
        };
        if s <= 0.0 {
            return (0.0, 0.0);
        }
        if s >= 1.0 {
            return (1.0, 1.0);
        }
        let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
        let se_loglog = self.greenwood[i].sqrt() / s.ln().abs();
        let lo = s.powf((z * se_loglog).exp());
        let hi = s.powf((-z * se_loglog).exp());
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogRank {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample log-rank test.
pub fn log_rank(a: &[Observation], b: &[Observation]) -> LogRank {
    let mut pooled: Vec<(Observation, bool)> = a.iter().map(|o| (*o, true)).chain(b.iter().map(|o| (*o, false))).collect();
    pooled.sort_by(|x, y| x.0.time.total_cmp(&y.0.time));
    let (mut na, mut nb) = (a.len() as f64, b.len() as f64);
    let (mut o_minus_e, mut var) = (0.0, 0.0);
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0.time;
        let (mut da, mut db, mut ca, mut cb) = (0.0, 0.0, 0.0, 0.0);
        while i < pooled.len() && pooled[i].0.time == t {
            let (o, in_a) = pooled[i];
            match (o.event, in_a) {
                (true, true) => da += 1.0,
                (true, false) => db += 1.0,
                (false, true) => ca += 1.0,
                (false, false) => cb += 1.0,
            }
            i += 1;
        }
        let n = na + nb;
        let d = da + db;
        if d > 0.0 && n > 1.0 {
            o_minus_e += da - d * na / n;
            var += d * (na / n) * (nb / n) * (n - d) / (n - 1.0);
        }
        na -= da + ca;
        nb -= db + cb;
    }
    let statistic = if var > 0.0 { o_minus_e * o_minus_e / var } else { 0.0 };
    let p_value = 1.0 - ChiSquared::new(1.0).expect("df > 0").cdf(statistic);
    LogRank { statistic, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncensored_km_is_empirical_survival() {
        let obs: Vec<_> = [3.0, 1.0, 2.0, 2.0, 5.0].iter().map(|t| Observation::event(*t)).collect();
        let km = KaplanMeier::fit(&obs);
        assert_eq!(km.survival(0.5), 1.0);
        assert!((km.survival(1.0) - 0.8).abs() < 1e-15);
        assert!((km.survival(2.5) - 0.4).abs() < 1e-15);
        assert_eq!(km.survival(5.0), 0.0);
        assert_eq!(km.at_risk_after(2.0), 2);
    }

    #[test]
    fn textbook_censored_example() {
        // Events at 1, 3; censored at 2, 4.
        let obs = [
            Observation::event(1.0),
            Observation::censored(2.0),
            Observation::event(3.0),
            Observation::censored(4.0),
        ];
        let km = KaplanMeier::fit(&obs);
        assert!((km.survival(1.0) - 0.75).abs() < 1e-15);
        assert!((km.survival(3.0) - 0.375).abs() < 1e-15);
        let (lo, hi) = km.confidence_interval(3.0, 0.95);
        assert!(lo < 0.375 && 0.375 < hi);
    }

    #[test]
    fn log_rank_separates_different_scales() {
        let a: Vec<_> = (1..=200).map(|i| Observation::event(i as f64)).collect();
        let b: Vec<_> = (1..=200).map(|i| Observation::event(3.0 * i as f64)).collect();
        assert!(log_rank(&a, &b).p_value < 1e-6);
        assert!(log_rank(&a, &a).p_value > 0.99);
    }
}
