//! Estimators and classical tests shared across modules.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Point estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Two-sided normal interval at `level`.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let z = normal_quantile(0.5 + level / 2.0);
        (self.value - z * self.se, self.value + z * self.se)
    }

    /// `|value − target| / se`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.se
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn mean_estimate(x: &[f64]) -> Estimate {
    let n = x.len() as f64;
    let m = mean(x);
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: m,
        se: (var / n).sqrt(),
    }
}

/// Sample covariance (divisor `n`) with the influence-function standard
/// error `sd((x−x̄)(y−ȳ)) / √n`.
pub fn covariance(x: &[f64], y: &[f64]) -> Estimate {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let c = mean(&prods);
    let var = prods.iter().map(|p| (p - c) * (p - c)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: c,
        se: (var / n).sqrt(),
    }
}

/// Pearson correlation with the first-order standard error `(1 − r²)/√n`.
pub fn correlation(x: &[f64], y: &[f64]) -> Estimate {
    let c = covariance(x, y).value;
    let vx = covariance(x, x).value;
    let vy = covariance(y, y).value;
    let r = c / (vx * vy).sqrt();
    Estimate {
        value: r,
        se: (1.0 - r * r) / (x.len() as f64).sqrt(),
    }
}

/// Linear-interpolation quantile (type 7) of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    // Equal neighbours return directly so that infinite samples stay finite-safe.
    if sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    quantile_sorted(&sorted(x), p)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Distribution-free interval for the `p`-quantile from order statistics
/// (normal approximation to the binomial rank).
pub fn quantile_ci_sorted(sorted: &[f64], p: f64, level: f64) -> (f64, f64) {
    let n = sorted.len() as f64;
    let z = normal_quantile(0.5 + level / 2.0);
    let half = z * (n * p * (1.0 - p)).sqrt();
    let lo = ((n * p - half).floor().max(0.0) as usize).min(sorted.len() - 1);
    let hi = ((n * p + half).ceil() as usize).min(sorted.len() - 1);
    (sorted[lo], sorted[hi])
}

/// One-sample Kolmogorov–Smirnov distance to a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(sample);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, x)| {
        let f = cdf(*x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Two-sample Kolmogorov–Smirnov distance; ties are handled by advancing
/// both empirical CDFs past equal values before comparing.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value `P(K > d √n_eff)` with the small-sample
/// correction of Stephens.
pub fn kolmogorov_p_value(d: f64, n_eff: f64) -> f64 {
    let sqn = n_eff.sqrt();
    let lambda = (sqn + 0.12 + 0.11 / sqn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn ks_two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let d = ks_two_sample(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    kolmogorov_p_value(d, na * nb / (na + nb))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit test; adjacent cells are merged until every
/// expected count is at least `min_expected`.
pub fn chi_square_gof(observed: &[f64], probs: &[f64], min_expected: f64) -> ChiSquare {
    let total: f64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, p) in observed.iter().zip(probs) {
        o += ob;
        e += p * total;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = cells.len().saturating_sub(1);
    let p_value = if df == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(df as f64).expect("df > 0").cdf(statistic)
    };
    ChiSquare { statistic, df, p_value }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub n: usize,
}

impl LinearFit {
    /// Student-t interval for the slope (degenerate when `n ≤ 2`).
    pub fn slope_ci(&self, level: f64) -> (f64, f64) {
        if self.n <= 2 || !self.slope_se.is_finite() {
            return (self.slope, self.slope);
        }
        let t = StudentsT::new(0.0, 1.0, (self.n - 2) as f64)
            .expect("positive df")
            .inverse_cdf(0.5 + level / 2.0);
        (self.slope - t * self.slope_se, self.slope + t * self.slope_se)
    }
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len();
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if n > 2 { (rss / (n - 2) as f64 / sxx).sqrt() } else { f64::NAN };
    LinearFit {
        slope,
        intercept,
        slope_se,
        n,
    }
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantiles() {
        let x = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&x), 3.0);
        assert_eq!(quantile(&x, 0.25), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn ks_examples() {
        let u: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_one_sample(&u, |x| x) - 0.005).abs() < 1e-12);
        assert_eq!(ks_two_sample(&u, &u), 0.0);
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        let b: Vec<f64> = (25..125).map(f64::from).collect();
        assert!((ks_two_sample(&a, &b) - 0.25).abs() < 1e-12);
        assert!((ks_two_sample(&[1.0, 1.0], &[1.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.36) ≈ 0.049, P(K > 1.63) ≈ 0.010 for large n.
        assert!((kolmogorov_p_value(1.36 / 1e4, 1e8) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_p_value(1.63 / 1e4, 1e8) - 0.0098).abs() < 1e-3);
    }

    #[test]
    fn chi_square_merges_sparse_cells() {
        let r = chi_square_gof(&[50.0, 50.0, 0.0, 0.0], &[0.5, 0.49, 0.005, 0.005], 5.0);
        assert_eq!(r.df, 1);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn linear_fit_exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn neumaier_keeps_small_terms() {
        let mut s = NeumaierSum::default();
        s.add(1e300);
        s.add(1.0);
        s.add(-1e300);
        assert_eq!(s.value(), 1.0);
    }

    proptest! {
        #[test]
        fn ks_is_a_bounded_symmetric_distance(
            a in prop::collection::vec(-10.0f64..10.0, 1..40),
            b in prop::collection::vec(-10.0f64..10.0, 1..40),
        ) {
            let d = ks_two_sample(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_two_sample(&b, &a));
            prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
        }

        #[test]
        fn covariance_is_bilinear_in_scale(
            x in prop::collection::vec(-5.0f64..5.0, 3..30),
            c in 0.1f64..10.0,
        ) {
            let y: Vec<f64> = x.iter().map(|v| v * v).collect();
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = covariance(&x, &y).value * c;
            let b = covariance(&xs, &y).value;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}
