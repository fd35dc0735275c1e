//! Fourier symbol, leading eigenvalue branch and its expansion at the origin.

mod exact;
mod return_tail;

pub use exact::{
    exact_distribution, fit_rate, llt_error, point_mass, suggested_radius, ExactLaw, LltReport, LltRow,
    RateFit, MAX_LAMBDA_T,
};
pub use return_tail::{first_return_tail, sample_first_return, ReturnTailReport, ReturnTailRow};
pub(crate) use return_tail::jump_budget;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MomentSet, RwisModel, DRIFT_TOL};

pub type C64 = Complex<f64>;

/// Longest stride along a ray when continuing the eigenvalue branch.
const MAX_STEP: f64 = 0.05;
/// Minimum fraction of a stride before declaring an ambiguity.
const MIN_FRACTION: f64 = 1e-6;
/// Two eigenvalues closer than this are treated as colliding.
const COLLISION_TOL: f64 = 1e-9;
/// Finite-difference step for the expansion cross-check.
pub const FD_STEP: f64 = 1e-3;
/// Relative disagreement tolerated between analytic and numeric coefficients.
pub const EXPANSION_TOL: f64 = 1e-4;

/// `α(s) = Σ_x e^{i(s,x)} P_x`.
pub fn fourier_symbol(model: &RwisModel, s: &[f64]) -> DMatrix<C64> {
    let m = model.states();
    let mut a = DMatrix::<C64>::zeros(m, m);
    for j in model.jumps() {
        let phase: f64 = s.iter().zip(j.x.iter()).map(|(si, xi)| si * *xi as f64).sum();
        let z = C64::from_polar(1.0, phase);
        a.zip_apply(&j.matrix, |aij, p| *aij += z * p);
    }
    a
}

/// Eigenvalue and right eigenvector on the tracked branch.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub value: C64,
    pub vector: DVector<C64>,
}

fn eigenvalues(a: &DMatrix<C64>) -> Vec<C64> {
    match a.nrows() {
        1 => vec![a[(0, 0)]],
        2 => {
            let half_tr = (a[(0, 0)] + a[(1, 1)]) * 0.5;
            let half_diff = (a[(0, 0)] - a[(1, 1)]) * 0.5;
            let root = (half_diff * half_diff + a[(0, 1)] * a[(1, 0)]).sqrt();
            vec![half_tr + root, half_tr - root]
        }
        _ => {
            let (_, t) = a.clone().schur().unpack();
            t.diagonal().iter().copied().collect()
        }
    }
}

/// Right eigenvector for an eigenvalue estimate by shifted inverse iteration.
fn eigenvector(a: &DMatrix<C64>, mu: C64, start: &DVector<C64>) -> DVector<C64> {
    let m = a.nrows();
    let shift = mu + C64::new(1e-11, 1e-11) * (1.0 + mu.norm());
    let lu = (a - DMatrix::<C64>::identity(m, m) * shift).lu();
    let mut v = start.clone();
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(w) if w.iter().all(|z| z.is_finite()) && w.norm() > 0.0 => v = w.unscale(w.norm()),
            _ => break,
        }
    }
    v
}

fn overlap(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}

fn continue_branch(a: &DMatrix<C64>, prev: &BranchPoint) -> std::result::Result<BranchPoint, &'static str> {
    let ev = eigenvalues(a);
    if ev.len() == 1 {
        return Ok(BranchPoint {
            value: ev[0],
            vector: prev.vector.clone(),
        });
    }
    let cands: Vec<(C64, DVector<C64>, f64)> = ev
        .iter()
        .map(|&mu| {
            let v = eigenvector(a, mu, &prev.vector);
            let o = overlap(&v, &prev.vector);
            (mu, v, o)
        })
        .collect();
    let best = (0..cands.len())
        .max_by(|&i, &j| cands[i].2.total_cmp(&cands[j].2))
        .expect("nonempty spectrum");
    let mu = cands[best].0;
    let nearest_other = cands
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, c)| (c.0 - mu).norm())
        .fold(f64::INFINITY, f64::min);
    if nearest_other < COLLISION_TOL {
        return Err("eigenvalue collision");
    }
    let runner_up = cands
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, c)| c.2)
        .fold(0.0, f64::max);
    if runner_up > 0.9 * cands[best].2 || (mu - prev.value).norm() > 0.5 * nearest_other {
        return Err("refine");
    }
    // Rayleigh quotient sharpens the value once the vector has converged.
    let v = &cands[best].1;
    let rq = v.dotc(&(a * v)) / v.dotc(v);
    let value = if (rq - mu).norm() < 1e-8 { rq } else { mu };
    Ok(BranchPoint {
        value,
        vector: v.clone(),
    })
}

/// Follows the branch with `χ(0) = 1` along the segment from 0 to `s`.
pub fn track_branch(model: &RwisModel, s: &[f64]) -> Result<BranchPoint> {
    let m = model.states();
    if s.len() != model.dim() {
        return Err(Error::Precondition(format!(
            "frequency has {} coordinates, model dimension is {}",
            s.len(),
            model.dim()
        )));
    }
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut point = BranchPoint {
        value: C64::new(1.0, 0.0),
        vector: DVector::from_element(m, C64::new(1.0 / (m as f64).sqrt(), 0.0)),
    };
    if norm == 0.0 {
        return Ok(point);
    }
    let base = 1.0 / (norm / MAX_STEP).ceil().max(1.0);
    let mut h = base;
    let mut done = 0.0;
    let at = |f: f64| s.iter().map(|v| v * f).collect::<Vec<_>>();
    while done < 1.0 {
        let next = (done + h).min(1.0);
        let a = fourier_symbol(model, &at(next));
        match continue_branch(&a, &point) {
            Ok(p) => {
                point = p;
                done = next;
                h = (h * 2.0).min(base);
            }
            Err(why) => {
                h *= 0.5;
                if why == "eigenvalue collision" || h < base * MIN_FRACTION {
                    return Err(Error::BranchAmbiguity {
                        s: at(next),
                        detail: why.to_string(),
                    });
                }
            }
        }
    }
    Ok(point)
}

/// `χ(s)`, the eigenvalue of `α(s)` continuing `χ(0) = 1`.
pub fn leading_eigenvalue(model: &RwisModel, s: &[f64]) -> Result<C64> {
    Ok(track_branch(model, s)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMethod {
    Analytic,
    FiniteDifference,
}

/// `χ(s) = 1 + (s, r₂ s)/2 + i·r₃(s, s, s)/6 + o(|s|³)`.
///
/// `r3[(i * d + j) * d + k]` stores the imaginary part of the symmetric
/// third-order tensor (the real part vanishes).
#[derive(Debug, Clone, Serialize)]
pub struct EigenExpansion {
    pub dim: usize,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub method: ExpansionMethod,
}

impl EigenExpansion {
    pub fn r2(&self, l: usize, m: usize) -> f64 {
        self.r2[l * self.dim + m]
    }

    pub fn r3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.r3[(i * self.dim + j) * self.dim + k]
    }

    pub fn r2_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.r2)
    }

    /// Third-order Taylor polynomial of `χ` at `s`.
    pub fn taylor(&self, s: &[f64]) -> C64 {
        let d = self.dim;
        let mut quad = 0.0;
        let mut cubic = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += self.r2(i, j) * s[i] * s[j];
                for k in 0..d {
                    cubic += self.r3(i, j, k) * s[i] * s[j] * s[k];
                }
            }
        }
        C64::new(1.0 + quad / 2.0, cubic / 6.0)
    }
}

fn symmetrize3(d: usize, raw: &[f64]) -> Vec<f64> {
    let idx = |i: usize, j: usize, k: usize| (i * d + j) * d + k;
    let mut out = vec![0.0; raw.len()];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                out[idx(i, j, k)] = (raw[idx(i, j, k)]
                    + raw[idx(i, k, j)]
                    + raw[idx(j, i, k)]
                    + raw[idx(j, k, i)]
                    + raw[idx(k, i, j)]
                    + raw[idx(k, j, i)])
                    / 6.0;
            }
        }
    }
    out
}

/// Closed-form `r₂` and `r₃` from second- and third-order perturbation
/// theory. With `R` the reduced resolvent of `Q_S − I`:
///
/// `r₂_lm = −(ρ,Σ_lm𝟙) + (ρ,M_l R M_m𝟙) + (ρ,M_m R M_l𝟙)` and `r₃` is the
/// symmetrisation of
/// `3(ρ,Σ_ij R M_k𝟙) + 3(ρ,M_i R Σ_jk𝟙) − (ρ,Ξ_ijk𝟙) − 6(ρ,M_i R M_j R M_k𝟙)`.
pub fn analytic_expansion(moments: &MomentSet) -> EigenExpansion {
    let d = moments.dim;
    let m = moments.rho.len();
    let ones = DVector::from_element(m, 1.0);
    let rho = &moments.rho;
    let res = &moments.resolvent;
    let r_m1: Vec<_> = moments.displacement.iter().map(|ml| res.solve(&(ml * &ones))).collect();

    let r2: Vec<f64> = moments.sigma.transpose().iter().map(|v| -v).collect();

    let mut raw = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let a = rho.dot(&(moments.second_moment(i, j) * &r_m1[k]));
                let b = rho.dot(&(&moments.displacement[i] * res.solve(&(moments.second_moment(j, k) * &ones))));
                let c = rho.dot(&(moments.third_moment(i, j, k) * &ones));
                let e = rho.dot(&(&moments.displacement[i] * res.solve(&(&moments.displacement[j] * &r_m1[k]))));
                raw[(i * d + j) * d + k] = 3.0 * a + 3.0 * b - c - 6.0 * e;
            }
        }
    }
    EigenExpansion {
        dim: d,
        r2,
        r3: symmetrize3(d, &raw),
        method: ExpansionMethod::Analytic,
    }
}

/// Fourth-order central differences of `χ` along `direction`, returning the
/// second and third directional derivatives at 0.
fn directional_derivatives(model: &RwisModel, direction: &[f64], h: f64) -> Result<(C64, C64)> {
    let mut f = [C64::new(0.0, 0.0); 7];
    for (slot, k) in f.iter_mut().zip(-3i32..=3) {
        let s: Vec<f64> = direction.iter().map(|v| v * h * k as f64).collect();
        *slot = leading_eigenvalue(model, &s)?;
    }
    let (m3, m2, m1, z, p1, p2, p3) = (f[0], f[1], f[2], f[3], f[4], f[5], f[6]);
    let d2 = (-p2 + p1 * 16.0 - z * 30.0 + m1 * 16.0 - m2) / (12.0 * h * h);
    let d3 = (m3 - m2 * 8.0 + m1 * 13.0 - p1 * 13.0 + p2 * 8.0 - p3) / (8.0 * h * h * h);
    Ok((d2, d3))
}

/// `r₂`, `r₃` from finite differences of the tracked eigenvalue.
pub fn finite_difference_expansion(model: &RwisModel, h: f64) -> Result<EigenExpansion> {
    let d = model.dim();
    if d == 1 {
        let (d2, d3) = directional_derivatives(model, &[1.0], h)?;
        return Ok(EigenExpansion {
            dim: 1,
            r2: vec![d2.re],
            r3: vec![d3.im],
            method: ExpansionMethod::FiniteDifference,
        });
    }
    let (a2, a3) = directional_derivatives(model, &[1.0, 0.0], h)?;
    let (b2, b3) = directional_derivatives(model, &[0.0, 1.0], h)?;
    let (p2, p3) = directional_derivatives(model, &[1.0, 1.0], h)?;
    let (_, q3) = directional_derivatives(model, &[1.0, -1.0], h)?;
    let h11 = a2.re;
    let h22 = b2.re;
    let h12 = (p2.re - h11 - h22) / 2.0;
    let t111 = a3.im;
    let t222 = b3.im;
    let t112 = (p3.im - q3.im - 2.0 * t222) / 6.0;
    let t122 = (p3.im + q3.im - 2.0 * t111) / 6.0;
    Ok(EigenExpansion {
        dim: 2,
        r2: vec![h11, h12, h12, h22],
        r3: vec![t111, t112, t112, t122, t112, t122, t122, t222],
        method: ExpansionMethod::FiniteDifference,
    })
}

fn compare(what: String, analytic: f64, numeric: f64, scale: f64) -> Result<()> {
    let tol = EXPANSION_TOL * analytic.abs().max(numeric.abs()).max(scale);
    if (analytic - numeric).abs() > tol {
        return Err(Error::ExpansionMismatch { what, analytic, numeric });
    }
    Ok(())
}

/// Analytic expansion, verified against finite differences.
///
/// Coefficients are compared with relative tolerance [`EXPANSION_TOL`];
/// coefficients that vanish are compared against the scale of `r₂` instead.
pub fn expansion_coeffs(model: &RwisModel) -> Result<EigenExpansion> {
    let moments = model.moments()?;
    let drift = moments.drift();
    if drift.iter().any(|v| v.abs() > DRIFT_TOL) {
        return Err(Error::Precondition(format!("expansion needs a drift-free model, drift = {drift:?}")));
    }
    let analytic = analytic_expansion(&moments);
    let numeric = finite_difference_expansion(model, FD_STEP)?;
    let scale = analytic.r2.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (n, (a, b)) in analytic.r2.iter().zip(&numeric.r2).enumerate() {
        compare(format!("r2[{n}]"), *a, *b, scale)?;
    }
    for (n, (a, b)) in analytic.r3.iter().zip(&numeric.r3).enumerate() {
        compare(format!("r3[{n}]"), *a, *b, scale)?;
    }
    Ok(analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use nalgebra::DMatrix;

    #[test]
    fn symbol_examples() {
        let m = simple2d();
        assert!((fourier_symbol(&m, &[0.0, 0.0])[(0, 0)] - 1.0).norm() < 1e-15);
        assert!(fourier_symbol(&m, &[std::f64::consts::PI, 0.0])[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn symbol_conjugate_symmetry_and_contraction() {
        let m = directional2d();
        for s in [[0.3, -1.2], [2.0, 0.7], [-3.0, 3.0]] {
            let a = fourier_symbol(&m, &s);
            let b = fourier_symbol(&m, &[-s[0], -s[1]]);
            assert!((a.map(|z| z.conj()) - b).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-15);
            let row_norm = a.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
            assert!(row_norm <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn simple2d_branch_is_cosine_mean() {
        let m = simple2d();
        for s in [[0.1, 0.2], [1.0, -0.5], [2.5, 0.3]] {
            let chi = leading_eigenvalue(&m, &s).unwrap();
            assert!((chi - C64::new((s[0].cos() + s[1].cos()) / 2.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn persistent_branch_matches_quadratic_root() {
        let (p, q) = (0.7, 0.3);
        let m = persistent1d(p).unwrap();
        for s in [0.05f64, 0.2, 0.35, 0.41] {
            // Characteristic polynomial λ² − 2p cos s λ + (p² − q²) = 0.
            let disc = C64::new(q * q - p * p * s.sin().powi(2), 0.0).sqrt();
            let oracle = C64::new(p * s.cos(), 0.0) + disc;
            let chi = leading_eigenvalue(&m, &[s]).unwrap();
            assert!((chi - oracle).norm() < 1e-10, "s = {s}: {chi} vs {oracle}");
        }
    }

    #[test]
    fn branch_collision_is_reported() {
        // The two persistent-walk eigenvalues meet where p|sin s| = q.
        let m = persistent1d(0.7).unwrap();
        let s_star = (0.3f64 / 0.7).asin();
        match leading_eigenvalue(&m, &[s_star]) {
            Err(Error::BranchAmbiguity { .. }) => {}
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn simple_walk_coefficients() {
        let e = expansion_coeffs(&simple1d()).unwrap();
        assert!((e.r2[0] + 1.0).abs() < 1e-15);
        assert_eq!(e.r3[0], 0.0);
        let e2 = expansion_coeffs(&simple2d()).unwrap();
        assert_eq!(e2.r2, vec![-0.5, 0.0, 0.0, -0.5]);
    }

    #[test]
    fn persistent_r2_is_minus_sigma_squared() {
        let m = persistent1d(0.7).unwrap();
        let e = expansion_coeffs(&m).unwrap();
        let s2 = m.asymptotic_covariance().unwrap()[(0, 0)];
        assert!((e.r2[0] + s2).abs() < 1e-8);
        let fd = finite_difference_expansion(&m, FD_STEP).unwrap();
        assert!((fd.r2[0] - e.r2[0]).abs() <= 1e-6 * e.r2[0].abs());
    }

    /// Three-state walk on ℤ with asymmetric, state-dependent steps and no
    /// net drift; its third-order coefficient is nonzero.
    fn skewed_walk() -> RwisModel {
        let q = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.6, 0.1, 0.3, 0.25, 0.25, 0.5]);
        let rho = crate::model::stationary_of(&q).unwrap();
        let mut b = DMatrix::from_row_slice(3, 3, &[0.2, -0.25, 0.1, 0.05, 0.28, -0.2, -0.1, 0.15, 0.22]);
        let drift: f64 = (0..3).map(|u| rho[u] * (0..3).map(|v| q[(u, v)] * 2.0 * b[(u, v)]).sum::<f64>()).sum();
        b.add_scalar_mut(-drift / 2.0);
        let up = q.zip_map(&b, |qv, bv| qv * (0.5 + bv));
        let down = q.zip_map(&b, |qv, bv| qv * (0.5 - bv));
        RwisModel::new(1, 3, 1.0, vec![([1, 0], up), ([-1, 0], down)]).unwrap()
    }

    #[test]
    fn skewed_walk_third_order_term_matches_finite_differences() {
        let m = skewed_walk();
        let e = expansion_coeffs(&m).unwrap();
        assert!(e.r3[0].abs() > 1e-3, "r3 = {}", e.r3[0]);
        let fd = finite_difference_expansion(&m, FD_STEP).unwrap();
        assert!((fd.r3[0] - e.r3[0]).abs() < 1e-6);
    }

    #[test]
    fn directional_tensor_matches_finite_differences() {
        let m = directional2d();
        let e = expansion_coeffs(&m).unwrap();
        let fd = finite_difference_expansion(&m, FD_STEP).unwrap();
        for (a, b) in e.r2.iter().zip(&fd.r2) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in e.r3.iter().zip(&fd.r3) {
            assert!((a - b).abs() < 1e-5);
        }
        let sigma = m.asymptotic_covariance().unwrap();
        assert!((e.r2_matrix() + sigma).amax() < 1e-12);
    }

    #[test]
    fn drifting_model_is_refused() {
        assert!(matches!(expansion_coeffs(&drift1d()), Err(Error::Precondition(_))));
    }

    #[test]
    fn taylor_polynomial_tracks_branch() {
        let m = skewed_walk();
        let e = expansion_coeffs(&m).unwrap();
        for s in [0.01, 0.02, 0.04] {
            let err = (leading_eigenvalue(&m, &[s]).unwrap() - e.taylor(&[s])).norm();
            assert!(err < 2.0 * s.powi(4), "s = {s}: {err}");
        }
    }
}
