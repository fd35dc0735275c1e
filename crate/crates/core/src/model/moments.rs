//! Operator-valued moments and the asymptotic covariance.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use super::{displacement_operator, RwisModel, GAP_THRESHOLD};
use crate::error::{Error, Result};

/// Solver for `(Q_S − I) y = v` on mean-zero vectors with `(ρ, y) = 0`.
///
/// Uses the fundamental-matrix form `(Q_S − I + 𝟙ρ) y = v − (ρ, v)𝟙`; the
/// solution automatically satisfies `(ρ, y) = 0`.
#[derive(Debug, Clone)]
pub struct ReducedResolvent {
    lu: LU<f64, Dyn, Dyn>,
    rho: DVector<f64>,
}

impl ReducedResolvent {
    pub fn new(q: &DMatrix<f64>, rho: &DVector<f64>) -> Result<Self> {
        let m = q.nrows();
        let k = q - DMatrix::identity(m, m) + DVector::from_element(m, 1.0) * rho.transpose();
        let lu = k.lu();
        if !lu.is_invertible() {
            return Err(Error::NoSpectralGap("restricted resolvent is singular".into()));
        }
        Ok(Self { lu, rho: rho.clone() })
    }

    /// Projects `v` onto mean-zero vectors and solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let centred = v - DVector::from_element(v.len(), self.rho.dot(v));
        self.lu.solve(&centred).expect("invertibility checked at construction")
    }
}

/// `ρ`, `M_l`, `Σ_lm`, `Ξ_ijk` and `σ` of a model.
///
/// `second[l * d + m]` holds `Σ_lm`; `third[(i * d + j) * d + k]` holds `Ξ_ijk`.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub dim: usize,
    pub rho: DVector<f64>,
    pub displacement: Vec<DMatrix<f64>>,
    pub second: Vec<DMatrix<f64>>,
    pub third: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
    pub resolvent: ReducedResolvent,
}

impl MomentSet {
    pub fn new(model: &RwisModel) -> Result<Self> {
        let gap = model.second_eigenvalue();
        if gap > GAP_THRESHOLD {
            return Err(Error::NoSpectralGap(format!("second eigenvalue modulus {gap}")));
        }
        let d = model.dim();
        let m = model.states();
        let q = model.transfer();
        let rho = model.stationary()?;
        let resolvent = ReducedResolvent::new(&q, &rho)?;

        let displacement: Vec<_> = (0..d).map(|l| displacement_operator(model, l)).collect();
        let weighted = |f: &dyn Fn(&[i64; 2]) -> f64| {
            model
                .jumps()
                .iter()
                .fold(DMatrix::zeros(m, m), |acc, j| acc + &j.matrix * f(&j.x))
        };
        let mut second = Vec::with_capacity(d * d);
        for l in 0..d {
            for k in 0..d {
                second.push(weighted(&|x| (x[l] * x[k]) as f64));
            }
        }
        let mut third = Vec::with_capacity(d * d * d);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    third.push(weighted(&|x| (x[i] * x[j] * x[k]) as f64));
                }
            }
        }

        let ones = DVector::from_element(m, 1.0);
        let drift_vecs: Vec<_> = displacement.iter().map(|ml| ml * &ones).collect();
        let solved: Vec<_> = drift_vecs.iter().map(|v| resolvent.solve(v)).collect();
        let mut sigma = DMatrix::zeros(d, d);
        for l in 0..d {
            for k in l..d {
                let v = rho.dot(&(&second[l * d + k] * &ones))
                    - rho.dot(&(&displacement[l] * &solved[k]))
                    - rho.dot(&(&displacement[k] * &solved[l]));
                sigma[(l, k)] = v;
                sigma[(k, l)] = v;
            }
        }
        Ok(Self {
            dim: d,
            rho,
            displacement,
            second,
            third,
            sigma,
            resolvent,
        })
    }

    pub fn second_moment(&self, l: usize, m: usize) -> &DMatrix<f64> {
        &self.second[l * self.dim + m]
    }

    pub fn third_moment(&self, i: usize, j: usize, k: usize) -> &DMatrix<f64> {
        &self.third[(i * self.dim + j) * self.dim + k]
    }

    /// Mean single-step displacement `(ρ, M_l𝟙)` for each coordinate.
    pub fn drift(&self) -> Vec<f64> {
        let ones = DVector::from_element(self.rho.len(), 1.0);
        self.displacement.iter().map(|ml| self.rho.dot(&(ml * &ones))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn simple2d_moments() {
        let ms = simple2d().moments().unwrap();
        assert_eq!(ms.displacement[0][(0, 0)], 0.0);
        assert_eq!(ms.displacement[1][(0, 0)], 0.0);
        assert_eq!(ms.second_moment(0, 0)[(0, 0)], 0.5);
        assert_eq!(ms.second_moment(1, 1)[(0, 0)], 0.5);
        assert_eq!(ms.second_moment(0, 1)[(0, 0)], 0.0);
        assert_eq!(ms.sigma, DMatrix::from_diagonal_element(2, 2, 0.5));
    }

    #[test]
    fn persistent_drift_vector() {
        let ms = persistent1d(0.7).unwrap().moments().unwrap();
        let v = &ms.displacement[0] * DVector::from_element(2, 1.0);
        assert!((v[0] - 0.4).abs() < 1e-15 && (v[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn persistent_sigma_closed_form() {
        for p in [0.3, 0.5, 0.7, 0.9] {
            let s = persistent1d(p).unwrap().asymptotic_covariance().unwrap()[(0, 0)];
            assert!((s - p / (1.0 - p)).abs() < 1e-12, "p = {p}: {s}");
        }
    }

    #[test]
    fn resolvent_output_is_mean_zero() {
        let ms = directional2d().moments().unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let y = ms.resolvent.solve(&v);
        assert!(ms.rho.dot(&y).abs() < 1e-14);
        let q = directional2d().transfer();
        let lhs = (&q - DMatrix::identity(4, 4)) * &y;
        let centred = &v - DVector::from_element(4, ms.rho.dot(&v));
        assert!((lhs - centred).amax() < 1e-13);
    }

    #[test]
    fn sigma_is_symmetric_positive_definite() {
        for name in ["simple1d", "simple2d", "persistent1d", "directional2d"] {
            let s = builtin(name).unwrap().asymptotic_covariance().unwrap();
            assert_eq!(s, s.transpose());
            assert!(s.symmetric_eigen().eigenvalues.iter().all(|v| *v > 0.0));
        }
    }
}
