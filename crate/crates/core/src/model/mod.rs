//! Single-particle random walks with internal states.
//!
//! A model is a lattice dimension `d ∈ {1, 2}`, a grid of `m` internal states
//! (equal arcs of the circle of directions), a finite family of nonnegative
//! `m × m` jump matrices `P_x` indexed by displacements `x ≠ 0`, and a jump
//! rate `λ`. Row `u` of `P_x` holds the probabilities of jumping by `x` while
//! moving from internal state `u` to each outgoing state.

mod builtin;
mod file;
mod moments;
mod sampler;

pub use builtin::{builtin, directional2d, drift1d, persistent1d, simple1d, simple2d, BUILTIN_NAMES};
pub use file::{line_col, load_model, parse_model};
pub use moments::{MomentSet, ReducedResolvent};
pub use sampler::{AliasTable, StepSampler};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Lattice site; the second coordinate is unused when `d = 1`.
pub type Site = [i64; 2];

pub const STOCHASTIC_TOL: f64 = 1e-12;
pub const STATIONARY_TOL: f64 = 1e-12;
pub const DRIFT_TOL: f64 = 1e-10;
pub const GAP_THRESHOLD: f64 = 1.0 - 1e-6;

/// Partition of the circle `S = ℝ/ℤ` into `m` equal arcs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DirectionGrid {
    arcs: usize,
}

impl DirectionGrid {
    pub fn new(arcs: usize) -> Result<Self> {
        if arcs == 0 {
            return Err(Error::InvalidModel("direction grid needs at least one arc".into()));
        }
        Ok(Self { arcs })
    }

    pub fn arcs(&self) -> usize {
        self.arcs
    }

    pub fn arc_length(&self) -> f64 {
        1.0 / self.arcs as f64
    }

    /// Midpoint `u_j = (j + 1/2)/m` of arc `j`.
    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.arcs as f64
    }

    /// Length of the shorter arc between two points of `S`.
    pub fn circle_distance(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        Self::circle_distance(self.midpoint(i), self.midpoint(j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub x: Site,
    pub matrix: DMatrix<f64>,
}

/// The jump family `{P_x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpKernel {
    states: usize,
    jumps: Vec<Jump>,
}

impl JumpKernel {
    pub fn new(dim: usize, states: usize, jumps: Vec<(Site, DMatrix<f64>)>) -> Result<Self> {
        if jumps.is_empty() {
            return Err(Error::InvalidModel("jump support is empty".into()));
        }
        let mut out: Vec<Jump> = Vec::with_capacity(jumps.len());
        for (x, matrix) in jumps {
            if x == [0, 0] {
                return Err(Error::InvalidModel("P_0 must be absent: jumps leave the site".into()));
            }
            if dim == 1 && x[1] != 0 {
                return Err(Error::InvalidModel(format!("jump {x:?} has a second coordinate in d = 1")));
            }
            if matrix.nrows() != states || matrix.ncols() != states {
                return Err(Error::InvalidModel(format!(
                    "P_{x:?} is {}x{}, expected {states}x{states}",
                    matrix.nrows(),
                    matrix.ncols()
                )));
            }
            if let Some(v) = matrix.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidModel(format!("P_{x:?} has entry {v}")));
            }
            if let Some(j) = out.iter_mut().find(|j| j.x == x) {
                j.matrix += matrix;
            } else {
                out.push(Jump { x, matrix });
            }
        }
        out.sort_by_key(|j| j.x);
        Ok(Self { states, jumps: out })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// `Q_S = Σ_x P_x`.
    pub fn transfer(&self) -> DMatrix<f64> {
        self.jumps
            .iter()
            .fold(DMatrix::zeros(self.states, self.states), |acc, j| acc + &j.matrix)
    }

    /// Displacements whose matrix is not identically zero.
    pub fn support(&self) -> Vec<Site> {
        self.jumps
            .iter()
            .filter(|j| j.matrix.iter().any(|v| *v > 0.0))
            .map(|j| j.x)
            .collect()
    }

    /// Largest `|x|∞` over the support.
    pub fn range(&self) -> i64 {
        self.support()
            .iter()
            .map(|x| x[0].abs().max(x[1].abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Continuous-time walk: jumps at rate `λ` according to the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct RwisModel {
    dim: usize,
    grid: DirectionGrid,
    kernel: JumpKernel,
    rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub row_residual: f64,
    /// Second-largest eigenvalue modulus of `Q_S`.
    pub second_eigenvalue: f64,
    pub drift: Vec<f64>,
    pub range: i64,
    pub sigma_min_eigenvalue: Option<f64>,
    pub lattice_generated: bool,
    pub conditions: Vec<Condition>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

impl RwisModel {
    /// Builds a model; fails only on malformed input or non-stochastic rows.
    pub fn new(dim: usize, states: usize, rate: f64, jumps: Vec<(Site, DMatrix<f64>)>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidModel(format!("dimension {dim} not supported (1 or 2)")));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidModel(format!("rate must be positive, got {rate}")));
        }
        let grid = DirectionGrid::new(states)?;
        let kernel = JumpKernel::new(dim, states, jumps)?;
        let model = Self { dim, grid, kernel, rate };
        let q = model.transfer();
        for (row, r) in q.row_iter().enumerate() {
            let sum = r.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        Ok(model)
    }

    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidModel(format!("rate must be positive, got {rate}")));
        }
        Ok(Self { rate, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> usize {
        self.grid.arcs()
    }

    pub fn grid(&self) -> DirectionGrid {
        self.grid
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn jumps(&self) -> &[Jump] {
        self.kernel.jumps()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn transfer(&self) -> DMatrix<f64> {
        self.kernel.transfer()
    }

    /// Unique stationary row vector `ρ` of `Q_S`, from
    /// `ρ (I − Q_S + 𝟙𝟙ᵀ) = 𝟙ᵀ` with one step of iterative refinement.
    pub fn stationary(&self) -> Result<DVector<f64>> {
        stationary_of(&self.transfer())
    }

    /// `|λ₂|` of `Q_S` (0 when `m = 1`).
    pub fn second_eigenvalue(&self) -> f64 {
        let q = self.transfer();
        if q.nrows() == 1 {
            return 0.0;
        }
        let mut ev: Vec<_> = q.complex_eigenvalues().iter().copied().collect();
        let lead = ev
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        ev.remove(lead);
        ev.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn moments(&self) -> Result<MomentSet> {
        MomentSet::new(self)
    }

    pub fn asymptotic_covariance(&self) -> Result<DMatrix<f64>> {
        Ok(self.moments()?.sigma)
    }

    /// True iff the support generates `ℤ^d` as a group.
    pub fn lattice_check(&self) -> bool {
        lattice_generates(self.dim, &self.kernel.support())
    }

    pub fn validate(&self) -> ValidationReport {
        let q = self.transfer();
        let row_residual = q
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let second = self.second_eigenvalue();
        let gap_ok = second <= GAP_THRESHOLD;
        let range = self.kernel.range();
        let lattice = self.lattice_check();

        let mut drift = vec![f64::NAN; self.dim];
        let mut sigma_min = None;
        if let Ok(rho) = self.stationary() {
            for (l, d) in drift.iter_mut().enumerate() {
                *d = rho.dot(&(displacement_operator(self, l) * DVector::from_element(self.states(), 1.0)));
            }
            if gap_ok {
                if let Ok(m) = self.moments() {
                    sigma_min = m.sigma.clone().symmetric_eigen().eigenvalues.iter().copied().reduce(f64::min);
                }
            }
        }
        let drift_ok = drift.iter().all(|d| d.abs() <= DRIFT_TOL);
        let sigma_ok = sigma_min.is_some_and(|v| v > 1e-12);

        let conditions = vec![
            Condition {
                name: "stochastic",
                passed: row_residual <= STOCHASTIC_TOL,
                detail: format!("max row residual {row_residual:e}"),
            },
            Condition {
                name: "spectral_gap",
                passed: gap_ok,
                detail: format!("second eigenvalue modulus {second:.12}"),
            },
            Condition {
                name: "no_drift",
                passed: drift_ok,
                detail: format!("drift {drift:?}"),
            },
            Condition {
                name: "bounded_range",
                passed: range <= 1,
                detail: format!("max |x|inf = {range}"),
            },
            Condition {
                name: "nonsingular_sigma",
                passed: sigma_ok,
                detail: match sigma_min {
                    Some(v) => format!("min eigenvalue {v:e}"),
                    None => "not computable".into(),
                },
            },
            Condition {
                name: "lattice",
                passed: lattice,
                detail: format!("support generates Z^{}: {lattice}", self.dim),
            },
        ];
        ValidationReport {
            row_residual,
            second_eigenvalue: second,
            drift,
            range,
            sigma_min_eigenvalue: sigma_min,
            lattice_generated: lattice,
            conditions,
        }
    }

    /// Fails with [`Error::InvalidModel`] unless every condition passes.
    pub fn require_valid(&self) -> Result<ValidationReport> {
        let report = self.validate();
        if report.passed() {
            Ok(report)
        } else {
            let failed: Vec<_> = report
                .conditions
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect();
            Err(Error::InvalidModel(failed.join("; ")))
        }
    }
}

/// `M_l = Σ_x x_l P_x`.
pub(crate) fn displacement_operator(model: &RwisModel, l: usize) -> DMatrix<f64> {
    let m = model.states();
    model
        .jumps()
        .iter()
        .fold(DMatrix::zeros(m, m), |acc, j| acc + &j.matrix * j.x[l] as f64)
}

pub(crate) fn stationary_of(q: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = q.nrows();
    let w = DMatrix::identity(m, m) - q + DMatrix::from_element(m, m, 1.0);
    let wt = w.transpose();
    let lu = wt.clone().lu();
    let ones = DVector::from_element(m, 1.0);
    let mut rho = lu
        .solve(&ones)
        .ok_or_else(|| Error::NoSpectralGap("stationary system is singular (reducible chain)".into()))?;
    let residual = &ones - &wt * &rho;
    if let Some(corr) = lu.solve(&residual) {
        rho += corr;
    }
    if rho.iter().any(|v| *v < -1e-10) {
        return Err(Error::NoSpectralGap(format!("stationary solve returned negative mass {rho:?}")));
    }
    rho.apply(|v| *v = v.max(0.0));
    let total = rho.sum();
    rho /= total;
    let res = (rho.transpose() * q - rho.transpose()).amax();
    if res > STATIONARY_TOL {
        return Err(Error::NoSpectralGap(format!("stationary residual {res:e} exceeds tolerance")));
    }
    Ok(rho)
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// The group generated by integer vectors is `ℤ^d` iff the gcd of all
/// `d × d` minors of the generator matrix equals 1.
pub fn lattice_generates(dim: usize, support: &[Site]) -> bool {
    match dim {
        1 => support.iter().fold(0, |g, x| gcd(g, x[0])) == 1,
        2 => {
            let mut g = 0;
            for (i, a) in support.iter().enumerate() {
                for b in &support[i + 1..] {
                    g = gcd(g, a[0] * b[1] - a[1] * b[0]);
                }
            }
            g == 1
        }
        _ => false,
    }
}
