//! Built-in models used by tests, examples and the command line.

use nalgebra::DMatrix;

use super::{RwisModel, Site};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: &[&str] = &["simple1d", "simple2d", "persistent1d", "directional2d", "drift1d"];

/// Looks up a built-in model by name; `persistent1d` uses `p = 0.7`.
pub fn builtin(name: &str) -> Result<RwisModel> {
    match name {
        "simple1d" => Ok(simple1d()),
        "simple2d" => Ok(simple2d()),
        "persistent1d" => persistent1d(0.7),
        "directional2d" => Ok(directional2d()),
        "drift1d" => Ok(drift1d()),
        other => Err(Error::InvalidModel(format!(
            "unknown built-in model '{other}' (known: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Nearest-neighbour symmetric walk on `ℤ`.
pub fn simple1d() -> RwisModel {
    RwisModel::new(1, 1, 1.0, vec![([1, 0], scalar(0.5)), ([-1, 0], scalar(0.5))]).expect("valid built-in")
}

/// Nearest-neighbour symmetric walk on `ℤ²`.
pub fn simple2d() -> RwisModel {
    let jumps = [[1, 0], [-1, 0], [0, 1], [0, -1]].map(|x| (x, scalar(0.25)));
    RwisModel::new(2, 1, 1.0, jumps.to_vec()).expect("valid built-in")
}

/// Deterministic motion to the right; violates the no-drift condition.
pub fn drift1d() -> RwisModel {
    RwisModel::new(1, 1, 1.0, vec![([1, 0], scalar(1.0))]).expect("valid built-in")
}

/// Two-state persistent walk on `ℤ`: state 0 moves right, state 1 moves
/// left; each jump keeps the direction with probability `p` and reverses it
/// otherwise. Its asymptotic variance is `p / (1 − p)`.
pub fn persistent1d(p: f64) -> Result<RwisModel> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidModel(format!("persistence p = {p} must lie in (0, 1)")));
    }
    let q = 1.0 - p;
    let right = DMatrix::from_row_slice(2, 2, &[p, 0.0, q, 0.0]);
    let left = DMatrix::from_row_slice(2, 2, &[0.0, q, 0.0, p]);
    RwisModel::new(1, 2, 1.0, vec![([1, 0], right), ([-1, 0], left)])
}

/// Four-state chiral walk on `ℤ²`. States are the axis directions
/// `+x, +y, −x, −y`; at each jump the direction is kept (0.5), turned left
/// (0.25), turned right (0.15) or reversed (0.1), and the walker steps one
/// site along the new direction.
pub fn directional2d() -> RwisModel {
    const DIRS: [Site; 4] = [[1, 0], [0, 1], [-1, 0], [0, -1]];
    const TURN: [(usize, f64); 4] = [(0, 0.5), (1, 0.25), (3, 0.15), (2, 0.1)];
    let jumps = DIRS
        .iter()
        .enumerate()
        .map(|(v, &x)| {
            let mut p = DMatrix::zeros(4, 4);
            for u in 0..4 {
                for &(shift, prob) in &TURN {
                    if (u + shift) % 4 == v {
                        p[(u, v)] += prob;
                    }
                }
            }
            (x, p)
        })
        .collect();
    RwisModel::new(2, 4, 1.0, jumps).expect("valid built-in")
}
