//! TOML model definition files.
//!
//! ```toml
//! dim = 1
//! states = 2
//! rate = 1.0
//!
//! [[jump]]
//! x = [1]
//! rows = [[0.7, 0.0], [0.3, 0.0]]
//!
//! [[jump]]
//! x = [-1]
//! rows = [[0.0, 0.3], [0.0, 0.7]]
//! ```
//!
//! Every rejection carries the line and column of the offending item.

use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;
use toml::Spanned;

use super::{RwisModel, Site, STOCHASTIC_TOL};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    dim: Spanned<i64>,
    states: Spanned<i64>,
    rate: Spanned<f64>,
    #[serde(default)]
    jump: Vec<RawJump>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJump {
    x: Spanned<Vec<i64>>,
    rows: Spanned<Vec<Spanned<Vec<f64>>>>,
}

/// 1-based line and column of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn at(text: &str, span: Range<usize>, message: impl Into<String>) -> Error {
    let (line, column) = line_col(text, span.start);
    Error::ModelFile {
        line,
        column,
        message: message.into(),
    }
}

pub fn parse_model(text: &str) -> Result<RwisModel> {
    let raw: RawModel = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::ModelFile {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;

    let dim = *raw.dim.get_ref();
    if !(1..=2).contains(&dim) {
        return Err(at(text, raw.dim.span(), format!("dim must be 1 or 2, got {dim}")));
    }
    let dim = dim as usize;
    let states = *raw.states.get_ref();
    if states < 1 {
        return Err(at(text, raw.states.span(), format!("states must be positive, got {states}")));
    }
    let states = states as usize;
    let rate = *raw.rate.get_ref();
    if !(rate.is_finite() && rate > 0.0) {
        return Err(at(text, raw.rate.span(), format!("rate must be positive, got {rate}")));
    }
    if raw.jump.is_empty() {
        return Err(at(text, 0..0, "no [[jump]] entries"));
    }

    let mut jumps: Vec<(Site, DMatrix<f64>)> = Vec::new();
    let mut row_spans: Vec<Range<usize>> = vec![0..0; states];
    for j in &raw.jump {
        let xs = j.x.get_ref();
        if xs.len() != dim {
            return Err(at(text, j.x.span(), format!("x has {} coordinates, expected {dim}", xs.len())));
        }
        let site: Site = [xs[0], if dim == 2 { xs[1] } else { 0 }];
        if site == [0, 0] {
            return Err(at(text, j.x.span(), "the zero displacement is not allowed"));
        }
        if site.iter().any(|c| c.abs() > 1) {
            return Err(at(text, j.x.span(), format!("jump {xs:?} exceeds range 1 in the sup norm")));
        }
        if jumps.iter().any(|(s, _)| *s == site) {
            return Err(at(text, j.x.span(), format!("duplicate jump {xs:?}")));
        }
        let rows = j.rows.get_ref();
        if rows.len() != states {
            return Err(at(text, j.rows.span(), format!("{} rows, expected {states}", rows.len())));
        }
        let mut matrix = DMatrix::zeros(states, states);
        for (r, row) in rows.iter().enumerate() {
            let vals = row.get_ref();
            if vals.len() != states {
                return Err(at(text, row.span(), format!("row has {} entries, expected {states}", vals.len())));
            }
            for (c, v) in vals.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(at(text, row.span(), format!("entry {v} must be finite and nonnegative")));
                }
                matrix[(r, c)] = *v;
            }
            row_spans[r] = row.span();
        }
        jumps.push((site, matrix));
    }

    let mut sums = vec![0.0; states];
    for (_, m) in &jumps {
        for (r, s) in sums.iter_mut().enumerate() {
            *s += m.row(r).sum();
        }
    }
    if let Some((r, s)) = sums.iter().enumerate().find(|(_, s)| (**s - 1.0).abs() > STOCHASTIC_TOL) {
        return Err(at(
            text,
            row_spans[r].clone(),
            format!("row {r} of the summed kernel adds up to {s}, expected 1"),
        ));
    }
    RwisModel::new(dim, states, rate, jumps)
}

pub fn load_model(path: &Path) -> Result<RwisModel> {
    parse_model(&std::fs::read_to_string(path)?)
}
