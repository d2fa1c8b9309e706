//! OSPA distance with the localization/cardinality split.

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaConfig {
    /// Cut-off distance (m).
    pub c: f64,
    /// Order.
    pub p: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self { c: 25.0, p: 1.0 }
    }
}

impl OspaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.p >= 1.0) {
            return Err(Error::config("OSPA needs c > 0 and p >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OspaResult {
    pub distance: f64,
    pub loc_error: f64,
    pub card_error: f64,
}

/// Cut-off cost matrix `min(c, d)^p` with the smaller set on the rows.
pub fn cost_matrix(x: &[Vector2<f64>], y: &[Vector2<f64>], cfg: &OspaConfig) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), y.len(), |i, j| (x[i] - y[j]).norm().min(cfg.c).powf(cfg.p))
}

fn from_parts(matched: f64, m: usize, n: usize, cfg: &OspaConfig) -> OspaResult {
    let nf = n as f64;
    let card_term = cfg.c.powf(cfg.p) * (n - m) as f64;
    let inv_p = 1.0 / cfg.p;
    OspaResult {
        distance: ((matched + card_term) / nf).powf(inv_p),
        loc_error: (matched / nf).powf(inv_p),
        card_error: (card_term / nf).powf(inv_p),
    }
}

/// OSPA between two planar point sets.
pub fn ospa(x: &[Vector2<f64>], y: &[Vector2<f64>], cfg: &OspaConfig) -> OspaResult {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    if large.is_empty() {
        return OspaResult::default();
    }
    let cost = cost_matrix(small, large, cfg);
    let assign = assignment::solve(&cost);
    from_parts(assignment::total_cost(&cost, &assign), small.len(), large.len(), cfg)
}

/// Factorial brute-force reference, for small sets only.
pub fn ospa_brute_force(x: &[Vector2<f64>], y: &[Vector2<f64>], cfg: &OspaConfig) -> OspaResult {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    if large.is_empty() {
        return OspaResult::default();
    }
    let cost = cost_matrix(small, large, cfg);
    fn rec(cost: &DMatrix<f64>, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.nrows() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.ncols() {
            if !used[j] {
                used[j] = true;
                rec(cost, row + 1, used, acc + cost[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(&cost, 0, &mut vec![false; large.len()], 0.0, &mut best);
    from_parts(best, small.len(), large.len(), cfg)
}
