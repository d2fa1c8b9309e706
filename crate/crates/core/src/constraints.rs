//! Linear road constraints and the projection correction.
//!
//! Constraints are written column-wise as `Dᵀ x = d` with `D` a 6×c matrix. Line
//! constraints use the unit normal `n = (−sin θ, cos θ)` of the segment rather than the
//! slope row `[−tan θ, 1]`; the two agree up to the factor `cos θ` wherever the slope
//! form exists.

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::models::{condition_cov, GaussianEstimate, StateVector};
use crate::roadmap::RoadSegment;
use crate::{Error, Result};

const BOUND_TOL: f64 = 1e-12;
const DEPENDENCE_TOL: f64 = 1e-9;

/// Which constraint blocks are active: 0 = none, 1 = heading, 2 = position, 3 = speed,
/// 4 = heading+position, 5 = heading+speed, 6 = position+speed, 7 = all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ConstraintCase(u8);

impl ConstraintCase {
    pub const NONE: Self = Self(0);
    pub const HEADING: Self = Self(1);
    pub const HEADING_POSITION: Self = Self(4);
    pub const ALL: Self = Self(7);

    pub fn new(case: u8) -> Result<Self> {
        if case <= 7 {
            Ok(Self(case))
        } else {
            Err(Error::config(format!("constraint case must be 0..=7, got {case}")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn heading(self) -> bool {
        matches!(self.0, 1 | 4 | 5 | 7)
    }

    pub fn position(self) -> bool {
        matches!(self.0, 2 | 4 | 6 | 7)
    }

    pub fn speed(self) -> bool {
        matches!(self.0, 3 | 5 | 6 | 7)
    }
}

impl TryFrom<u8> for ConstraintCase {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConstraintCase> for u8 {
    fn from(c: ConstraintCase) -> u8 {
        c.0
    }
}

/// Velocity bounds `v_inf ≤ frameᵀ v ≤ v_sup`.
///
/// With `frame = I` these are world-axis bounds. [`SpeedLimits::along_segment`] puts the
/// scalar speed band on the segment direction and zero on the cross-track axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedLimits {
    pub v_inf: Vector3<f64>,
    pub v_sup: Vector3<f64>,
    pub frame: Matrix3<f64>,
}

impl SpeedLimits {
    pub fn world(v_inf: Vector3<f64>, v_sup: Vector3<f64>) -> Result<Self> {
        if (0..3).any(|i| v_inf[i] > v_sup[i]) {
            return Err(Error::config("v_inf must not exceed v_sup"));
        }
        if v_inf.z != 0.0 || v_sup.z != 0.0 {
            return Err(Error::config("vertical speed bounds must be zero"));
        }
        Ok(Self { v_inf, v_sup, frame: Matrix3::identity() })
    }

    pub fn along_segment(seg: &RoadSegment, min_speed: f64, max_speed: f64) -> Self {
        let u = seg.direction();
        let n = seg.normal();
        let frame = Matrix3::from_columns(&[
            Vector3::new(u.x, u.y, 0.0),
            Vector3::new(n.x, n.y, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ]);
        Self {
            v_inf: Vector3::new(min_speed, 0.0, 0.0),
            v_sup: Vector3::new(max_speed, 0.0, 0.0),
            frame,
        }
    }
}

fn velocity_column(dir: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[0.0, 0.0, 0.0, dir.x, dir.y, dir.z])
}

fn position_column(dir: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[dir.x, dir.y, dir.z, 0.0, 0.0, 0.0])
}

/// Columns `[0₃; n, 0]` and `[0₃; e_z]` with bounds `[0, 0]`.
pub fn heading_constraint(seg: &RoadSegment) -> (DMatrix<f64>, DVector<f64>) {
    let n = seg.normal();
    let d = DMatrix::from_columns(&[
        velocity_column(&Vector3::new(n.x, n.y, 0.0)),
        velocity_column(&Vector3::z()),
    ]);
    (d, DVector::zeros(2))
}

/// Columns `[n, 0; 0₃]` and `[e_z; 0₃]` with bounds `[ρ, 0]`.
pub fn position_constraint(seg: &RoadSegment) -> (DMatrix<f64>, DVector<f64>) {
    let n = seg.normal();
    let d = DMatrix::from_columns(&[
        position_column(&Vector3::new(n.x, n.y, 0.0)),
        position_column(&Vector3::z()),
    ]);
    (d, DVector::from_column_slice(&[seg.offset(), 0.0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedConstraint {
    pub d: DMatrix<f64>,
    pub bound: DVector<f64>,
    /// Whether any in-plane bound is violated (the vertical row is always present).
    pub band_active: bool,
}

/// Relaxes the speed inequality: violated components are clamped to the violated bound,
/// the vertical row is always emitted.
pub fn speed_limit_activate(x: &StateVector, lim: &SpeedLimits) -> SpeedConstraint {
    let v = x.fixed_rows::<3>(3).into_owned();
    let w = lim.frame.transpose() * v;
    let mut cols = Vec::new();
    let mut bounds = Vec::new();
    let mut band_active = false;
    for i in 0..3 {
        let axis = lim.frame.column(i).into_owned();
        let bound = if i == 2 {
            Some(lim.v_inf[2])
        } else if w[i] < lim.v_inf[i] - BOUND_TOL {
            Some(lim.v_inf[i])
        } else if w[i] > lim.v_sup[i] + BOUND_TOL {
            Some(lim.v_sup[i])
        } else {
            None
        };
        if let Some(b) = bound {
            band_active |= i != 2;
            cols.push(velocity_column(&axis));
            bounds.push(b);
        }
    }
    SpeedConstraint {
        d: DMatrix::from_columns(&cols),
        bound: DVector::from_vec(bounds),
        band_active,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    /// 6×c, full column rank.
    pub d: DMatrix<f64>,
    pub bound: DVector<f64>,
    pub case: ConstraintCase,
}

impl ConstraintSpec {
    pub fn empty() -> Self {
        Self { d: DMatrix::zeros(6, 0), bound: DVector::zeros(0), case: ConstraintCase::NONE }
    }

    pub fn columns(&self) -> usize {
        self.d.ncols()
    }

    pub fn residual(&self, x: &StateVector) -> DVector<f64> {
        let xs = DVector::from_column_slice(x.as_slice());
        self.d.transpose() * xs - &self.bound
    }
}

/// Stacks the blocks selected by `case` for segment `seg` at state `x`, dropping
/// linearly dependent columns.
pub fn compose(case: ConstraintCase, seg: &RoadSegment, x: &StateVector, lim: &SpeedLimits) -> ConstraintSpec {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut bounds: Vec<f64> = Vec::new();
    let mut push_block = |d: &DMatrix<f64>, b: &DVector<f64>| {
        for k in 0..d.ncols() {
            cols.push(d.column(k).into_owned());
            bounds.push(b[k]);
        }
    };
    if case.heading() {
        let (d, b) = heading_constraint(seg);
        push_block(&d, &b);
    }
    if case.position() {
        let (d, b) = position_constraint(seg);
        push_block(&d, &b);
    }
    if case.speed() {
        let sc = speed_limit_activate(x, lim);
        push_block(&sc.d, &sc.bound);
    }

    // Gram-Schmidt rank filter
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (k, c) in cols.iter().enumerate() {
        let mut r = c.clone();
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        let norm = r.norm();
        if norm > DEPENDENCE_TOL * c.norm().max(1.0) {
            basis.push(r / norm);
            kept.push(k);
        } else if !cols[..k].iter().any(|p| p == c) {
            warn!("dropping linearly dependent constraint column {k} for case {}", case.value());
        }
    }
    if kept.is_empty() {
        return ConstraintSpec { case, ..ConstraintSpec::empty() };
    }
    let d = DMatrix::from_columns(&kept.iter().map(|&k| cols[k].clone()).collect::<Vec<_>>());
    let bound = DVector::from_iterator(kept.len(), kept.iter().map(|&k| bounds[k]));
    ConstraintSpec { d, bound, case }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionConfig {
    /// Symmetric positive definite weighting matrix.
    pub w: Matrix6<f64>,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self { w: Matrix6::identity() }
    }
}

/// Projector pair `(A, B)` with `A = I − W D (DᵀWD)⁻¹ Dᵀ` and `B = W D (DᵀWD)⁻¹ d`.
pub fn projector(spec: &ConstraintSpec, cfg: &CorrectionConfig) -> Result<(Matrix6<f64>, StateVector)> {
    let w = DMatrix::from_column_slice(6, 6, cfg.w.as_slice());
    let wd = &w * &spec.d;
    let m = spec.d.transpose() * &wd;
    let chol = m.cholesky().ok_or(Error::DegenerateConstraint)?;
    let m_inv = chol.inverse();
    if !m_inv.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateConstraint);
    }
    let gain = &wd * m_inv;
    let a = DMatrix::identity(6, 6) - &gain * spec.d.transpose();
    let b = &gain * &spec.bound;
    Ok((Matrix6::from_column_slice(a.as_slice()), StateVector::from_column_slice(b.as_slice())))
}

/// Minimum-`W⁻¹`-norm correction of the estimate onto `Dᵀ x = d`.
pub fn correct(est: &GaussianEstimate, spec: &ConstraintSpec, cfg: &CorrectionConfig) -> Result<GaussianEstimate> {
    if spec.columns() == 0 {
        return Ok(est.clone());
    }
    let (a, b) = projector(spec, cfg)?;
    let mean = a * est.mean + b;
    let cov = a * est.cov * a.transpose();
    Ok(GaussianEstimate { mean, cov: condition_cov(&cov) })
}
