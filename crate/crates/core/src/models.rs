//! Constant-velocity target dynamics, the range/elevation/azimuth sensor and the EKF steps.

use std::f64::consts::PI;

use log::trace;
use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `[p_x, p_y, p_z, v_x, v_y, v_z]`.
pub type StateVector = Vector6<f64>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MIN_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimate {
    pub mean: StateVector,
    pub cov: Matrix6<f64>,
}

impl GaussianEstimate {
    pub fn new(mean: StateVector, cov: Matrix6<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into_owned()
    }
}

/// One sensor return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Range (m).
    pub r: f64,
    /// Elevation from the upward vertical (rad), in [0, π].
    pub theta: f64,
    /// Azimuth (rad), in (−π, π].
    pub xi: f64,
    /// Index within the scan.
    pub id: usize,
}

impl Measurement {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.r, self.theta, self.xi)
    }

    pub fn from_vector(v: &Vector3<f64>, id: usize) -> Self {
        Self { r: v[0], theta: v[1], xi: wrap_angle(v[2]), id }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub uav_pos: Vector3<f64>,
    pub r_cov: Matrix3<f64>,
    pub p_d: f64,
    pub p_g: f64,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_d > 0.0 && self.p_d <= 1.0) {
            return Err(Error::config("P_D must be in (0, 1]"));
        }
        if !(self.p_g > 0.0 && self.p_g < 1.0) {
            return Err(Error::config("P_G must be in (0, 1)"));
        }
        if self.r_cov.cholesky().is_none() {
            return Err(Error::config("measurement covariance must be positive definite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub dt: f64,
    pub q: Matrix6<f64>,
}

impl MotionConfig {
    pub fn transition(&self) -> Matrix6<f64> {
        let mut f = Matrix6::identity();
        for i in 0..3 {
            f[(i, i + 3)] = self.dt;
        }
        f
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Symmetrizes and floors negative eigenvalues at zero.
pub fn condition_cov(p: &Matrix6<f64>) -> Matrix6<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let floored = eig.eigenvalues.map(|l| l.max(0.0));
    let out = eig.eigenvectors * Matrix6::from_diagonal(&floored) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

pub fn predict(est: &GaussianEstimate, cfg: &MotionConfig) -> GaussianEstimate {
    let f = cfg.transition();
    let cov = f * est.cov * f.transpose() + cfg.q;
    GaussianEstimate { mean: f * est.mean, cov: (cov + cov.transpose()) * 0.5 }
}

/// Noise-free measurement of a state.
pub fn measure(x: &StateVector, cfg: &SensorConfig) -> Result<Measurement> {
    let d = x.fixed_rows::<3>(0) - cfg.uav_pos;
    let r = d.norm();
    if r < MIN_RANGE {
        return Err(Error::DegenerateGeometry("zero range"));
    }
    let theta = (d.z / r).clamp(-1.0, 1.0).acos();
    let xi = if d.x == 0.0 && d.y == 0.0 {
        trace!("azimuth undefined for vertical geometry, using 0");
        0.0
    } else {
        d.y.atan2(d.x)
    };
    Ok(Measurement { r, theta, xi, id: 0 })
}

/// Position whose noise-free measurement is `z`.
pub fn invert_measurement(z: &Measurement, cfg: &SensorConfig) -> Vector3<f64> {
    let st = z.theta.sin();
    cfg.uav_pos + Vector3::new(z.r * st * z.xi.cos(), z.r * st * z.xi.sin(), z.r * z.theta.cos())
}

/// Jacobian of the measurement function at `x`; velocity columns are zero.
pub fn jacobian(x: &StateVector, cfg: &SensorConfig) -> Result<Matrix3x6<f64>> {
    let d = x.fixed_rows::<3>(0) - cfg.uav_pos;
    let r2 = d.norm_squared();
    let r = r2.sqrt();
    let rho2 = d.x * d.x + d.y * d.y;
    let rho = rho2.sqrt();
    if r < MIN_RANGE || rho < MIN_RANGE {
        return Err(Error::DegenerateGeometry("jacobian undefined at vertical or zero range"));
    }
    let mut h = Matrix3x6::zeros();
    h[(0, 0)] = d.x / r;
    h[(0, 1)] = d.y / r;
    h[(0, 2)] = d.z / r;
    // theta = acos(dz / r): d/dp = (dz * p_h / (r^2 rho), -rho / r^2)
    h[(1, 0)] = d.x * d.z / (r2 * rho);
    h[(1, 1)] = d.y * d.z / (r2 * rho);
    h[(1, 2)] = -rho / r2;
    h[(2, 0)] = -d.y / rho2;
    h[(2, 1)] = d.x / rho2;
    Ok(h)
}

/// Linearised measurement prediction for one predicted estimate.
///
/// Computed once per (track, hypothesis) and reused for every candidate measurement.
#[derive(Debug, Clone)]
pub struct MeasurementPrediction {
    pub zhat: Vector3<f64>,
    pub h: Matrix3x6<f64>,
    pub s: Matrix3<f64>,
    pub s_inv: Matrix3<f64>,
    pub gain: Matrix6x3<f64>,
    /// `−½ ln |2π S|`.
    pub log_norm: f64,
}

impl MeasurementPrediction {
    pub fn new(pred: &GaussianEstimate, cfg: &SensorConfig) -> Result<Self> {
        let zhat = measure(&pred.mean, cfg)?.as_vector();
        let h = jacobian(&pred.mean, cfg)?;
        let s = h * pred.cov * h.transpose() + cfg.r_cov;
        let s = (s + s.transpose()) * 0.5;
        let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
        let s_inv = chol.inverse();
        let det = chol.determinant();
        if !(det > 0.0 && det.is_finite()) {
            return Err(Error::SingularInnovation);
        }
        let gain = pred.cov * h.transpose() * s_inv;
        let log_norm = -0.5 * (3.0 * LN_2PI + det.ln());
        Ok(Self { zhat, h, s, s_inv, gain, log_norm })
    }

    /// Innovation with the azimuth component wrapped to (−π, π].
    pub fn innovation(&self, z: &Measurement) -> Vector3<f64> {
        let mut nu = z.as_vector() - self.zhat;
        nu[2] = wrap_angle(nu[2]);
        nu
    }

    pub fn mahalanobis2(&self, z: &Measurement) -> f64 {
        let nu = self.innovation(z);
        (nu.transpose() * self.s_inv * nu)[0]
    }

    pub fn log_likelihood(&self, z: &Measurement) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis2(z)
    }

    pub fn likelihood(&self, z: &Measurement) -> f64 {
        self.log_likelihood(z).exp()
    }

    /// EKF posterior given `z`.
    pub fn update(&self, pred: &GaussianEstimate, z: &Measurement) -> GaussianEstimate {
        let nu = self.innovation(z);
        let mean = pred.mean + self.gain * nu;
        let cov = (Matrix6::identity() - self.gain * self.h) * pred.cov;
        GaussianEstimate { mean, cov: condition_cov(&cov) }
    }
}

#[derive(Debug, Clone)]
pub struct EkfUpdate {
    pub estimate: GaussianEstimate,
    pub likelihood: f64,
    pub log_likelihood: f64,
    pub innovation_cov: Matrix3<f64>,
}

pub fn ekf_update(pred: &GaussianEstimate, z: &Measurement, cfg: &SensorConfig) -> Result<EkfUpdate> {
    let mp = MeasurementPrediction::new(pred, cfg)?;
    let log_likelihood = mp.log_likelihood(z);
    Ok(EkfUpdate {
        estimate: mp.update(pred, z),
        likelihood: log_likelihood.exp(),
        log_likelihood,
        innovation_cov: mp.s,
    })
}
