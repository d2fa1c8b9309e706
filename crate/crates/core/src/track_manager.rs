//! Track existence propagation, confirmation/termination and birth initialization.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::jpda::PreparedExternal;
use crate::models::{GaussianEstimate, Measurement};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    /// A confirmed track that lost its target and is held for possible reappearance.
    TentativeReappearing,
    Terminated,
}

impl TrackStatus {
    pub fn can_transition(self, to: TrackStatus) -> bool {
        use TrackStatus::*;
        self == to
            || matches!(
                (self, to),
                (Tentative, Confirmed)
                    | (Tentative, Terminated)
                    | (Confirmed, TentativeReappearing)
                    | (Confirmed, Terminated)
                    | (TentativeReappearing, Confirmed)
                    | (TentativeReappearing, Terminated)
            )
    }

    pub fn is_alive(self) -> bool {
        self != TrackStatus::Terminated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackManagerConfig {
    pub p_e: f64,
    pub p_t: f64,
    pub p_s: f64,
    /// Reappearance window (s).
    pub t_d: f64,
    /// Covariance given to a held track's prediction when it is tested against measurements.
    pub p_r: Matrix6<f64>,
}

impl Default for TrackManagerConfig {
    fn default() -> Self {
        Self {
            p_e: 0.8,
            p_t: 0.2,
            p_s: 0.98,
            t_d: 20.0,
            p_r: Matrix6::from_diagonal(&Vector6::new(120.0, 120.0, 50.0, 500.0, 500.0, 5.0)),
        }
    }
}

impl TrackManagerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.p_t && self.p_t < self.p_e && self.p_e < 1.0) {
            return Err(Error::config("need 0 < p_t < p_e < 1"));
        }
        if !(self.p_s > 0.0 && self.p_s <= 1.0) {
            return Err(Error::config("p_s must lie in (0, 1]"));
        }
        if !(self.t_d >= 0.0) {
            return Err(Error::config("t_d must be non-negative"));
        }
        if self.p_r.cholesky().is_none() {
            return Err(Error::config("P_r must be positive definite"));
        }
        Ok(())
    }

    /// Number of scans a held track survives.
    pub fn hold_scans(&self, dt: f64) -> usize {
        (self.t_d / dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceState {
    pub prob: f64,
    pub last_confirmed_scan: Option<usize>,
    /// Scan at which a held track is terminated.
    pub reappear_deadline: Option<usize>,
}

impl ExistenceState {
    pub fn new(prob: f64) -> Self {
        Self { prob, last_confirmed_scan: None, reappear_deadline: None }
    }
}

pub fn predict_existence(prob_prev: f64, cfg: &TrackManagerConfig) -> f64 {
    cfg.p_s * prob_prev
}

/// Existence given that the track was not detected.
pub fn existence_missed(prior: f64, p_d: f64, p_g: f64) -> f64 {
    let pdg = p_d * p_g;
    let den = 1.0 - pdg * prior;
    if den <= 0.0 {
        // only reachable with P_D P_G = prior = 1: a miss is impossible
        return 0.0;
    }
    (1.0 - pdg) * prior / den
}

/// Existence of a track originating from an external-source measurement.
pub fn existence_external(lambda_f: f64, lambda_e: f64) -> Result<f64> {
    if !(lambda_e > 0.0) {
        return Err(Error::ZeroExternalIntensity);
    }
    Ok((1.0 - lambda_f / lambda_e).clamp(0.0, 1.0))
}

/// Association-conditioned existence values `[miss, 1, 1, …]` for a track with
/// `n_gated` gated measurements.
pub fn existence_values(prior: f64, n_gated: usize, p_d: f64, p_g: f64) -> Vec<f64> {
    let mut v = vec![1.0; n_gated + 1];
    v[0] = existence_missed(prior, p_d, p_g);
    v
}

pub fn update_existence(beta: &[f64], values: &[f64]) -> f64 {
    beta.iter().zip(values).map(|(b, v)| b * v).sum::<f64>().clamp(0.0, 1.0)
}

/// Association probabilities conditioned on the target existing.
pub fn existence_conditioned_beta(beta: &[f64], values: &[f64], prob_post: f64) -> Vec<f64> {
    if prob_post <= 0.0 {
        return beta.to_vec();
    }
    beta.iter().zip(values).map(|(b, v)| b * v / prob_post).collect()
}

/// Outcome of the status logic for one scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatusDecision {
    pub status: TrackStatus,
    /// Set when the track has just been put on hold.
    pub entered_hold: bool,
}

/// Applies the confirmation/termination logic with the reappearance hold.
pub fn next_status(
    status: TrackStatus,
    existence: &mut ExistenceState,
    scan: usize,
    dt: f64,
    cfg: &TrackManagerConfig,
) -> StatusDecision {
    use TrackStatus::*;
    let p = existence.prob;
    let mut entered_hold = false;
    let next = match status {
        Tentative if p >= cfg.p_e => Confirmed,
        Tentative if p < cfg.p_t => Terminated,
        Confirmed if p < cfg.p_t => {
            let hold = cfg.hold_scans(dt);
            if hold == 0 {
                Terminated
            } else {
                existence.reappear_deadline = Some(scan + hold);
                entered_hold = true;
                TentativeReappearing
            }
        }
        TentativeReappearing if p > cfg.p_e => {
            existence.reappear_deadline = None;
            Confirmed
        }
        TentativeReappearing if existence.reappear_deadline.is_some_and(|d| scan >= d) => Terminated,
        s => s,
    };
    if next == Confirmed {
        existence.last_confirmed_scan = Some(scan);
    }
    debug_assert!(status.can_transition(next));
    StatusDecision { status: next, entered_hold }
}

/// Posterior over birth places for one measurement and the max-posterior index (lowest
/// index on ties). `None` when every weight underflows.
pub fn birth_posteriors(z: &Measurement, external: &PreparedExternal, n_birth: usize) -> Option<(Vec<f64>, usize)> {
    let w = external.source_intensities(z);
    let w = &w[..n_birth.min(w.len())];
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let post: Vec<f64> = w.iter().map(|x| x / total).collect();
    let mut best = 0;
    for (n, &p) in post.iter().enumerate() {
        if p > post[best] {
            best = n;
        }
    }
    Some((post, best))
}

/// Moment-matched single Gaussian of a weighted mixture.
pub fn mixture_moments(weights: &[f64], comps: &[GaussianEstimate]) -> GaussianEstimate {
    let mut mean = Vector6::zeros();
    for (w, c) in weights.iter().zip(comps) {
        mean += c.mean * *w;
    }
    let mut cov = Matrix6::zeros();
    for (w, c) in weights.iter().zip(comps) {
        let d = c.mean - mean;
        cov += (c.cov + d * d.transpose()) * *w;
    }
    GaussianEstimate { mean, cov: (cov + cov.transpose()) * 0.5 }
}
