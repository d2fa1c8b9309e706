//! Variable-structure segment hypotheses and the per-scan tracker.
//!
//! Each track carries a hypothesis set `{ζ_r, ζ_{r+1}}`: the segment it is believed to be
//! on and the next one along the road. Both run a constrained JPDA filter in parallel and
//! the set moves forward once the next segment's posterior passes `p_u`.

use std::sync::Arc;

use log::{debug, trace};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::constraints::{compose, correct, ConstraintCase, CorrectionConfig, SpeedLimits};
use crate::jpda::{self, AssociationParams, ClutterBirthModel, ExternalSource, GateResult, PreparedExternal};
use crate::models::{predict, GaussianEstimate, Measurement, MeasurementPrediction, MotionConfig, SensorConfig};
use crate::roadmap::{RoadEnd, RoadMap, RoadSegment};
use crate::track_manager::{
    birth_posteriors, existence_conditioned_beta, existence_external, existence_values, mixture_moments,
    next_status, predict_existence, update_existence, ExistenceState, TrackManagerConfig, TrackStatus,
};
use crate::{Error, Result};

const RATIO_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VsmmConfig {
    /// Posterior needed to move the set onto the next segment.
    pub p_u: f64,
    /// `pi[(a, b)]`: probability of moving from set element `a` to element `b`.
    pub pi: Matrix2<f64>,
    /// Probabilities given to `[ζ_r, ζ_{r+1}]` right after the set moves.
    pub reset_probs: [f64; 2],
    /// When set, `pi` is replaced per scan by a dwell-time chain (see [`Dwell`]).
    #[serde(default)]
    pub dwell: Option<Dwell>,
}

/// Speed used by the dwell-time chain: a vehicle at speed `v` leaves a segment of length `L`
/// with probability `min(v·dt/L, 1)` per scan and never returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dwell {
    /// The track's own estimated speed.
    Track,
    /// A fixed speed (m/s).
    Fixed(f64),
}

impl Default for VsmmConfig {
    fn default() -> Self {
        Self { p_u: 0.65, pi: Matrix2::new(0.95, 0.05, 0.05, 0.95), reset_probs: [0.9, 0.1], dwell: None }
    }
}

impl VsmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_u > 0.5 && self.p_u < 1.0) {
            return Err(Error::config("p_u must lie in (0.5, 1)"));
        }
        for r in 0..2 {
            let row = self.pi.row(r);
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::config("rows of Pi must be probability vectors"));
            }
        }
        let [a, b] = self.reset_probs;
        if a < 0.0 || b < 0.0 || (a + b - 1.0).abs() > 1e-12 {
            return Err(Error::config("reset_probs must sum to 1"));
        }
        if let Some(Dwell::Fixed(v)) = self.dwell {
            if !(v > 0.0) {
                return Err(Error::config("dwell speed must be positive"));
            }
        }
        Ok(())
    }

    /// Transition matrix for a set whose current segment has length `seg_len`, for a
    /// track moving at `speed`.
    pub fn transition(&self, seg_len: f64, speed: f64, dt: f64) -> Matrix2<f64> {
        let v = match self.dwell {
            Some(Dwell::Track) => speed.max(1.0),
            Some(Dwell::Fixed(v)) => v,
            None => return self.pi,
        };
        let q = if seg_len > 0.0 { (v * dt / seg_len).min(1.0) } else { 1.0 };
        Matrix2::new(1.0 - q, q, 0.0, 1.0)
    }
}

/// Candidate segments of one track with their posteriors and estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    /// Segment indices on the track's road, in travel order; one or two entries.
    pub segments: Vec<usize>,
    pub probs: Vec<f64>,
    pub estimates: Vec<GaussianEstimate>,
}

impl HypothesisSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Mixes the previous posteriors through `Π`.
pub fn predict_hypothesis(probs_prev: &[f64], pi: &Matrix2<f64>) -> Vec<f64> {
    if probs_prev.len() < 2 {
        return probs_prev.to_vec();
    }
    let p = probs_prev;
    let out = [p[0] * pi[(0, 0)] + p[1] * pi[(1, 0)], p[0] * pi[(0, 1)] + p[1] * pi[(1, 1)]];
    let s = out[0] + out[1];
    vec![out[0] / s, out[1] / s]
}


/// `Λ = Σ_ζ p(ζ) Λ(ζ)`.
pub fn fuse_likelihood(lik: &[f64], prior: &[f64]) -> f64 {
    lik.iter().zip(prior).map(|(l, p)| l * p).sum()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > RATIO_FLOOR {
        num / den
    } else {
        1.0
    }
}

/// Segment posteriors from the association marginals.
///
/// `lik[ζ][k]` is the likelihood of the k-th gated measurement under hypothesis ζ,
/// `fused[k]` its fusion and `beta = [β_0, β_1, …]`. The miss term uses a likelihood
/// ratio of one.
pub fn update_hypothesis_posterior(prior: &[f64], lik: &[Vec<f64>], fused: &[f64], beta: &[f64]) -> Vec<f64> {
    if prior.len() < 2 {
        return prior.to_vec();
    }
    let raw: Vec<f64> = prior
        .iter()
        .zip(lik)
        .map(|(p, l)| {
            let det: f64 = l.iter().zip(fused).zip(&beta[1..]).map(|((lz, lf), b)| ratio(*lz, *lf) * b).sum();
            p * (beta[0] + det)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        debug!("hypothesis posterior has no mass, keeping prior");
        return prior.to_vec();
    }
    raw.iter().map(|r| r / total).collect()
}

/// Segment-conditioned association probabilities `β_j(ζ)`, renormalized per ζ.
pub fn hypothesis_conditioned_marginals(
    beta: &[f64],
    prior: &[f64],
    post: &[f64],
    lik: &[Vec<f64>],
    fused: &[f64],
) -> Vec<Vec<f64>> {
    if prior.len() < 2 {
        return vec![beta.to_vec()];
    }
    (0..prior.len())
        .map(|z| {
            let hyp = ratio(prior[z], post[z]);
            let mut b: Vec<f64> = Vec::with_capacity(beta.len());
            b.push(beta[0] * hyp);
            for k in 0..fused.len() {
                b.push(beta[k + 1] * hyp * ratio(lik[z][k], fused[k]));
            }
            let s: f64 = b.iter().sum();
            if s > 0.0 {
                b.iter_mut().for_each(|x| *x /= s);
                b
            } else {
                beta.to_vec()
            }
        })
        .collect()
}

/// Moment-matched collapse of the association-conditioned estimates of one hypothesis.
pub fn collapse_mixture(components: &[GaussianEstimate], beta: &[f64]) -> GaussianEstimate {
    mixture_moments(beta, components)
}

/// Result of [`maybe_advance_set`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetChange {
    Kept,
    Advanced,
}

/// Next segment index in travel direction.
pub fn segment_ahead(map: &RoadMap, road: usize, seg: usize, forward: bool) -> Option<usize> {
    if forward {
        (seg + 1 < map.segment_count(road)).then_some(seg + 1)
    } else {
        seg.checked_sub(1)
    }
}

fn set_from(map: &RoadMap, road: usize, seg: usize, forward: bool, single: bool, reset: [f64; 2]) -> (Vec<usize>, Vec<f64>) {
    match segment_ahead(map, road, seg, forward) {
        Some(next) if !single => (vec![seg, next], reset.to_vec()),
        _ => (vec![seg], vec![1.0]),
    }
}

/// Moves the set one segment forward when the second element's posterior exceeds `p_u`.
pub fn maybe_advance_set(
    hset: &mut HypothesisSet,
    probs_post: &[f64],
    cfg: &VsmmConfig,
    map: &RoadMap,
    road: usize,
    forward: bool,
) -> SetChange {
    if hset.len() == 2 && probs_post[1] > cfg.p_u {
        let new_first = hset.segments[1];
        let est = hset.estimates[1].clone();
        let (segments, probs) = set_from(map, road, new_first, forward, false, cfg.reset_probs);
        hset.estimates = vec![est; segments.len()];
        hset.segments = segments;
        hset.probs = probs;
        SetChange::Advanced
    } else {
        hset.probs = probs_post.to_vec();
        SetChange::Kept
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    pub status: TrackStatus,
    pub existence: ExistenceState,
    pub road: usize,
    /// Travel direction along the road's segment order.
    pub forward: bool,
    pub hset: HypothesisSet,
    pub born_scan: usize,
    /// Scans at which the hypothesis set moved forward.
    pub set_updates: Vec<usize>,
}

impl Track {
    /// The trusted estimate: the first element of the hypothesis set.
    pub fn output(&self) -> &GaussianEstimate {
        &self.hset.estimates[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub sensor: SensorConfig,
    pub motion: MotionConfig,
    pub manager: TrackManagerConfig,
    pub vsmm: VsmmConfig,
    pub constraint_case: ConstraintCase,
    /// Scalar speed band along the road (m/s).
    pub speed_band: [f64; 2],
    pub weight: nalgebra::Matrix6<f64>,
    /// Clutter density in measurement space.
    pub lambda_f: f64,
    /// Birth intensity per birth place per scan.
    pub lambda_b: f64,
    /// Minimum external-origin probability of a measurement before it may start a track.
    pub birth_min_external: f64,
    pub cluster_cap: usize,
    /// Keep every hypothesis set a singleton (plain constrained JPDA).
    pub single_hypothesis: bool,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.manager.validate()?;
        self.vsmm.validate()?;
        if !(self.motion.dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        if !(self.speed_band[0] <= self.speed_band[1]) {
            return Err(Error::config("speed band must be ordered"));
        }
        if !(self.lambda_f >= 0.0) || !(self.lambda_b >= 0.0) {
            return Err(Error::config("intensities must be non-negative"));
        }
        if self.weight.cholesky().is_none() {
            return Err(Error::config("W must be positive definite"));
        }
        Ok(())
    }

    fn params(&self) -> AssociationParams {
        AssociationParams { p_d: self.sensor.p_d, p_g: self.sensor.p_g, cluster_cap: self.cluster_cap }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    /// Confirmed tracks: (id, trusted estimate).
    pub estimates: Vec<(usize, GaussianEstimate)>,
    /// Number of tracks whose set advanced this scan.
    pub set_advances: usize,
    /// Held tracks confirmed again this scan: (id, trusted estimate).
    pub reconfirmed: Vec<(usize, GaussianEstimate)>,
}

/// Per-track working data for one scan.
struct Work {
    prior_exist: f64,
    prior_h: Vec<f64>,
    preds: Vec<GaussianEstimate>,
    mps: Vec<MeasurementPrediction>,
    gated: Vec<usize>,
    lik: Vec<Vec<f64>>,
    fused: Vec<f64>,
}

pub struct Tracker {
    cfg: TrackerConfig,
    map: Arc<RoadMap>,
    external: PreparedExternal,
    tracks: Vec<Track>,
    next_id: usize,
    correction: CorrectionConfig,
    history: Vec<(usize, usize)>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, map: Arc<RoadMap>) -> Result<Self> {
        cfg.validate()?;
        let model = ClutterBirthModel {
            lambda_f: cfg.lambda_f,
            sources: map
                .birth_places
                .iter()
                .map(|b| ExternalSource { mean: b.mean, cov: b.cov, lambda_b: cfg.lambda_b })
                .collect(),
        };
        let external = PreparedExternal::new(&model, &cfg.sensor)?;
        let correction = CorrectionConfig { w: cfg.weight };
        Ok(Self { cfg, map, external, tracks: Vec::new(), next_id: 0, correction, history: Vec::new() })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Every hypothesis-set advance so far as (track id, scan), including terminated tracks.
    pub fn history(&self) -> &[(usize, usize)] {
        &self.history
    }

    pub fn external(&self) -> &PreparedExternal {
        &self.external
    }

    fn speed_limits(&self, road: usize, seg: usize, forward: bool) -> SpeedLimits {
        let s = self.map.segment(road, seg);
        let oriented = if forward { s.clone() } else { RoadSegment::new(s.end, s.start, s.index) };
        SpeedLimits::along_segment(&oriented, self.cfg.speed_band[0], self.cfg.speed_band[1])
    }

    fn constrain(&self, track: &mut Track) -> Result<()> {
        if self.cfg.constraint_case == ConstraintCase::NONE {
            return Ok(());
        }
        for (k, &seg) in track.hset.segments.iter().enumerate() {
            let est = &track.hset.estimates[k];
            let lim = self.speed_limits(track.road, seg, track.forward);
            let spec = compose(self.cfg.constraint_case, self.map.segment(track.road, seg), &est.mean, &lim);
            track.hset.estimates[k] = correct(est, &spec, &self.correction)?;
        }
        Ok(())
    }

    /// Nearest segment to the track's position at or ahead of its current segment.
    fn reanchor(&self, track: &mut Track) {
        let est = track.output().clone();
        let p = est.mean.fixed_rows::<2>(0).into_owned();
        let mut best = track.hset.segments[0];
        let mut best_d = self.map.segment(track.road, best).distance(&p);
        let mut cur = best;
        while let Some(next) = segment_ahead(&self.map, track.road, cur, track.forward) {
            let d = self.map.segment(track.road, next).distance(&p);
            if d < best_d {
                best_d = d;
                best = next;
            }
            cur = next;
        }
        let (segments, probs) =
            set_from(&self.map, track.road, best, track.forward, self.cfg.single_hypothesis, self.cfg.vsmm.reset_probs);
        track.hset = HypothesisSet { estimates: vec![est; segments.len()], segments, probs };
    }

    fn spawn(&mut self, z: &Measurement, existence: f64, scan: usize) -> Option<Track> {
        let n = self.map.birth_places.len();
        let (_, best) = birth_posteriors(z, &self.external, n)?;
        let bp = &self.map.birth_places[best];
        // a birth at the road's far end travels against the segment order
        let forward = self.birth_end(best) == RoadEnd::Start;
        let (segments, probs) =
            set_from(&self.map, bp.road, bp.segment, forward, self.cfg.single_hypothesis, self.cfg.vsmm.reset_probs);
        let est = GaussianEstimate::new(bp.mean, bp.cov);
        let track = Track {
            id: self.next_id,
            status: TrackStatus::Tentative,
            existence: ExistenceState::new(existence),
            road: bp.road,
            forward,
            hset: HypothesisSet { estimates: vec![est; segments.len()], segments, probs },
            born_scan: scan,
            set_updates: Vec::new(),
        };
        self.next_id += 1;
        Some(track)
    }

    fn birth_end(&self, idx: usize) -> RoadEnd {
        let bp = &self.map.birth_places[idx];
        let seg = self.map.segment(bp.road, bp.segment);
        let p = bp.mean.fixed_rows::<2>(0).into_owned();
        if (p - seg.start).norm() <= (p - seg.end).norm() {
            RoadEnd::Start
        } else {
            RoadEnd::End
        }
    }

    fn prepare(&self, track: &Track, zs: &[Measurement], gamma: f64) -> Result<Work> {
        let held = track.status == TrackStatus::TentativeReappearing;
        let prior_exist = predict_existence(track.existence.prob, &self.cfg.manager);
        let seg_len = self.map.segment(track.road, track.hset.segments[0]).length();
        let pi = self.cfg.vsmm.transition(seg_len, track.output().velocity().norm(), self.cfg.motion.dt);
        let prior_h = predict_hypothesis(&track.hset.probs, &pi);
        let mut preds = Vec::with_capacity(track.hset.len());
        let mut mps = Vec::with_capacity(track.hset.len());
        let mut gated: Vec<usize> = Vec::new();
        for est in &track.hset.estimates {
            let mut pred = predict(est, &self.cfg.motion);
            if held {
                pred.cov = self.cfg.manager.p_r;
            }
            let mp = MeasurementPrediction::new(&pred, &self.cfg.sensor)?;
            for (j, z) in zs.iter().enumerate() {
                if mp.mahalanobis2(z) <= gamma && !gated.contains(&j) {
                    gated.push(j);
                }
            }
            preds.push(pred);
            mps.push(mp);
        }
        gated.sort_unstable();
        let lik: Vec<Vec<f64>> = mps.iter().map(|mp| gated.iter().map(|&j| mp.likelihood(&zs[j])).collect()).collect();
        let fused: Vec<f64> = if lik.len() == 1 {
            lik[0].clone()
        } else {
            (0..gated.len())
                .map(|k| fuse_likelihood(&lik.iter().map(|l| l[k]).collect::<Vec<_>>(), &prior_h))
                .collect()
        };
        Ok(Work { prior_exist, prior_h, preds, mps, gated, lik, fused })
    }

    /// Processes one scan of measurements.
    pub fn step(&mut self, scan: usize, zs: &[Measurement]) -> Result<ScanOutput> {
        self.tracks.retain(|t| t.status.is_alive());
        let gamma = jpda::gate_threshold(self.cfg.sensor.p_g);
        let work: Vec<Work> = self.tracks.iter().map(|t| self.prepare(t, zs, gamma)).collect::<Result<_>>()?;

        let gate = GateResult {
            threshold: gamma,
            gated: work.iter().map(|w| w.gated.clone()).collect(),
            likelihood: work.iter().map(|w| w.fused.clone()).collect(),
        };
        let lambda_e: Vec<f64> = zs.iter().map(|z| self.external.intensity(z)).collect();
        let priors: Vec<f64> = work.iter().map(|w| w.prior_exist).collect();
        let assoc = jpda::associate(&gate, &priors, &lambda_e, &self.cfg.params())?;

        let (p_d, p_g) = (self.cfg.sensor.p_d, self.cfg.sensor.p_g);
        let mut set_advances = 0;
        let mut reconfirmed = Vec::new();
        let mut tracks = std::mem::take(&mut self.tracks);
        for (i, (track, w)) in tracks.iter_mut().zip(&work).enumerate() {
            let beta = &assoc.beta[i];
            let values = existence_values(w.prior_exist, w.gated.len(), p_d, p_g);
            let p_post = update_existence(beta, &values);
            let beta_chi = existence_conditioned_beta(beta, &values, p_post);
            let post_h = update_hypothesis_posterior(&w.prior_h, &w.lik, &w.fused, &beta_chi);
            let beta_z = hypothesis_conditioned_marginals(&beta_chi, &w.prior_h, &post_h, &w.lik, &w.fused);

            for z in 0..track.hset.len() {
                let mut comps = Vec::with_capacity(w.gated.len() + 1);
                comps.push(w.preds[z].clone());
                for &j in &w.gated {
                    comps.push(w.mps[z].update(&w.preds[z], &zs[j]));
                }
                track.hset.estimates[z] = collapse_mixture(&comps, &beta_z[z]);
            }

            let held = track.status == TrackStatus::TentativeReappearing;
            track.existence.prob = if held { p_post.max(w.prior_exist) } else { p_post };
            let decision = next_status(track.status, &mut track.existence, scan, self.cfg.motion.dt, &self.cfg.manager);
            let back = held && decision.status == TrackStatus::Confirmed;
            if back {
                debug!("track {} reconfirmed at scan {scan}", track.id);
            }
            if decision.entered_hold {
                debug!("track {} held at scan {scan}", track.id);
            }
            track.status = decision.status;

            if track.status == TrackStatus::TentativeReappearing {
                self.reanchor(track);
            } else if !self.cfg.single_hypothesis
                && maybe_advance_set(&mut track.hset, &post_h, &self.cfg.vsmm, &self.map, track.road, track.forward)
                    == SetChange::Advanced
            {
                track.set_updates.push(scan);
                self.history.push((track.id, scan));
                set_advances += 1;
                trace!("track {} moves to segment {}", track.id, track.hset.segments[0]);
            } else if self.cfg.single_hypothesis {
                track.hset.probs = post_h;
            }
            if back {
                reconfirmed.push(i);
            }
        }

        for (j, z) in zs.iter().enumerate() {
            if assoc.external_beta[j] < self.cfg.birth_min_external {
                continue;
            }
            let e = existence_external(self.cfg.lambda_f, lambda_e[j])?;
            if e <= self.cfg.manager.p_t {
                continue;
            }
            if let Some(t) = self.spawn(z, e, scan) {
                trace!("track {} born at scan {scan} on road {}", t.id, t.road);
                tracks.push(t);
            }
        }

        for t in tracks.iter_mut().filter(|t| t.status.is_alive()) {
            self.constrain(t)?;
        }
        let reconfirmed = reconfirmed.into_iter().map(|i| (tracks[i].id, tracks[i].output().clone())).collect();
        self.tracks = tracks;

        let estimates = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
            .map(|t| (t.id, t.output().clone()))
            .collect();
        Ok(ScanOutput { estimates, set_advances, reconfirmed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn predict_examples() {
        assert_eq!(predict_hypothesis(&[0.3, 0.7], &Matrix2::identity()), vec![0.3, 0.7]);
        let pi = Matrix2::new(0.95, 0.05, 0.0, 1.0);
        let p = predict_hypothesis(&[1.0, 0.0], &pi);
        assert!((p[0] - 0.95).abs() < 1e-15 && (p[1] - 0.05).abs() < 1e-15);
        let p = predict_hypothesis(&[0.5, 0.5], &VsmmConfig::default().pi);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(predict_hypothesis(&[1.0], &pi), vec![1.0]);
    }

    #[test]
    fn dwell_transition() {
        let mut cfg = VsmmConfig::default();
        assert_eq!(cfg.transition(100.0, 17.0, 1.0), cfg.pi);
        cfg.dwell = Some(Dwell::Fixed(20.0));
        assert_eq!(cfg.transition(100.0, 5.0, 1.0), Matrix2::new(0.8, 0.2, 0.0, 1.0));
        assert_eq!(cfg.transition(10.0, 5.0, 1.0), Matrix2::new(0.0, 1.0, 0.0, 1.0));
        cfg.dwell = Some(Dwell::Track);
        assert_eq!(cfg.transition(100.0, 25.0, 1.0), Matrix2::new(0.75, 0.25, 0.0, 1.0));
        // a stationary track still leaves eventually
        assert_eq!(cfg.transition(100.0, 0.0, 1.0), Matrix2::new(0.99, 0.01, 0.0, 1.0));
        assert!(VsmmConfig { dwell: Some(Dwell::Fixed(0.0)), ..VsmmConfig::default() }.validate().is_err());
        let json = serde_json::to_string(&Some(Dwell::Fixed(17.0))).unwrap();
        assert_eq!(json, r#"{"fixed":17.0}"#);
        assert_eq!(serde_json::from_str::<Option<Dwell>>(r#""track""#).unwrap(), Some(Dwell::Track));
    }

    #[test]
    fn fusion_examples() {
        assert_eq!(fuse_likelihood(&[2.0, 4.0], &[0.5, 0.5]), 3.0);
        assert_eq!(fuse_likelihood(&[2.0, 4.0], &[1.0, 0.0]), 2.0);
        let direct = 0.3 * 1.7 + 0.7 * 0.2;
        assert!((fuse_likelihood(&[1.7, 0.2], &[0.3, 0.7]) - direct).abs() < 1e-15);
    }

    #[test]
    fn posterior_examples() {
        let prior = [0.6, 0.4];
        // identical likelihoods: uninformative
        let lik = vec![vec![2.0, 3.0], vec![2.0, 3.0]];
        let fused = [2.0, 3.0];
        let post = update_hypothesis_posterior(&prior, &lik, &fused, &[0.2, 0.5, 0.3]);
        assert!((post[0] - 0.6).abs() < 1e-15 && (post[1] - 0.4).abs() < 1e-15);

        // hand-computed two hypotheses, two measurements
        let lik = vec![vec![1.0, 4.0], vec![3.0, 0.5]];
        let fused: Vec<f64> = (0..2).map(|k| 0.6 * lik[0][k] + 0.4 * lik[1][k]).collect();
        let beta = [0.1, 0.6, 0.3];
        let a = 0.6 * (0.1 + 1.0 / fused[0] * 0.6 + 4.0 / fused[1] * 0.3);
        let b = 0.4 * (0.1 + 3.0 / fused[0] * 0.6 + 0.5 / fused[1] * 0.3);
        let post = update_hypothesis_posterior(&prior, &lik, &fused, &beta);
        assert!((post[0] - a / (a + b)).abs() < 1e-12);
        assert!((post[1] - b / (a + b)).abs() < 1e-12);

        // strong evidence for the next segment
        let lik = vec![vec![1e-6], vec![5.0]];
        let fused = [0.9 * 1e-6 + 0.1 * 5.0];
        let post = update_hypothesis_posterior(&[0.9, 0.1], &lik, &fused, &[0.0, 1.0]);
        assert!(post[1] > 0.99);
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(hypothesis_conditioned_marginals(&[0.3, 0.7], &[1.0], &[1.0], &[vec![2.0]], &[2.0]), vec![vec![0.3, 0.7]]);
        let m = hypothesis_conditioned_marginals(&[0.3, 0.7], &[0.5, 0.5], &[0.5, 0.5], &[vec![2.0], vec![2.0]], &[2.0]);
        assert!(m.iter().all(|b| (b[0] - 0.3).abs() < 1e-15 && (b[1] - 0.7).abs() < 1e-15));
    }

    #[test]
    fn advance_rules() {
        use crate::roadmap::{build_road_map, BirthSpec, CenterLine, Point2};
        let pts: Vec<Point2> = (0..=60).map(|i| {
            let x = i as f64 * 5.0;
            Point2::new(x, 0.001 * x * x)
        }).collect();
        let map = build_road_map(&[CenterLine::new("r", pts).unwrap()], 3, 3f64.to_radians(), &[BirthSpec::new("r", RoadEnd::Start)]).unwrap();
        let n = map.segment_count(0);
        assert!(n >= 3);
        let cfg = VsmmConfig::default();
        let est = GaussianEstimate::new(map.birth_places[0].mean, map.birth_places[0].cov);
        let mk = |a: usize| HypothesisSet { segments: vec![a, a + 1], probs: vec![0.5, 0.5], estimates: vec![est.clone(), est.clone()] };
        let mut h = mk(0);
        assert_eq!(maybe_advance_set(&mut h, &[0.36, 0.64], &cfg, &map, 0, true), SetChange::Kept);
        assert_eq!(h.probs, vec![0.36, 0.64]);
        assert_eq!(maybe_advance_set(&mut h, &[0.3, 0.7], &cfg, &map, 0, true), SetChange::Advanced);
        assert_eq!(h.segments, vec![1, 2]);
        assert_eq!(h.probs, vec![0.9, 0.1]);
        let mut h = mk(n - 2);
        maybe_advance_set(&mut h, &[0.1, 0.9], &cfg, &map, 0, true);
        assert_eq!(h.segments, vec![n - 1]);
        assert_eq!(h.probs, vec![1.0]);
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
        (0usize..4).prop_flat_map(|m| {
            (
                0.01f64..0.99,
                proptest::collection::vec(proptest::collection::vec(1e-4f64..10.0, m), 2),
                proptest::collection::vec(0.01f64..1.0, m + 1),
            )
                .prop_map(|(p, lik, b)| {
                    let s: f64 = b.iter().sum();
                    (vec![p, 1.0 - p], lik, b.iter().map(|x| x / s).collect())
                })
        })
    }

    proptest! {
        #[test]
        fn posterior_normalized_and_total_probability((prior, lik, beta) in arb_case()) {
            let m = beta.len() - 1;
            let fused: Vec<f64> = (0..m).map(|k| fuse_likelihood(&[lik[0][k], lik[1][k]], &prior)).collect();
            for k in 0..m {
                let lo = lik[0][k].min(lik[1][k]);
                let hi = lik[0][k].max(lik[1][k]);
                prop_assert!(fused[k] >= lo - 1e-15 && fused[k] <= hi + 1e-15);
            }
            let post = update_hypothesis_posterior(&prior, &lik, &fused, &beta);
            prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let bz = hypothesis_conditioned_marginals(&beta, &prior, &post, &lik, &fused);
            for b in &bz {
                prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for j in 0..beta.len() {
                let total: f64 = (0..2).map(|z| post[z] * bz[z][j]).sum();
                prop_assert!((total - beta[j]).abs() < 1e-9);
            }
        }

        #[test]
        fn likelihood_scale_invariance((prior, lik, beta) in arb_case(), c in 1e-3f64..1e3) {
            let m = beta.len() - 1;
            let fused: Vec<f64> = (0..m).map(|k| fuse_likelihood(&[lik[0][k], lik[1][k]], &prior)).collect();
            let scaled: Vec<Vec<f64>> = lik.iter().map(|l| l.iter().map(|x| x * c).collect()).collect();
            let fused_s: Vec<f64> = (0..m).map(|k| fuse_likelihood(&[scaled[0][k], scaled[1][k]], &prior)).collect();
            let a = update_hypothesis_posterior(&prior, &lik, &fused, &beta);
            let b = update_hypothesis_posterior(&prior, &scaled, &fused_s, &beta);
            prop_assert!((a[0] - b[0]).abs() < 1e-12);
            let ma = hypothesis_conditioned_marginals(&beta, &prior, &a, &lik, &fused);
            let mb = hypothesis_conditioned_marginals(&beta, &prior, &b, &scaled, &fused_s);
            for (x, y) in ma.iter().flatten().zip(mb.iter().flatten()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
