//! Gating, joint association hypotheses and marginal association probabilities.
//!
//! Hypothesis weights follow the existence-aware JPDA form
//!
//! ```text
//! w(θ) = Π_{i missed} (1 − P_D P_G p_i) · Π_{i → j} P_D P_G p_i Λ_ij / λ_e(z_j)
//! ```
//!
//! where `p_i` is the prior existence probability of track `i` and `λ_e` the intensity of
//! measurements that come from sources other than the existing tracks (clutter and
//! births). Weights are handled in log space and normalized per cluster.

use nalgebra::{Matrix6, Vector6};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::models::{GaussianEstimate, Measurement, MeasurementPrediction, SensorConfig};
use crate::{Error, Result};

pub const DEFAULT_CLUSTER_CAP: usize = 10;

/// Chi-square gate for a 3-dimensional measurement.
pub fn gate_threshold(p_g: f64) -> f64 {
    ChiSquared::new(3.0).expect("3 dof").inverse_cdf(p_g)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateResult {
    pub threshold: f64,
    /// Per track: gated measurement indices, ascending.
    pub gated: Vec<Vec<usize>>,
    /// Per track, parallel to `gated`: likelihood Λ_ij.
    pub likelihood: Vec<Vec<f64>>,
}

impl GateResult {
    pub fn n_tracks(&self) -> usize {
        self.gated.len()
    }
}

/// Gates each measurement against each track prediction.
pub fn gate(preds: &[MeasurementPrediction], zs: &[Measurement], p_g: f64) -> GateResult {
    let threshold = gate_threshold(p_g);
    let mut gated = Vec::with_capacity(preds.len());
    let mut likelihood = Vec::with_capacity(preds.len());
    for mp in preds {
        let mut g = Vec::new();
        let mut l = Vec::new();
        for (j, z) in zs.iter().enumerate() {
            if mp.mahalanobis2(z) <= threshold {
                g.push(j);
                l.push(mp.likelihood(z));
            }
        }
        gated.push(g);
        likelihood.push(l);
    }
    GateResult { threshold, gated, likelihood }
}

/// A source of external measurements other than uniform clutter: a birth place, or a held
/// track acting as a testing point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSource {
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
    /// Expected number of new targets from this source per scan.
    pub lambda_b: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClutterBirthModel {
    /// Clutter density in measurement space (per m·rad²).
    pub lambda_f: f64,
    pub sources: Vec<ExternalSource>,
}

/// Birth model with its sources pushed through the sensor, reused for every measurement of
/// a scan.
#[derive(Debug, Clone)]
pub struct PreparedExternal {
    pub lambda_f: f64,
    pub p_d: f64,
    pub sources: Vec<(f64, MeasurementPrediction)>,
}

impl PreparedExternal {
    pub fn new(model: &ClutterBirthModel, sensor: &SensorConfig) -> Result<Self> {
        let sources = model
            .sources
            .iter()
            .map(|s| {
                let est = GaussianEstimate::new(s.mean, s.cov);
                Ok((s.lambda_b, MeasurementPrediction::new(&est, sensor)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lambda_f: model.lambda_f, p_d: sensor.p_d, sources })
    }

    /// `P_D λ_b p(z | x_b)` per source.
    pub fn source_intensities(&self, z: &Measurement) -> Vec<f64> {
        self.sources.iter().map(|(lb, mp)| self.p_d * lb * mp.likelihood(z)).collect()
    }

    pub fn intensity(&self, z: &Measurement) -> f64 {
        self.lambda_f + self.source_intensities(z).iter().sum::<f64>()
    }
}

/// λ_e(z) = λ_f + P_D Σ_n λ_b p(z | x_b^n).
pub fn external_intensity(z: &Measurement, model: &ClutterBirthModel, sensor: &SensorConfig) -> Result<f64> {
    Ok(PreparedExternal::new(model, sensor)?.intensity(z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointHypothesis {
    /// Parallel to the cluster's track list: assigned measurement or `None` for a miss.
    pub assignment: Vec<Option<usize>>,
    pub log_weight: f64,
    /// Weight normalized within the cluster.
    pub prob: f64,
}

impl JointHypothesis {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub tracks: Vec<usize>,
    pub measurements: Vec<usize>,
    pub hypotheses: Vec<JointHypothesis>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationParams {
    pub p_d: f64,
    pub p_g: f64,
    pub cluster_cap: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups tracks that share gated measurements.
pub fn clusters(gate: &GateResult, n_meas: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = gate.n_tracks();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut owner: Vec<Option<usize>> = vec![None; n_meas];
    for (i, g) in gate.gated.iter().enumerate() {
        for &j in g {
            match owner[j] {
                None => owner[j] = Some(i),
                Some(o) => {
                    let (a, b) = (find(&mut parent, o), find(&mut parent, i));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut out: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let k = match roots.iter().position(|&x| x == r) {
            Some(k) => k,
            None => {
                roots.push(r);
                out.push((Vec::new(), Vec::new()));
                roots.len() - 1
            }
        };
        out[k].0.push(i);
        for &j in &gate.gated[i] {
            if !out[k].1.contains(&j) {
                out[k].1.push(j);
            }
        }
    }
    for c in &mut out {
        c.1.sort_unstable();
    }
    out
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Enumerates all feasible joint hypotheses per cluster, skipping zero-weight ones.
pub fn enumerate_hypotheses(
    gate: &GateResult,
    priors: &[f64],
    lambda_e: &[f64],
    params: &AssociationParams,
) -> Result<Vec<Cluster>> {
    let pdg = params.p_d * params.p_g;
    let mut out = Vec::new();
    for (tracks, measurements) in clusters(gate, lambda_e.len()) {
        if tracks.len() > params.cluster_cap {
            return Err(Error::ClusterTooLarge { size: tracks.len(), cap: params.cluster_cap });
        }
        // per track: log miss term and log detection terms per gated entry
        let miss: Vec<f64> = tracks.iter().map(|&i| ln_or_neg_inf(1.0 - pdg * priors[i])).collect();
        let det: Vec<Vec<(usize, f64)>> = tracks
            .iter()
            .map(|&i| {
                gate.gated[i]
                    .iter()
                    .zip(&gate.likelihood[i])
                    .map(|(&j, &l)| {
                        if lambda_e[j] <= 0.0 {
                            return (j, f64::NEG_INFINITY);
                        }
                        (j, ln_or_neg_inf(pdg * priors[i] * l / lambda_e[j]))
                    })
                    .filter(|(_, w)| *w > f64::NEG_INFINITY)
                    .collect()
            })
            .collect();

        let mut hyps = Vec::new();
        let mut current = vec![None; tracks.len()];
        let mut used = Vec::with_capacity(tracks.len());
        dfs(0, 0.0, &miss, &det, &mut current, &mut used, &mut hyps);
        if hyps.is_empty() {
            return Err(Error::DegenerateAssociation);
        }
        let max = hyps.iter().map(|h: &JointHypothesis| h.log_weight).fold(f64::NEG_INFINITY, f64::max);
        let norm = max + hyps.iter().map(|h| (h.log_weight - max).exp()).sum::<f64>().ln();
        for h in &mut hyps {
            h.prob = (h.log_weight - norm).exp();
        }
        out.push(Cluster { tracks, measurements, hypotheses: hyps });
    }
    Ok(out)
}

fn dfs(
    k: usize,
    acc: f64,
    miss: &[f64],
    det: &[Vec<(usize, f64)>],
    current: &mut Vec<Option<usize>>,
    used: &mut Vec<usize>,
    hyps: &mut Vec<JointHypothesis>,
) {
    if k == miss.len() {
        hyps.push(JointHypothesis { assignment: current.clone(), log_weight: acc, prob: 0.0 });
        return;
    }
    if miss[k] > f64::NEG_INFINITY {
        current[k] = None;
        dfs(k + 1, acc + miss[k], miss, det, current, used, hyps);
    }
    for &(j, w) in &det[k] {
        if used.contains(&j) {
            continue;
        }
        used.push(j);
        current[k] = Some(j);
        dfs(k + 1, acc + w, miss, det, current, used, hyps);
        used.pop();
    }
    current[k] = None;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationResult {
    /// Per track: `[β_0 (miss), β for each gated entry in gate order]`.
    pub beta: Vec<Vec<f64>>,
    /// Per measurement: probability of external origin.
    pub external_beta: Vec<f64>,
}

pub fn marginalize(clusters: &[Cluster], gate: &GateResult, n_meas: usize) -> AssociationResult {
    let mut beta: Vec<Vec<f64>> = gate.gated.iter().map(|g| vec![0.0; g.len() + 1]).collect();
    let mut assigned = vec![0.0; n_meas];
    for c in clusters {
        for h in &c.hypotheses {
            for (k, &a) in h.assignment.iter().enumerate() {
                let i = c.tracks[k];
                match a {
                    None => beta[i][0] += h.prob,
                    Some(j) => {
                        let pos = gate.gated[i].binary_search(&j).expect("assigned measurement is gated");
                        beta[i][pos + 1] += h.prob;
                    }
                }
            }
        }
    }
    for (i, g) in gate.gated.iter().enumerate() {
        for (pos, &j) in g.iter().enumerate() {
            assigned[j] += beta[i][pos + 1];
        }
    }
    let external_beta = assigned
        .iter()
        .map(|a| {
            let e = 1.0 - a;
            if e < 0.0 && e > -1e-12 {
                0.0
            } else {
                e.clamp(0.0, 1.0)
            }
        })
        .collect();
    AssociationResult { beta, external_beta }
}

/// Gate → enumerate → marginalize.
pub fn associate(
    gate: &GateResult,
    priors: &[f64],
    lambda_e: &[f64],
    params: &AssociationParams,
) -> Result<AssociationResult> {
    let cl = enumerate_hypotheses(gate, priors, lambda_e, params)?;
    Ok(marginalize(&cl, gate, lambda_e.len()))
}
