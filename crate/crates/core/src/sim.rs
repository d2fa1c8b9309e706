//! Scenario definition, truth/measurement synthesis and Monte-Carlo execution.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, warn};
use nalgebra::{Matrix2, Matrix3, Matrix6, Vector2, Vector3, Vector6};
use rand::prelude::*;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintCase;
use crate::metrics::{ospa, OspaConfig, OspaResult};
use crate::models::{measure, GaussianEstimate, Measurement, MotionConfig, SensorConfig, StateVector};
use crate::roadmap::{Point2, RoadEnd, RoadFile, RoadFileBirth, RoadFileRoad, RoadMap};
use crate::track_manager::TrackManagerConfig;
use crate::vsmm::{Dwell, Tracker, TrackerConfig, VsmmConfig};
use crate::{Error, Result};

/// Birth places of the four-lane test road, in the same ground frame as the UAV.
pub const REF_BIRTH_PLACES: [[f64; 2]; 4] = [
    [-213074.6991, 6209735.658],
    [-213065.3738, 6209739.889],
    [-212139.8879, 6209992.308],
    [-212113.9793, 6209997.771],
];
pub const REF_UAV: [f64; 3] = [-213224.699, 6209585.65, 150.0];
pub const REF_BLOCKED: [f64; 2] = [-212600.0, -212500.0];

// Shape of the synthetic roads: a straight chord through the birth places plus one period of
// a sinusoidal lateral wiggle across the whole extent, so a degree-6 fit stays sub-metre.
const WIGGLE_AMPLITUDE: f64 = 30.0;
/// Separation between the two carriageways (m, along y).
const CARRIAGEWAY_GAP: f64 = 8.0;
const SAMPLE_STEP: f64 = 5.0;
const WEST_END: f64 = -213090.0;
const EAST_END: f64 = -212100.0;

fn wiggle(x: f64) -> f64 {
    WIGGLE_AMPLITUDE * (2.0 * std::f64::consts::PI * (x - WEST_END) / (EAST_END - WEST_END)).sin()
}

/// Synthetic stand-in for the surveyed four-lane road.
///
/// Roads `1`/`2` run west→east from the first two birth places, roads `3`/`4` run east→west
/// from the other two on a carriageway [`CARRIAGEWAY_GAP`] metres further south. Every road
/// starts exactly at its birth place.
pub fn reference_roads() -> RoadFile {
    let [b1, _, b3, _] = REF_BIRTH_PLACES;
    // west→east carriageway passes through b1 and CARRIAGEWAY_GAP north of b3; the other
    // carriageway through b3 and CARRIAGEWAY_GAP south of b1
    let slope_we = (b3[1] + CARRIAGEWAY_GAP - wiggle(b3[0]) - b1[1] + wiggle(b1[0])) / (b3[0] - b1[0]);
    let slope_ew = (b3[1] - wiggle(b3[0]) - b1[1] + CARRIAGEWAY_GAP + wiggle(b1[0])) / (b3[0] - b1[0]);
    let mut roads = Vec::new();
    for (k, bp) in REF_BIRTH_PLACES.iter().enumerate() {
        let eastbound = k < 2;
        let slope = if eastbound { slope_we } else { slope_ew };
        let base = |x: f64| slope * (x - bp[0]) + wiggle(x);
        let offset = bp[1] - base(bp[0]);
        let stop = if eastbound { EAST_END } else { WEST_END };
        let n = ((stop - bp[0]).abs() / SAMPLE_STEP).ceil() as usize;
        let points = (0..=n)
            .map(|i| {
                let x = if i == 0 { bp[0] } else { bp[0] + (stop - bp[0]) * i as f64 / n as f64 };
                let y = if i == 0 { bp[1] } else { base(x) + offset };
                [x, y]
            })
            .collect();
        roads.push(RoadFileRoad { id: format!("{}", k + 1), points });
    }
    let birth = roads.iter().map(|r| RoadFileBirth { road: r.id.clone(), end: RoadEnd::Start, cov_diag: None }).collect();
    RoadFile { roads, birth }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub road: String,
    /// End of the road the vehicle enters from.
    #[serde(default = "default_from")]
    pub from: RoadEnd,
    /// Speed bounds (m/s).
    #[serde(default = "default_speed")]
    pub speed: [f64; 2],
    pub spawn: usize,
    pub despawn: usize,
}

fn default_from() -> RoadEnd {
    RoadEnd::Start
}

fn default_speed() -> [f64; 2] {
    [11.0, 23.0]
}

/// How the measurement-space volume behind λ_f is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClutterVolume {
    /// The ground region mapped into (r, ξ), thickened in θ by the gate half-width on each side.
    Manifold,
    /// The bounding (r, θ, ξ) box of the ground region.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Deg,
    Rad,
}

/// Complete experiment description. Missing keys take the built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Road file; relative paths resolve against the scenario file. `None` → built-in roads.
    pub road_file: Option<PathBuf>,
    #[serde(skip)]
    pub roads: Option<RoadFile>,
    pub n_p: usize,
    pub delta_m_deg: f64,
    pub vehicles: Vec<VehicleSpec>,
    pub uav: [f64; 3],
    /// Diagonal measurement noise variances (range in m², angles in `angle_unit`²).
    pub r_diag: [f64; 3],
    pub angle_unit: AngleUnit,
    pub p_d: f64,
    pub p_g: f64,
    pub dt: f64,
    pub n_scans: usize,
    pub q_diag: [f64; 6],
    pub clutter_mean: f64,
    /// Margin around the road bounding box over which clutter is spread (m).
    pub clutter_margin: f64,
    pub clutter_volume: ClutterVolume,
    pub lambda_b: f64,
    pub p_e: f64,
    pub p_t: f64,
    pub p_s: f64,
    pub t_d: f64,
    pub p_r_diag: [f64; 6],
    pub p_u: f64,
    /// Diagonal of the symmetric 2×2 hypothesis transition matrix; used only when `dwell` is null.
    pub pi_stay: f64,
    /// Segment dwell-time chain replacing the symmetric matrix: `"track"` or `{"fixed": v}`.
    pub dwell: Option<Dwell>,
    pub reset_probs: [f64; 2],
    pub constraint_case: ConstraintCase,
    pub speed_band: [f64; 2],
    /// Low-pass coefficient applied to the per-scan speed draws.
    pub speed_smoothing: f64,
    pub ospa_c: f64,
    pub ospa_p: f64,
    /// Axis-aligned x-intervals in which targets produce no measurement.
    pub blocked_regions: Vec<[f64; 2]>,
    pub mc_runs: usize,
    pub master_seed: u64,
    pub birth_min_external: f64,
    pub cluster_cap: usize,
    pub single_hypothesis: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        let mgr = TrackManagerConfig::default();
        let vs = VsmmConfig::default();
        let v = |road: &str, spawn, despawn| VehicleSpec {
            road: road.into(),
            from: RoadEnd::Start,
            speed: default_speed(),
            spawn,
            despawn,
        };
        Self {
            road_file: None,
            roads: None,
            n_p: 6,
            delta_m_deg: 3.0,
            vehicles: vec![v("1", 1, 57), v("2", 25, 80), v("3", 10, 66), v("4", 30, 80)],
            uav: REF_UAV,
            r_diag: [1.0, 1.0, 1.0],
            angle_unit: AngleUnit::Deg,
            p_d: 0.95,
            p_g: 0.99,
            dt: 1.0,
            n_scans: 80,
            q_diag: [20.0, 20.0, 10.0, 20.0, 20.0, 4.0],
            clutter_mean: 20.0,
            clutter_margin: 200.0,
            clutter_volume: ClutterVolume::Manifold,
            lambda_b: 0.05,
            p_e: mgr.p_e,
            p_t: mgr.p_t,
            p_s: mgr.p_s,
            t_d: mgr.t_d,
            p_r_diag: [120.0, 120.0, 50.0, 500.0, 500.0, 5.0],
            p_u: vs.p_u,
            pi_stay: vs.pi[(0, 0)],
            dwell: Some(Dwell::Track),
            reset_probs: vs.reset_probs,
            constraint_case: ConstraintCase::HEADING_POSITION,
            speed_band: [11.0, 23.0],
            speed_smoothing: 0.8,
            ospa_c: 25.0,
            ospa_p: 1.0,
            blocked_regions: Vec::new(),
            mc_runs: 100,
            master_seed: 1,
            birth_min_external: 0.5,
            cluster_cap: crate::jpda::DEFAULT_CLUSTER_CAP,
            single_hypothesis: false,
        }
    }
}

impl Scenario {
    /// Built-in four-vehicle scenario with no blocking.
    pub fn reference() -> Self {
        Self::default()
    }

    /// Built-in scenario with the blocked stretch of road.
    pub fn reference_blocked() -> Self {
        Self { blocked_regions: vec![REF_BLOCKED], ..Self::default() }
    }

    pub fn parse(s: &str, base: Option<&Path>) -> Result<Self> {
        let mut sc: Self = serde_json::from_str(s)?;
        if let Some(rf) = &sc.road_file {
            let path = match base {
                Some(b) if rf.is_relative() => b.join(rf),
                _ => rf.clone(),
            };
            sc.roads = Some(RoadFile::load(&path)?);
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path.parent())
    }

    pub fn road_file(&self) -> RoadFile {
        self.roads.clone().unwrap_or_else(reference_roads)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scans == 0 || !(self.dt > 0.0) {
            return Err(Error::config("need at least one scan and dt > 0"));
        }
        if !(self.delta_m_deg > 0.0) || self.n_p == 0 {
            return Err(Error::config("delta_m and n_p must be positive"));
        }
        if !(self.clutter_mean >= 0.0) || !(self.clutter_margin >= 0.0) {
            return Err(Error::config("clutter mean and margin must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.speed_smoothing) {
            return Err(Error::config("speed_smoothing must lie in [0, 1]"));
        }
        if !(self.pi_stay > 0.0 && self.pi_stay < 1.0) {
            return Err(Error::config("pi_stay must lie in (0, 1)"));
        }
        if self.mc_runs == 0 {
            return Err(Error::config("mc_runs must be at least 1"));
        }
        for b in &self.blocked_regions {
            if !(b[0] <= b[1]) {
                return Err(Error::config("blocked region bounds must be ordered"));
            }
        }
        let rf = self.road_file();
        for v in &self.vehicles {
            if v.spawn >= v.despawn {
                return Err(Error::config(format!("vehicle on road {}: spawn must precede despawn", v.road)));
            }
            if !(v.speed[0] > 0.0 && v.speed[0] <= v.speed[1]) {
                return Err(Error::config(format!("vehicle on road {}: bad speed bounds", v.road)));
            }
            if !rf.roads.iter().any(|r| r.id == v.road) {
                return Err(Error::config(format!("vehicle references unknown road {}", v.road)));
            }
        }
        OspaConfig { c: self.ospa_c, p: self.ospa_p }.validate()?;
        self.sensor().validate()?;
        self.manager().validate()?;
        self.vsmm().validate()?;
        Ok(())
    }

    pub fn sensor(&self) -> SensorConfig {
        let k = match self.angle_unit {
            AngleUnit::Deg => std::f64::consts::PI / 180.0,
            AngleUnit::Rad => 1.0,
        };
        SensorConfig {
            uav_pos: Vector3::from(self.uav),
            r_cov: Matrix3::from_diagonal(&Vector3::new(self.r_diag[0], self.r_diag[1] * k * k, self.r_diag[2] * k * k)),
            p_d: self.p_d,
            p_g: self.p_g,
        }
    }

    pub fn motion(&self) -> MotionConfig {
        MotionConfig { dt: self.dt, q: Matrix6::from_diagonal(&Vector6::from(self.q_diag)) }
    }

    pub fn manager(&self) -> TrackManagerConfig {
        TrackManagerConfig {
            p_e: self.p_e,
            p_t: self.p_t,
            p_s: self.p_s,
            t_d: self.t_d,
            p_r: Matrix6::from_diagonal(&Vector6::from(self.p_r_diag)),
        }
    }

    pub fn vsmm(&self) -> VsmmConfig {
        let s = self.pi_stay;
        VsmmConfig { p_u: self.p_u, pi: Matrix2::new(s, 1.0 - s, 1.0 - s, s), reset_probs: self.reset_probs, dwell: self.dwell }
    }

    pub fn ospa_config(&self) -> OspaConfig {
        OspaConfig { c: self.ospa_c, p: self.ospa_p }
    }

    pub fn compile_map(&self) -> Result<RoadMap> {
        self.road_file().compile(self.n_p, self.delta_m_deg.to_radians())
    }

    /// Ground rectangle `[x_min, y_min, x_max, y_max]` over which clutter falls.
    pub fn clutter_region(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in self.road_file().roads.iter().flat_map(|r| r.points.iter()) {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        let m = self.clutter_margin;
        [b[0] - m, b[1] - m, b[2] + m, b[3] + m]
    }

    /// Measurement-space volume the clutter is spread over, per [`ClutterVolume`].
    pub fn measurement_volume(&self) -> f64 {
        match self.clutter_volume {
            ClutterVolume::Box => self.box_volume(),
            ClutterVolume::Manifold => self.manifold_volume(),
        }
    }

    /// `∬ dx dy / r` over the ground region (that is the (r, ξ) area), times the θ thickness
    /// `2·sqrt(γ)·σ_θ` of the validation gate.
    pub fn manifold_volume(&self) -> f64 {
        const N: usize = 400;
        let [x0, y0, x1, y1] = self.clutter_region();
        let u = self.uav;
        let (hx, hy) = ((x1 - x0) / N as f64, (y1 - y0) / N as f64);
        let mut area = 0.0;
        for i in 0..N {
            let x = x0 + (i as f64 + 0.5) * hx;
            for j in 0..N {
                let y = y0 + (j as f64 + 0.5) * hy;
                area += 1.0 / ((x - u[0]).powi(2) + (y - u[1]).powi(2) + u[2] * u[2]).sqrt();
            }
        }
        area *= hx * hy;
        let sigma_theta = self.sensor().r_cov[(1, 1)].sqrt();
        area * 2.0 * crate::jpda::gate_threshold(self.p_g).sqrt() * sigma_theta
    }

    /// Volume of the (r, θ, ξ) box covering the clutter region.
    pub fn box_volume(&self) -> f64 {
        let [x0, y0, x1, y1] = self.clutter_region();
        let u = self.uav;
        let rho = |x: f64, y: f64| ((x - u[0]).powi(2) + (y - u[1]).powi(2)).sqrt();
        let r_of = |rho: f64| (rho * rho + u[2] * u[2]).sqrt();
        let corners = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)];
        let rho_max = corners.iter().map(|&(x, y)| rho(x, y)).fold(0.0, f64::max);
        // closest ground point of the rectangle to the UAV footprint
        let rho_min = rho(u[0].clamp(x0, x1), u[1].clamp(y0, y1));
        let (r_min, r_max) = (r_of(rho_min), r_of(rho_max));
        // θ is measured from +z, so targets on the ground sit at θ = π − atan(ρ/h)
        let theta = |rho: f64| std::f64::consts::PI - (rho / u[2]).atan();
        let d_theta = theta(rho_min) - theta(rho_max);
        let inside = rho_min == 0.0;
        let d_xi = if inside {
            2.0 * std::f64::consts::PI
        } else {
            let ang: Vec<f64> = corners.iter().map(|&(x, y)| (y - u[1]).atan2(x - u[0])).collect();
            angular_span(&ang)
        };
        (r_max - r_min) * d_theta * d_xi
    }

    /// Clutter density λ_f = mean count / measurement volume.
    pub fn lambda_f(&self) -> f64 {
        self.clutter_mean / self.measurement_volume()
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            sensor: self.sensor(),
            motion: self.motion(),
            manager: self.manager(),
            vsmm: self.vsmm(),
            constraint_case: self.constraint_case,
            speed_band: self.speed_band,
            weight: Matrix6::identity(),
            lambda_f: self.lambda_f(),
            lambda_b: self.lambda_b,
            birth_min_external: self.birth_min_external,
            cluster_cap: self.cluster_cap,
            single_hypothesis: self.single_hypothesis,
        }
    }

    pub fn is_blocked(&self, x: f64) -> bool {
        self.blocked_regions.iter().any(|b| x >= b[0] && x <= b[1])
    }
}

/// Smallest arc containing all angles (rad).
fn angular_span(angles: &[f64]) -> f64 {
    let mut a: Vec<f64> = angles.iter().map(|x| x.rem_euclid(2.0 * std::f64::consts::PI)).collect();
    a.sort_by(f64::total_cmp);
    let mut gap = a[0] + 2.0 * std::f64::consts::PI - a[a.len() - 1];
    for w in a.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    2.0 * std::f64::consts::PI - gap
}

/// splitmix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run`: `splitmix64(master ^ splitmix64(run))`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    splitmix64(master ^ splitmix64(run as u64))
}

/// Independent sub-stream of a run seed (1 = truth, 2 = measurements).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_add(stream))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    pub vehicle: usize,
    pub state: StateVector,
}

impl TruthState {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.state[0], self.state[1])
    }
}

/// Per-scan true states; `scans[k]` holds scan `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub scans: Vec<Vec<TruthState>>,
}

impl Truth {
    pub fn at(&self, scan: usize) -> &[TruthState] {
        &self.scans[scan - 1]
    }
}

/// Walks a poly-line by arc length.
struct Polyline {
    pts: Vec<Point2>,
    cum: Vec<f64>,
}

impl Polyline {
    fn new(pts: Vec<Point2>) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { pts, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Position and unit tangent at arc length `s` (clamped).
    fn at(&self, s: f64) -> (Point2, Point2) {
        let s = s.clamp(0.0, self.length());
        let k = match self.cum.partition_point(|&c| c <= s) {
            0 => 0,
            i => (i - 1).min(self.pts.len() - 2),
        };
        let d = self.pts[k + 1] - self.pts[k];
        let len = d.norm();
        let t = d / len;
        (self.pts[k] + t * (s - self.cum[k]), t)
    }
}

pub fn generate_truth(sc: &Scenario, seed: u64) -> Result<Truth> {
    let rf = sc.road_file();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scans = vec![Vec::new(); sc.n_scans];
    for (vi, v) in sc.vehicles.iter().enumerate() {
        if v.speed[0] > v.speed[1] || v.speed[0] <= 0.0 {
            return Err(Error::config(format!("vehicle {vi}: speed bounds violated")));
        }
        let road = rf.roads.iter().find(|r| r.id == v.road).ok_or_else(|| Error::UnknownRoad(v.road.clone()))?;
        let mut pts: Vec<Point2> = road.points.iter().map(|p| Point2::new(p[0], p[1])).collect();
        if v.from == RoadEnd::End {
            pts.reverse();
        }
        let line = Polyline::new(pts);
        let draw = |rng: &mut ChaCha8Rng| {
            if v.speed[0] == v.speed[1] {
                v.speed[0]
            } else {
                rng.random_range(v.speed[0]..=v.speed[1])
            }
        };
        let mut speed = draw(&mut rng);
        let mut s = 0.0;
        for scan in v.spawn..=v.despawn.min(sc.n_scans) {
            if scan > v.spawn {
                s += speed * sc.dt;
                if s > line.length() {
                    debug!("vehicle {vi} reached the end of road {} at scan {scan}", v.road);
                    break;
                }
                speed = sc.speed_smoothing * speed + (1.0 - sc.speed_smoothing) * draw(&mut rng);
            }
            if scan == 0 {
                continue;
            }
            let (p, t) = line.at(s);
            let state = StateVector::new(p.x, p.y, 0.0, speed * t.x, speed * t.y, 0.0);
            scans[scan - 1].push(TruthState { vehicle: vi, state });
        }
    }
    Ok(Truth { scans })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMeasurement {
    pub z: Measurement,
    /// Index of the originating vehicle, `None` for clutter.
    pub origin: Option<usize>,
}

fn noisy(x: &StateVector, cfg: &SensorConfig, noise: &[Normal<f64>; 3], rng: &mut ChaCha8Rng) -> Result<Measurement> {
    let z = measure(x, cfg)?;
    let v = Vector3::new(z.r + noise[0].sample(rng), z.theta + noise[1].sample(rng), z.xi + noise[2].sample(rng));
    Ok(Measurement::from_vector(&v, 0))
}

pub fn generate_measurements(truth: &Truth, sc: &Scenario, seed: u64) -> Result<Vec<Vec<LabeledMeasurement>>> {
    let cfg = sc.sensor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = |i: usize| Normal::new(0.0, cfg.r_cov[(i, i)].sqrt()).map_err(|e| Error::config(e.to_string()));
    let noise = [sd(0)?, sd(1)?, sd(2)?];
    let poisson = if sc.clutter_mean > 0.0 {
        Some(Poisson::new(sc.clutter_mean).map_err(|e| Error::config(e.to_string()))?)
    } else {
        None
    };
    let [x0, y0, x1, y1] = sc.clutter_region();
    let mut out = Vec::with_capacity(truth.scans.len());
    for states in &truth.scans {
        let mut zs = Vec::new();
        for t in states {
            if sc.is_blocked(t.state[0]) {
                continue;
            }
            if rng.random::<f64>() < sc.p_d {
                zs.push(LabeledMeasurement { z: noisy(&t.state, &cfg, &noise, &mut rng)?, origin: Some(t.vehicle) });
            }
        }
        let n_clutter = poisson.map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_clutter {
            let x = StateVector::new(rng.random_range(x0..x1), rng.random_range(y0..y1), 0.0, 0.0, 0.0, 0.0);
            zs.push(LabeledMeasurement { z: noisy(&x, &cfg, &noise, &mut rng)?, origin: None });
        }
        zs.shuffle(&mut rng);
        for (j, m) in zs.iter_mut().enumerate() {
            m.z.id = j;
        }
        out.push(zs);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub scan: usize,
    pub truth: Vec<TruthState>,
    pub measurements: Vec<LabeledMeasurement>,
    pub estimates: Vec<(usize, GaussianEstimate)>,
    pub ospa: OspaResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconfirmation {
    pub scan: usize,
    pub track: usize,
    pub position: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub scans: Vec<ScanRecord>,
    pub reconfirmations: Vec<Reconfirmation>,
    /// (track id, scan) of every hypothesis-set advance.
    pub set_updates: Vec<(usize, usize)>,
}

/// One Monte-Carlo run on a compiled map.
pub fn run_single(sc: &Scenario, map: &Arc<RoadMap>, run: usize) -> Result<RunRecord> {
    let seed = run_seed(sc.master_seed, run);
    let truth = generate_truth(sc, stream_seed(seed, 1))?;
    let meas = generate_measurements(&truth, sc, stream_seed(seed, 2))?;
    let mut tracker = Tracker::new(sc.tracker_config(), map.clone())?;
    let ocfg = sc.ospa_config();
    let mut scans = Vec::with_capacity(sc.n_scans);
    let mut reconfirmations = Vec::new();
    for k in 1..=sc.n_scans {
        let zs: Vec<Measurement> = meas[k - 1].iter().map(|m| m.z.clone()).collect();
        let out = tracker.step(k, &zs)?;
        let x: Vec<Vector2<f64>> = truth.at(k).iter().map(TruthState::position).collect();
        let y: Vec<Vector2<f64>> = out.estimates.iter().map(|(_, e)| Vector2::new(e.mean[0], e.mean[1])).collect();
        let score = ospa(&x, &y, &ocfg);
        reconfirmations.extend(out.reconfirmed.iter().map(|(id, e)| Reconfirmation {
            scan: k,
            track: *id,
            position: Vector2::new(e.mean[0], e.mean[1]),
        }));
        scans.push(ScanRecord {
            scan: k,
            truth: truth.at(k).to_vec(),
            measurements: meas[k - 1].clone(),
            estimates: out.estimates,
            ospa: score,
        });
    }
    // tracks terminated mid-run are gone from the tracker; collect advances from the history
    let mut set_updates: Vec<(usize, usize)> = tracker.history().to_vec();
    set_updates.sort_unstable();
    Ok(RunRecord { run, seed, scans, reconfirmations, set_updates })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    #[serde(rename = "Mean")]
    pub mean: f64,
    #[serde(rename = "Std")]
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = xs.collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerScan {
    pub scan: Vec<usize>,
    pub ospa: Vec<f64>,
    pub loc: Vec<f64>,
    pub card: Vec<f64>,
    pub n_true: Vec<f64>,
    pub n_est: Vec<f64>,
}

/// Reappearance bookkeeping for the blocked scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReappearanceStats {
    /// One entry per vehicle that left a blocked region in at least one run.
    pub events: Vec<ReappearanceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReappearanceEvent {
    pub vehicle: usize,
    pub mean_exit_scan: f64,
    /// Runs in which the vehicle left a blocked region.
    pub observed: usize,
    /// Runs in which a track confirmed before the vehicle entered the block was confirmed on
    /// it again within the hold window after it left.
    pub recovered: usize,
    /// Runs in which a held track was reconfirmed on the vehicle within that window.
    pub reconfirmed: usize,
}

impl ReappearanceEvent {
    /// Fraction of runs in which the vehicle was recovered by its original track.
    pub fn rate(&self) -> f64 {
        if self.observed == 0 {
            0.0
        } else {
            self.recovered as f64 / self.observed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub runs: usize,
    pub failed_runs: Vec<FailedRun>,
    #[serde(rename = "OSPA distance")]
    pub ospa: MeanStd,
    #[serde(rename = "Localization error")]
    pub loc: MeanStd,
    #[serde(rename = "Cardinality error")]
    pub card: MeanStd,
    pub per_scan: PerScan,
    pub reappearance: ReappearanceStats,
    /// Mean number of hypothesis-set advances per run.
    pub mean_set_updates: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub run: usize,
    pub reason: String,
}

/// Each blocked stretch of a vehicle's trajectory: (vehicle, last scan before it, first scan after it).
pub fn blocked_passages(sc: &Scenario, run: &RunRecord) -> Vec<(usize, usize, usize)> {
    let mut last: BTreeMap<usize, (bool, usize)> = BTreeMap::new();
    let mut entry: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for rec in &run.scans {
        for t in &rec.truth {
            let b = sc.is_blocked(t.state[0]);
            match last.get(&t.vehicle) {
                Some(&(false, k)) if b => {
                    entry.insert(t.vehicle, k);
                }
                Some(&(true, _)) if !b => {
                    if let Some(e) = entry.remove(&t.vehicle) {
                        out.push((t.vehicle, e, rec.scan));
                    }
                }
                _ => {}
            }
            last.insert(t.vehicle, (b, rec.scan));
        }
    }
    out
}

fn near_vehicle(rec: &ScanRecord, vehicle: usize, p: &Vector2<f64>, c: f64) -> bool {
    rec.truth.iter().any(|t| t.vehicle == vehicle && (t.position() - p).norm() < c)
}

/// Whether a track confirmed up to `entry` is confirmed on `vehicle` within `window` scans of `exit`.
fn recovered_after(run: &RunRecord, vehicle: usize, entry: usize, exit: usize, window: usize, c: f64) -> bool {
    let before: BTreeSet<usize> = run.scans[..entry].iter().flat_map(|r| r.estimates.iter().map(|(id, _)| *id)).collect();
    run.scans[exit - 1..(exit + window).min(run.scans.len())].iter().any(|rec| {
        rec.estimates
            .iter()
            .any(|(id, e)| before.contains(id) && near_vehicle(rec, vehicle, &Vector2::new(e.mean[0], e.mean[1]), c))
    })
}

/// Whether a held track came back on `vehicle` within `window` scans of it leaving the block.
fn reconfirmed_after(run: &RunRecord, vehicle: usize, exit: usize, window: usize, c: f64) -> bool {
    run.reconfirmations
        .iter()
        .any(|r| r.scan >= exit && r.scan <= exit + window && near_vehicle(&run.scans[r.scan - 1], vehicle, &r.position, c))
}

pub fn reappearance_stats(sc: &Scenario, runs: &[RunRecord]) -> ReappearanceStats {
    let window = sc.manager().hold_scans(sc.dt).max(1);
    let mut acc: BTreeMap<usize, (f64, usize, usize, usize)> = BTreeMap::new();
    for run in runs {
        for (v, entry, exit) in blocked_passages(sc, run) {
            let e = acc.entry(v).or_insert((0.0, 0, 0, 0));
            e.0 += exit as f64;
            e.1 += 1;
            e.2 += recovered_after(run, v, entry, exit, window, sc.ospa_c) as usize;
            e.3 += reconfirmed_after(run, v, exit, window, sc.ospa_c) as usize;
        }
    }
    ReappearanceStats {
        events: acc
            .into_iter()
            .map(|(vehicle, (s, n, k, r))| ReappearanceEvent {
                vehicle,
                mean_exit_scan: s / n as f64,
                observed: n,
                recovered: k,
                reconfirmed: r,
            })
            .collect(),
    }
}

pub fn statistics(sc: &Scenario, runs: &[RunRecord], failed: Vec<FailedRun>) -> RunStatistics {
    let n = sc.n_scans;
    let mut per = PerScan {
        scan: (1..=n).collect(),
        ospa: vec![0.0; n],
        loc: vec![0.0; n],
        card: vec![0.0; n],
        n_true: vec![0.0; n],
        n_est: vec![0.0; n],
    };
    let mut counted = vec![0usize; n];
    for run in runs {
        for (k, rec) in run.scans.iter().enumerate() {
            per.n_true[k] += rec.truth.len() as f64;
            per.n_est[k] += rec.estimates.len() as f64;
            per.ospa[k] += rec.ospa.distance;
            per.card[k] += rec.ospa.card_error;
            if !rec.truth.is_empty() {
                per.loc[k] += rec.ospa.loc_error;
                counted[k] += 1;
            }
        }
    }
    let m = runs.len().max(1) as f64;
    for k in 0..n {
        per.ospa[k] /= m;
        per.card[k] /= m;
        per.n_true[k] /= m;
        per.n_est[k] /= m;
        per.loc[k] = if counted[k] > 0 { per.loc[k] / counted[k] as f64 } else { 0.0 };
    }
    let all = || runs.iter().flat_map(|r| r.scans.iter());
    RunStatistics {
        runs: runs.len(),
        failed_runs: failed,
        ospa: MeanStd::of(all().map(|s| s.ospa.distance)),
        loc: MeanStd::of(all().map(|s| s.ospa.loc_error)),
        card: MeanStd::of(all().map(|s| s.ospa.card_error)),
        per_scan: per,
        reappearance: reappearance_stats(sc, runs),
        mean_set_updates: runs.iter().map(|r| r.set_updates.len() as f64).sum::<f64>() / m,
    }
}

pub struct MonteCarlo {
    pub stats: RunStatistics,
    pub runs: Vec<RunRecord>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs `sc.mc_runs` independent runs; `jobs` bounds the worker count (None → all cores).
pub fn run_monte_carlo(sc: &Scenario, jobs: Option<usize>) -> Result<MonteCarlo> {
    sc.validate()?;
    let map = Arc::new(sc.compile_map()?);
    let work = || -> Vec<std::result::Result<RunRecord, FailedRun>> {
        (0..sc.mc_runs)
            .into_par_iter()
            .map(|run| {
                match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_single(sc, &map, run))) {
                    Ok(Ok(r)) => Ok(r),
                    Ok(Err(e)) => Err(FailedRun { run, reason: e.to_string() }),
                    Err(p) => Err(FailedRun { run, reason: panic_message(p) }),
                }
            })
            .collect()
    };
    let results = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(r) => runs.push(r),
            Err(f) => {
                warn!("run {} failed: {}", f.run, f.reason);
                failed.push(f);
            }
        }
    }
    let stats = statistics(sc, &runs, failed);
    Ok(MonteCarlo { stats, runs })
}

pub fn write_csv<W: Write>(w: W, runs: &[RunRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["run", "scan", "ospa", "loc", "card", "n_true", "n_est"])?;
    for run in runs {
        for s in &run.scans {
            wtr.serialize((
                run.run,
                s.scan,
                s.ospa.distance,
                s.ospa.loc_error,
                s.ospa.card_error,
                s.truth.len(),
                s.estimates.len(),
            ))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_set_updates<W: Write>(w: W, runs: &[RunRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["run", "track", "scan"])?;
    for run in runs {
        for &(track, scan) in &run.set_updates {
            wtr.serialize((run.run, track, scan))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `results.csv`, `set_updates.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, mc: &MonteCarlo) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(std::fs::File::create(dir.join("results.csv"))?, &mc.runs)?;
    write_set_updates(std::fs::File::create(dir.join("set_updates.csv"))?, &mc.runs)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&mc.stats)?)?;
    Ok(())
}
