//! Road center-line compilation.
//!
//! A center line is split into parts of constant orientation (eastward or westward), each
//! part is fitted by a polynomial `y = f(u)` with `u = ±x`, and the polynomial is cut into
//! straight segments wherever the accumulated heading change since the last cut exceeds
//! the threshold `δ_m`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use log::debug;
use nalgebra::{DMatrix, DVector, Matrix6, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::quadrature::adaptive_simpson;
use crate::{Error, Result};

pub type Point2 = Vector2<f64>;

/// Absolute tolerance of the heading-change quadrature (rad).
pub const HEADING_TOL: f64 = 1e-8;
/// Resolution of the cut-point search (m).
pub const CUT_TOL: f64 = 1e-6;
const MIN_SEPARATION: f64 = 1e-9;
const MARCH_STEP: f64 = 1.0;

/// Default birth covariance: diag(50, 50, 50, 141, 141, 10).
pub fn default_birth_cov() -> Matrix6<f64> {
    Matrix6::from_diagonal(&Vector6::new(50.0, 50.0, 50.0, 141.0, 141.0, 10.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterLine {
    road_id: String,
    points: Vec<Point2>,
}

impl CenterLine {
    pub fn new(road_id: impl Into<String>, points: Vec<Point2>) -> Result<Self> {
        let road_id = road_id.into();
        if points.len() < 2 {
            return Err(Error::InvalidCenterLine {
                road: road_id,
                reason: format!("need at least 2 points, got {}", points.len()),
            });
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[0].iter().chain(w[1].iter()).all(|v| v.is_finite())) {
                return Err(Error::InvalidCenterLine {
                    road: road_id,
                    reason: format!("non-finite coordinate near point {i}"),
                });
            }
            if (w[1] - w[0]).norm() <= MIN_SEPARATION {
                return Err(Error::InvalidCenterLine {
                    road: road_id,
                    reason: format!("points {i} and {} coincide", i + 1),
                });
            }
        }
        Ok(Self { road_id, points })
    }

    pub fn road_id(&self) -> &str {
        &self.road_id
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }
}

/// Orientation indicator of a road part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aleph {
    /// Tangent angle in (−90°, 90°).
    Forward,
    /// Tangent angle in (90°, 270°).
    Backward,
}

impl Aleph {
    pub fn sign(self) -> f64 {
        match self {
            Aleph::Forward => 1.0,
            Aleph::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadPart {
    pub points: Vec<Point2>,
    pub aleph: Aleph,
    /// Index of `points[0]` in the source center line.
    pub first_index: usize,
}

impl RoadPart {
    /// Abscissa used for fitting: `x` for forward parts, `−x` for backward ones.
    pub fn abscissa(&self, p: &Point2) -> f64 {
        self.aleph.sign() * p.x
    }
}

/// Tangent angles at each point by central differences (one-sided at the ends).
pub fn tangent_angles(points: &[Point2]) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let prev = points[i.saturating_sub(1)];
            let next = points[(i + 1).min(n - 1)];
            let t = next - prev;
            t.y.atan2(t.x)
        })
        .collect()
}

fn classify(points: &[Point2]) -> Vec<Option<Aleph>> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let prev = points[i.saturating_sub(1)];
            let next = points[(i + 1).min(n - 1)];
            let t = next - prev;
            if t.x.abs() <= 1e-12 * t.norm() {
                None
            } else if t.x > 0.0 {
                Some(Aleph::Forward)
            } else {
                Some(Aleph::Backward)
            }
        })
        .collect()
}

/// Splits a center line into maximal runs of constant orientation.
///
/// Adjacent parts share their boundary point. A point whose tangent is exactly vertical
/// joins the preceding part.
pub fn split_by_orientation(line: &CenterLine) -> Vec<RoadPart> {
    let pts = line.points();
    let raw = classify(pts);
    let first_known = raw.iter().flatten().next().copied().unwrap_or(Aleph::Forward);
    let mut labels = Vec::with_capacity(raw.len());
    let mut last = first_known;
    for r in &raw {
        if let Some(a) = r {
            last = *a;
        }
        labels.push(last);
    }

    // maximal runs of equal label; each part also takes the previous run's last point
    let mut parts = Vec::new();
    let mut run_start = 0;
    for i in 1..=pts.len() {
        if i < pts.len() && labels[i] == labels[run_start] {
            continue;
        }
        let first = run_start.saturating_sub(1);
        // a leading single-point run is absorbed by the next part through the shared point
        if i - first >= 2 {
            parts.push(RoadPart { points: pts[first..i].to_vec(), aleph: labels[run_start], first_index: first });
        }
        run_start = i;
    }
    parts
}

/// Polynomial in a normalised abscissa `t = (u − center) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
    pub center: f64,
    pub scale: f64,
}

impl Polynomial {
    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn t(&self, u: f64) -> f64 {
        (u - self.center) / self.scale
    }

    pub fn eval(&self, u: f64) -> f64 {
        let t = self.t(u);
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        let t = self.t(u);
        let mut acc = 0.0;
        for (m, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * t + m as f64 * c;
        }
        acc / self.scale
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        let t = self.t(u);
        let mut acc = 0.0;
        for (m, &c) in self.coeffs.iter().enumerate().skip(2).rev() {
            acc = acc * t + (m * (m - 1)) as f64 * c;
        }
        acc / (self.scale * self.scale)
    }

    /// Coefficients `a_m` of `Σ a_m u^m` in the raw abscissa.
    ///
    /// Ill-conditioned when `center` is large compared to the domain; use only for
    /// inspection on well-scaled data.
    pub fn monomial_coefficients(&self) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        // t^m = ((u - c)/s)^m = Σ_k C(m,k) u^k (-c)^(m-k) / s^m
        for (m, &a) in self.coeffs.iter().enumerate() {
            let s_m = self.scale.powi(m as i32);
            let mut binom = 1.0;
            for k in 0..=m {
                if k > 0 {
                    binom = binom * (m - k + 1) as f64 / k as f64;
                }
                out[k] += a * binom * (-self.center).powi((m - k) as i32) / s_m;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub poly: Polynomial,
    pub requested_order: usize,
    pub effective_order: usize,
    pub rms: f64,
}

/// Least-squares polynomial fit of `y` against the part's abscissa.
///
/// The order drops until the design matrix has full column rank.
pub fn fit_polynomial(part: &RoadPart, order: usize) -> Result<PolyFit> {
    let us: Vec<f64> = part.points.iter().map(|p| part.abscissa(p)).collect();
    let ys: Vec<f64> = part.points.iter().map(|p| p.y).collect();
    let (lo, hi) = us
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)));
    let center = 0.5 * (lo + hi);
    let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let ts: Vec<f64> = us.iter().map(|u| (u - center) / scale).collect();
    let rhs = DVector::from_column_slice(&ys);

    let mut eff = order.min(part.points.len().saturating_sub(1));
    loop {
        let cols = eff + 1;
        let a = DMatrix::from_fn(ts.len(), cols, |i, j| ts[i].powi(j as i32));
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if eff > 0 && (smax <= 0.0 || smin / smax < 1e-10) {
            debug!("rank-deficient fit at order {eff}, degrading");
            eff -= 1;
            continue;
        }
        let coef = svd
            .solve(&rhs, 1e-14 * smax.max(1.0))
            .map_err(|_| Error::DegenerateGeometry("polynomial fit failed"))?;
        let resid = &a * &coef - &rhs;
        let rms = (resid.norm_squared() / ts.len() as f64).sqrt();
        return Ok(PolyFit {
            poly: Polynomial { coeffs: coef.iter().copied().collect(), center, scale },
            requested_order: order,
            effective_order: eff,
            rms,
        });
    }
}

/// Accumulated heading change `∫ f''/(1 + f'²) du` between `u1` and `u2`.
pub fn heading_change(poly: &Polynomial, u1: f64, u2: f64) -> f64 {
    adaptive_simpson(
        |u| {
            let d1 = poly.derivative(u);
            poly.second_derivative(u) / (1.0 + d1 * d1)
        },
        u1,
        u2,
        HEADING_TOL,
    )
}

/// One straight piece of a road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub start: Point2,
    pub end: Point2,
    /// Orientation angle in (−π/2, 3π/2].
    pub theta: f64,
    /// Slope-intercept `κ = y_s − tan(θ)·x_s`; downstream code uses the normal form.
    pub kappa: f64,
    pub index: usize,
}

impl RoadSegment {
    pub fn new(start: Point2, end: Point2, index: usize) -> Self {
        let d = end - start;
        let mut theta = d.y.atan2(d.x);
        if theta <= -FRAC_PI_2 {
            theta += 2.0 * PI;
        }
        let kappa = start.y - theta.tan() * start.x;
        Self { start, end, theta, kappa, index }
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn direction(&self) -> Point2 {
        (self.end - self.start) / self.length()
    }

    /// Left unit normal `(−sin θ, cos θ)`.
    pub fn normal(&self) -> Point2 {
        let u = self.direction();
        Point2::new(-u.y, u.x)
    }

    /// Signed offset `ρ` of the segment's line: `n·p = ρ` for points on it.
    pub fn offset(&self) -> f64 {
        self.normal().dot(&self.start)
    }

    /// Along-track coordinate from `start` and signed cross-track distance of `p`.
    pub fn project(&self, p: &Point2) -> (f64, f64) {
        let r = p - self.start;
        (r.dot(&self.direction()), r.dot(&self.normal()))
    }

    /// Distance from `p` to the closed segment.
    pub fn distance(&self, p: &Point2) -> f64 {
        let (along, cross) = self.project(p);
        let len = self.length();
        if along < 0.0 {
            (p - self.start).norm()
        } else if along > len {
            (p - self.end).norm()
        } else {
            cross.abs()
        }
    }
}

/// Cuts a fitted part into straight segments with at most `delta_m` heading change each.
///
/// Segment indices are local to the part; [`build_road_map`] renumbers them.
pub fn segment_part(part: &RoadPart, fit: &PolyFit, delta_m: f64) -> Vec<RoadSegment> {
    let first = part.points[0];
    let last = *part.points.last().expect("part has points");
    let sign = part.aleph.sign();
    let u_s = part.abscissa(&first);
    let u_t = part.abscissa(&last);
    let poly = &fit.poly;

    let mut cuts: Vec<f64> = Vec::new();
    if u_t > u_s && delta_m > 0.0 {
        let mut seg_start = u_s;
        let mut acc = 0.0;
        let mut u = u_s;
        while u < u_t {
            let next = (u + MARCH_STEP).min(u_t);
            let step = heading_change(poly, u, next);
            if (acc + step).abs() > delta_m {
                let (mut lo, mut hi) = (u, next);
                while hi - lo > CUT_TOL {
                    let mid = 0.5 * (lo + hi);
                    if (acc + heading_change(poly, u, mid)).abs() > delta_m {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let cut = hi;
                if u_t - cut <= CUT_TOL || cut - seg_start <= CUT_TOL {
                    break;
                }
                cuts.push(cut);
                seg_start = cut;
                acc = 0.0;
                u = cut;
            } else {
                acc += step;
                u = next;
            }
        }
    }

    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(first);
    nodes.extend(cuts.iter().map(|&u| Point2::new(sign * u, poly.eval(u))));
    nodes.push(last);
    nodes
        .windows(2)
        .enumerate()
        .map(|(i, w)| RoadSegment::new(w[0], w[1], i))
        .collect()
}

/// Which end of a road a birth place sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadEnd {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthSpec {
    pub road: String,
    pub end: RoadEnd,
    pub cov: Matrix6<f64>,
}

impl BirthSpec {
    pub fn new(road: impl Into<String>, end: RoadEnd) -> Self {
        Self { road: road.into(), end, cov: default_birth_cov() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthPlace {
    pub road: usize,
    pub segment: usize,
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub id: String,
    pub segments: Vec<RoadSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadMapMeta {
    /// Heading-change threshold (rad).
    pub delta_m: f64,
    pub n_p: usize,
}

/// Compiled road network. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadMap {
    pub roads: Vec<Road>,
    pub birth_places: Vec<BirthPlace>,
    pub metadata: RoadMapMeta,
}

impl RoadMap {
    pub fn road_index(&self, id: &str) -> Option<usize> {
        self.roads.iter().position(|r| r.id == id)
    }

    pub fn segment(&self, road: usize, index: usize) -> &RoadSegment {
        &self.roads[road].segments[index]
    }

    pub fn segment_count(&self, road: usize) -> usize {
        self.roads[road].segments.len()
    }

    /// Segment of `road` closest to `p`, searching from `from` onwards.
    pub fn nearest_segment(&self, road: usize, p: &Point2, from: usize) -> usize {
        let segs = &self.roads[road].segments;
        let mut best = from.min(segs.len() - 1);
        let mut best_d = f64::INFINITY;
        for (i, s) in segs.iter().enumerate().skip(from.min(segs.len() - 1)) {
            let d = s.distance(p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Compiles center lines into a road map with birth places at the declared road ends.
pub fn build_road_map(
    lines: &[CenterLine],
    n_p: usize,
    delta_m: f64,
    births: &[BirthSpec],
) -> Result<RoadMap> {
    if lines.is_empty() {
        return Err(Error::NoRoads);
    }
    if !(delta_m > 0.0) {
        return Err(Error::config("delta_m must be positive"));
    }
    let mut roads = Vec::with_capacity(lines.len());
    for line in lines {
        let mut segments = Vec::new();
        for part in split_by_orientation(line) {
            let fit = fit_polynomial(&part, n_p)?;
            debug!(
                "road {} part at {}: order {} rms {:.3} m",
                line.road_id(),
                part.first_index,
                fit.effective_order,
                fit.rms
            );
            for mut seg in segment_part(&part, &fit, delta_m) {
                seg.index = segments.len();
                segments.push(seg);
            }
        }
        roads.push(Road { id: line.road_id().to_string(), segments });
    }

    let mut birth_places = Vec::with_capacity(births.len());
    for b in births {
        let road = roads
            .iter()
            .position(|r| r.id == b.road)
            .ok_or_else(|| Error::UnknownRoad(b.road.clone()))?;
        let segs = &roads[road].segments;
        let (segment, p) = match b.end {
            RoadEnd::Start => (0, segs[0].start),
            RoadEnd::End => (segs.len() - 1, segs[segs.len() - 1].end),
        };
        birth_places.push(BirthPlace {
            road,
            segment,
            mean: Vector6::new(p.x, p.y, 0.0, 0.0, 0.0, 0.0),
            cov: b.cov,
        });
    }

    Ok(RoadMap { roads, birth_places, metadata: RoadMapMeta { delta_m, n_p } })
}

// ---------------------------------------------------------------------------
// Road input file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadFileRoad {
    pub id: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadFileBirth {
    pub road: String,
    pub end: RoadEnd,
    /// Optional diagonal of the birth covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_diag: Option<[f64; 6]>,
}

/// `{"roads":[{"id":..,"points":[[x,y],..]}], "birth":[{"road":..,"end":"start"}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadFile {
    pub roads: Vec<RoadFileRoad>,
    #[serde(default)]
    pub birth: Vec<RoadFileBirth>,
}

impl RoadFile {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn center_lines(&self) -> Result<Vec<CenterLine>> {
        self.roads
            .iter()
            .map(|r| CenterLine::new(r.id.clone(), r.points.iter().map(|p| Point2::new(p[0], p[1])).collect()))
            .collect()
    }

    pub fn birth_specs(&self) -> Vec<BirthSpec> {
        self.birth
            .iter()
            .map(|b| BirthSpec {
                road: b.road.clone(),
                end: b.end,
                cov: b
                    .cov_diag
                    .map(|d| Matrix6::from_diagonal(&Vector6::from_column_slice(&d)))
                    .unwrap_or_else(default_birth_cov),
            })
            .collect()
    }

    pub fn compile(&self, n_p: usize, delta_m: f64) -> Result<RoadMap> {
        build_road_map(&self.center_lines()?, n_p, delta_m, &self.birth_specs())
    }
}
