//! Trajectory classification: closed, periodic, topologically regular with an
//! integer label, or chaotic candidate.
//!
//! Electron/hole convention: with a right-handed frame (`e₁ × e₂ = B̂`) and
//! orientation along `∇ε × B`, a closed orbit is a HOLE when it winds
//! counter-clockwise (the enclosed region has `ε > c`) and an ELECTRON when it
//! winds clockwise. A left-handed frame flips the verdict.

use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::geometry::{self, P2};
use crate::lattice::{self, DEFAULT_M_MAX, DEFAULT_Q};
use crate::linalg::{self, dot, irreducible_vectors, norm};
use crate::section::PlaneSection;
use crate::tracer::{detect_periodicity, Termination, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Strip width bound, in lattice periods.
    pub w_max: f64,
    pub aspect_min: f64,
    /// Longitudinal extent needed for the strip test, in lattice periods.
    pub l_reg: f64,
    pub m_max: i64,
    /// Angle bound between `B × l_m` and the strip direction (`N = 3`).
    pub tol_label: f64,
    /// Bound on `|⟨d, l_m⟩| / ‖l_m‖` for `N ≥ 4`.
    pub tol_label_nd: f64,
    pub q: i64,
    pub theta_conv: f64,
    /// Arc length for chaos metrics, in lattice periods.
    pub l_chaos: f64,
    pub tol_close: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            w_max: 10.0,
            aspect_min: 20.0,
            l_reg: 200.0,
            m_max: DEFAULT_M_MAX,
            tol_label: 0.02,
            tol_label_nd: 2e-3,
            q: DEFAULT_Q,
            theta_conv: 0.05,
            l_chaos: 1e4,
            tol_close: 3e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tag {
    Closed,
    PeriodicOpen,
    TopologicallyRegular,
    ChaoticCandidate,
    Unresolved,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Closed => "CLOSED",
            Tag::PeriodicOpen => "PERIODIC_OPEN",
            Tag::TopologicallyRegular => "TOPOLOGICALLY_REGULAR",
            Tag::ChaoticCandidate => "CHAOTIC_CANDIDATE",
            Tag::Unresolved => "UNRESOLVED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrbitType {
    Electron,
    Hole,
}

impl OrbitType {
    pub fn as_str(self) -> &'static str {
        match self {
            OrbitType::Electron => "ELECTRON",
            OrbitType::Hole => "HOLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChaosHint {
    TsarevLike,
    DynnikovLike,
    Inconclusive,
}

impl ChaosHint {
    pub fn as_str(self) -> &'static str {
        match self {
            ChaosHint::TsarevLike => "TSAREV_LIKE",
            ChaosHint::DynnikovLike => "DYNNIKOV_LIKE",
            ChaosHint::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosMetrics {
    pub s: Vec<f64>,
    pub displacement: Vec<f64>,
    pub deviation: Vec<f64>,
    pub directions: Vec<P2>,
    /// Log-log slope of deviation against arc length.
    pub deviation_exponent: f64,
    /// Log-log slope of displacement against arc length.
    pub displacement_exponent: f64,
    /// Max pairwise angle among directions sampled in the last decade.
    pub last_decade_angle: f64,
    pub converged: bool,
    /// `(box size, occupied boxes)` at three scales.
    pub box_counts: Vec<(f64, usize)>,
    pub hint: ChaosHint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryClass {
    pub tag: Tag,
    pub diameter: Option<f64>,
    pub orbit_type: Option<OrbitType>,
    pub period: Option<Vec<i64>>,
    /// Unit strip direction in plane coordinates.
    pub direction_plane: Option<P2>,
    /// Same direction in `ℝᴺ`.
    pub direction: Option<Vec<f64>>,
    pub width: Option<f64>,
    pub extent: Option<f64>,
    pub label: Option<Vec<i64>>,
    pub metrics: Option<ChaosMetrics>,
}

impl TrajectoryClass {
    fn bare(tag: Tag) -> Self {
        Self {
            tag,
            diameter: None,
            orbit_type: None,
            period: None,
            direction_plane: None,
            direction: None,
            width: None,
            extent: None,
            label: None,
            metrics: None,
        }
    }
}

/// In-plane direction implied by label `m`: for `N = 3` it is `B × l_m`, in
/// general the rotation of the in-plane projection of `l_m`.
pub fn label_direction(m: &[i64], section: &PlaneSection) -> Option<P2> {
    let l = section.lattice().direct_combination(m);
    let n = section.project_vector(&l);
    let len = n[0].hypot(n[1]);
    (len > 1e-12 * norm(&l)).then(|| [-n[1] / len, n[0] / len])
}

/// Sign-normalized irreducible `m`, `‖m‖∞ ≤ m_max`, with the strip direction
/// `d` compatible with `l_m = Σ mᵢ lᵢ`, sorted by `‖m‖∞`, then angle, then
/// lexicographically. For `N = 3` the test is `angle(B × l_m, d) ≤ tol`; for
/// `N ≥ 4` it is `|⟨d, l_m⟩| ≤ tol·‖l_m‖` for every direction in `ds`.
pub fn label_candidates(ds: &[Vec<f64>], section: &PlaneSection, m_max: i64, tol: f64) -> Vec<(Vec<i64>, f64)> {
    let lat = section.lattice();
    let mut out: Vec<(Vec<i64>, f64)> = Vec::new();
    for m in irreducible_vectors(lat.dim(), m_max) {
        let l = lat.direct_combination(&m);
        let nl = norm(&l);
        let score = match section.field_direction() {
            Some(b) if lat.dim() == 3 => {
                let bl = linalg::cross3(b, &l);
                if norm(&bl) < 1e-12 * nl {
                    continue;
                }
                ds.iter().map(|d| linalg::line_angle(&bl, d)).fold(0.0, f64::max)
            }
            _ => ds.iter().map(|d| (dot(d, &l) / (norm(d) * nl)).abs()).fold(0.0, f64::max),
        };
        if score <= tol {
            out.push((m, score));
        }
    }
    out.sort_by(|a, b| {
        linalg::inf_norm(&a.0)
            .cmp(&linalg::inf_norm(&b.0))
            .then(a.1.total_cmp(&b.1))
            .then(a.0.cmp(&b.0))
    });
    out
}

/// Minimal integer label compatible with the ambient strip direction(s).
pub fn integer_label(ds: &[Vec<f64>], section: &PlaneSection, m_max: i64, tol: f64) -> Result<Vec<i64>> {
    let c = label_candidates(ds, section, m_max, tol);
    if let Some((m, _)) = c.into_iter().next() {
        return Ok(m);
    }
    // best near miss for the report
    let wide = label_candidates(ds, section, m_max, f64::INFINITY);
    let best = wide.iter().min_by(|a, b| a.1.total_cmp(&b.1));
    Err(Error::NoLabelWithinBound {
        bound: m_max,
        best: best.map(|b| b.0.clone()),
        angle: best.map_or(f64::NAN, |b| b.1),
    })
}

/// Strip width of the vertices measured across the direction of label `m`.
pub fn width_along_label(vertices: &[P2], m: &[i64], section: &PlaneSection) -> Option<f64> {
    label_direction(m, section).map(|u| geometry::strip_extent(vertices, u).1)
}

/// First candidate label whose exact strip direction keeps the trajectory
/// within `2·W + period/2`.
pub fn label_by_width(
    vertices: &[P2],
    ds: &[Vec<f64>],
    fitted_width: f64,
    section: &PlaneSection,
    th: &Thresholds,
) -> Result<Vec<i64>> {
    let period = section.lattice().period_length();
    let tol = if section.dim() == 3 { th.tol_label } else { th.tol_label_nd };
    let cands = label_candidates(ds, section, th.m_max, tol);
    let bound = 2.0 * fitted_width + 0.5 * period;
    for (m, _) in &cands {
        if width_along_label(vertices, m, section).is_some_and(|w| w <= bound) {
            return Ok(m.clone());
        }
    }
    integer_label(ds, section, th.m_max, 0.0).map_err(|e| match e {
        Error::NoLabelWithinBound { bound, best, angle } => Error::NoLabelWithinBound {
            bound,
            best: cands.first().map(|c| c.0.clone()).or(best),
            angle,
        },
        other => other,
    })
}

/// Electron/hole type of a closed, simple trajectory.
pub fn orbit_type(trajectory: &Trajectory, section: &PlaneSection, model: &DispersionModel) -> Result<OrbitType> {
    if !trajectory.is_closed() {
        return Err(Error::Precondition("orbit type needs a closed trajectory".into()));
    }
    let v = &trajectory.vertices;
    if geometry::self_intersects(v, true) {
        return Err(Error::SelfIntersecting);
    }
    let area = geometry::signed_area(v);
    let w = area.signum() * f64::from(trajectory.orientation) * section.handedness();
    let kind = if w < 0.0 { OrbitType::Electron } else { OrbitType::Hole };
    // interior probe: inside above the level ⇔ counter-clockwise in frame coords
    if let Some(p) = interior_point(v) {
        let inside_above = section_value(model, section, p) > trajectory.level;
        let ccw = area * f64::from(trajectory.orientation) > 0.0;
        if inside_above != ccw {
            log::debug!("interior probe disagrees with winding at {p:?}");
        }
    }
    Ok(kind)
}

fn section_value(model: &DispersionModel, section: &PlaneSection, p: P2) -> f64 {
    model.evaluate(&section.embed(p[0], p[1]))
}

fn interior_point(poly: &[P2]) -> Option<P2> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    let c = poly.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n as f64, a[1] + p[1] / n as f64]);
    if geometry::winding_number(poly, c) != 0 {
        return Some(c);
    }
    // midpoint of a horizontal chord through the centroid
    let mut xs: Vec<f64> = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] <= c[1]) != (b[1] <= c[1]) {
            xs.push(a[0] + (c[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.chunks(2)
        .filter(|p| p.len() == 2)
        .map(|p| [(p[0] + p[1]) / 2.0, c[1]])
        .find(|&q| geometry::winding_number(poly, q) != 0)
}

fn tls_deviation(points: &[P2]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let (c, d) = geometry::tls_fit(points);
    points
        .iter()
        .map(|p| ((p[0] - c[0]) * d[1] - (p[1] - c[1]) * d[0]).abs())
        .fold(0.0, f64::max)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Deviation growth and direction convergence along one open trajectory.
pub fn chaos_metrics(trajectory: &Trajectory, period: f64, th: &Thresholds) -> ChaosMetrics {
    let v = &trajectory.vertices;
    let total = trajectory.arc_length();
    let s0 = (period).min(total / 100.0).max(1e-9);
    let samples = 40usize;
    let mut s = Vec::new();
    let mut displacement = Vec::new();
    let mut deviation = Vec::new();
    let mut directions = Vec::new();
    let x0 = trajectory.first();
    if total > s0 {
        let ratio = (total / s0).ln() / (samples - 1) as f64;
        for j in 0..samples {
            let sj = (s0 * (ratio * j as f64).exp()).min(total);
            let k = trajectory.arc.partition_point(|&a| a < sj).min(v.len() - 1);
            let x = v[k];
            let r = geometry::dist(x, x0);
            s.push(trajectory.arc[k]);
            displacement.push(r);
            deviation.push(tls_deviation(&v[..=k]));
            directions.push(if r > 0.0 { [(x[0] - x0[0]) / r, (x[1] - x0[1]) / r] } else { [0.0, 0.0] });
        }
    }
    let last: Vec<P2> = s
        .iter()
        .zip(&directions)
        .filter(|(sj, _)| **sj >= total / 10.0)
        .map(|(_, d)| *d)
        .collect();
    let mut angle: f64 = 0.0;
    for i in 0..last.len() {
        for j in i + 1..last.len() {
            let c = (last[i][0] * last[j][0] + last[i][1] * last[j][1]).clamp(-1.0, 1.0);
            angle = angle.max(c.acos());
        }
    }
    let converged = angle <= th.theta_conv;
    let box_counts = [1.0, 4.0, 16.0]
        .iter()
        .map(|&k| {
            let delta = k * period;
            let mut boxes: Vec<(i64, i64)> = v
                .iter()
                .map(|p| ((p[0] / delta).floor() as i64, (p[1] / delta).floor() as i64))
                .collect();
            boxes.sort_unstable();
            boxes.dedup();
            (delta, boxes.len())
        })
        .collect();
    let d_final = deviation.last().copied().unwrap_or(0.0);
    let hint = if !converged {
        ChaosHint::DynnikovLike
    } else if d_final > th.w_max * period {
        ChaosHint::TsarevLike
    } else {
        ChaosHint::Inconclusive
    };
    ChaosMetrics {
        deviation_exponent: slope(&s, &deviation),
        displacement_exponent: slope(&s, &displacement),
        s,
        displacement,
        deviation,
        directions,
        last_decade_angle: angle,
        converged,
        box_counts,
        hint,
    }
}

/// Strip statistics `(direction, extent, width)` of an open trajectory.
pub fn strip_fit(trajectory: &Trajectory) -> (P2, f64, f64) {
    let (_, d) = geometry::tls_fit(&trajectory.vertices);
    let (e, w) = geometry::strip_extent(&trajectory.vertices, d);
    (d, e, w)
}

/// Classification cascade for one traced trajectory.
pub fn classify_trajectory(
    trajectory: &Trajectory,
    section: &PlaneSection,
    model: &DispersionModel,
    th: &Thresholds,
) -> TrajectoryClass {
    if trajectory.is_closed() {
        let mut c = TrajectoryClass::bare(Tag::Closed);
        c.diameter = Some(trajectory.diameter());
        c.orbit_type = orbit_type(trajectory, section, model).ok();
        return c;
    }
    let period = section.lattice().period_length();
    let rational_plane = match section.field_direction() {
        Some(_) if section.dim() == 3 => section.direction_class().kind == lattice::DirectionKind::Rational,
        _ => section.in_plane_periods(2, 1e-9).len() >= 2,
    };
    if rational_plane {
        if let Ok(Some(w)) = detect_periodicity(trajectory, section, th.q, th.tol_close) {
            let mut c = TrajectoryClass::bare(Tag::PeriodicOpen);
            c.period = Some(w);
            return c;
        }
    }
    let (d, extent, width) = strip_fit(trajectory);
    let mut c = TrajectoryClass::bare(Tag::Unresolved);
    c.direction_plane = Some(d);
    c.direction = Some(section.lift_vector(d));
    c.width = Some(width);
    c.extent = Some(extent);
    let strip_ok = extent >= th.l_reg * period
        && width <= th.w_max * period
        && (width == 0.0 || extent / width >= th.aspect_min);
    if strip_ok {
        let dir = section.lift_vector(d);
        if let Ok(m) = label_by_width(&trajectory.vertices, &[dir], width, section, th) {
            c.tag = Tag::TopologicallyRegular;
            c.label = Some(m);
        }
        return c;
    }
    if width > th.w_max * period {
        c.tag = Tag::ChaoticCandidate;
        c.metrics = Some(chaos_metrics(trajectory, period, th));
    }
    c
}

/// Ambient strip direction of a trajectory with a known label.
pub fn label_strip_angle(m: &[i64], d: &[f64], section: &PlaneSection) -> Option<f64> {
    let b = section.field_direction()?;
    let l = section.lattice().direct_combination(m);
    Some(linalg::line_angle(&linalg::cross3(b, &l), d))
}

/// Whether a trajectory ended for a reason that prevents classification.
pub fn is_truncated(t: &Trajectory) -> bool {
    matches!(t.termination, Termination::SaddleProximity | Termination::LeftWindow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::tracer::{find_seeds, trace_level_line, Limits, Tracer, TraceParams};
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn sec(b: &[f64], p0: &[f64]) -> PlaneSection {
        PlaneSection::field(b, p0, &Lattice::cubic(3)).unwrap()
    }

    fn first_loop(m: &DispersionModel, s: &PlaneSection, c: f64, win: [f64; 4]) -> Trajectory {
        let seeds = find_seeds(m, s, c, win, 48);
        trace_level_line(m, s, c, seeds[0], Limits::new(200.0, 100.0)).unwrap()
    }

    #[test]
    fn planes_are_regular_with_unit_label() {
        let m = DispersionModel::builtin("planes").unwrap();
        let b = [0.3, 2f64.sqrt() / 3.0, 0.8];
        let s = sec(&b, &[0.0; 3]);
        let tr = Tracer::new(&m, &s, TraceParams::default());
        let seed = tr.seeds(0.0, [-PI, PI, -PI, PI], 32)[0];
        let t = tr.trace(0.0, seed, 1, Limits::new(220.0 * TAU, f64::INFINITY)).unwrap();
        let c = classify_trajectory(&t, &s, &m, &Thresholds::default());
        assert_eq!(c.tag, Tag::TopologicallyRegular);
        assert_eq!(c.label, Some(vec![1, 0, 0]));
        assert!(c.width.unwrap() <= 1e-6);
        let ang = label_strip_angle(&[1, 0, 0], c.direction.as_ref().unwrap(), &s).unwrap();
        assert!(ang <= Thresholds::default().tol_label);
    }

    #[test]
    fn label_examples() {
        let b = [0.0, 1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        let s = sec(&b, &[0.0; 3]);
        let d = linalg::normalized(&linalg::cross3(&b, &[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(integer_label(&[d.clone()], &s, 12, 1e-6).unwrap(), vec![1, 0, 0]);
        // a direction with no compatible label, confirmed by enumeration
        let [e1, e2] = s.frame().clone();
        let d0 = s.project_vector(&d);
        let base = d0[1].atan2(d0[0]);
        let tol = 1e-5;
        let mut found = false;
        for k in 0..200 {
            let a = base + 0.3 + k as f64 * 1e-4;
            let dd: Vec<f64> = (0..3).map(|i| a.cos() * e1[i] + a.sin() * e2[i]).collect();
            let brute = irreducible_vectors(3, 12).any(|m| {
                let l = s.lattice().direct_combination(&m);
                let bl = linalg::cross3(&b, &l);
                norm(&bl) > 1e-12 && linalg::line_angle(&bl, &dd) <= tol
            });
            if !brute {
                assert!(matches!(integer_label(&[dd], &s, 12, tol), Err(Error::NoLabelWithinBound { .. })));
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn closed_loop_classification_and_orbit_types() {
        let m = DispersionModel::builtin("cos-sum").unwrap();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0; 3]);
        let t = first_loop(&m, &s, 2.5, [-1.5, 1.5, -1.5, 1.5]);
        let c = classify_trajectory(&t, &s, &m, &Thresholds::default());
        assert_eq!(c.tag, Tag::Closed);
        assert_eq!(c.orbit_type, Some(OrbitType::Hole));
        assert_eq!(orbit_type(&t, &s.mirrored(), &m).unwrap(), OrbitType::Electron);
        let s = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, PI]);
        let t = first_loop(&m, &s, -2.5, [PI - 1.5, PI + 1.5, PI - 1.5, PI + 1.5]);
        assert_eq!(orbit_type(&t, &s, &m).unwrap(), OrbitType::Electron);
        // reversed traversal keeps the type
        assert_eq!(orbit_type(&t.reversed(), &s, &m).unwrap(), OrbitType::Electron);
    }

    #[test]
    fn closed_loop_diameter_matches_oracle() {
        let m = DispersionModel::builtin("cos-sum").unwrap();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, FRAC_PI_2 + 0.1]);
        let t = first_loop(&m, &s, 0.0, [-PI, PI, -PI, PI]);
        let c = classify_trajectory(&t, &s, &m, &Thresholds::default());
        let h = TAU / 512.0;
        let oracle = crate::tracer::marching_squares(&m, &s, 0.0, [-PI, PI, -PI, PI], h);
        assert!((c.diameter.unwrap() - geometry::diameter(&oracle[0])).abs() <= 2.0 * h);
    }

    #[test]
    fn straight_lines_are_inconclusive_for_chaos() {
        let m = DispersionModel::builtin("planes").unwrap();
        let s = sec(&[0.3, 0.2, 0.9], &[0.0; 3]);
        let tr = Tracer::new(&m, &s, TraceParams::default());
        let seed = tr.seeds(0.0, [-PI, PI, -PI, PI], 32)[0];
        let t = tr.trace(0.0, seed, 1, Limits::new(300.0 * TAU, f64::INFINITY)).unwrap();
        let cm = chaos_metrics(&t, TAU, &Thresholds::default());
        assert_eq!(cm.hint, ChaosHint::Inconclusive);
        assert!(cm.converged);
        assert!(cm.deviation.iter().all(|&d| d < 1e-6));
        assert!(cm.s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn periodic_open_lines_are_tagged() {
        let m = DispersionModel::builtin("planes").unwrap();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0; 3]);
        let t = trace_level_line(&m, &s, 0.0, [FRAC_PI_2, 0.0], Limits::new(40.0, 1e9)).unwrap();
        let c = classify_trajectory(&t, &s, &m, &Thresholds::default());
        assert_eq!(c.tag, Tag::PeriodicOpen);
        assert_eq!(c.period, Some(vec![0, 1, 0]));
    }
}
