//! Level lines of functions with `N ≥ 4` quasi-periods: strip confinement for
//! generic plane directions and asymptotic directions for planes containing
//! exactly one lattice period.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{integer_label, strip_fit};
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::geometry::{SegmentIndex, P2};
use crate::lattice::DEFAULT_Q;
use crate::linalg::{axpy, line_angle, norm, normalized, orthonormalize_against};
use crate::par::Exec;
use crate::scanner::{shift_samples, ScanParams};
use crate::section::{GrassmannDirection, PlaneSection};
use crate::tracer::{Limits, Termination, Tracer, Trajectory};

/// A plane direction containing exactly one lattice period `w` (up to sign
/// and the search bound) and lying in no rational hyperplane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialRationalStructure {
    pub xi: [Vec<f64>; 2],
    pub w: Vec<i64>,
    /// Translation by `w` in plane coordinates.
    pub period: P2,
    pub bound: i64,
    pub tol: f64,
}

impl PartialRationalStructure {
    pub fn detect(section: &PlaneSection, bound: i64, tol: f64) -> Result<Self> {
        let g = GrassmannDirection::analyze(section, bound, tol);
        if g.in_rational_hyperplane() {
            return Err(Error::Precondition(format!(
                "plane lies in the rational hyperplane orthogonal to {:?}",
                g.hyperplane_normals[0]
            )));
        }
        if g.in_plane.len() != 1 {
            return Err(Error::Precondition(format!(
                "plane contains {} irreducible periods up to {bound}, expected one",
                g.in_plane.len()
            )));
        }
        let w = g.in_plane[0].clone();
        let period = section.project_vector(&section.lattice().reciprocal_combination(&w));
        Ok(Self {
            xi: section.frame().clone(),
            w,
            period,
            bound,
            tol,
        })
    }

    pub fn direction(&self) -> P2 {
        let n = self.period[0].hypot(self.period[1]);
        [self.period[0] / n, self.period[1] / n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementBudget {
    pub shifts: usize,
    /// Extra plane directions tilted by `jitter` radians; they pin the label.
    pub jitters: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ConfinementBudget {
    fn default() -> Self {
        Self {
            shifts: 8,
            jitters: 5,
            jitter: 0.02,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementReport {
    pub confined: bool,
    /// Largest strip width over the base-direction traces.
    pub width: f64,
    pub label: Option<Vec<i64>>,
    pub widths: Vec<f64>,
    pub open_traces: usize,
    /// Shifts whose seeds all produced closed curves.
    pub closed_shifts: usize,
    /// Open traces failing the strip test.
    pub failures: usize,
    pub directions: Vec<Vec<f64>>,
}

/// First trajectory at level `c` in `section` that does not close.
fn first_open(model: &DispersionModel, section: &PlaneSection, c: f64, params: &ScanParams, limits: Limits) -> Option<Trajectory> {
    let p = section.lattice().period_length();
    let tr = Tracer::new(model, section, params.trace);
    let mut seen = SegmentIndex::new(0.5);
    for s in tr.seeds(c, [-p, p, -p, p], params.seed_grid) {
        if seen.nearest_within(s, 1e-3).is_some() {
            continue;
        }
        let t = match tr.trace(c, s, 1, limits) {
            Ok(t) => t,
            Err(Error::StagnantStep { partial }) => *partial,
            Err(_) => continue,
        };
        seen.insert_polyline(&t.vertices);
        if t.is_closed() {
            seen.insert(t.last(), t.first());
            continue;
        }
        return Some(t);
    }
    None
}

fn jittered(u: &[f64], v: &[f64], k: usize, jitter: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    if k == 0 {
        return (u.to_vec(), v.to_vec());
    }
    let n = u.len();
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let e1 = normalized(u).unwrap_or_else(|| vec![0.0; n]);
    let e2 = orthonormalize_against(v, &[e1.clone()]).unwrap_or_else(|| vec![0.0; n]);
    let t = orthonormalize_against(&r, &[e1, e2]).unwrap_or_else(|| vec![0.0; n]);
    (axpy(u, jitter * norm(u), &t), v.to_vec())
}

/// Trace open level lines at sampled shifts of `ξ = span{u, v}` and of a few
/// tilted copies, and test whether they all stay in straight strips sharing
/// one integer label.
pub fn strip_confinement_check(
    model: &DispersionModel,
    u: &[f64],
    v: &[f64],
    c: f64,
    params: &ScanParams,
    budget: &ConfinementBudget,
    exec: Exec,
) -> Result<ConfinementReport> {
    let lat = model.lattice();
    if lat.dim() < 4 {
        return Err(Error::UnsupportedDimension(lat.dim()));
    }
    let p = lat.period_length();
    let th = &params.thresholds;
    let limits = Limits::new(params.probe_arc_factor * th.l_reg * p, 1.05 * th.l_reg * p);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let planes: Vec<(Vec<f64>, Vec<f64>)> = (0..=budget.jitters).map(|k| jittered(u, v, k, budget.jitter, &mut rng)).collect();
    let shifts = shift_samples(lat, budget.shifts, params.seed);
    let mut jobs = Vec::new();
    for (k, (a, b)) in planes.iter().enumerate() {
        // tilted planes only pin the label; one shift each suffices
        let n = if k == 0 { shifts.len() } else { 1 };
        for s in shifts.iter().take(n) {
            jobs.push((k, PlaneSection::grassmann(a, b, s, lat)?));
        }
    }
    let results = exec.map(&jobs, |(k, sec)| {
        first_open(model, sec, c, params, limits).map(|t| {
            let (d, extent, width) = strip_fit(&t);
            (*k, sec.lift_vector(d), extent, width)
        })
    });
    let mut report = ConfinementReport {
        confined: false,
        width: 0.0,
        label: None,
        widths: Vec::new(),
        open_traces: 0,
        closed_shifts: 0,
        failures: 0,
        directions: Vec::new(),
    };
    for (job, r) in jobs.iter().zip(&results) {
        match r {
            None => {
                if job.0 == 0 {
                    report.closed_shifts += 1;
                }
            }
            Some((k, d, extent, width)) => {
                report.open_traces += 1;
                let ok = *extent >= th.l_reg * p && *width <= th.w_max * p && *extent >= th.aspect_min * width;
                if !ok {
                    report.failures += 1;
                }
                if *k == 0 {
                    report.widths.push(*width);
                    report.width = report.width.max(*width);
                }
                report.directions.push(d.clone());
            }
        }
    }
    if report.open_traces > 0 && report.failures == 0 {
        let base = PlaneSection::grassmann(u, v, &vec![0.0; lat.dim()], lat)?;
        report.label = integer_label(&report.directions, &base, th.m_max, th.tol_label_nd).ok();
        report.confined = report.label.is_some();
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub structure: PartialRationalStructure,
    /// Common direction in plane coordinates, sign-aligned with the period.
    pub direction: P2,
    pub ambient: Vec<f64>,
    /// Angle of each shift's open trace to the common direction.
    pub angles: Vec<f64>,
    pub max_pairwise: f64,
    /// Angle between the common direction and the projected period.
    pub period_angle: f64,
    /// Largest closed-component diameter over the sampled shifts.
    pub diameter_bound: f64,
    pub shifts: usize,
    pub open_shifts: usize,
    /// Open lines were found at every sampled shift.
    pub persistent: bool,
}

struct ShiftSurvey {
    direction: Option<P2>,
    max_diameter: f64,
}

fn survey_shift(model: &DispersionModel, section: &PlaneSection, c: f64, params: &ScanParams, limits: Limits) -> ShiftSurvey {
    let p = section.lattice().period_length();
    let tr = Tracer::new(model, section, params.trace);
    let mut seen = SegmentIndex::new(0.5);
    let mut out = ShiftSurvey {
        direction: None,
        max_diameter: 0.0,
    };
    for s in tr.seeds(c, [-p, p, -p, p], params.seed_grid) {
        if seen.nearest_within(s, 1e-3).is_some() {
            continue;
        }
        let t = match tr.trace(c, s, 1, limits) {
            Ok(t) => t,
            Err(Error::StagnantStep { partial }) => *partial,
            Err(_) => continue,
        };
        seen.insert_polyline(&t.vertices);
        match t.termination {
            Termination::Closed => {
                seen.insert(t.last(), t.first());
                out.max_diameter = out.max_diameter.max(t.diameter());
            }
            Termination::LeftWindow | Termination::MaxLength if out.direction.is_none() => {
                out.direction = Some(strip_fit(&t).0);
            }
            _ => {}
        }
    }
    out
}

/// Common asymptotic direction of open level lines across shifted planes of
/// one partially rational direction, with the closed-diameter bound and
/// shift persistence of open lines.
pub fn asymptotic_direction_4d(
    model: &DispersionModel,
    u: &[f64],
    v: &[f64],
    c: f64,
    params: &ScanParams,
    shifts: usize,
    exec: Exec,
) -> Result<AsymptoticReport> {
    let lat = model.lattice();
    if lat.dim() < 4 {
        return Err(Error::UnsupportedDimension(lat.dim()));
    }
    let base = PlaneSection::grassmann(u, v, &vec![0.0; lat.dim()], lat)?;
    let structure = PartialRationalStructure::detect(&base, DEFAULT_Q.min(8), 1e-9)?;
    let p = lat.period_length();
    let limits = Limits::new(params.probe_arc_factor * params.thresholds.l_reg * p, 50.0 * p);
    let samples = shift_samples(lat, shifts.max(3), params.seed);
    let sections: Vec<PlaneSection> = samples.iter().map(|s| base.with_shift(s)).collect();
    let surveys = exec.map(&sections, |sec| survey_shift(model, sec, c, params, limits));
    let w = structure.direction();
    let dirs: Vec<P2> = surveys
        .iter()
        .filter_map(|s| s.direction)
        .map(|d| if d[0] * w[0] + d[1] * w[1] < 0.0 { [-d[0], -d[1]] } else { d })
        .collect();
    if dirs.len() < 3 {
        return Err(Error::Precondition(format!(
            "open level lines found in {} of {} shifted planes; at least 3 needed",
            dirs.len(),
            surveys.len()
        )));
    }
    let mut max_pairwise: f64 = 0.0;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            max_pairwise = max_pairwise.max(line_angle(&dirs[i], &dirs[j]));
        }
    }
    let sum = dirs.iter().fold([0.0, 0.0], |a, d| [a[0] + d[0], a[1] + d[1]]);
    let n = sum[0].hypot(sum[1]);
    let direction = [sum[0] / n, sum[1] / n];
    let angles: Vec<f64> = dirs.iter().map(|d| line_angle(d, &direction)).collect();
    if max_pairwise > params.thresholds.theta_conv {
        return Err(Error::DirectionsDisagree { max_angle: max_pairwise, angles });
    }
    let open_shifts = dirs.len();
    Ok(AsymptoticReport {
        ambient: base.lift_vector(direction),
        period_angle: line_angle(&direction, &w),
        direction,
        angles,
        max_pairwise,
        diameter_bound: surveys.iter().map(|s| s.max_diameter).fold(0.0, f64::max),
        shifts: surveys.len(),
        open_shifts,
        persistent: open_shifts == surveys.len(),
        structure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ScanParams {
        let mut p = ScanParams::default();
        p.thresholds.l_reg = 40.0;
        p.seed_grid = 12;
        p
    }

    #[test]
    fn partial_rational_structure_of_a_plane_with_one_period() {
        let lat = crate::lattice::Lattice::cubic(4);
        let s = PlaneSection::grassmann(&[0.0, 1.0, 0.0, 0.0], &[0.61, 0.0, 0.37, 0.2236], &[0.0; 4], &lat).unwrap();
        let st = PartialRationalStructure::detect(&s, 6, 1e-9).unwrap();
        assert_eq!(st.w, vec![0, 1, 0, 0]);
        let gen = PlaneSection::grassmann(&[1.0, 0.3, -0.71, 0.2], &[0.13, 1.0, 0.42, -0.57], &[0.0; 4], &lat).unwrap();
        assert!(PartialRationalStructure::detect(&gen, 6, 1e-9).is_err());
    }

    #[test]
    fn planes4_is_confined_with_the_first_axis() {
        let m = DispersionModel::builtin("planes4").unwrap();
        let budget = ConfinementBudget {
            shifts: 3,
            jitters: 3,
            ..ConfinementBudget::default()
        };
        let u = [0.8, 0.31, -0.47, 0.2];
        let v = [0.1, 0.9, 0.33, -0.61];
        let r = strip_confinement_check(&m, &u, &v, 0.1, &params(), &budget, Exec::Sequential).unwrap();
        assert!(r.confined, "{r:?}");
        assert_eq!(r.label, Some(vec![1, 0, 0, 0]));
        assert!(r.width < 1e-6, "{}", r.width);
    }

    #[test]
    fn planes4_asymptotic_direction_is_the_period() {
        let m = DispersionModel::builtin("planes4").unwrap();
        let r = asymptotic_direction_4d(&m, &[0.0, 1.0, 0.0, 0.0], &[0.61, 0.0, 0.37, 0.2236], 0.2, &params(), 4, Exec::Sequential).unwrap();
        assert!(r.period_angle < 1e-6, "{r:?}");
        assert!(r.persistent);
    }
}
