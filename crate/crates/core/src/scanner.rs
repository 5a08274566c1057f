//! Parameter-space searches: open-trajectory existence, energy intervals,
//! and the sweep of the direction sphere into stability zones.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, classify_trajectory, OrbitType, Tag, Thresholds};
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::geometry::{SegmentIndex, P2};
use crate::homology::PeriodicUnionFind;
use crate::io;
use crate::lattice::{self, DirectionKind, Lattice};
use crate::linalg::{self, cross3, dot, norm};
use crate::par::Exec;
use crate::section::{PlaneDirection, PlaneSection, RestrictedFunction};
use crate::tracer::{Limits, Termination, TraceParams, Tracer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    /// Plane shifts sampled per level.
    pub shifts: usize,
    /// Escape radius counted as open, in lattice periods.
    pub d_open: f64,
    pub seed_grid: usize,
    /// Trace budget per open-existence probe.
    pub max_traces: usize,
    pub tol_eps: f64,
    pub coarse_levels: usize,
    pub percolation_grid: usize,
    /// Shifts tried by the fixed-level direction probe.
    pub probe_shifts: usize,
    /// Arc budget of the direction probe, in units of `l_reg`.
    pub probe_arc_factor: f64,
    pub stable_samples: usize,
    pub stable_angle: f64,
    pub stable_energy: f64,
    pub seed: u64,
    pub trace: TraceParams,
    pub thresholds: Thresholds,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            shifts: 32,
            d_open: 20.0,
            seed_grid: 24,
            max_traces: 400,
            tol_eps: 0.02,
            coarse_levels: 33,
            percolation_grid: 64,
            probe_shifts: 2,
            probe_arc_factor: 4.0,
            stable_samples: 8,
            stable_angle: 1e-3,
            stable_energy: 1e-2,
            seed: 0x5eed,
            trace: TraceParams::default(),
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OpenStatus {
    Open,
    ClosedOnly,
    Unresolved,
}

impl OpenStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OpenStatus::Open => "OPEN",
            OpenStatus::ClosedOnly => "CLOSED_ONLY",
            OpenStatus::Unresolved => "UNRESOLVED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenVerdict {
    pub status: OpenStatus,
    /// Plane shift and seed of the escaping trajectory.
    pub shift: Option<Vec<f64>>,
    pub seed: Option<P2>,
    pub extent: f64,
    pub traces: usize,
    /// Whether the verdict came from the percolation test on the plane torus.
    pub percolation: bool,
}

/// `R_N` low-discrepancy points of the fundamental domain, offset by a
/// seeded random vector.
pub fn shift_samples(lattice: &Lattice, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = lattice.dim();
    // root of x^(n+1) = x + 1
    let mut phi: f64 = 2.0;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (n as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=n).map(|i| phi.powi(-(i as i32))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    (0..k)
        .map(|j| {
            let u: Vec<f64> = (0..n).map(|i| (offset[i] + j as f64 * alpha[i]).fract()).collect();
            let mut p = vec![0.0; n];
            for (a, ui) in lattice.reciprocal().iter().zip(&u) {
                p.iter_mut().zip(a).for_each(|(pi, ai)| *pi += ui * ai);
            }
            p
        })
        .collect()
}

/// Levels at which the sublevel and superlevel sets of `f` on the torus
/// spanned by `t1, t2` first and last contain a non-contractible loop.
pub fn percolation_levels(f: &RestrictedFunction, t1: P2, t2: P2, g: usize) -> (f64, f64) {
    let n = g * g;
    let vals: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = ((k % g) as f64 / g as f64, (k / g) as f64 / g as f64);
            f.value(a * t1[0] + b * t2[0], a * t1[1] + b * t2[1])
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let sweep = |order: &mut dyn Iterator<Item = &usize>| -> f64 {
        let mut uf = PeriodicUnionFind::new(n);
        let mut on = vec![false; n];
        for &k in order {
            on[k] = true;
            let (i, j) = (k % g, k / g);
            let nbs = [
                ((i + 1) % g, j, [i32::from(i + 1 == g), 0]),
                ((i + g - 1) % g, j, [-i32::from(i == 0), 0]),
                (i, (j + 1) % g, [0, i32::from(j + 1 == g)]),
                (i, (j + g - 1) % g, [0, -i32::from(j == 0)]),
            ];
            for (a, b, w) in nbs {
                let m = b * g + a;
                if on[m] && uf.union(k, m, [w[0], w[1], 0, 0]).is_some() {
                    return vals[k];
                }
            }
        }
        f64::NAN
    };
    let lo = sweep(&mut order.iter());
    let hi = sweep(&mut order.iter().rev());
    (lo, hi)
}

/// Per-direction state reused across levels.
pub struct DirectionContext<'a> {
    model: &'a DispersionModel,
    base: PlaneSection,
    shifts: Vec<Vec<f64>>,
    /// Open-level range of a rational plane family, from percolation.
    rational: Option<(f64, f64)>,
    params: &'a ScanParams,
}

impl<'a> DirectionContext<'a> {
    pub fn new(model: &'a DispersionModel, direction: &PlaneDirection, params: &'a ScanParams) -> Result<Self> {
        let lat = model.lattice();
        let base = PlaneSection::build(direction, &vec![0.0; lat.dim()], lat)?;
        let shifts = shift_samples(lat, params.shifts, params.seed);
        let mut ctx = Self {
            model,
            base,
            shifts,
            rational: None,
            params,
        };
        ctx.rational = ctx.rational_open_range();
        Ok(ctx)
    }

    pub fn section(&self) -> &PlaneSection {
        &self.base
    }

    pub fn rational_range(&self) -> Option<(f64, f64)> {
        self.rational
    }

    fn rational_open_range(&self) -> Option<(f64, f64)> {
        let b = self.base.field_direction()?;
        if self.base.dim() != 3 {
            return None;
        }
        let class = self.base.direction_class();
        if class.kind != DirectionKind::Rational {
            return None;
        }
        let w = class.witness.clone()?;
        let [n1, n2] = lattice::orthogonal_sublattice_basis(&w)?;
        let lat = self.base.lattice();
        let t1 = self.base.project_vector(&lat.reciprocal_combination(&n1));
        let t2 = self.base.project_vector(&lat.reciprocal_combination(&n2));
        let p = lat.period_length();
        let scale = (t1[0].hypot(t1[1]).max(t2[0].hypot(t2[1])) / p).max(1.0);
        let g = ((self.params.percolation_grid as f64 * scale) as usize).clamp(16, 512);
        // plane family along B̂ has period 2π/|l_w|
        let lw = norm(&lat.direct_combination(&w));
        let period = 2.0 * PI / lw;
        let levels_at = |t: f64| {
            let shift = linalg::scale(b, t);
            let f = RestrictedFunction::new(self.model, &self.base.with_shift(&shift));
            percolation_levels(&f, t1, t2, g)
        };
        let k = self.params.shifts.max(4);
        let ts: Vec<f64> = (0..k).map(|i| period * i as f64 / k as f64).collect();
        let samples: Vec<(f64, f64)> = ts.iter().map(|&t| levels_at(t)).collect();
        let refine = |pick: &dyn Fn((f64, f64)) -> f64, sign: f64| -> f64 {
            let (best, _) = samples
                .iter()
                .enumerate()
                .map(|(i, s)| (i, sign * pick(*s)))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            let (mut a, mut bnd) = (ts[best] - period / k as f64, ts[best] + period / k as f64);
            let mut top = sign * pick(samples[best]);
            for _ in 0..24 {
                let m1 = a + (bnd - a) / 3.0;
                let m2 = bnd - (bnd - a) / 3.0;
                let (v1, v2) = (sign * pick(levels_at(m1)), sign * pick(levels_at(m2)));
                top = top.max(v1).max(v2);
                if v1 >= v2 {
                    bnd = m2;
                } else {
                    a = m1;
                }
            }
            sign * top
        };
        let lo = refine(&|s| s.0, -1.0);
        let hi = refine(&|s| s.1, 1.0);
        Some((lo, hi))
    }

    /// Whether open trajectories exist at level `c` in some sampled plane.
    pub fn open_at(&self, c: f64) -> OpenVerdict {
        if let Some((lo, hi)) = self.rational {
            let open = c >= lo && c <= hi;
            return OpenVerdict {
                status: if open { OpenStatus::Open } else { OpenStatus::ClosedOnly },
                shift: None,
                seed: None,
                extent: if open { f64::INFINITY } else { 0.0 },
                traces: 0,
                percolation: true,
            };
        }
        let p = self.base.lattice().period_length();
        let win = [-p, p, -p, p];
        let limits = Limits::new(100.0 * self.params.d_open * p, self.params.d_open * p);
        let mut traces = 0;
        let mut unresolved = false;
        let mut max_extent: f64 = 0.0;
        'shifts: for shift in &self.shifts {
            let sec = self.base.with_shift(shift);
            let tr = Tracer::new(self.model, &sec, self.params.trace);
            let mut seen = SegmentIndex::new(0.5);
            for s in tr.seeds(c, win, self.params.seed_grid) {
                if seen.nearest_within(s, 1e-3).is_some() {
                    continue;
                }
                if traces >= self.params.max_traces {
                    unresolved = true;
                    break 'shifts;
                }
                traces += 1;
                let mut escaped = None;
                let mut bounded = true;
                for orientation in [1i8, -1] {
                    match tr.trace(c, s, orientation, limits) {
                        Ok(t) => {
                            max_extent = max_extent.max(t.max_excursion());
                            seen.insert_polyline(&t.vertices);
                            match t.termination {
                                Termination::Closed => {
                                    seen.insert(t.last(), t.first());
                                    break;
                                }
                                Termination::LeftWindow => {
                                    escaped = Some(t.max_excursion());
                                    break;
                                }
                                Termination::MaxLength => {
                                    bounded = false;
                                    break;
                                }
                                // a separatrix piece: follow the other end
                                Termination::SaddleProximity => {}
                            }
                        }
                        Err(Error::StagnantStep { partial }) => {
                            seen.insert_polyline(&partial.vertices);
                            bounded = false;
                            break;
                        }
                        Err(_) => {
                            bounded = false;
                            break;
                        }
                    }
                }
                if let Some(e) = escaped {
                    return OpenVerdict {
                        status: OpenStatus::Open,
                        shift: Some(shift.clone()),
                        seed: Some(s),
                        extent: e,
                        traces,
                        percolation: false,
                    };
                }
                if !bounded {
                    unresolved = true;
                }
            }
        }
        OpenVerdict {
            status: if unresolved { OpenStatus::Unresolved } else { OpenStatus::ClosedOnly },
            shift: None,
            seed: None,
            extent: max_extent,
            traces,
            percolation: false,
        }
    }
}

pub fn open_exists(model: &DispersionModel, direction: &PlaneDirection, c: f64, params: &ScanParams) -> Result<OpenVerdict> {
    Ok(DirectionContext::new(model, direction, params)?.open_at(c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyInterval {
    pub lo: f64,
    pub hi: f64,
    pub degenerate: bool,
    /// Stable sub-interval `(ε̃₁, ε̃₂)` from perturbation sampling.
    pub stable: Option<(f64, f64)>,
    pub tol: f64,
    /// False when no probed level was open; the interval is then a point.
    pub resolved: bool,
    /// No CLOSED_ONLY probe lies strictly between two OPEN probes.
    pub contiguous: bool,
    pub probes: Vec<(f64, OpenStatus)>,
}

impl EnergyInterval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

fn contiguous(probes: &[(f64, OpenStatus)]) -> bool {
    let mut sorted = probes.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first = sorted.iter().position(|p| p.1 == OpenStatus::Open);
    let last = sorted.iter().rposition(|p| p.1 == OpenStatus::Open);
    match (first, last) {
        (Some(a), Some(b)) => sorted[a..=b].iter().all(|p| p.1 != OpenStatus::ClosedOnly),
        _ => true,
    }
}

/// Interval of levels carrying open trajectories for one plane direction:
/// a coarse scan, then bisection of both endpoints to `tol_eps`.
pub fn energy_interval(
    model: &DispersionModel,
    direction: &PlaneDirection,
    params: &ScanParams,
    exec: Exec,
    estimate_stable: bool,
) -> Result<EnergyInterval> {
    let ctx = DirectionContext::new(model, direction, params)?;
    let (emin, emax) = model.value_range(32);
    let k = params.coarse_levels.max(3);
    let levels: Vec<f64> = (0..k).map(|i| emin + (i + 1) as f64 * (emax - emin) / (k + 1) as f64).collect();
    let verdicts = exec.map(&levels, |&c| ctx.open_at(c).status);
    let mut probes: Vec<(f64, OpenStatus)> = levels.iter().copied().zip(verdicts.iter().copied()).collect();
    let open: Vec<usize> = (0..k).filter(|&i| verdicts[i] == OpenStatus::Open).collect();
    let tol = params.tol_eps;
    if open.is_empty() {
        let best = (0..k)
            .filter(|&i| verdicts[i] == OpenStatus::Unresolved)
            .min_by(|&a, &b| (levels[a] - (emin + emax) / 2.0).abs().total_cmp(&(levels[b] - (emin + emax) / 2.0).abs()))
            .map_or((emin + emax) / 2.0, |i| levels[i]);
        return Ok(EnergyInterval {
            lo: best,
            hi: best,
            degenerate: true,
            stable: None,
            tol,
            resolved: false,
            contiguous: true,
            probes,
        });
    }
    let (first, last) = (open[0], *open.last().unwrap());
    let bisect = |mut outside: f64, mut inside: f64, probes: &mut Vec<(f64, OpenStatus)>| {
        while (inside - outside).abs() > tol {
            let mid = 0.5 * (inside + outside);
            let st = ctx.open_at(mid).status;
            probes.push((mid, st));
            if st == OpenStatus::Open {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    let lo_out = if first == 0 { emin } else { levels[first - 1] };
    let hi_out = if last + 1 == k { emax } else { levels[last + 1] };
    let lo = bisect(lo_out, levels[first], &mut probes);
    let hi = bisect(hi_out, levels[last], &mut probes);
    let mut interval = EnergyInterval {
        lo,
        hi,
        degenerate: hi - lo <= tol,
        stable: None,
        tol,
        resolved: true,
        contiguous: contiguous(&probes),
        probes,
    };
    if estimate_stable {
        interval.stable = stable_subinterval(model, &ctx, &interval, exec);
    }
    Ok(interval)
}

/// Levels of the interval at which the regular label survives all sampled
/// perturbations of the direction and level; clamped into `[lo, hi]`.
fn stable_subinterval(model: &DispersionModel, ctx: &DirectionContext, iv: &EnergyInterval, exec: Exec) -> Option<(f64, f64)> {
    let b = ctx.base.field_direction()?.to_vec();
    let params = ctx.params;
    let levels: Vec<f64> = iv
        .probes
        .iter()
        .filter(|p| p.1 == OpenStatus::Open && p.0 >= iv.lo && p.0 <= iv.hi)
        .map(|p| p.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x57ab);
    let perturb: Vec<(Vec<f64>, f64)> = (0..params.stable_samples)
        .map(|_| {
            let r: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = linalg::orthonormalize_against(&r, &[b.clone()]).unwrap_or_else(|| vec![0.0; 3]);
            let dir = linalg::axpy(&b, params.stable_angle, &t);
            (dir, rng.gen_range(-params.stable_energy..params.stable_energy))
        })
        .collect();
    let stable = exec.map(&levels, |&c| {
        let base = probe_direction(model, &b, c, params).ok()?;
        let m = base.label?;
        for (dir, dc) in &perturb {
            let p = probe_direction(model, dir, c + dc, params).ok()?;
            if p.label.as_ref() != Some(&m) {
                return None;
            }
        }
        Some(c)
    });
    let s: Vec<f64> = stable.into_iter().flatten().collect();
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo <= hi).then(|| (lo.max(iv.lo), hi.min(iv.hi)))
}

/// Level interval for a plane direction `ξ` in `N ≥ 4`, with shifts sampled
/// over the fundamental domain.
pub fn level_interval(model: &DispersionModel, u: &[f64], v: &[f64], params: &ScanParams, exec: Exec) -> Result<EnergyInterval> {
    energy_interval(model, &PlaneDirection::Grassmann(u.to_vec(), v.to_vec()), params, exec, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Zone,
    Gap,
    BoundarySuspect,
    Unresolved,
    ClosedOnly,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Zone => "ZONE",
            Status::Gap => "GAP",
            Status::BoundarySuspect => "BOUNDARY_SUSPECT",
            Status::Unresolved => "UNRESOLVED",
            Status::ClosedOnly => "CLOSED_ONLY",
        }
    }

    /// Counted in the gap fraction.
    pub fn is_gap_like(self) -> bool {
        matches!(self, Status::Gap | Status::BoundarySuspect | Status::Unresolved)
    }
}

/// Result of classifying one direction at a fixed level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub status: Status,
    pub tag: Option<Tag>,
    pub label: Option<Vec<i64>>,
    pub width: Option<f64>,
    pub extent: Option<f64>,
    pub orbit_type: Option<OrbitType>,
    pub closed: usize,
    pub chaos_angle: Option<f64>,
}

/// Classify the trajectories of direction `b` at level `c`: the first open
/// trajectory found decides (regular → ZONE, chaotic → GAP); if every seed
/// closes the direction is CLOSED_ONLY.
pub fn probe_direction(model: &DispersionModel, b: &[f64], c: f64, params: &ScanParams) -> Result<Probe> {
    let lat = model.lattice();
    let p = lat.period_length();
    let th = &params.thresholds;
    let base = PlaneSection::field(b, &vec![0.0; lat.dim()], lat)?;
    base.set_direction_class(lattice::DirectionClass {
        kind: DirectionKind::Generic,
        witness: None,
        bound: 0,
        tol: 0.0,
    });
    let shifts = shift_samples(lat, params.probe_shifts.max(1), params.seed);
    let limits = Limits::new(params.probe_arc_factor * th.l_reg * p, 1.05 * th.l_reg * p);
    let win = [-p, p, -p, p];
    let mut out = Probe {
        status: Status::ClosedOnly,
        tag: None,
        label: None,
        width: None,
        extent: None,
        orbit_type: None,
        closed: 0,
        chaos_angle: None,
    };
    let mut open_tries = 0;
    for shift in &shifts {
        let sec = base.with_shift(shift);
        let tr = Tracer::new(model, &sec, params.trace);
        let mut seen = SegmentIndex::new(0.5);
        for s in tr.seeds(c, win, params.seed_grid) {
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
                if out.closed == 0 {
                    out.orbit_type = classifier::orbit_type(&t, &sec, model).ok();
                }
                out.closed += 1;
                continue;
            }
            let cls = classify_trajectory(&t, &sec, model, th);
            out.tag = Some(cls.tag);
            out.width = cls.width;
            out.extent = cls.extent;
            out.label = cls.label.clone();
            out.chaos_angle = cls.metrics.as_ref().map(|m| m.last_decade_angle);
            match cls.tag {
                Tag::TopologicallyRegular => {
                    out.status = Status::Zone;
                    return Ok(out);
                }
                Tag::ChaoticCandidate => {
                    out.status = Status::Gap;
                    return Ok(out);
                }
                _ => {
                    out.status = Status::Unresolved;
                    open_tries += 1;
                    if open_tries >= 3 {
                        return Ok(out);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Octahedral chart `[−1, 1]² → S²`.
pub fn octa_direction(u: f64, v: f64) -> [f64; 3] {
    let z = 1.0 - u.abs() - v.abs();
    let (x, y) = if z >= 0.0 {
        (u, v)
    } else {
        ((1.0 - v.abs()) * u.signum(), (1.0 - u.abs()) * v.signum())
    };
    let n = (x * x + y * y + z * z).sqrt();
    [x / n, y / n, z / n]
}

/// Fold a point just outside `[−1, 1]²` back through the edge identification.
pub fn wrap_chart(u: f64, v: f64) -> (f64, f64) {
    if u > 1.0 {
        (2.0 - u, -v)
    } else if u < -1.0 {
        (-2.0 - u, -v)
    } else if v > 1.0 {
        (-u, 2.0 - v)
    } else if v < -1.0 {
        (-u, -2.0 - v)
    } else {
        (u, v)
    }
}

/// Inverse of [`octa_direction`].
pub fn octa_chart(d: &[f64]) -> (f64, f64) {
    let s = d[0].abs() + d[1].abs() + d[2].abs();
    let (x, y, z) = (d[0] / s, d[1] / s, d[2] / s);
    if z >= 0.0 {
        (x, y)
    } else {
        let sx = if x >= 0.0 { 1.0 } else { -1.0 };
        let sy = if y >= 0.0 { 1.0 } else { -1.0 };
        ((1.0 - y.abs()) * sx, (1.0 - x.abs()) * sy)
    }
}

fn solid_angle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let num = dot(&a, &cross3(&b, &c)).abs();
    let den = 1.0 + dot(&a, &b) + dot(&b, &c) + dot(&c, &a);
    2.0 * num.atan2(den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub depth: u8,
    pub j: u32,
    pub i: u32,
}

const SAMPLE_OFFSET: [f64; 2] = [0.118_033_988_7, -0.073_205_080_8];

impl CellId {
    pub fn new(depth: u8, i: u32, j: u32) -> Self {
        Self { depth, j, i }
    }

    pub fn side(self, res: usize) -> u32 {
        (res as u32) << self.depth
    }

    pub fn size(self, res: usize) -> f64 {
        2.0 / f64::from(self.side(res))
    }

    pub fn center(self, res: usize) -> (f64, f64) {
        let h = self.size(res);
        (-1.0 + (f64::from(self.i) + 0.5) * h, -1.0 + (f64::from(self.j) + 0.5) * h)
    }

    pub fn direction(self, res: usize) -> [f64; 3] {
        let (u, v) = self.center(res);
        octa_direction(u, v)
    }

    /// Probe point: the centre moved by a fixed irrational fraction of the
    /// cell, so that no sample lies on the chart diagonals, which are
    /// rational planes (x = ±y and their images) where labels are ambiguous.
    pub fn sample(self, res: usize) -> (f64, f64) {
        let h = self.size(res);
        let (u, v) = self.center(res);
        (u + SAMPLE_OFFSET[0] * h, v + SAMPLE_OFFSET[1] * h)
    }

    pub fn sample_direction(self, res: usize) -> [f64; 3] {
        let (u, v) = self.sample(res);
        octa_direction(u, v)
    }

    pub fn children(self) -> [CellId; 4] {
        let (d, i, j) = (self.depth + 1, 2 * self.i, 2 * self.j);
        [CellId::new(d, i, j), CellId::new(d, i + 1, j), CellId::new(d, i, j + 1), CellId::new(d, i + 1, j + 1)]
    }

    pub fn parent(self) -> Option<CellId> {
        (self.depth > 0).then(|| CellId::new(self.depth - 1, self.i / 2, self.j / 2))
    }

    /// Cell holding the antipodal direction.
    pub fn antipode(self, res: usize) -> CellId {
        let n = self.side(res);
        let (u, v) = self.center(res);
        // (u, v) ↦ (−sgn u·(1−|v|), −sgn v·(1−|u|)) is exact on cell centres
        let up = -u.signum() * (1.0 - v.abs());
        let vp = -v.signum() * (1.0 - u.abs());
        let h = self.size(res);
        let to_idx = |x: f64| (((x + 1.0) / h - 0.5).round() as i64).clamp(0, i64::from(n) - 1) as u32;
        CellId::new(self.depth, to_idx(up), to_idx(vp))
    }

    /// Edge neighbour, with the chart's boundary identifications.
    pub fn neighbor(self, res: usize, di: i32, dj: i32) -> CellId {
        let n = self.side(res) as i64;
        let (mut i, mut j) = (i64::from(self.i) + i64::from(di), i64::from(self.j) + i64::from(dj));
        if i < 0 || i >= n {
            i = i.clamp(0, n - 1);
            j = n - 1 - j;
        } else if j < 0 || j >= n {
            j = j.clamp(0, n - 1);
            i = n - 1 - i;
        }
        CellId::new(self.depth, i as u32, j as u32)
    }

    pub fn solid_angle(self, res: usize) -> f64 {
        let h = self.size(res);
        let (cu, cv) = self.center(res);
        let mut total = 0.0;
        let sub = 2;
        let hs = h / sub as f64;
        for a in 0..sub {
            for b in 0..sub {
                let u0 = cu - h / 2.0 + a as f64 * hs;
                let v0 = cv - h / 2.0 + b as f64 * hs;
                let p00 = octa_direction(u0, v0);
                let p10 = octa_direction(u0 + hs, v0);
                let p11 = octa_direction(u0 + hs, v0 + hs);
                let p01 = octa_direction(u0, v0 + hs);
                total += solid_angle(p00, p10, p11) + solid_angle(p00, p11, p01);
            }
        }
        total
    }

    /// Whether the chart point `(u, v)` lies in this cell.
    pub fn contains(self, res: usize, u: f64, v: f64) -> bool {
        let h = self.size(res);
        let i = ((u + 1.0) / h).floor();
        let j = ((v + 1.0) / h).floor();
        i == f64::from(self.i) && j == f64::from(self.j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelMode {
    /// Classify every direction at one level (Fermi-level diagram).
    Fixed { level: f64 },
    /// Per-direction open interval, classified at its midpoint.
    FullRelation,
    /// Union over energies: the first level (in the given order) at which
    /// the direction is regular decides; chaotic at some level and regular
    /// at none gives GAP.
    Levels { levels: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mode: LevelMode,
    pub resolution: usize,
    pub refine: usize,
    /// Coefficient bound for the per-record direction class.
    pub class_q: i64,
    pub params: ScanParams,
}

impl SweepConfig {
    pub fn fixed(level: f64, resolution: usize, refine: usize) -> Self {
        Self {
            mode: LevelMode::Fixed { level },
            resolution,
            refine,
            class_q: 6,
            params: ScanParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub cell: CellId,
    pub leaf: bool,
    pub direction: [f64; 3],
    pub class: DirectionKind,
    pub level: f64,
    pub interval: Option<(f64, f64)>,
    pub tag: Option<Tag>,
    pub label: Option<Vec<i64>>,
    pub width: Option<f64>,
    pub orbit_type: Option<OrbitType>,
    pub chaos_angle: Option<f64>,
    pub status: Status,
    pub area: f64,
}

impl DirectionRecord {
    fn signature(&self) -> (u8, Option<&Vec<i64>>) {
        match self.status {
            Status::Zone => (0, self.label.as_ref()),
            Status::ClosedOnly => (1, None),
            _ => (2, None),
        }
    }

    fn fill(&mut self, p: Probe) {
        self.status = p.status;
        self.tag = p.tag;
        self.label = p.label;
        self.width = p.width;
        self.orbit_type = p.orbit_type;
        self.chaos_angle = p.chaos_angle;
    }

    fn antipodal_copy(&self, cell: CellId, res: usize) -> Self {
        Self {
            cell,
            direction: [-self.direction[0], -self.direction[1], -self.direction[2]],
            area: cell.solid_angle(res),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityZone {
    pub label: Vec<i64>,
    pub cells: Vec<CellId>,
    pub area_fraction: f64,
    pub boundary: Vec<[f64; 3]>,
    pub witnesses: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularDiagram {
    pub model: String,
    pub mode: LevelMode,
    pub resolution: usize,
    pub refine: usize,
    pub records: Vec<DirectionRecord>,
    pub zones: Vec<StabilityZone>,
    pub gap_directions: Vec<[f64; 3]>,
    /// Gap fraction of the leaves after each refinement depth.
    pub gap_fraction_by_depth: Vec<f64>,
    pub zone_count_by_depth: Vec<usize>,
}

impl AngularDiagram {
    pub fn leaves(&self) -> impl Iterator<Item = &DirectionRecord> {
        self.records.iter().filter(|r| r.leaf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    config_hash: String,
    complete: bool,
    records: Vec<DirectionRecord>,
}

fn write_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(cp)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub enum SweepOutcome {
    Complete(AngularDiagram),
    Interrupted { evaluated: usize },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepControl<'a> {
    pub exec: Exec,
    pub checkpoint: Option<&'a Path>,
    /// Stop after evaluating this many new cells.
    pub stop_after: Option<usize>,
}

/// Digest of the model and sweep configuration guarding checkpoints.
pub fn sweep_hash(model: &DispersionModel, config: &SweepConfig) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model: String,
        config: &'a SweepConfig,
    }
    io::config_hash(&Key {
        model: model.to_coefficient_text(),
        config,
    })
}

fn evaluate_cell(model: &DispersionModel, config: &SweepConfig, cell: CellId) -> DirectionRecord {
    let res = config.resolution;
    let b = cell.sample_direction(res);
    let class = lattice::classify_direction(&b, model.lattice(), config.class_q, lattice::DEFAULT_TOL_DIR).kind;
    let mut rec = DirectionRecord {
        cell,
        leaf: true,
        direction: b,
        class,
        level: f64::NAN,
        interval: None,
        tag: None,
        label: None,
        width: None,
        orbit_type: None,
        chaos_angle: None,
        status: Status::Unresolved,
        area: cell.solid_angle(res),
    };
    let level = match &config.mode {
        LevelMode::Fixed { level } => *level,
        LevelMode::Levels { levels } => {
            let mut best: Option<(f64, Probe)> = None;
            for &c in levels {
                let Ok(p) = probe_direction(model, &b, c, &config.params) else { continue };
                let rank = |s: Status| match s {
                    Status::Zone => 0,
                    Status::Gap => 1,
                    Status::BoundarySuspect | Status::Unresolved => 2,
                    Status::ClosedOnly => 3,
                };
                let better = best.as_ref().is_none_or(|(_, q)| rank(p.status) < rank(q.status));
                let done = p.status == Status::Zone;
                if better {
                    best = Some((c, p));
                }
                if done {
                    break;
                }
            }
            match best {
                Some((c, p)) => {
                    rec.level = c;
                    rec.fill(p);
                }
                None => rec.level = levels.first().copied().unwrap_or(f64::NAN),
            }
            return rec;
        }
        LevelMode::FullRelation => {
            match energy_interval(model, &PlaneDirection::Field(b.to_vec()), &config.params, Exec::Sequential, false) {
                Ok(iv) if iv.resolved && !iv.degenerate => {
                    rec.interval = Some((iv.lo, iv.hi));
                    0.5 * (iv.lo + iv.hi)
                }
                Ok(iv) => {
                    rec.interval = Some((iv.lo, iv.hi));
                    rec.level = iv.lo;
                    rec.status = if iv.resolved { Status::Gap } else { Status::ClosedOnly };
                    return rec;
                }
                Err(_) => return rec,
            }
        }
    };
    rec.level = level;
    if let Ok(p) = probe_direction(model, &b, level, &config.params) {
        rec.fill(p);
    }
    rec
}

struct Grid {
    res: usize,
    recs: BTreeMap<CellId, DirectionRecord>,
    // canonical records as evaluated, before refinement or relabelling
    raw: BTreeMap<CellId, DirectionRecord>,
}

impl Grid {
    /// Leaf containing chart point `(u, v)`.
    fn leaf_at(&self, u: f64, v: f64, max_depth: u8) -> Option<&DirectionRecord> {
        for d in (0..=max_depth).rev() {
            let n = f64::from((self.res as u32) << d);
            let h = 2.0 / n;
            let i = (((u + 1.0) / h).floor()).clamp(0.0, n - 1.0) as u32;
            let j = (((v + 1.0) / h).floor()).clamp(0.0, n - 1.0) as u32;
            if let Some(r) = self.recs.get(&CellId::new(d, i, j)) {
                if r.leaf {
                    return Some(r);
                }
            }
        }
        None
    }

    /// Leaves across each edge of `cell`, probed just outside the edge.
    fn neighbours(&self, cell: CellId, max_depth: u8) -> Vec<&DirectionRecord> {
        let mut out: Vec<&DirectionRecord> = Vec::new();
        let fine = 1u32 << (max_depth - cell.depth);
        let h = cell.size(self.res);
        let eps = 0.25 * h / f64::from(fine);
        let (cu, cv) = cell.center(self.res);
        for (di, dj) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            for k in 0..fine {
                let t = -0.5 + (f64::from(k) + 0.5) / f64::from(fine);
                let u = cu + di * (0.5 * h + eps) + dj * t * h;
                let v = cv + dj * (0.5 * h + eps) + di * t * h;
                let (u, v) = wrap_chart(u, v);
                if let Some(r) = self.leaf_at(u, v, max_depth) {
                    if r.cell != cell && !out.iter().any(|o| o.cell == r.cell) {
                        out.push(r);
                    }
                }
            }
        }
        out
    }

    fn gap_fraction(&self) -> f64 {
        let total: f64 = self.recs.values().filter(|r| r.leaf).map(|r| r.area).sum();
        // folded from +0.0: an empty f64 sum is -0.0
        let gap = self.recs.values().filter(|r| r.leaf && r.status.is_gap_like()).fold(0.0, |a, r| a + r.area);
        if total > 0.0 {
            gap / total
        } else {
            0.0
        }
    }
}

/// Sweep the direction sphere: classify every base cell, then refine cells
/// whose neighbours disagree. Antipodal cells share one evaluation.
pub fn sweep(model: &DispersionModel, config: &SweepConfig, control: SweepControl) -> Result<SweepOutcome> {
    let res = config.resolution.max(2);
    if res % 2 != 0 {
        return Err(Error::ConfigInvalid("sweep resolution must be even".into()));
    }
    let hash = sweep_hash(model, config);
    let mut grid = Grid {
        res,
        recs: BTreeMap::new(),
        raw: BTreeMap::new(),
    };
    if let Some(path) = control.checkpoint {
        if path.exists() {
            let cp: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
            if cp.config_hash != hash {
                return Err(Error::ChecksumMismatch {
                    expected: hash,
                    found: cp.config_hash,
                });
            }
            // replayed through evaluate_cells, so refinement sees what a fresh run sees
            grid.raw = cp.records.into_iter().map(|r| (r.cell, r)).collect();
        }
    }
    let mut evaluated = 0usize;
    let mut gap_by_depth = Vec::new();
    let mut zones_by_depth = Vec::new();
    let base: Vec<CellId> = (0..res as u32)
        .flat_map(|j| (0..res as u32).map(move |i| CellId::new(0, i, j)))
        .collect();
    let mut pending = base;
    for depth in 0..=config.refine {
        if !evaluate_cells(model, config, &control, &hash, &mut grid, &pending, &mut evaluated)? {
            return Ok(SweepOutcome::Interrupted { evaluated });
        }
        gap_by_depth.push(grid.gap_fraction());
        zones_by_depth.push(extract_zones(&grid, depth as u8).len());
        if depth == config.refine {
            break;
        }
        // leaves of this depth with a disagreeing neighbour
        let d = depth as u8;
        let split: Vec<CellId> = grid
            .recs
            .values()
            .filter(|r| r.leaf && r.cell.depth == d)
            .filter(|r| {
                let sig = r.signature();
                grid.neighbours(r.cell, d).iter().any(|n| n.signature() != sig)
            })
            .map(|r| r.cell)
            .collect();
        for c in &split {
            if let Some(r) = grid.recs.get_mut(c) {
                r.leaf = false;
            }
        }
        pending = split.iter().flat_map(|c| c.children()).collect();
    }
    let max_depth = config.refine as u8;
    // non-zone leaves touching a zone
    let suspects: Vec<CellId> = grid
        .recs
        .values()
        .filter(|r| r.leaf && matches!(r.status, Status::Gap | Status::Unresolved))
        .filter(|r| grid.neighbours(r.cell, max_depth).iter().any(|n| n.status == Status::Zone))
        .map(|r| r.cell)
        .collect();
    for c in suspects {
        if let Some(r) = grid.recs.get_mut(&c) {
            r.status = Status::BoundarySuspect;
        }
    }
    let zones = extract_zones(&grid, max_depth);
    // chaotic probes, whether or not they border a zone
    let gap_directions = grid
        .recs
        .values()
        .filter(|r| r.leaf && r.status != Status::Zone && r.tag == Some(Tag::ChaoticCandidate))
        .map(|r| r.direction)
        .collect();
    if let Some(path) = control.checkpoint {
        write_checkpoint(
            path,
            &Checkpoint {
                config_hash: hash.clone(),
                complete: true,
                records: grid.raw.values().cloned().collect(),
            },
        )?;
    }
    Ok(SweepOutcome::Complete(AngularDiagram {
        model: model.name().to_string(),
        mode: config.mode.clone(),
        resolution: res,
        refine: config.refine,
        records: grid.recs.into_values().collect(),
        zones,
        gap_directions,
        gap_fraction_by_depth: gap_by_depth,
        zone_count_by_depth: zones_by_depth,
    }))
}

/// Evaluate the canonical half of `cells` not yet known; returns `false` when
/// the evaluation budget ran out.
fn evaluate_cells(
    model: &DispersionModel,
    config: &SweepConfig,
    control: &SweepControl,
    hash: &str,
    grid: &mut Grid,
    cells: &[CellId],
    evaluated: &mut usize,
) -> Result<bool> {
    let res = grid.res;
    let mut todo: Vec<CellId> = cells
        .iter()
        .copied()
        .filter(|c| *c <= c.antipode(res) && !grid.recs.contains_key(c))
        .collect();
    todo.sort();
    todo.dedup();
    todo.retain(|c| match grid.raw.get(c) {
        Some(r) => {
            grid.recs.insert(*c, r.clone());
            false
        }
        None => true,
    });
    const CHUNK: usize = 256;
    for chunk in todo.chunks(CHUNK) {
        let chunk = match control.stop_after {
            Some(budget) if *evaluated + chunk.len() > budget => &chunk[..budget - *evaluated],
            _ => chunk,
        };
        let recs = control.exec.map(chunk, |&c| evaluate_cell(model, config, c));
        for r in recs {
            let anti = r.cell.antipode(res);
            if anti != r.cell {
                grid.recs.insert(anti, r.antipodal_copy(anti, res));
            }
            grid.raw.insert(r.cell, r.clone());
            grid.recs.insert(r.cell, r);
        }
        *evaluated += chunk.len();
        let stop = control.stop_after.is_some_and(|b| *evaluated >= b);
        if let Some(path) = control.checkpoint {
            write_checkpoint(
                path,
                &Checkpoint {
                    config_hash: hash.to_string(),
                    complete: false,
                    records: grid.raw.values().cloned().collect(),
                },
            )?;
        }
        if stop {
            return Ok(false);
        }
    }
    // copies for antipodes of cells evaluated earlier
    for &c in cells {
        if !grid.recs.contains_key(&c) {
            let anti = c.antipode(res);
            if let Some(r) = grid.recs.get(&anti).cloned() {
                grid.recs.insert(c, r.antipodal_copy(c, res));
            }
        }
    }
    Ok(true)
}

fn extract_zones(grid: &Grid, max_depth: u8) -> Vec<StabilityZone> {
    let leaves: Vec<&DirectionRecord> = grid
        .recs
        .values()
        .filter(|r| r.leaf && r.status == Status::Zone && r.label.is_some())
        .collect();
    let index: HashMap<CellId, usize> = leaves.iter().enumerate().map(|(k, r)| (r.cell, k)).collect();
    let mut parent: Vec<usize> = (0..leaves.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let n = p[c];
            p[c] = r;
            c = n;
        }
        r
    }
    let mut interior = vec![true; leaves.len()];
    let mut boundary = vec![false; leaves.len()];
    for (k, r) in leaves.iter().enumerate() {
        for n in grid.neighbours(r.cell, max_depth) {
            match index.get(&n.cell) {
                Some(&m) if n.label == r.label => {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, m));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                _ => {
                    interior[k] = false;
                    boundary[k] = true;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..leaves.len() {
        let r = find(&mut parent, k);
        groups.entry(r).or_default().push(k);
    }
    let total = 4.0 * PI;
    let mut zones: Vec<StabilityZone> = groups
        .into_values()
        .map(|members| {
            let label = leaves[members[0]].label.clone().unwrap_or_default();
            let area: f64 = members.iter().map(|&k| leaves[k].area).sum();
            StabilityZone {
                label,
                cells: members.iter().map(|&k| leaves[k].cell).collect(),
                area_fraction: area / total,
                boundary: members.iter().filter(|&&k| boundary[k]).map(|&k| leaves[k].direction).collect(),
                witnesses: members.iter().filter(|&&k| interior[k]).map(|&k| leaves[k].direction).collect(),
            }
        })
        .collect();
    zones.sort_by(|a, b| b.area_fraction.total_cmp(&a.area_fraction).then(a.label.cmp(&b.label)));
    zones
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramFeatures {
    /// Zones with at least one interior cell.
    pub zone_count: usize,
    /// Zones too small to hold an interior cell at this resolution.
    pub fragments: usize,
    pub distinct_labels: usize,
    pub zone_areas: Vec<(Vec<i64>, f64)>,
    pub gap_fraction: f64,
    pub gap_fraction_by_depth: Vec<f64>,
    pub closed_fraction: f64,
    /// Both electron and hole orbits occur among all-closed directions.
    pub both_orbit_types: bool,
    /// Rational great circles `⟨B, Σ nᵢaᵢ⟩ = 0` that gap directions crowd.
    pub periodic_arcs: Vec<Vec<i64>>,
    pub type_hint: String,
}

pub fn diagram_features(diagram: &AngularDiagram, lattice: &Lattice) -> DiagramFeatures {
    let total = 4.0 * PI;
    let leaves: Vec<&DirectionRecord> = diagram.leaves().collect();
    let area = |pred: &dyn Fn(&DirectionRecord) -> bool| leaves.iter().filter(|r| pred(r)).fold(0.0, |a, r| a + r.area) / total;
    let gap_fraction = area(&|r| r.status.is_gap_like());
    let closed_fraction = area(&|r| r.status == Status::ClosedOnly);
    let types: BTreeSet<&str> = leaves
        .iter()
        .filter(|r| r.status == Status::ClosedOnly)
        .filter_map(|r| r.orbit_type.map(|t| t.as_str()))
        .collect();
    let labels: BTreeSet<&Vec<i64>> = diagram.zones.iter().map(|z| &z.label).collect();
    // gap crowding near rational great circles
    let gaps: Vec<&[f64; 3]> = leaves.iter().filter(|r| r.status.is_gap_like()).map(|r| &r.direction).collect();
    let band = 2.0 * 2.0 / diagram.resolution as f64;
    let mut arcs = Vec::new();
    if gaps.len() >= 5 {
        for n in linalg::irreducible_vectors(3, 3) {
            let a = lattice.reciprocal_combination(&n);
            let an = norm(&a);
            let near = gaps.iter().filter(|g| (dot(&g[..], &a) / an).abs() <= band.sin()).count();
            let expected = gaps.len() as f64 * band.sin();
            if near >= 5 && near as f64 >= 2.0 * expected {
                arcs.push(n);
            }
        }
    }
    let zone_count = diagram.zones.iter().filter(|z| !z.witnesses.is_empty()).count();
    let type_hint = if diagram.zones.len() == 1 && gap_fraction < 1e-3 {
        format!("A (single zone at resolution {})", diagram.resolution)
    } else if diagram.zones.is_empty() {
        "none (no zones at this level)".to_string()
    } else {
        format!(
            "B-like ({} zones, gap fraction {:.4}; finite resolution {} cannot prove infinitely many zones)",
            zone_count,
            gap_fraction,
            diagram.resolution
        )
    };
    DiagramFeatures {
        zone_count,
        fragments: diagram.zones.len() - zone_count,
        distinct_labels: labels.len(),
        zone_areas: diagram.zones.iter().map(|z| (z.label.clone(), z.area_fraction)).collect(),
        gap_fraction,
        gap_fraction_by_depth: diagram.gap_fraction_by_depth.clone(),
        closed_fraction,
        both_orbit_types: types.len() == 2,
        periodic_arcs: arcs,
        type_hint,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octahedral_chart_round_trip() {
        for &(u, v) in &[(0.1, 0.2), (-0.7, 0.5), (0.9, -0.8), (-0.3, -0.95)] {
            let d = octa_direction(u, v);
            assert!((norm(&d) - 1.0).abs() < 1e-12);
            let (a, b) = octa_chart(&d);
            assert!((a - u).abs() < 1e-12 && (b - v).abs() < 1e-12, "{u} {v} -> {a} {b}");
        }
    }

    #[test]
    fn cells_tile_the_sphere() {
        let res = 16;
        let total: f64 = (0..res as u32)
            .flat_map(|j| (0..res as u32).map(move |i| CellId::new(0, i, j)))
            .map(|c| c.solid_angle(res))
            .sum();
        assert!((total - 4.0 * PI).abs() < 1e-9, "{total}");
        let c = CellId::new(0, 3, 5);
        let kids: f64 = c.children().iter().map(|k| k.solid_angle(res)).sum();
        assert!((kids - c.solid_angle(res)).abs() < 1e-3 * c.solid_angle(res));
    }

    #[test]
    fn antipode_is_an_involution_on_cells() {
        let res = 8;
        for d in 0..3u8 {
            let n = (res as u32) << d;
            for j in 0..n {
                for i in 0..n {
                    let c = CellId::new(d, i, j);
                    let a = c.antipode(res);
                    assert_ne!(a, c);
                    assert_eq!(a.antipode(res), c);
                    let (x, y) = (c.direction(res), a.direction(res));
                    for k in 0..3 {
                        assert!((x[k] + y[k]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn chart_edges_are_identified() {
        let res = 8;
        let c = CellId::new(0, 7, 2);
        let n = c.neighbor(res, 1, 0);
        assert_eq!(n, CellId::new(0, 7, 5));
        // the two cells are mirror images across the fold
        let (a, b) = (c.direction(res), n.direction(res));
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12 && (a[2] - b[2]).abs() < 1e-12);
    }

    #[test]
    fn percolation_of_separable_cosines() {
        let m = DispersionModel::builtin("cos-sum").unwrap();
        let s = PlaneSection::field(&[0.0, 0.0, 1.0], &[0.0, 0.0, 0.7], &Lattice::cubic(3)).unwrap();
        let f = RestrictedFunction::new(&m, &s);
        let t = 2.0 * PI;
        let (lo, hi) = percolation_levels(&f, [t, 0.0], [0.0, t], 64);
        assert!((lo - 0.7f64.cos()).abs() < 1e-9, "{lo}");
        assert!((hi - 0.7f64.cos()).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn contiguity_of_probe_sets() {
        use OpenStatus::*;
        assert!(contiguous(&[(0.0, ClosedOnly), (1.0, Open), (2.0, Unresolved), (3.0, Open)]));
        assert!(!contiguous(&[(0.0, Open), (1.0, ClosedOnly), (2.0, Open)]));
    }

    #[test]
    fn shift_samples_lie_in_the_cell() {
        let l = Lattice::cubic(4);
        let s = shift_samples(&l, 32, 7);
        assert_eq!(s.len(), 32);
        for p in &s {
            assert!(p.iter().all(|&x| (0.0..2.0 * PI).contains(&x)));
        }
        assert_eq!(s, shift_samples(&l, 32, 7));
    }
}
