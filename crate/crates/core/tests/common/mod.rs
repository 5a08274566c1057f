#![allow(dead_code)]

use novikov_atlas::dispersion::DispersionModel;
use novikov_atlas::geometry::{directed_hausdorff, SegmentIndex, P2};
use novikov_atlas::section::PlaneSection;
use novikov_atlas::tracer::{marching_squares, Limits, TraceParams, Tracer, Trajectory};
use novikov_atlas::Error;
use rand::Rng;

pub fn model(name: &str) -> DispersionModel {
    DispersionModel::builtin(name).unwrap()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 0.05 && n2 <= 1.0 {
            return unit(&v);
        }
    }
}

/// Runs of `line` inside `w`, each kept as its own polyline.
fn clip(line: &[P2], w: [f64; 4]) -> Vec<Vec<P2>> {
    let inside = |p: &P2| p[0] >= w[0] && p[0] <= w[1] && p[1] >= w[2] && p[1] <= w[3];
    let mut out = Vec::new();
    let mut run = Vec::new();
    for p in line {
        if inside(p) {
            run.push(*p);
        } else if !run.is_empty() {
            out.push(std::mem::take(&mut run));
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
    out
}

/// Every level line through seeds of the window, traced both ways until it
/// closes or leaves a disc three windows wide.
pub fn trace_window(model: &DispersionModel, section: &PlaneSection, c: f64, w: [f64; 4]) -> Vec<Trajectory> {
    let span = (w[1] - w[0]).max(w[3] - w[2]);
    let tr = Tracer::new(model, section, TraceParams::default());
    let limits = Limits::new(200.0 * span, 1.5 * span);
    let mut seen = SegmentIndex::new(0.5);
    let mut out = Vec::new();
    for s in tr.seeds(c, w, 64) {
        if seen.nearest_within(s, 1e-3).is_some() {
            continue;
        }
        for o in [1, -1] {
            let t = match tr.trace(c, s, o, limits) {
                Ok(t) => t,
                Err(Error::StagnantStep { partial }) => *partial,
                Err(_) => continue,
            };
            seen.insert_polyline(&t.vertices);
            let closed = t.is_closed();
            if closed {
                seen.insert(t.last(), t.first());
            }
            out.push(t);
            if closed {
                break;
            }
        }
    }
    out
}

/// Symmetric Hausdorff distance between the traced level set and the
/// marching-squares isolines over window `w` at grid size `h`.
pub fn oracle_distance(model: &DispersionModel, section: &PlaneSection, c: f64, w: [f64; 4], h: f64) -> f64 {
    let ms = marching_squares(model, section, c, w, h);
    let traced = trace_window(model, section, c, w);
    if ms.is_empty() || traced.is_empty() {
        return if ms.is_empty() && traced.iter().all(|t| clip(&t.vertices, w).is_empty()) { 0.0 } else { f64::INFINITY };
    }
    let mut full: Vec<Vec<P2>> = traced.iter().map(|t| t.vertices.clone()).collect();
    for (t, line) in traced.iter().zip(full.iter_mut()) {
        if t.is_closed() {
            line.push(t.first());
        }
    }
    let clipped: Vec<Vec<P2>> = full.iter().flat_map(|l| clip(l, w)).collect();
    let cap = 1.0;
    let ms_index = SegmentIndex::from_polylines(ms.iter().map(|l| l.as_slice()), cap);
    let tr_index = SegmentIndex::from_polylines(full.iter().map(|l| l.as_slice()), cap);
    directed_hausdorff(&clipped, &ms_index, cap).max(directed_hausdorff(&ms, &tr_index, cap))
}
