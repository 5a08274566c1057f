//! Tabular, JSON and SVG output, checksums and configuration digests.
//!
//! Record tables are tab-separated with a `#`-prefixed header block whose
//! first line carries the schema version; the last header line names the
//! columns in order.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::TrajectoryClass;
use crate::error::Result;
use crate::geometry::{strip_extent, tls_fit, P2};
use crate::scanner::{AngularDiagram, DirectionRecord, EnergyInterval, Status};
use crate::section::PlaneSection;
use crate::tracer::Trajectory;

pub const SCHEMA_VERSION: u32 = 1;

pub const RECORD_COLUMNS: [&str; 16] = [
    "depth", "i", "j", "leaf", "bx", "by", "bz", "class", "level", "status", "tag", "label", "width", "orbit_type",
    "interval", "area",
];

/// SHA-256 of the canonical JSON form (object keys sorted) of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("configuration serializes");
    sha256_hex(v.to_string().as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn format_label(m: &[i64]) -> String {
    let parts: Vec<String> = m.iter().map(i64::to_string).collect();
    format!("({})", parts.join(","))
}

fn record_row(r: &DirectionRecord) -> String {
    [
        r.cell.depth.to_string(),
        r.cell.i.to_string(),
        r.cell.j.to_string(),
        u8::from(r.leaf).to_string(),
        format!("{:.12}", r.direction[0]),
        format!("{:.12}", r.direction[1]),
        format!("{:.12}", r.direction[2]),
        format!("{:?}", r.class).to_uppercase(),
        format!("{:.9}", r.level),
        r.status.as_str().to_string(),
        opt(r.tag.map(|t| t.as_str())),
        opt(r.label.as_deref().map(format_label)),
        opt(r.width.map(|w| format!("{w:.6}"))),
        opt(r.orbit_type.map(|t| t.as_str())),
        opt(r.interval.map(|(a, b)| format!("[{a:.6},{b:.6}]"))),
        format!("{:.9e}", r.area),
    ]
    .join("\t")
}

pub fn write_records_tsv<W: Write>(mut w: W, diagram: &AngularDiagram) -> Result<()> {
    writeln!(w, "# novikov-atlas direction records v{SCHEMA_VERSION}")?;
    writeln!(w, "# model {}", diagram.model)?;
    writeln!(w, "# resolution {} refine {}", diagram.resolution, diagram.refine)?;
    writeln!(w, "# {}", RECORD_COLUMNS.join("\t"))?;
    for r in &diagram.records {
        writeln!(w, "{}", record_row(r))?;
    }
    Ok(())
}

pub fn write_interval_tsv<W: Write>(mut w: W, direction: &[Vec<f64>], iv: &EnergyInterval) -> Result<()> {
    writeln!(w, "# novikov-atlas energy interval v{SCHEMA_VERSION}")?;
    for (k, d) in direction.iter().enumerate() {
        let parts: Vec<String> = d.iter().map(|x| format!("{x:.12}")).collect();
        writeln!(w, "# direction{} {}", k, parts.join(" "))?;
    }
    writeln!(w, "# lo\thi\tdegenerate\tresolved\tcontiguous\tstable_lo\tstable_hi\ttol")?;
    writeln!(
        w,
        "{:.9}\t{:.9}\t{}\t{}\t{}\t{}\t{}\t{}",
        iv.lo,
        iv.hi,
        iv.degenerate,
        iv.resolved,
        iv.contiguous,
        opt(iv.stable.map(|s| format!("{:.9}", s.0))),
        opt(iv.stable.map(|s| format!("{:.9}", s.1))),
        iv.tol
    )?;
    writeln!(w, "# probes: level\tstatus")?;
    let mut probes = iv.probes.clone();
    probes.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (c, s) in probes {
        writeln!(w, "# {c:.9}\t{}", s.as_str())?;
    }
    Ok(())
}

/// Vertices as `i x y p1 … pN`, with `p` the embedding in momentum space.
pub fn write_trajectory<W: Write>(
    mut w: W,
    traj: &Trajectory,
    section: &PlaneSection,
    class: Option<&TrajectoryClass>,
) -> Result<()> {
    writeln!(w, "# novikov-atlas trajectory v{SCHEMA_VERSION}")?;
    writeln!(w, "# level {:.12}", traj.level)?;
    writeln!(w, "# termination {}", traj.termination.as_str())?;
    writeln!(w, "# arc_length {:.9}", traj.arc_length())?;
    writeln!(w, "# closure_residual {:e}", traj.closure_residual)?;
    if let Some(c) = class {
        writeln!(w, "# tag {}", c.tag.as_str())?;
        if let Some(m) = &c.label {
            writeln!(w, "# label {}", format_label(m))?;
        }
        if let Some(t) = c.orbit_type {
            writeln!(w, "# orbit_type {}", t.as_str())?;
        }
        if let (Some(e), Some(wd)) = (c.extent, c.width) {
            writeln!(w, "# extent {e:.6} width {wd:.6}")?;
        }
        if let Some(m) = &c.metrics {
            writeln!(w, "# chaos_hint {} last_decade_angle {:.6}", m.hint.as_str(), m.last_decade_angle)?;
        }
    }
    let cols: Vec<String> = (1..=section.dim()).map(|k| format!("p{k}")).collect();
    writeln!(w, "# i\tx\ty\t{}", cols.join("\t"))?;
    for (i, z) in traj.vertices.iter().enumerate() {
        let p = section.embed(z[0], z[1]);
        let ps: Vec<String> = p.iter().map(|x| format!("{x:.12}")).collect();
        writeln!(w, "{i}\t{:.12}\t{:.12}\t{}", z[0], z[1], ps.join("\t"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub complete: bool,
    pub files: Vec<ManifestEntry>,
}

/// Manifest over the existing `files` (relative to `dir`), written as
/// `manifest.json`.
pub fn write_manifest(dir: &Path, config_hash: &str, times: (&str, &str), complete: bool, files: &[&str]) -> Result<Manifest> {
    let mut entries = Vec::new();
    for f in files {
        let p = dir.join(f);
        if p.exists() {
            entries.push(ManifestEntry {
                file: (*f).to_string(),
                sha256: sha256_file(&p)?,
            });
        }
    }
    let m = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash.to_string(),
        started: times.0.to_string(),
        finished: times.1.to_string(),
        complete,
        files: entries,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(m)
}

/// Files whose checksum no longer matches the manifest.
pub fn verify_manifest(dir: &Path, manifest: &Manifest) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for e in &manifest.files {
        let p = dir.join(&e.file);
        if !p.exists() || sha256_file(&p)? != e.sha256 {
            bad.push(e.file.clone());
        }
    }
    Ok(bad)
}

fn label_colour(m: &[i64]) -> String {
    let h = sha256_hex(format_label(m).as_bytes());
    let hue = u32::from_str_radix(&h[..4], 16).unwrap_or(0) % 360;
    format!("hsl({hue},65%,55%)")
}

fn status_colour(r: &DirectionRecord) -> String {
    match r.status {
        Status::Zone => r.label.as_deref().map_or_else(|| "#888".into(), label_colour),
        Status::Gap => "#000".into(),
        Status::BoundarySuspect => "#444".into(),
        Status::Unresolved => "#999".into(),
        Status::ClosedOnly => "#f4f4f4".into(),
    }
}

/// Stereographic image from the south pole, radius `r` for the equator.
fn stereo(d: [f64; 3], r: f64, c: f64) -> (f64, f64) {
    let s = 1.0 + d[2];
    (c + r * d[0] / s, c - r * d[1] / s)
}

/// Upper-hemisphere zone map; antipodal symmetry makes it complete.
pub fn zone_map_svg(diagram: &AngularDiagram) -> String {
    let (size, r) = (640.0, 280.0);
    let c = 300.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} 600">"#, size + 260.0, size, size + 260.0);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for rec in diagram.leaves() {
        let res = diagram.resolution;
        let (cu, cv) = rec.cell.center(res);
        let h = rec.cell.size(res) / 2.0;
        let centre = crate::scanner::octa_direction(cu, cv);
        if centre[2] < 0.0 {
            continue;
        }
        let pts: Vec<String> = [(-h, -h), (h, -h), (h, h), (-h, h)]
            .iter()
            .map(|(du, dv)| {
                let (x, y) = stereo(crate::scanner::octa_direction(cu + du, cv + dv), r, c);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let col = status_colour(rec);
        let _ = writeln!(s, r#"<polygon points="{}" fill="{col}" stroke="{col}" stroke-width="0.3"/>"#, pts.join(" "));
    }
    let _ = writeln!(s, r##"<circle cx="{c}" cy="{c}" r="{r}" fill="none" stroke="#333" stroke-width="1"/>"##);
    let mut y = 30.0;
    let legend_x = size - 20.0;
    let fixed = [("gap", "#000"), ("boundary suspect", "#444"), ("unresolved", "#999"), ("closed only", "#f4f4f4")];
    for z in diagram.zones.iter().take(24) {
        let _ = writeln!(
            s,
            r##"<rect x="{legend_x}" y="{}" width="14" height="14" fill="{}" stroke="#333"/><text x="{}" y="{}" font-size="12">{} {:.4}</text>"##,
            y - 11.0,
            label_colour(&z.label),
            legend_x + 20.0,
            y,
            format_label(&z.label),
            z.area_fraction
        );
        y += 18.0;
    }
    for (name, col) in fixed {
        let _ = writeln!(
            s,
            r##"<rect x="{legend_x}" y="{}" width="14" height="14" fill="{col}" stroke="#333"/><text x="{}" y="{y}" font-size="12">{name}</text>"##,
            y - 11.0,
            legend_x + 20.0
        );
        y += 18.0;
    }
    s.push_str("</svg>\n");
    s
}

/// Trajectory in plane coordinates with its fitted strip, if open.
pub fn trajectory_svg(traj: &Trajectory) -> String {
    let pts = &traj.vertices;
    let [x0, x1, y0, y1] = traj.bbox;
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let (size, pad) = (600.0, 20.0);
    let k = (size - 2.0 * pad) / span;
    let map = |p: P2| (pad + (p[0] - x0) * k, size - pad - (p[1] - y0) * k);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !traj.is_closed() && pts.len() > 2 {
        let (cen, d) = tls_fit(pts);
        let (_, w) = strip_extent(pts, d);
        let nrm = [-d[1], d[0]];
        let proj: Vec<f64> = pts.iter().map(|p| (p[0] - cen[0]) * nrm[0] + (p[1] - cen[1]) * nrm[1]).collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = lo + w;
        let along: Vec<f64> = pts.iter().map(|p| (p[0] - cen[0]) * d[0] + (p[1] - cen[1]) * d[1]).collect();
        let a0 = along.iter().copied().fold(f64::INFINITY, f64::min);
        let a1 = along.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for off in [lo, hi] {
            let p = map([cen[0] + a0 * d[0] + off * nrm[0], cen[1] + a0 * d[1] + off * nrm[1]]);
            let q = map([cen[0] + a1 * d[0] + off * nrm[0], cen[1] + a1 * d[1] + off * nrm[1]]);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c33" stroke-dasharray="6 4"/>"##,
                p.0, p.1, q.0, q.1
            );
        }
    }
    let step = (pts.len() / 20000).max(1);
    let line: Vec<String> = pts
        .iter()
        .step_by(step)
        .map(|&p| {
            let (x, y) = map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#125" stroke-width="0.8"/>"##, line.join(" "));
    s.push_str("</svg>\n");
    s
}
