//! Configuration, dispatch and output files for the `novikov-atlas` command.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use novikov_atlas::classifier::{chaos_metrics, classify_trajectory, Tag};
use novikov_atlas::dispersion::DispersionModel;
use novikov_atlas::io;
use novikov_atlas::lattice::Lattice;
use novikov_atlas::multiquasi::{asymptotic_direction_4d, strip_confinement_check, ConfinementBudget, PartialRationalStructure};
use novikov_atlas::par::{self, Exec};
use novikov_atlas::scanner::{self, diagram_features, LevelMode, ScanParams, SweepConfig, SweepControl, SweepOutcome};
use novikov_atlas::section::{PlaneDirection, PlaneSection};
use novikov_atlas::tracer::{build_separatrix_complex, Limits, Tracer};
use novikov_atlas::Error;

pub const WORKERS_ENV: &str = "NOVIKOV_ATLAS_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid(m) => CliError::Config(m),
            e @ (Error::ChecksumMismatch { .. }
            | Error::Parse { .. }
            | Error::DimensionMismatch { .. }
            | Error::DegenerateDirection(_)
            | Error::SingularBasis { .. }
            | Error::RealityViolation(_)
            | Error::TooManyTerms { .. }) => CliError::Config(e.to_string()),
            e => CliError::Compute(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Compute(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Compute(Error::Json(e))
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Trace,
    Interval,
    Diagram,
    Chaos,
    Nquasi,
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRange {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl LevelRange {
    pub fn levels(&self) -> Vec<f64> {
        if self.n <= 1 {
            return vec![self.lo];
        }
        (0..self.n).map(|k| self.lo + (self.hi - self.lo) * k as f64 / (self.n - 1) as f64).collect()
    }
}

impl std::str::FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected lo:hi:n, got {s}"));
        }
        let f = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x}: {e}"));
        Ok(Self {
            lo: f(parts[0])?,
            hi: f(parts[1])?,
            n: parts[2].trim().parse().map_err(|e| format!("{}: {e}", parts[2]))?,
        })
    }
}

/// Complete description of one run; every threshold lives in `scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Built-in model name, or the display name of a coefficient file.
    pub model: String,
    pub coeffs: Option<PathBuf>,
    /// Direct lattice basis, one vector per line; cubic when absent.
    pub lattice: Option<PathBuf>,
    /// Field direction `B` (`N = 3`).
    pub field: Option<Vec<f64>>,
    /// Plane direction as two spanning vectors (`N ≥ 4`).
    pub xi: Option<[Vec<f64>; 2]>,
    pub level: Option<f64>,
    pub levels: Option<LevelRange>,
    pub shift: Option<Vec<f64>>,
    pub resolution: usize,
    pub refine: usize,
    /// Trace length for `trace` and `chaos`, in lattice periods.
    pub periods: f64,
    /// Estimate the stable sub-interval in `interval` mode.
    pub stable: bool,
    /// Plane shifts sampled in `nquasi` mode.
    pub nquasi_shifts: usize,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub stop_after: Option<usize>,
    pub scan: ScanParams,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            model: "cos-sum".into(),
            coeffs: None,
            lattice: None,
            field: None,
            xi: None,
            level: None,
            levels: None,
            shift: None,
            resolution: 64,
            refine: 0,
            periods: if mode == Mode::Chaos { 1e4 } else { 800.0 },
            stable: false,
            nquasi_shifts: 8,
            workers: None,
            out: PathBuf::from("out"),
            checkpoint: None,
            stop_after: None,
            scan: ScanParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Digest of everything that determines the results; output location,
    /// worker count and stop budget are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.out = PathBuf::new();
        c.checkpoint = None;
        c.stop_after = None;
        io::config_hash(&c)
    }

    pub fn load_model(&self) -> Result<DispersionModel, CliError> {
        let lattice = match &self.lattice {
            Some(p) => Some(read_lattice(p)?),
            None => None,
        };
        match &self.coeffs {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                let dim = coefficient_dim(&text).ok_or_else(|| invalid("coefficient file has no terms"))?;
                let lat = lattice.unwrap_or_else(|| Lattice::cubic(dim));
                Ok(DispersionModel::parse_coefficients(&self.model, lat, &text)?)
            }
            None => {
                let m = DispersionModel::builtin(&self.model).ok_or_else(|| {
                    invalid(format!("unknown model {:?}; built-ins: {}", self.model, DispersionModel::BUILTIN_NAMES.join(", ")))
                })?;
                match lattice {
                    Some(lat) => {
                        let coeffs = m.to_coefficient_text();
                        Ok(DispersionModel::parse_coefficients(&self.model, lat, &coeffs)?)
                    }
                    None => Ok(m),
                }
            }
        }
    }

    pub fn direction(&self, dim: usize) -> Result<PlaneDirection, CliError> {
        match (&self.field, &self.xi) {
            (Some(b), None) if dim == 3 => {
                check_len(b, 3, "--B")?;
                Ok(PlaneDirection::Field(b.clone()))
            }
            (None, Some([u, v])) => {
                check_len(u, dim, "--xi")?;
                check_len(v, dim, "--xi")?;
                Ok(PlaneDirection::Grassmann(u.clone(), v.clone()))
            }
            (Some(_), _) if dim != 3 => Err(invalid(format!("--B needs a 3-dimensional model; use --xi for N = {dim}"))),
            (Some(_), Some(_)) => Err(invalid("give either --B or --xi, not both")),
            _ => Err(invalid("a plane direction (--B or --xi) is required")),
        }
    }

    fn require_level(&self) -> Result<f64, CliError> {
        self.level.ok_or_else(|| invalid("--level is required"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.resolution < 4 || self.resolution % 2 != 0 {
            return Err(invalid("--res must be an even number ≥ 4"));
        }
        if !(self.periods > 0.0) {
            return Err(invalid("--periods must be positive"));
        }
        if self.scan.tol_eps <= 0.0 || self.scan.trace.tol_close <= 0.0 || self.scan.trace.tol_level <= 0.0 {
            return Err(invalid("tolerances must be positive"));
        }
        // TOML integers are signed 64-bit
        if i64::try_from(self.scan.seed).is_err() {
            return Err(invalid("--seed must be below 2^63"));
        }
        if self.workers == Some(0) {
            return Err(invalid("--workers must be positive"));
        }
        if let Some(s) = &self.shift {
            if s.iter().any(|x| !x.is_finite()) {
                return Err(invalid("--shift must be finite"));
            }
        }
        Ok(())
    }
}

fn check_len(v: &[f64], n: usize, flag: &str) -> Result<(), CliError> {
    if v.len() != n {
        return Err(invalid(format!("{flag} expects {n} components, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{flag} must be finite")));
    }
    Ok(())
}

fn coefficient_dim(text: &str) -> Option<usize> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .map(|l| l.split_whitespace().count().saturating_sub(2))
}

fn read_vectors(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| parse_vector(l.replace(char::is_whitespace, ",").as_str()).map_err(invalid))
        .collect()
}

fn read_lattice(path: &Path) -> Result<Lattice, CliError> {
    Ok(Lattice::new(read_vectors(path)?)?)
}

pub fn read_xi(path: &Path) -> Result<[Vec<f64>; 2], CliError> {
    let v = read_vectors(path)?;
    match <[Vec<f64>; 2]>::try_from(v) {
        Ok(xi) => Ok(xi),
        Err(v) => Err(invalid(format!("--xi file must hold two vectors, found {}", v.len()))),
    }
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}")))
        .collect()
}

/// Comma-separated vector argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(pub Vec<f64>);

impl std::str::FromStr for Vector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_vector(s).map(Vector)
    }
}

#[derive(Debug, Parser)]
#[command(name = "novikov-atlas", version, about = "Level lines of quasiperiodic functions and stability-zone diagrams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace and classify one level line.
    Trace(Opts),
    /// Interval of levels carrying open level lines for one direction.
    Interval(Opts),
    /// Stability-zone diagram over the sphere of field directions.
    Diagram(Opts),
    /// Long trace with chaos diagnostics.
    Chaos(Opts),
    /// Strip confinement and asymptotic directions for N ≥ 4.
    Nquasi(Opts),
    /// Topological rank of level surfaces.
    Rank(Opts),
}

impl Command {
    pub fn split(self) -> (Mode, Opts) {
        match self {
            Command::Trace(o) => (Mode::Trace, o),
            Command::Interval(o) => (Mode::Interval, o),
            Command::Diagram(o) => (Mode::Diagram, o),
            Command::Chaos(o) => (Mode::Chaos, o),
            Command::Nquasi(o) => (Mode::Nquasi, o),
            Command::Rank(o) => (Mode::Rank, o),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// Fourier coefficient file: lines `k1 … kN re im`.
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    /// Direct lattice basis file, one vector per line.
    #[arg(long)]
    pub lattice: Option<PathBuf>,
    /// Field direction x,y,z.
    #[arg(long = "B", allow_hyphen_values = true)]
    pub field: Option<Vector>,
    /// File with the two spanning vectors of the plane direction.
    #[arg(long)]
    pub xi: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub level: Option<f64>,
    /// Level range lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    pub levels: Option<LevelRange>,
    #[arg(long, allow_hyphen_values = true)]
    pub shift: Option<Vector>,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub refine: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stop a sweep after this many newly evaluated cells.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Trace length in lattice periods.
    #[arg(long)]
    pub periods: Option<f64>,
    /// Also estimate the stable sub-interval.
    #[arg(long)]
    pub stable: bool,
    #[arg(long)]
    pub shifts: Option<usize>,
    #[arg(long)]
    pub d_open: Option<f64>,
    #[arg(long)]
    pub tol_eps: Option<f64>,
    #[arg(long)]
    pub tol_close: Option<f64>,
    #[arg(long)]
    pub tol_level: Option<f64>,
    #[arg(long)]
    pub tol_label: Option<f64>,
}

/// Merge a configuration file, command-line flags and the worker variable.
pub fn build_config(mode: Mode, opts: Opts, env_workers: Option<&str>) -> Result<RunConfig, CliError> {
    let mut c = match &opts.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            let mut c = RunConfig::from_toml(&text)?;
            c.mode = mode;
            c
        }
        None => RunConfig::new(mode),
    };
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(c.model, opts.model);
    if opts.coeffs.is_some() {
        c.coeffs = opts.coeffs;
    }
    if opts.lattice.is_some() {
        c.lattice = opts.lattice;
    }
    if let Some(Vector(b)) = opts.field {
        c.field = Some(b);
        c.xi = None;
    }
    if let Some(p) = &opts.xi {
        c.xi = Some(read_xi(p)?);
        c.field = None;
    }
    if opts.level.is_some() {
        c.level = opts.level;
    }
    if opts.levels.is_some() {
        c.levels = opts.levels;
    }
    if let Some(Vector(s)) = opts.shift {
        c.shift = Some(s);
    }
    set!(c.resolution, opts.res);
    set!(c.refine, opts.refine);
    set!(c.scan.seed, opts.seed);
    set!(c.out, opts.out);
    if opts.checkpoint.is_some() {
        c.checkpoint = opts.checkpoint;
    }
    if opts.stop_after.is_some() {
        c.stop_after = opts.stop_after;
    }
    set!(c.periods, opts.periods);
    c.stable |= opts.stable;
    set!(c.nquasi_shifts, opts.shifts);
    set!(c.scan.d_open, opts.d_open);
    set!(c.scan.tol_eps, opts.tol_eps);
    set!(c.scan.trace.tol_close, opts.tol_close);
    set!(c.scan.thresholds.tol_close, opts.tol_close);
    set!(c.scan.trace.tol_level, opts.tol_level);
    set!(c.scan.thresholds.tol_label, opts.tol_label);
    c.workers = match opts.workers {
        Some(w) => Some(w),
        None => match env_workers {
            Some(s) => Some(s.trim().parse().map_err(|_| invalid(format!("{WORKERS_ENV}={s} is not a count")))?),
            None => c.workers,
        },
    };
    c.validate()?;
    Ok(c)
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub lines: Vec<String>,
    pub files: Vec<String>,
    pub complete: bool,
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Execute a run and write its outputs and manifest into `config.out`.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    config.validate()?;
    let exec = match config.workers {
        Some(1) => Exec::Sequential,
        Some(n) => {
            par::set_workers(n);
            Exec::Parallel
        }
        None => Exec::Parallel,
    };
    let model = config.load_model()?;
    std::fs::create_dir_all(&config.out)?;
    std::fs::write(config.out.join("config.toml"), config.to_toml())?;
    let started = timestamp();
    let mut summary = RunSummary {
        lines: Vec::new(),
        files: vec!["config.toml".into()],
        complete: true,
    };
    let result = match config.mode {
        Mode::Trace | Mode::Chaos => run_trace(config, &model, &mut summary),
        Mode::Interval => run_interval(config, &model, exec, &mut summary),
        Mode::Diagram => run_diagram(config, &model, exec, &mut summary),
        Mode::Nquasi => run_nquasi(config, &model, exec, &mut summary),
        Mode::Rank => run_rank(config, &model, &mut summary),
    };
    if let Err(e) = &result {
        summary.complete = false;
        log::error!("{e}");
    }
    let files: Vec<&str> = summary.files.iter().map(String::as_str).collect();
    io::write_manifest(&config.out, &config.hash(), (&started, &timestamp()), summary.complete, &files)?;
    result.map(|()| summary)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, summary: &mut RunSummary) -> Result<(), CliError> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    summary.files.push(name.into());
    Ok(())
}

fn create(dir: &Path, name: &str, summary: &mut RunSummary) -> Result<BufWriter<File>, CliError> {
    summary.files.push(name.into());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run_trace(config: &RunConfig, model: &DispersionModel, summary: &mut RunSummary) -> Result<(), CliError> {
    let c = config.require_level()?;
    let dim = model.dim();
    let shift = config.shift.clone().unwrap_or_else(|| vec![0.0; dim]);
    check_len(&shift, dim, "--shift")?;
    let section = PlaneSection::build(&config.direction(dim)?, &shift, model.lattice())?;
    let p = model.lattice().period_length();
    let tracer = Tracer::new(model, &section, config.scan.trace);
    let seed = *tracer
        .seeds(c, [-p, p, -p, p], config.scan.seed_grid)
        .first()
        .ok_or(Error::DegenerateLevel { level: c })?;
    let limits = Limits::new(config.periods * p, f64::INFINITY);
    let traj = match tracer.trace(c, seed, 1, limits) {
        Ok(t) => t,
        Err(Error::StagnantStep { partial }) => {
            log::warn!("step size collapsed; classifying the partial trace");
            *partial
        }
        Err(e) => return Err(e.into()),
    };
    let th = &config.scan.thresholds;
    let mut class = classify_trajectory(&traj, &section, model, th);
    if config.mode == Mode::Chaos && !traj.is_closed() && class.metrics.is_none() {
        class.metrics = Some(chaos_metrics(&traj, p, th));
    }
    io::write_trajectory(create(&config.out, "trajectory.tsv", summary)?, &traj, &section, Some(&class))?;
    std::fs::write(config.out.join("trajectory.svg"), io::trajectory_svg(&traj))?;
    summary.files.push("trajectory.svg".into());
    write_json(&config.out, "classification.json", &class, summary)?;
    let mut line = format!("tag {} termination {} arc {:.3}", class.tag.as_str(), traj.termination.as_str(), traj.arc_length());
    if let Some(d) = class.diameter {
        line += &format!(" diameter {d:.6}");
    }
    if let Some(t) = class.orbit_type {
        line += &format!(" orbit {}", t.as_str());
    }
    if let Some(m) = &class.label {
        line += &format!(" label {}", io::format_label(m));
    }
    if let (Some(w), Some(e)) = (class.width, class.extent) {
        line += &format!(" width {w:.6} extent {e:.3}");
    }
    if let Some(m) = &class.metrics {
        line += &format!(" hint {} last_decade_angle {:.4}", m.hint.as_str(), m.last_decade_angle);
    }
    summary.lines.push(line);
    Ok(())
}

fn run_interval(config: &RunConfig, model: &DispersionModel, exec: Exec, summary: &mut RunSummary) -> Result<(), CliError> {
    let direction = config.direction(model.dim())?;
    let iv = scanner::energy_interval(model, &direction, &config.scan, exec, config.stable)?;
    let vectors = match &direction {
        PlaneDirection::Field(b) => vec![b.clone()],
        PlaneDirection::Grassmann(u, v) => vec![u.clone(), v.clone()],
    };
    io::write_interval_tsv(create(&config.out, "interval.tsv", summary)?, &vectors, &iv)?;
    write_json(&config.out, "interval.json", &iv, summary)?;
    let mut line = format!("[{:.4}, {:.4}] ± {}", iv.lo, iv.hi, iv.tol);
    if iv.degenerate {
        line += " (degenerate)";
    }
    if !iv.resolved {
        line += " (no open level found)";
    }
    if let Some((a, b)) = iv.stable {
        line += &format!(" stable [{a:.4}, {b:.4}]");
    }
    summary.lines.push(line);
    Ok(())
}

fn run_diagram(config: &RunConfig, model: &DispersionModel, exec: Exec, summary: &mut RunSummary) -> Result<(), CliError> {
    if model.dim() != 3 {
        return Err(invalid("diagram mode needs a 3-dimensional model"));
    }
    let sweep_config = SweepConfig {
        mode: match (config.level, &config.levels) {
            (Some(level), _) => LevelMode::Fixed { level },
            (None, Some(r)) => LevelMode::Levels { levels: r.levels() },
            (None, None) => LevelMode::FullRelation,
        },
        resolution: config.resolution,
        refine: config.refine,
        class_q: 6,
        params: config.scan.clone(),
    };
    let control = SweepControl {
        exec,
        checkpoint: config.checkpoint.as_deref(),
        stop_after: config.stop_after,
    };
    match scanner::sweep(model, &sweep_config, control)? {
        SweepOutcome::Interrupted { evaluated } => {
            summary.complete = false;
            summary.lines.push(format!("stopped after {evaluated} cells; rerun with the same --checkpoint to resume"));
        }
        SweepOutcome::Complete(diagram) => {
            io::write_records_tsv(create(&config.out, "records.tsv", summary)?, &diagram)?;
            write_json(&config.out, "zones.json", &diagram.zones, summary)?;
            let features = diagram_features(&diagram, model.lattice());
            write_json(&config.out, "features.json", &features, summary)?;
            std::fs::write(config.out.join("zone_map.svg"), io::zone_map_svg(&diagram))?;
            summary.files.push("zone_map.svg".into());
            summary.lines.push(format!(
                "zones {} (+{} fragments) labels {} gap fraction {:.5} by depth {:?}",
                features.zone_count,
                features.fragments,
                features.distinct_labels,
                features.gap_fraction,
                features.gap_fraction_by_depth.iter().map(|g| format!("{g:.5}")).collect::<Vec<_>>()
            ));
            summary.lines.push(format!("type hint: {}", features.type_hint));
        }
    }
    Ok(())
}

fn run_nquasi(config: &RunConfig, model: &DispersionModel, exec: Exec, summary: &mut RunSummary) -> Result<(), CliError> {
    let c = config.require_level()?;
    let [u, v] = config.xi.clone().ok_or_else(|| invalid("nquasi mode needs --xi"))?;
    check_len(&u, model.dim(), "--xi")?;
    check_len(&v, model.dim(), "--xi")?;
    let base = PlaneSection::grassmann(&u, &v, &vec![0.0; model.dim()], model.lattice())?;
    if PartialRationalStructure::detect(&base, 8, 1e-9).is_ok() {
        let r = asymptotic_direction_4d(model, &u, &v, c, &config.scan, config.nquasi_shifts, exec)?;
        summary.lines.push(format!(
            "period {} asymptotic direction {:?} max pairwise angle {:.2e} diameter bound {:.4} persistent {}",
            io::format_label(&r.structure.w),
            r.ambient,
            r.max_pairwise,
            r.diameter_bound,
            r.persistent
        ));
        write_json(&config.out, "nquasi.json", &r, summary)?;
    } else {
        let budget = ConfinementBudget {
            shifts: config.nquasi_shifts,
            seed: config.scan.seed,
            ..ConfinementBudget::default()
        };
        let r = strip_confinement_check(model, &u, &v, c, &config.scan, &budget, exec)?;
        summary.lines.push(format!(
            "confined {} label {} width {:.6} open traces {} failures {}",
            r.confined,
            r.label.as_deref().map_or_else(|| "-".to_string(), io::format_label),
            r.width,
            r.open_traces,
            r.failures
        ));
        write_json(&config.out, "nquasi.json", &r, summary)?;
    }
    Ok(())
}

fn run_rank(config: &RunConfig, model: &DispersionModel, summary: &mut RunSummary) -> Result<(), CliError> {
    let levels = match (&config.levels, config.level) {
        (Some(r), _) => r.levels(),
        (None, Some(c)) => vec![c],
        (None, None) => return Err(invalid("rank mode needs --level or --levels")),
    };
    let mut rows = Vec::new();
    for c in levels {
        let r = model.topological_rank(c, config.resolution)?;
        let mut line = format!("level {c:.6} rank {}", r.rank);
        let complex = match (&config.field, model.dim()) {
            (Some(b), 3) => {
                let shift = config.shift.clone().unwrap_or_else(|| vec![0.0; 3]);
                let s = PlaneSection::field(b, &shift, model.lattice())?;
                match build_separatrix_complex(model, &s, c, 4.0 * model.lattice().period_length()) {
                    Ok(cx) => {
                        line += &format!(" separatrix rank {}", cx.rank);
                        Some(cx.rank)
                    }
                    Err(e) => {
                        line += &format!(" separatrix: {e}");
                        None
                    }
                }
            }
            _ => None,
        };
        summary.lines.push(line);
        rows.push(serde_json::json!({"level": c, "rank": r.rank, "resolution": r.resolution,
            "generators": r.component_generators, "separatrix_rank": complex}));
    }
    write_json(&config.out, "rank.json", &rows, summary)?;
    Ok(())
}

/// Tag of a trajectory file's classification, for scripted checks.
pub fn tag_of(summary: &RunSummary) -> Option<Tag> {
    let first = summary.lines.first()?;
    let name = first.split_whitespace().nth(1)?;
    [Tag::Closed, Tag::PeriodicOpen, Tag::TopologicallyRegular, Tag::ChaoticCandidate, Tag::Unresolved]
        .into_iter()
        .find(|t| t.as_str() == name)
}
