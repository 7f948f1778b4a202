//! Command-line front end: strict TOML configuration, environment overrides,
//! scenario assembly and the `run`, `reconstruct`, `audit` and
//! `closure-table` subcommands.
//!
//! Relative paths in a configuration file are resolved against the directory
//! holding that file. Any key can be overridden through an environment
//! variable `THINFLOW_<SECTION>__<KEY>` (for example
//! `THINFLOW_RHEOLOGY__K_FRICTION=0.1`); its value is read as a TOML value,
//! or as a string when it does not parse.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::audit::{self, AuditOptions, Family, FamilyParams, Sweep};
use crate::geometry::{forcing_from_angle, split_spec, parse_numbers, topography_from_spec, Boundary, Grid2D, Topography};
use crate::io;
use crate::models::{Limiter, Setup};
use crate::reconstruct::{self, column_profile, ColumnInputs};
use crate::state::{Closure, ConformationState, Model, RheologyParams, ShallowState};
use crate::timestepper::{self, Scenario, StepControl};
use crate::{Error, Result};

/// Prefix of configuration overrides taken from the environment.
pub const ENV_PREFIX: &str = "THINFLOW_";

#[derive(Debug, Parser)]
#[command(name = "thinflow", version, about = "Thin-layer reduced models of free-surface gravity flows")]
pub struct Cli {
    /// Worker threads (default: all cores); results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario and write snapshots and the run log.
    Run { config: PathBuf },
    /// Integrate to time `--at` and write the reconstructed 3D fields.
    Reconstruct {
        config: PathBuf,
        #[arg(long)]
        at: f64,
    },
    /// Run the residual-order sweep of an audit family.
    Audit { config: PathBuf },
    /// Sample the velocity profile of the configured model.
    ClosureTable { config: PathBuf },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    /// Defaults to square cells.
    pub ly: Option<f64>,
    pub bc_x: String,
    pub bc_y: String,
    pub x0: f64,
    pub y0: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 100, ny: 3, lx: 1.0, ly: None, bc_x: "periodic".into(), bc_y: "periodic".into(), x0: 0.0, y0: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TopographySection {
    /// `flat`, `incline:s`, `bump:a,w` or `sine:a,m`.
    pub profile: String,
}

impl Default for TopographySection {
    fn default() -> Self {
        Self { profile: "flat".into() }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSection {
    pub g: f64,
    /// Inclination angle in radians.
    pub theta: f64,
}

impl Default for ForcingSection {
    fn default() -> Self {
        Self { g: 1.0, theta: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// `lake-at-rest[:eta]`, `dam-break:hl,hr,x0`, `uniform:h,u[,v]`,
    /// `bump:h0,a,w` or the path of a snapshot CSV.
    pub state: String,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { state: "lake-at-rest".into() }
    }
}

/// Keys are the field names of [`RheologyParams`].
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RheologySection {
    pub model: String,
    pub closure: String,
    pub re: f64,
    pub de: f64,
    pub theta_ve: f64,
    pub k_friction: f64,
    pub gamma: f64,
    pub n_power: f64,
    pub bi: f64,
    pub b_fene: f64,
    pub theta_small: bool,
    pub slip_correction: bool,
    pub cross_term_depth_only: bool,
}

impl Default for RheologySection {
    fn default() -> Self {
        let p = RheologyParams::default();
        Self {
            model: p.model.name().into(),
            closure: "UCM".into(),
            re: p.re,
            de: p.de,
            theta_ve: p.theta_ve,
            k_friction: p.k_friction,
            gamma: p.gamma,
            n_power: p.n_power,
            bi: p.bi,
            b_fene: p.b_fene,
            theta_small: p.theta_small,
            slip_correction: p.slip_correction,
            cross_term_depth_only: p.cross_term_depth_only,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub diffusion_safety: f64,
    pub output_times: Vec<f64>,
    pub limiter: String,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let c = StepControl::default();
        Self {
            cfl: c.cfl,
            dt_max: c.dt_max,
            t_end: c.t_end,
            diffusion_safety: c.diffusion_safety,
            output_times: c.output_times,
            limiter: "minmod".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("output") }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSection {
    pub nz: usize,
    pub correction: bool,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self { nz: reconstruct::DEFAULT_NZ, correction: true }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub family: String,
    pub eps: Vec<f64>,
    pub nx: usize,
    pub gamma: f64,
    pub theta: f64,
    pub nz: usize,
    pub delta: f64,
    /// Also run the control sweep without velocity correction.
    pub ablation: bool,
}

impl Default for AuditSection {
    fn default() -> Self {
        let fp = FamilyParams::default();
        let o = AuditOptions::default();
        Self {
            family: Family::NewtonianInertial.name().into(),
            eps: audit::DEFAULT_EPS.to_vec(),
            nx: fp.nx,
            gamma: fp.gamma,
            theta: fp.theta,
            nz: o.nz,
            delta: o.delta,
            ablation: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClosureTableSection {
    pub depths: Vec<f64>,
    pub samples: usize,
    /// Mean velocity of inertial models.
    pub u0: [f64; 2],
    /// Driving of viscous models.
    pub a: [f64; 2],
    pub s_hz: [f64; 2],
    /// Strain invariant of the power-law inertial correction.
    pub strain: f64,
}

impl Default for ClosureTableSection {
    fn default() -> Self {
        Self { depths: vec![0.25, 0.5, 1.0], samples: 33, u0: [1.0, 0.0], a: [-1.0, 0.0], s_hz: [0.0, 0.0], strain: 1.0 }
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub grid: GridSection,
    pub topography: TopographySection,
    pub forcing: ForcingSection,
    pub initial: InitialSection,
    pub rheology: RheologySection,
    pub numerics: NumericsSection,
    pub output: OutputSection,
    pub reconstruct: ReconstructSection,
    pub audit: AuditSection,
    pub closure_table: ClosureTableSection,
    /// Directory used to resolve relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

const SECTIONS: [(&str, &[&str]); 10] = [
    ("grid", &["nx", "ny", "lx", "ly", "bc_x", "bc_y", "x0", "y0"]),
    ("topography", &["profile"]),
    ("forcing", &["g", "theta"]),
    ("initial", &["state"]),
    (
        "rheology",
        &[
            "model",
            "closure",
            "re",
            "de",
            "theta_ve",
            "k_friction",
            "gamma",
            "n_power",
            "bi",
            "b_fene",
            "theta_small",
            "slip_correction",
            "cross_term_depth_only",
        ],
    ),
    ("numerics", &["cfl", "dt_max", "t_end", "diffusion_safety", "output_times", "limiter"]),
    ("output", &["dir"]),
    ("reconstruct", &["nz", "correction"]),
    ("audit", &["family", "eps", "nx", "gamma", "theta", "nz", "delta", "ablation"]),
    ("closure_table", &["depths", "samples", "u0", "a", "s_hz", "strain"]),
];

fn nearest<'a>(key: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(key, c), c))
        .min()
        .filter(|(d, c)| *d <= (c.len().max(key.len()) / 2).max(2))
        .map(|(_, c)| c)
}

/// Reject unknown sections and keys, suggesting the nearest known name.
fn check_keys(table: &toml::Table) -> Result<()> {
    let mut problems = Vec::new();
    for (section, value) in table {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == section) else {
            let hint = nearest(section, SECTIONS.iter().map(|(s, _)| *s))
                .map(|s| format!(" (did you mean [{s}]?)"))
                .unwrap_or_default();
            problems.push(format!("unknown section [{section}]{hint}"));
            continue;
        };
        let Some(inner) = value.as_table() else {
            problems.push(format!("'{section}' must be a section"));
            continue;
        };
        for key in inner.keys() {
            if !keys.contains(&key.as_str()) {
                let mut candidates: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
                let mut owner = None;
                for (s, ks) in SECTIONS.iter() {
                    if *s != section && ks.contains(&key.as_str()) {
                        owner = Some(*s);
                    }
                    candidates.extend(ks.iter().filter(|_| *s != section).map(|k| k.to_string()));
                }
                let hint = match owner {
                    Some(s) => format!(" (it belongs in [{s}])"),
                    None => nearest(key, keys.iter().copied())
                        .map(|k| format!(" (did you mean '{k}'?)"))
                        .unwrap_or_default(),
                };
                problems.push(format!("unknown key '{key}' in [{section}]{hint}"));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Apply `THINFLOW_<SECTION>__<KEY>` overrides in sorted order.
fn apply_overrides(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (name, raw) in vars {
        let rest = name[ENV_PREFIX.len()..].to_ascii_lowercase();
        let Some((section, key)) = rest.split_once("__") else {
            return Err(Error::Config(format!("override {name} must look like {ENV_PREFIX}<SECTION>__<KEY>")));
        };
        let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let Some(inner) = entry.as_table_mut() else {
            return Err(Error::Config(format!("override {name}: '{section}' is not a section")));
        };
        inner.insert(key.to_string(), env_value(&raw));
    }
    Ok(())
}

/// Parse configuration text with the given overrides.
pub fn parse_config_str(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Config> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    apply_overrides(&mut table, vars)?;
    check_keys(&table)?;
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Read a configuration file, applying overrides from the environment.
pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_str(&text, std::env::vars())
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("invalid config: "))))?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

/// Validated inputs of a time integration.
#[derive(Debug, Clone)]
pub struct Job {
    pub scenario: Scenario,
    pub control: StepControl,
    pub out_dir: PathBuf,
}

impl Config {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// Rheology parameters, listing every violated precondition on failure.
    pub fn params(&self) -> Result<RheologyParams> {
        let r = &self.rheology;
        let mut problems = Vec::new();
        let model = r.model.parse::<Model>().map_err(|e| problems.push(e.to_string())).ok();
        let closure = r.closure.parse::<Closure>().map_err(|e| problems.push(e.to_string())).ok();
        let params = RheologyParams {
            re: r.re,
            de: r.de,
            theta_ve: r.theta_ve,
            k_friction: r.k_friction,
            gamma: r.gamma,
            n_power: r.n_power,
            bi: r.bi,
            b_fene: r.b_fene,
            model: model.unwrap_or(Model::NewtonianInertial),
            closure: closure.unwrap_or(Closure::Ucm),
            theta_small: r.theta_small,
            slip_correction: r.slip_correction,
            cross_term_depth_only: r.cross_term_depth_only,
        };
        problems.extend(params.violations());
        if problems.is_empty() {
            Ok(params)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn control(&self) -> Result<StepControl> {
        let n = &self.numerics;
        let c = StepControl {
            cfl: n.cfl,
            dt_max: n.dt_max,
            t_end: n.t_end,
            diffusion_safety: n.diffusion_safety,
            output_times: n.output_times.clone(),
        };
        c.check().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn setup(&self) -> Result<Setup> {
        let g = &self.grid;
        if g.nx == 0 || !(g.lx > 0.0) {
            return Err(Error::Config(format!("grid needs nx > 0 and lx > 0 (got nx={}, lx={})", g.nx, g.lx)));
        }
        let dx = g.lx / g.nx as f64;
        let dy = g.ly.map_or(dx, |ly| ly / g.ny.max(1) as f64);
        let grid = Grid2D::new(g.nx, g.ny, dx, dy, g.bc_x.parse::<Boundary>()?, g.bc_y.parse::<Boundary>()?)?
            .with_origin(g.x0, g.y0);
        let topo = topography_from_spec(&grid, &self.topography.profile)?;
        let forcing = forcing_from_angle(self.forcing.g, self.forcing.theta)?;
        Ok(Setup::new(grid, topo, forcing)?.with_limiter(self.numerics.limiter.parse::<Limiter>()?))
    }

    /// Initial state and conformation (identity unless read from a snapshot).
    pub fn initial(&self, grid: &Grid2D, topo: &Topography, model: Model) -> Result<(ShallowState, Option<ConformationState>)> {
        let spec = self.initial.state.trim();
        let (name, args) = split_spec(spec);
        let nums = || parse_numbers(args, spec);
        let want = |n: &[usize]| -> Result<Vec<f64>> {
            let v = nums()?;
            if !n.contains(&v.len()) {
                return Err(Error::Config(format!("initial state '{spec}' expects {n:?} numeric arguments, got {}", v.len())));
            }
            Ok(v)
        };
        let identity = |n: usize| model.is_viscoelastic().then(|| ConformationState::identity(n));
        let n = grid.len();
        let state = match name {
            "lake-at-rest" => {
                let v = want(&[0, 1])?;
                let eta = v.first().copied().unwrap_or(1.0);
                ShallowState::at_rest(topo.b.iter().map(|b| (eta - b).max(0.0)).collect())
            }
            "dam-break" => {
                let v = want(&[3])?;
                ShallowState::at_rest(grid.map_cells(|i, _| if grid.x(i) < v[2] { v[0] } else { v[1] }))
            }
            "uniform" => {
                let v = want(&[2, 3])?;
                let (h, u, w) = (v[0], v[1], v.get(2).copied().unwrap_or(0.0));
                ShallowState::new(vec![h; n], vec![[h * u, h * w]; n])?
            }
            "bump" => {
                let v = want(&[3])?;
                let (xc, yc) = (grid.x0 + 0.5 * grid.lx(), grid.y0 + 0.5 * grid.ly());
                ShallowState::at_rest(grid.map_cells(|i, j| {
                    let r2 = (grid.x(i) - xc).powi(2) + (grid.y(j) - yc).powi(2);
                    v[0] + v[1] * (-r2 / (v[2] * v[2])).exp()
                }))
            }
            _ if spec.ends_with(".csv") => {
                let (state, conf) = io::read_snapshot(&self.resolve(Path::new(spec)), grid)?;
                let conf = if model.is_viscoelastic() { conf.or_else(|| identity(n)) } else { None };
                return Ok((state, conf));
            }
            _ => return Err(Error::Config(format!("unknown initial state '{spec}'"))),
        };
        Ok((state, identity(n)))
    }

    /// Assemble and validate everything a time integration needs; all
    /// violated preconditions are reported together.
    pub fn job(&self) -> Result<Job> {
        let mut problems = Vec::new();
        let params = self.params().map_err(|e| problems.push(e.to_string())).ok();
        let control = self.control().map_err(|e| problems.push(e.to_string())).ok();
        let setup = self.setup().map_err(|e| problems.push(e.to_string())).ok();
        let init = match (&setup, &params) {
            (Some(s), Some(p)) => self.initial(&s.grid, &s.topo, p.model).map_err(|e| problems.push(e.to_string())).ok(),
            _ => None,
        };
        match (params, control, setup, init) {
            (Some(params), Some(control), Some(setup), Some((state, conf))) if problems.is_empty() => Ok(Job {
                scenario: Scenario { setup, params, state, conf },
                control,
                out_dir: self.out_dir(),
            }),
            _ => Err(Error::Config(
                problems.iter().map(|p| p.trim_start_matches("invalid config: ")).collect::<Vec<_>>().join("; "),
            )),
        }
    }
}

/// `run`: snapshots `snapshot_NNNN.csv`, their times `times.csv` and `log.csv`.
pub fn cmd_run(cfg: &Config) -> Result<()> {
    let job = cfg.job()?;
    let traj = timestepper::run(&job.scenario, &job.control)?;
    let grid = &job.scenario.setup.grid;
    for (k, s) in traj.snapshots.iter().enumerate() {
        io::write_snapshot(&job.out_dir.join(format!("snapshot_{k:04}.csv")), grid, &s.state, s.conf.as_ref())?;
    }
    io::write_table(&job.out_dir.join("times.csv"), &["t"], traj.snapshots.iter().map(|s| vec![s.t]))?;
    io::write_run_log(&job.out_dir.join("log.csv"), &traj.log)?;
    println!(
        "run: {} snapshots, {} steps, t = {}, relative mass drift {:.3e} -> {}",
        traj.snapshots.len(),
        traj.log.len() - 1,
        traj.snapshots.last().map_or(0.0, |s| s.t),
        traj.mass_drift(),
        job.out_dir.display()
    );
    Ok(())
}

/// `reconstruct --at t`: integrate to `t` and write `reconstruction.csv`.
pub fn cmd_reconstruct(cfg: &Config, at: f64) -> Result<()> {
    if !(at >= 0.0 && at.is_finite()) {
        return Err(Error::Config(format!("--at must be finite and >= 0 (got {at})")));
    }
    let mut job = cfg.job()?;
    job.control.t_end = at;
    job.control.output_times.clear();
    let traj = timestepper::run(&job.scenario, &job.control)?;
    let last = traj.snapshots.last().expect("run keeps the initial snapshot");
    let sc = &job.scenario;
    let ext = reconstruct::reconstruct(&sc.setup, &last.state, last.conf.as_ref(), &sc.params, cfg.reconstruct.nz, cfg.reconstruct.correction)
        .map_err(|e| match e {
            Error::Admissibility { cell, msg } => Error::Numerical { t: last.t, step: traj.log.len() - 1, msg: format!("cell {cell}: {msg}") },
            other => other,
        })?;
    let path = job.out_dir.join("reconstruction.csv");
    ext.write_csv(&path, &sc.setup.grid)?;
    println!("reconstruct: t = {}, {} samples -> {}", last.t, ext.z.len(), path.display());
    Ok(())
}

fn print_summary(label: &str, sweep: &Sweep) {
    println!("{label} ({})", sweep.model);
    for row in sweep.summary() {
        println!(
            "  {:<20} order {:>7.3}  expected {:.0}{}  {}",
            row.residual.name(),
            row.fit.order,
            row.expected.order,
            if row.expected.inherited { " (inherited)" } else { "" },
            if row.pass { "PASS" } else { "FAIL" }
        );
    }
}

/// `audit`: `audit_table.csv` and `audit_summary.csv`, plus the
/// `audit_ablation_*` pair when the ablation control is enabled.
pub fn cmd_audit(cfg: &Config) -> Result<()> {
    let a = &cfg.audit;
    let family: Family = a.family.parse()?;
    let fp = FamilyParams { nx: a.nx, gamma: a.gamma, theta: a.theta, shift: 0 };
    let opts = AuditOptions { nz: a.nz, delta: a.delta, correction: true, defect: None };
    let member = |e| audit::family_member(family, e, &fp);
    let out = cfg.out_dir();
    let sweep = audit::epsilon_sweep(member, &a.eps, &opts)?;
    sweep.write_table(&out.join("audit_table.csv"))?;
    sweep.write_summary(&out.join("audit_summary.csv"))?;
    print_summary(&format!("audit {}", family.name()), &sweep);
    if a.ablation {
        let ablation = audit::epsilon_sweep(member, &a.eps, &AuditOptions { correction: false, ..opts })?;
        ablation.write_table(&out.join("audit_ablation_table.csv"))?;
        ablation.write_summary(&out.join("audit_ablation_summary.csv"))?;
        print_summary("ablation control (no velocity correction)", &ablation);
    }
    Ok(())
}

/// `closure-table`: profile samples `h, z, ux, uy` in `closure_table.csv`.
pub fn cmd_closure_table(cfg: &Config) -> Result<()> {
    let params = cfg.params()?;
    let t = &cfg.closure_table;
    if t.samples < 2 || t.depths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::Config("closure_table needs samples >= 2 and positive finite depths".into()));
    }
    let mut rows = Vec::with_capacity(t.depths.len() * t.samples);
    for &h in &t.depths {
        let col = ColumnInputs { b: 0.0, h, u0: t.u0, a: t.a, s_hz: t.s_hz, strain: t.strain };
        for m in 0..t.samples {
            let z = h * m as f64 / (t.samples - 1) as f64;
            let u = column_profile(&params, &col, z).map_err(|e| match e {
                Error::Closure(msg) => Error::Numerical { t: 0.0, step: 0, msg: format!("depth {h}: {msg}") },
                other => other,
            })?;
            rows.push(vec![h, z, u[0], u[1]]);
        }
    }
    let path = cfg.out_dir().join("closure_table.csv");
    let n = rows.len();
    io::write_table(&path, &["h", "z", "ux", "uy"], rows)?;
    println!("closure-table: {} ({n} samples) -> {}", params.model, path.display());
    Ok(())
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A pool may already exist when called twice in one process; the
        // thread count never changes results, so that case is ignored.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Run { config } => cmd_run(&parse_config(config)?),
        Command::Reconstruct { config, at } => cmd_reconstruct(&parse_config(config)?, *at),
        Command::Audit { config } => cmd_audit(&parse_config(config)?),
        Command::ClosureTable { config } => cmd_closure_table(&parse_config(config)?),
    }
}

/// Entry point; returns the process exit code: 0 success, 1 usage,
/// 2 invalid configuration or input, 3 numerical failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        parse_config_str(text, Vec::new())
    }

    const MINIMAL: &str = r#"
[grid]
nx = 50
bc_x = "outflow"

[initial]
state = "dam-break:1.0,0.5,0.5"

[rheology]
model = "NewtonianInertial"
"#;

    #[test]
    fn minimal_config_builds_a_job() {
        let job = parse(MINIMAL).unwrap().job().unwrap();
        assert_eq!(job.scenario.params.model, Model::NewtonianInertial);
        assert_eq!(job.scenario.setup.grid.nx, 50);
        assert_eq!(job.scenario.state.h[0], 1.0);
        assert_eq!(job.scenario.state.h[49], 0.5);
    }

    #[test]
    fn theta_bound_is_named() {
        let err = parse("[rheology]\ntheta_ve = 1.2\n").unwrap().job().unwrap_err().to_string();
        assert!(err.contains("theta_ve"), "{err}");
    }

    #[test]
    fn every_violation_is_listed() {
        let cfg = parse("[rheology]\ntheta_ve = 1.2\nre = -1.0\n[numerics]\ncfl = -1.0\n").unwrap();
        let err = cfg.job().unwrap_err().to_string();
        assert!(err.contains("theta_ve") && err.contains("re must") && err.contains("cfl"), "{err}");
    }

    #[test]
    fn unknown_key_gets_a_suggestion() {
        let err = parse("[rheology]\nviscocity = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("viscocity"), "{err}");
        let err = parse("[rheology]\nk_fricton = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("did you mean 'k_friction'"), "{err}");
        let err = parse("[rheolgy]\nre = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("did you mean [rheology]"), "{err}");
        let err = parse("[grid]\ncfl = 0.3\n").unwrap_err().to_string();
        assert!(err.contains("belongs in [numerics]"), "{err}");
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let err = parse("[grid]\nnx = \n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn overrides_replace_and_add_keys() {
        let vars = vec![
            ("THINFLOW_RHEOLOGY__K_FRICTION".to_string(), "0.25".to_string()),
            ("THINFLOW_RHEOLOGY__MODEL".to_string(), "NewtonianViscous".to_string()),
            ("THINFLOW_NUMERICS__OUTPUT_TIMES".to_string(), "[0.1, 0.2]".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = parse_config_str(MINIMAL, vars).unwrap();
        assert_eq!(cfg.rheology.k_friction, 0.25);
        assert_eq!(cfg.rheology.model, "NewtonianViscous");
        assert_eq!(cfg.numerics.output_times, vec![0.1, 0.2]);
        let bad = vec![("THINFLOW_RHEOLOGY__VISCOSITY".to_string(), "1".to_string())];
        assert!(parse_config_str(MINIMAL, bad).is_err());
    }

    #[test]
    fn section_key_lists_match_the_structs() {
        let mut text = String::new();
        let sample = |s: &str, k: &str| -> String {
            match (s, k) {
                ("grid", "nx" | "ny") | ("reconstruct", "nz") | ("audit", "nx" | "nz") | ("closure_table", "samples") => "3".into(),
                ("grid", "bc_x" | "bc_y") => "\"periodic\"".into(),
                ("rheology", "model") => "\"NewtonianInertial\"".into(),
                ("rheology", "closure") => "\"UCM\"".into(),
                ("rheology", "theta_small" | "slip_correction" | "cross_term_depth_only")
                | ("reconstruct", "correction")
                | ("audit", "ablation") => "true".into(),
                ("numerics", "output_times") | ("audit", "eps") | ("closure_table", "depths") => "[0.5]".into(),
                ("closure_table", "u0" | "a" | "s_hz") => "[0.5, 0.5]".into(),
                ("topography", _) | ("initial", _) | ("numerics", "limiter") | ("output", _) | ("audit", "family") => {
                    "\"x\"".into()
                }
                _ => "0.5".into(),
            }
        };
        for (s, keys) in SECTIONS {
            text.push_str(&format!("[{s}]\n"));
            for k in keys {
                text.push_str(&format!("{k} = {}\n", sample(s, k)));
            }
        }
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.grid.ly, Some(0.5));
        assert_ne!(cfg, Config::default());
    }

    #[test]
    fn initial_state_specs() {
        let cfg = parse("[topography]\nprofile = \"bump:0.2,0.1\"\n[initial]\nstate = \"lake-at-rest:0.5\"\n").unwrap();
        let job = cfg.job().unwrap();
        let (st, b) = (&job.scenario.state, &job.scenario.setup.topo.b);
        assert!(st.h.iter().zip(b).all(|(h, b)| (h + b - 0.5).abs() < 1e-15));
        let cfg = parse("[initial]\nstate = \"uniform:0.3,2.0\"\n[rheology]\nmodel = \"ViscoelasticInertial\"\n").unwrap();
        let job = cfg.job().unwrap();
        assert_eq!(job.scenario.state.q[0], [0.6, 0.0]);
        assert_eq!(job.scenario.conf.unwrap().s_zz[0], 1.0);
        assert!(parse("[initial]\nstate = \"tsunami\"\n").unwrap().job().is_err());
        assert!(parse("[initial]\nstate = \"dam-break:1,2\"\n").unwrap().job().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["thinflow"]), 1);
        assert_eq!(main_with_args(["thinflow", "fly"]), 1);
        assert_eq!(main_with_args(["thinflow", "run", "/nonexistent/cfg.toml"]), 2);
        assert_eq!(main_with_args(["thinflow", "--help"]), 0);
    }
}
