//! Experiment configuration, built-in presets, and the experiment and
//! verification runners.
//!
//! Configurations are flat `key = value` text with `#` comments. A preset is
//! itself such a text; a file overlays it and command-line flags overlay both.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fdcheck::{self, default_steps, random_control, random_field, FdReport};
use crate::forward::{solve_forward, NewtonSettings};
use crate::mesh::{interpolate_slit_field, uniform_times, Control, Discretization, FieldVector, Mesh, Trajectory, UX, UY};
use crate::model::{CostParams, ModelParams};
use crate::reduced::{IterationRecord, OptResult, OptSettings, OptStatus, Problem, StopRule};
use crate::sparse::set_reproducible;
use crate::vtk;

/// Recognized keys with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "base preset: example1, example2 or desk"),
    ("mesh", "cells per side (even)"),
    ("timesteps", "number of time steps M"),
    ("end_time", "final time T"),
    ("g_c", "fracture toughness"),
    ("eps", "phase-field length (absolute); overrides eps_factor"),
    ("eps_factor", "phase-field length as a multiple of the cell diameter h"),
    ("kappa", "residual stiffness"),
    ("gamma", "irreversibility penalty"),
    ("eta", "viscous regularization"),
    ("eta0", "initial-condition weight"),
    ("young", "Young's modulus"),
    ("poisson", "Poisson's ratio"),
    ("alpha", "Tikhonov weight"),
    ("q0", "initial control (constant)"),
    ("q_d", "nominal control (constant)"),
    ("phi0_slit", "initial notch x-interval, `a, b`"),
    ("phi0_halfwidth", "initial notch half-width in multiples of h"),
    ("phid_slit", "desired crack x-interval, `a, b`"),
    ("phid_halfwidth", "desired crack half-width in multiples of h"),
    ("newton_tol", "outer Newton tolerance"),
    ("stop_rule", "either (relative or absolute residual) or relative"),
    ("max_newton", "maximum outer Newton iterations"),
    ("cg_forcing", "relative CG tolerance"),
    ("cg_max", "maximum CG iterations per Newton step"),
    ("damping", "Newton step fraction in (0, 1]"),
    ("max_halvings", "step halvings when the state solve fails at a trial control"),
    ("state_rel_tol", "relative tolerance of the state Newton solver"),
    ("state_abs_tol", "absolute tolerance of the state Newton solver"),
    ("state_max_iter", "iteration limit of the state Newton solver"),
    ("state_backtracks", "maximum step halvings per state Newton iteration"),
    ("out_dir", "output directory"),
    ("snapshots", "comma-separated time indices for field snapshots"),
    ("reproducible", "true for sequential, bit-reproducible linear algebra"),
    ("seed", "seed for random directions in the checks"),
];

const EXAMPLE1: &str = "
mesh = 64
timesteps = 40
end_time = 1
g_c = 1
eps_factor = 4
kappa = 1e-10
gamma = 1e5
eta = 1e3
eta0 = 1
young = 1e6
poisson = 0.2
alpha = 4.75e-10
q0 = 1
q_d = 1e3
phi0_slit = 0.5, 1.0
phi0_halfwidth = 0
phid_slit = 0.25, 0.5
phid_halfwidth = 1
newton_tol = 2e-12
stop_rule = either
max_newton = 30
cg_forcing = 1e-2
cg_max = 100
damping = 1
max_halvings = 8
state_rel_tol = 1e-9
state_abs_tol = 1e-12
state_max_iter = 50
state_backtracks = 20
reproducible = false
seed = 1
";

const EXAMPLE2: &str = "
mesh = 128
alpha = 1e-10
q_d = 3e3
phi0_slit = 0.25, 0.75
phid_slit = 0.0, 0.25
phid_halfwidth = 2
newton_tol = 1e-11
";

const DESK: &str = "
mesh = 8
timesteps = 5
gamma = 1e3
newton_tol = 1e-8
state_rel_tol = 1e-13
state_abs_tol = 1e-14
";

fn preset_text(name: &str) -> Result<Vec<&'static str>> {
    match name {
        "example1" => Ok(vec![EXAMPLE1]),
        "example2" => Ok(vec![EXAMPLE1, EXAMPLE2]),
        "desk" => Ok(vec![EXAMPLE1, DESK]),
        other => Err(Error::invalid(
            "preset",
            format!("unknown preset `{other}` (expected example1, example2 or desk)"),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    source: String,
    line: usize,
}

/// Unresolved key-value layers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    /// Parses `text` and overlays its keys. `source` labels error messages.
    pub fn merge_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |reason: String| Error::ConfigParse {
                path: source.to_string(),
                line,
                reason,
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(format!("key `{key}` has no value")));
            }
            self.entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    source: source.to_string(),
                    line,
                },
            );
        }
        Ok(())
    }

    /// Sets a single key, as from a command-line flag.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.merge_text(&format!("{key} = {}", value.into()), &format!("--{key}"))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn require(&self, key: &str) -> Result<&Entry> {
        self.entries.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let e = self.require(key)?;
        e.value.parse::<T>().map_err(|err| Error::ConfigParse {
            path: e.source.clone(),
            line: e.line,
            reason: format!("bad value `{}` for `{key}`: {err}", e.value),
        })
    }

    fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.entries.contains_key(key) {
            self.parse(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn parse_pair(&self, key: &str) -> Result<(f64, f64)> {
        let e = self.require(key)?;
        let bad = |reason: String| Error::ConfigParse {
            path: e.source.clone(),
            line: e.line,
            reason,
        };
        let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(bad(format!("`{key}` expects two comma-separated numbers")));
        }
        let a = parts[0].parse::<f64>().map_err(|x| bad(format!("{x}")))?;
        let b = parts[1].parse::<f64>().map_err(|x| bad(format!("{x}")))?;
        Ok((a, b))
    }

    fn parse_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|s| {
                s.trim().parse::<usize>().map_err(|x| Error::ConfigParse {
                    path: e.source.clone(),
                    line: e.line,
                    reason: format!("bad index `{}` in `{key}`: {x}", s.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Phase-field length: absolute, or a multiple of the cell diameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSpec {
    Absolute(f64),
    MeshFactor(f64),
}

/// A horizontal slit at `y = 0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitSpec {
    pub start: f64,
    pub end: f64,
    /// Half-width in multiples of the cell diameter `h`.
    pub halfwidth_h: f64,
}

impl SlitSpec {
    pub fn field(&self, mesh: &Mesh) -> Vec<f64> {
        interpolate_slit_field((self.start, self.end), self.halfwidth_h * mesh.h(), mesh)
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub mesh: usize,
    pub steps: usize,
    pub end_time: f64,
    pub g_c: f64,
    pub eps: EpsSpec,
    pub kappa: f64,
    pub gamma: f64,
    pub eta: f64,
    pub eta0: f64,
    pub young: f64,
    pub poisson: f64,
    pub alpha: f64,
    pub q0: f64,
    pub q_d: f64,
    pub phi0: SlitSpec,
    pub phi_d: SlitSpec,
    pub opt: OptSettings,
    pub newton: NewtonSettings,
    pub out_dir: Option<PathBuf>,
    pub snapshots: Option<Vec<usize>>,
    pub reproducible: bool,
    pub seed: u64,
}

/// Raw layers for `preset`, then the file at `path` (if any).
/// The preset comes from `preset_override`, else the file's `preset` key, else `example1`.
pub fn raw_config(preset_override: Option<&str>, path: Option<&Path>) -> Result<RawConfig> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let mut layer = RawConfig::default();
            layer.merge_text(&text, &p.display().to_string())?;
            Some((layer, text, p.display().to_string()))
        }
        None => None,
    };
    let name = preset_override
        .map(str::to_string)
        .or_else(|| file.as_ref().and_then(|(l, _, _)| l.get("preset").map(str::to_string)))
        .unwrap_or_else(|| "example1".to_string());
    let mut raw = RawConfig::default();
    for (k, text) in preset_text(&name)?.into_iter().enumerate() {
        raw.merge_text(text, &format!("<preset {name}:{k}>"))?;
    }
    if let Some((_, text, label)) = file {
        raw.merge_text(&text, &label)?;
    }
    raw.set("preset", name)?;
    Ok(raw)
}

/// Reads a configuration file on top of its preset (default `example1`).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_raw(&raw_config(None, Some(path))?)
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_raw(&raw_config(Some(name), None)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let eps = match raw.parse_opt::<f64>("eps")? {
            Some(v) => EpsSpec::Absolute(v),
            None => EpsSpec::MeshFactor(raw.parse("eps_factor")?),
        };
        let slit = |name: &str| -> Result<SlitSpec> {
            let (start, end) = raw.parse_pair(&format!("{name}_slit"))?;
            Ok(SlitSpec {
                start,
                end,
                halfwidth_h: raw.parse(&format!("{name}_halfwidth"))?,
            })
        };
        let stop_rule = match raw.require("stop_rule")?.value.as_str() {
            "either" => StopRule::Either,
            "relative" => StopRule::Relative,
            other => {
                let e = raw.require("stop_rule")?;
                return Err(Error::ConfigParse {
                    path: e.source.clone(),
                    line: e.line,
                    reason: format!("stop_rule must be `either` or `relative`, got `{other}`"),
                });
            }
        };
        let cfg = ExperimentConfig {
            preset: raw.get("preset").unwrap_or("example1").to_string(),
            mesh: raw.parse("mesh")?,
            steps: raw.parse("timesteps")?,
            end_time: raw.parse("end_time")?,
            g_c: raw.parse("g_c")?,
            eps,
            kappa: raw.parse("kappa")?,
            gamma: raw.parse("gamma")?,
            eta: raw.parse("eta")?,
            eta0: raw.parse("eta0")?,
            young: raw.parse("young")?,
            poisson: raw.parse("poisson")?,
            alpha: raw.parse("alpha")?,
            q0: raw.parse("q0")?,
            q_d: raw.parse("q_d")?,
            phi0: slit("phi0")?,
            phi_d: slit("phid")?,
            opt: OptSettings {
                newton_tol: raw.parse("newton_tol")?,
                stop_rule,
                max_newton: raw.parse("max_newton")?,
                cg_forcing: raw.parse("cg_forcing")?,
                cg_max: raw.parse("cg_max")?,
                damping: raw.parse("damping")?,
                max_halvings: raw.parse("max_halvings")?,
            },
            newton: NewtonSettings {
                abs_tol: raw.parse("state_abs_tol")?,
                rel_tol: raw.parse("state_rel_tol")?,
                max_iter: raw.parse("state_max_iter")?,
                max_backtracks: raw.parse("state_backtracks")?,
                active_set_freeze: true,
            },
            out_dir: raw.get("out_dir").map(PathBuf::from),
            snapshots: raw.parse_list("snapshots")?,
            reproducible: raw.parse("reproducible")?,
            seed: raw.parse("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Mesh::new(self.mesh)?;
        if self.steps == 0 {
            return Err(Error::invalid("timesteps", "must be at least 1"));
        }
        if !(self.end_time > 0.0) {
            return Err(Error::invalid("end_time", "must be positive"));
        }
        for s in [self.phi0, self.phi_d] {
            if !(s.halfwidth_h >= 0.0) {
                return Err(Error::invalid("halfwidth", "must be non-negative"));
            }
        }
        self.opt.validate()?;
        self.newton.validate()?;
        self.model_params()?;
        if let Some(list) = &self.snapshots {
            if let Some(bad) = list.iter().find(|&&m| m > self.steps) {
                return Err(Error::invalid(
                    "snapshots",
                    format!("index {bad} exceeds the number of time steps {}", self.steps),
                ));
            }
        }
        Ok(())
    }

    pub fn cell_diameter(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.mesh as f64
    }

    pub fn eps_value(&self) -> f64 {
        match self.eps {
            EpsSpec::Absolute(v) => v,
            EpsSpec::MeshFactor(f) => f * self.cell_diameter(),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::from_engineering(
            self.g_c,
            self.eps_value(),
            self.kappa,
            self.gamma,
            self.eta,
            self.eta0,
            self.young,
            self.poisson,
        )
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let disc = Discretization::with_cells(self.mesh)?;
        let mesh = disc.mesh();
        let cost = CostParams::new(self.alpha, self.phi_d.field(mesh), Control::constant(mesh, self.q_d))?;
        let initial = FieldVector::from_phase_field(&self.phi0.field(mesh));
        Ok(Problem {
            params: self.model_params()?,
            cost,
            initial,
            times: uniform_times(self.steps, self.end_time),
            newton: self.newton,
            disc,
        })
    }

    /// Requested snapshot indices, or 20, 30, 40 scaled to `M / 40`.
    pub fn snapshot_indices(&self) -> Vec<usize> {
        let mut list = match &self.snapshots {
            Some(l) => l.clone(),
            None => [20usize, 30, 40]
                .iter()
                .map(|k| ((k * self.steps) as f64 / 40.0).round() as usize)
                .filter(|&m| m >= 1)
                .collect(),
        };
        list.sort_unstable();
        list.dedup();
        list
    }

    /// `out_dir`, else `$PFFC_OUT`, else `pffc_out/<preset>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.out_dir {
            return d.clone();
        }
        match std::env::var_os("PFFC_OUT") {
            Some(d) => PathBuf::from(d),
            None => Path::new("pffc_out").join(&self.preset),
        }
    }

    /// The control at which verification probes are taken: `q_d (1 + x)`.
    pub fn check_control(&self, mesh: &Mesh) -> Control {
        let q_d = self.q_d;
        Control::from_fn(mesh, |x| q_d * (1.0 + x))
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub const CSV_HEADER: &str = "iter,cg,rel_residual,abs_residual,cost,tracking,tikhonov,max_force";

pub fn render_iterations(records: &[IterationRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            r.cg_count,
            fmt17(r.rel_residual),
            fmt17(r.abs_residual),
            fmt17(r.cost),
            fmt17(r.tracking),
            fmt17(r.tikhonov),
            fmt17(r.max_force)
        );
    }
    s
}

pub fn render_force_profile(mesh: &Mesh, q: &Control) -> String {
    let mut s = String::new();
    for (node, v) in mesh.neumann_nodes().into_iter().zip(q.as_slice()) {
        let _ = writeln!(s, "{} {}", fmt17(mesh.nodes()[node][0]), fmt17(*v));
    }
    s
}

/// Smallest and largest `x` on the line `y = 0.5` with `phi < threshold`.
pub fn crack_extent(mesh: &Mesh, phi: &[f64], threshold: f64) -> Option<(f64, f64)> {
    let n = mesh.n();
    let j = n / 2;
    let xs: Vec<f64> = (0..=n)
        .filter(|&i| phi[mesh.node_index(i, j)] < threshold)
        .map(|i| i as f64 / n as f64)
        .collect();
    Some((*xs.first()?, *xs.last()?))
}

/// Crack-tip threshold used in summaries and checks.
pub const TIP_THRESHOLD: f64 = 0.1;

/// What a run produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub q: Control,
    pub records: Vec<IterationRecord>,
    pub status: OptStatus,
    pub trajectory: Option<Trajectory>,
    pub adjoint: Option<Trajectory>,
    /// Crack extent on `y = 0.5` at the final time, at the returned control.
    pub final_crack: Option<(f64, f64)>,
    pub initial_crack: Option<(f64, f64)>,
}

impl ExperimentOutcome {
    pub fn success(&self) -> bool {
        matches!(self.status, OptStatus::Converged)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs Newton-CG for the configuration and writes `iterations.csv`,
/// `force_profile.txt`, `summary.txt` and the requested VTK snapshots.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    set_reproducible(config.reproducible);
    let problem = config.build_problem()?;
    let out = config.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mesh = problem.disc.mesh();
    info!(
        "{}: n = {}, M = {}, eps = {:.4e}, gamma = {:.1e}, eta = {:.1e}, alpha = {:.2e}",
        config.preset,
        config.mesh,
        config.steps,
        config.eps_value(),
        config.gamma,
        config.eta,
        config.alpha
    );
    let csv = out.join("iterations.csv");
    let q0 = Control::constant(mesh, config.q0);
    let result: OptResult = match problem.newton_cg(&q0, &config.opt) {
        Ok(r) => r,
        Err(e) => {
            write_file(&csv, &render_iterations(&[]))?;
            return Err(e);
        }
    };
    write_file(&csv, &render_iterations(&result.records))?;
    write_file(&out.join("force_profile.txt"), &render_force_profile(mesh, &result.q))?;

    if let Some(traj) = &result.trajectory {
        for m in config.snapshot_indices() {
            if m > traj.steps() {
                warn!("snapshot index {m} beyond M = {}", traj.steps());
                continue;
            }
            vtk::write_state(&out.join(format!("state_m{m}.vtk")), mesh, traj.state(m), traj.times[m])?;
            if let Some(z) = &result.adjoint {
                vtk::write_adjoint(&out.join(format!("adjoint_m{m}.vtk")), mesh, z.state(m), z.times[m])?;
            }
        }
    }
    let final_crack = result
        .trajectory
        .as_ref()
        .and_then(|t| crack_extent(mesh, &t.state(t.steps()).phi(), TIP_THRESHOLD));
    let initial_crack = crack_extent(mesh, &problem.initial.phi(), TIP_THRESHOLD);
    let outcome = ExperimentOutcome {
        out_dir: out.clone(),
        q: result.q,
        records: result.records,
        status: result.status,
        trajectory: result.trajectory,
        adjoint: result.adjoint,
        final_crack,
        initial_crack,
    };
    write_file(&out.join("summary.txt"), &render_summary(config, &outcome))?;
    Ok(outcome)
}

fn render_summary(config: &ExperimentConfig, outcome: &ExperimentOutcome) -> String {
    let mut s = String::new();
    let status = outcome.status.to_string();
    let _ = writeln!(s, "preset {}", config.preset);
    let _ = writeln!(s, "mesh {} timesteps {} eps {}", config.mesh, config.steps, fmt17(config.eps_value()));
    let _ = writeln!(s, "status {status}");
    let _ = writeln!(s, "outer_iterations {}", outcome.records.len().saturating_sub(1));
    if let Some(r) = outcome.records.last() {
        let _ = writeln!(s, "final_cost {}", fmt17(r.cost));
        let _ = writeln!(s, "final_max_force {}", fmt17(r.max_force));
    }
    let q = outcome.q.as_slice();
    if let (Some(first), Some(last)) = (q.first(), q.last()) {
        let _ = writeln!(s, "force_left {} force_right {}", fmt17(*first), fmt17(*last));
    }
    let fmt_crack = |c: Option<(f64, f64)>| match c {
        Some((a, b)) => format!("{a} {b}"),
        None => "none".to_string(),
    };
    let _ = writeln!(s, "initial_crack {}", fmt_crack(outcome.initial_crack));
    let _ = writeln!(s, "final_crack {}", fmt_crack(outcome.final_crack));
    s
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub path: PathBuf,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}

pub const VERIFY_MAX_MESH: usize = 16;
pub const VERIFY_MAX_STEPS: usize = 8;

fn fd_detail(r: &FdReport) -> String {
    let order = match (r.exact, r.order) {
        (true, _) => "exact".to_string(),
        (false, Some(p)) => format!("order {p:.2}"),
        (false, None) => "order n/a".to_string(),
    };
    format!("min rel error {:.2e}, {order}", r.min_rel_error)
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Tolerances of the verification checks.
pub mod tolerances {
    pub const KERNEL: f64 = 1e-6;
    pub const ORDER: (f64, f64) = (1.7, 2.3);
    pub const FORWARD_RESIDUAL: f64 = 1e-12;
    pub const EQUIVALENCE: f64 = 1e-13;
    pub const DUALITY: f64 = 1e-10;
    pub const GRADIENT_FD: f64 = 1e-4;
    pub const HESSIAN_FD: f64 = 1e-3;
    pub const SYMMETRY: f64 = 1e-8;
    pub const PENALTY_RATIO: f64 = 10.0;
}

/// Kernel checks on a 2x2 mesh with random fields.
pub fn kernel_check_results(params: &ModelParams, seed: u64) -> Result<Vec<CheckResult>> {
    let disc = Discretization::with_cells(2)?;
    let (first, second) = fdcheck::kernel_checks(&disc, params, seed, &default_steps());
    Ok(vec![
        check(
            "kernel a'_u vs a",
            first.passes(tolerances::KERNEL, Some(tolerances::ORDER)),
            fd_detail(&first),
        ),
        check(
            "kernel a''_uu vs a'_u",
            second.passes(tolerances::KERNEL, Some(tolerances::ORDER)),
            fd_detail(&second),
        ),
    ])
}

/// Intact body without load: the state must stay `u = 0`, `phi = 1`.
pub fn trivial_forward_check(problem: &Problem) -> Result<CheckResult> {
    let mesh = problem.disc.mesh();
    let initial = FieldVector::from_phase_field(&vec![1.0; mesh.num_nodes()]);
    let (traj, report) = solve_forward(
        &problem.disc,
        &problem.params,
        &Control::zeros(mesh),
        &initial,
        &problem.times,
        &problem.newton,
    )?;
    let mut dev = 0.0f64;
    for s in &traj.states {
        for node in 0..mesh.num_nodes() {
            dev = dev
                .max(s.get(node, UX).abs())
                .max(s.get(node, UY).abs())
                .max((s.get(node, crate::mesh::PHI) - 1.0).abs());
        }
    }
    let residual = report.steps.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(check(
        "trivial forward exactness",
        dev == 0.0 && residual <= tolerances::FORWARD_RESIDUAL,
        format!("max deviation {dev:.2e}, max step residual {residual:.2e}"),
    ))
}

/// Monolithic against stepwise residuals on a random trajectory.
pub fn equivalence_check(problem: &Problem, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disc = &problem.disc;
    let states = (0..problem.times.len()).map(|_| random_field(disc, &mut rng, 1e-3)).collect();
    let traj = Trajectory::new(problem.times.clone(), states).expect("times validated");
    let q = random_control(disc, &mut rng, 1e3);
    let initial = random_field(disc, &mut rng, 1e-3);
    let gap = fdcheck::residual_equivalence(disc, &problem.params, &q, &traj, &initial);
    check(
        "space-time residual equivalence",
        gap <= tolerances::EQUIVALENCE,
        format!("max abs difference {gap:.2e}"),
    )
}

/// Penalty growth bound at two values of gamma.
pub fn penalty_scaling_check(config: &ExperimentConfig, q: &Control) -> Result<CheckResult> {
    let mut violations = Vec::new();
    for gamma in [1e3, 1e5] {
        let mut c = config.clone();
        c.gamma = gamma;
        let p = c.build_problem()?;
        let (_, report) = p.forward(q)?;
        violations.push(report.max_violation_sq());
    }
    let ratio = violations[0] / violations[1];
    Ok(check(
        "irreversibility penalty scaling",
        ratio >= tolerances::PENALTY_RATIO,
        format!(
            "max growth^2 {:.3e} (gamma 1e3) vs {:.3e} (gamma 1e5), ratio {ratio:.1}",
            violations[0], violations[1]
        ),
    ))
}

/// Runs all verification checks on a small configuration and writes `verification.txt`.
pub fn run_verification(config: &ExperimentConfig) -> Result<VerificationReport> {
    if config.mesh > VERIFY_MAX_MESH || config.steps > VERIFY_MAX_STEPS {
        return Err(Error::SizeLimit(format!(
            "mesh {} and timesteps {} must not exceed {VERIFY_MAX_MESH} and {VERIFY_MAX_STEPS}",
            config.mesh, config.steps
        )));
    }
    set_reproducible(config.reproducible);
    let problem = config.build_problem()?;
    let disc = &problem.disc;
    let mut checks = kernel_check_results(&problem.params, config.seed)?;
    checks.push(trivial_forward_check(&problem)?);
    checks.push(equivalence_check(&problem, config.seed));

    let q = config.check_control(disc.mesh());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let duality_dirs: Vec<Control> = (0..10).map(|_| random_control(disc, &mut rng, 1.0)).collect();
    let gaps = fdcheck::duality_check(&problem, &q, &duality_dirs)?;
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    checks.push(check(
        "gradient-tangent duality",
        worst <= tolerances::DUALITY,
        format!("max rel gap {worst:.2e} over {} directions", gaps.len()),
    ));

    let dirs = &duality_dirs[..3];
    let grad = fdcheck::fd_check_gradient(&problem, &q, dirs, &default_steps())?;
    for (k, r) in grad.iter().enumerate() {
        checks.push(check(
            &format!("reduced gradient FD (direction {k})"),
            r.passes(tolerances::GRADIENT_FD, None),
            fd_detail(r),
        ));
    }
    let hess = fdcheck::fd_check_hessian(&problem, &q, dirs, &default_steps())?;
    for (k, r) in hess.reports.iter().enumerate() {
        checks.push(check(
            &format!("Hessian-vector FD (direction {k})"),
            r.passes(tolerances::HESSIAN_FD, None),
            fd_detail(r),
        ));
    }
    checks.push(check(
        "Hessian symmetry",
        hess.symmetry <= tolerances::SYMMETRY,
        format!("max rel asymmetry {:.2e}", hess.symmetry),
    ));
    checks.push(penalty_scaling_check(config, &q)?);

    let out = config.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join("verification.txt");
    let report = VerificationReport { checks, path };
    write_file(&report.path, &report.render())?;
    Ok(report)
}

/// Gradient FD sweep for `directions` random directions at the check control.
pub fn run_gradcheck(config: &ExperimentConfig, directions: usize) -> Result<Vec<FdReport>> {
    set_reproducible(config.reproducible);
    let problem = config.build_problem()?;
    let q = config.check_control(problem.disc.mesh());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dirs: Vec<Control> = (0..directions).map(|_| random_control(&problem.disc, &mut rng, 1.0)).collect();
    fdcheck::fd_check_gradient(&problem, &q, &dirs, &default_steps())
}
