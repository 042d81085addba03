//! Command-line front end.
//!
//! Every subcommand writes under `--out` and finishes with `manifest.json`.
//! Exit status is 2 for configuration problems, 1 for failed checks or
//! numerical errors and 0 otherwise.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dipole::{self, Point};
use crate::error::{LabError, Result};
use crate::evolve::{self, SolverConfig};
use crate::field::{self, Grid2D, VorticityField};
use crate::modulation::{self, ModulationConfig, PerturbationShape, SweepConfig};
use crate::spectral::{self, CoercivityConfig, Directions, HamiltonianConfig, OpKind, Parity, RadialQuadrature};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lamblab", version, about = "Lamb-Chaplygin dipole laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "lamblab-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; falls back to LAMBLAB_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Smaller resolutions for a quick pass.
    #[arg(long, global = true)]
    pub fast: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Closed-form dipole sampled on a square grid.
    Dipole,
    /// Disk spectra of the mode operators against the closed forms.
    Spectra {
        /// Restrict to one angular mode.
        #[arg(long)]
        mode: Option<u32>,
        /// Radial Gauss nodes.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Galerkin spectrum of the linearized Hamiltonian operator.
    Hamiltonian,
    /// Coercivity constant under orthogonality constraints.
    Coercivity,
    /// Euler run from a configured initial vorticity.
    Evolve,
    /// Stability sweep over a perturbation family.
    Sweep,
    /// Identity and invariant battery.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Dipole => "dipole",
            Command::Spectra { .. } => "spectra",
            Command::Hamiltonian => "hamiltonian",
            Command::Coercivity => "coercivity",
            Command::Evolve => "evolve",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipoleRun {
    /// Samples cover `[-half_length, half_length]^2`.
    pub half_length: f64,
    /// Samples per axis, endpoints included.
    pub points: usize,
}

impl Default for DipoleRun {
    fn default() -> Self {
        Self { half_length: 2.0, points: 201 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraRun {
    pub nodes: usize,
    pub max_mode: u32,
    /// Eigenvalues reported per mode.
    pub count: usize,
    /// Threshold for counting negative eigenvalues.
    pub negative_tol: f64,
}

impl Default for SpectraRun {
    fn default() -> Self {
        Self { nodes: 400, max_mode: 8, count: 6, negative_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintSet {
    Unconstrained,
    Exact,
    SpectralGap,
    Windows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoercivityRun {
    pub nodes: Vec<usize>,
    pub max_mode: u32,
    pub n_theta: usize,
    pub constraints: Vec<ConstraintSet>,
    pub eps1: f64,
}

impl Default for CoercivityRun {
    fn default() -> Self {
        Self {
            nodes: vec![200, 400, 800],
            max_mode: 8,
            n_theta: 128,
            constraints: vec![ConstraintSet::Unconstrained, ConstraintSet::Exact, ConstraintSet::Windows],
            eps1: 0.05,
        }
    }
}

/// Initial vorticity for `evolve`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    Lamb,
    Family { shape: PerturbationShape, amplitude: f64 },
    /// Dipole plus `count` positive bumps in the upper half-plane drawn from `--seed`.
    RandomBumps { amplitude: f64, count: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveRun {
    pub solver: SolverConfig,
    pub initial: InitialCondition,
    /// Track modulation parameters on every output.
    #[serde(default)]
    pub track: bool,
    #[serde(default)]
    pub write_snapshots: bool,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default)]
    pub modulation: ModulationConfig,
    #[serde(default)]
    pub coercivity: Option<f64>,
}

fn default_eps1() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value <= tolerance }
    }

    /// Passes when `value > floor`.
    pub fn above(name: &str, value: f64, floor: f64) -> Self {
        Self { name: name.into(), value, tolerance: floor, passed: value > floor }
    }
}

struct Outcome {
    config: Value,
    outputs: Vec<String>,
    failed: bool,
}

pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(false) => EXIT_OK,
        Ok(true) => EXIT_FAILED,
        Err(e) => {
            eprintln!("lamblab: {}", single_line(&e.to_string()));
            exit_code(&e)
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exit_code(e: &LabError) -> i32 {
    match e {
        LabError::Config(_) | LabError::Json(_) => EXIT_CONFIG,
        _ => EXIT_FAILED,
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return if n > 0 { Ok(Some(n)) } else { Err(LabError::Config("--threads must be positive".into())) };
    }
    match std::env::var("LAMBLAB_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(LabError::Config(format!("LAMBLAB_THREADS must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Parses and validates the subcommand, then runs it.
/// Returns whether any check failed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let threads = thread_count(cli.common.threads)?;
    let raw = match &cli.common.config {
        Some(path) => Some(
            fs::read_to_string(path)
                .map_err(|e| LabError::Config(format!("cannot read config {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let job = Job::parse(&cli.command, raw.as_deref(), cli.common.fast)?;
    fs::create_dir_all(&cli.common.out)
        .map_err(|e| LabError::Config(format!("cannot create {}: {e}", cli.common.out.display())))?;

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| LabError::Config(format!("thread pool: {e}")))?
    };
    let start = Instant::now();
    let out = cli.common.out.as_path();
    let seed = cli.common.seed;
    let outcome = pool.install(|| job.run(out, seed))?;

    let manifest = json!({
        "command": cli.command.name(),
        "config": outcome.config,
        "seed": seed,
        "fast": cli.common.fast,
        "threads": pool.current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": outcome.outputs,
        "passed": !outcome.failed,
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(outcome.failed)
}

fn parse_or_default<T: DeserializeOwned + Default>(raw: Option<&str>) -> Result<T> {
    match raw {
        Some(s) => serde_json::from_str(s).map_err(|e| LabError::Config(e.to_string())),
        None => Ok(T::default()),
    }
}

fn parse_required<T: DeserializeOwned>(raw: Option<&str>, what: &str) -> Result<T> {
    let s = raw.ok_or_else(|| LabError::Config(format!("{what} needs --config <json>")))?;
    serde_json::from_str(s).map_err(|e| LabError::Config(e.to_string()))
}

fn check_grid(g: Grid2D) -> Result<()> {
    Grid2D::new(g.half_length, g.n).map(|_| ()).map_err(|e| LabError::Config(e.to_string()))
}

fn as_config<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        LabError::Config(_) => e,
        other => LabError::Config(other.to_string()),
    })
}

enum Job {
    Dipole(DipoleRun),
    Spectra(SpectraRun, Option<u32>),
    Hamiltonian(HamiltonianConfig),
    Coercivity(CoercivityRun),
    Evolve(Box<EvolveRun>),
    Sweep(Box<SweepConfig>),
    Verify(bool),
}

impl Job {
    fn parse(cmd: &Command, raw: Option<&str>, fast: bool) -> Result<Self> {
        Ok(match cmd {
            Command::Dipole => {
                let c: DipoleRun = parse_or_default(raw)?;
                if !(c.half_length > 0.0 && c.half_length.is_finite()) || c.points < 2 {
                    return Err(LabError::Config("dipole needs half_length > 0 and at least 2 points".into()));
                }
                Job::Dipole(c)
            }
            Command::Spectra { mode, n } => {
                let mut c: SpectraRun = parse_or_default(raw)?;
                if let Some(n) = n {
                    c.nodes = *n;
                }
                if c.nodes < 2 || c.count == 0 {
                    return Err(LabError::Config("spectra needs at least 2 nodes and a positive count".into()));
                }
                if c.count > c.nodes {
                    return Err(LabError::Config(format!("count {} exceeds the {} nodes", c.count, c.nodes)));
                }
                if c.count as u32 > crate::specfun::MAX_INDEX {
                    return Err(LabError::Config(format!("count is limited to {}", crate::specfun::MAX_INDEX)));
                }
                Job::Spectra(c, *mode)
            }
            Command::Hamiltonian => {
                let c = match raw {
                    Some(_) => parse_required(raw, "hamiltonian")?,
                    None if fast => HamiltonianConfig::new(8, 8),
                    None => HamiltonianConfig::new(12, 12),
                };
                if c.max_index == 0 || c.radial_nodes < 2 || c.angular_nodes < 4 {
                    return Err(LabError::Config("hamiltonian basis and quadrature must be non-empty".into()));
                }
                Job::Hamiltonian(c)
            }
            Command::Coercivity => {
                let mut c: CoercivityRun = parse_or_default(raw)?;
                if raw.is_none() && fast {
                    c.nodes = vec![200];
                }
                if c.nodes.is_empty() || c.nodes.iter().any(|&n| n < 2) || c.constraints.is_empty() {
                    return Err(LabError::Config("coercivity needs node counts >= 2 and a constraint set".into()));
                }
                if c.max_mode == 0 || c.n_theta < 4 {
                    return Err(LabError::Config("coercivity needs max_mode >= 1 and n_theta >= 4".into()));
                }
                Job::Coercivity(c)
            }
            Command::Evolve => {
                let c: EvolveRun = parse_required(raw, "evolve")?;
                check_grid(c.solver.grid)?;
                as_config(c.solver.validate())?;
                match c.initial {
                    InitialCondition::Family { amplitude, .. } | InitialCondition::RandomBumps { amplitude, .. }
                        if !(0.0..1.0).contains(&amplitude) =>
                    {
                        return Err(LabError::Config(format!("amplitude must lie in [0, 1), got {amplitude}")));
                    }
                    _ => {}
                }
                Job::Evolve(Box::new(c))
            }
            Command::Sweep => {
                let c: SweepConfig = parse_required(raw, "sweep")?;
                check_grid(c.solver.grid)?;
                as_config(c.solver.validate())?;
                if c.amplitudes.iter().any(|a| !(0.0..1.0).contains(a)) {
                    return Err(LabError::Config("amplitudes must lie in [0, 1)".into()));
                }
                if c.amplitudes.iter().filter(|&&a| a > 0.0).count() < 2 {
                    return Err(LabError::Config("a sweep needs at least two nonzero amplitudes".into()));
                }
                Job::Sweep(Box::new(c))
            }
            Command::Verify => {
                if raw.is_some() {
                    return Err(LabError::Config("verify takes no config".into()));
                }
                Job::Verify(fast)
            }
        })
    }

    fn run(&self, out: &Path, seed: u64) -> Result<Outcome> {
        match self {
            Job::Dipole(c) => run_dipole(c, out),
            Job::Spectra(c, mode) => run_spectra(c, *mode, out),
            Job::Hamiltonian(c) => run_hamiltonian(c, out),
            Job::Coercivity(c) => run_coercivity(c, out),
            Job::Evolve(c) => run_evolve(c, out, seed),
            Job::Sweep(c) => run_sweep(c, out),
            Job::Verify(fast) => run_verify(*fast, out),
        }
    }
}

fn write_json(out: &Path, name: &str, v: &impl Serialize, outputs: &mut Vec<String>) -> Result<()> {
    fs::write(out.join(name), serde_json::to_string_pretty(v)?)?;
    outputs.push(name.into());
    Ok(())
}

fn write_text(out: &Path, name: &str, s: &str, outputs: &mut Vec<String>) -> Result<()> {
    fs::write(out.join(name), s)?;
    outputs.push(name.into());
    Ok(())
}

fn run_dipole(c: &DipoleRun, out: &Path) -> Result<Outcome> {
    let mut csv = String::from("x1,x2,omega,psi_moving,err\n");
    let step = 2.0 * c.half_length / (c.points - 1) as f64;
    for i in 0..c.points {
        let x2 = -c.half_length + step * i as f64;
        for j in 0..c.points {
            let p: Point = [-c.half_length + step * j as f64, x2];
            let _ = writeln!(
                csv,
                "{:.10e},{:.10e},{:.16e},{:.16e},{:.16e}",
                p[0],
                p[1],
                dipole::omega_lamb(p),
                dipole::psi_lamb_moving(p),
                dipole::err_lamb(p)
            );
        }
    }
    let mut outputs = Vec::new();
    write_text(out, "dipole.csv", &csv, &mut outputs)?;
    let meta = json!({
        "c_L": dipole::constants().c_l,
        "constants": dipole::constants(),
        "invariants": dipole::exact_invariants(),
    });
    write_json(out, "dipole.json", &meta, &mut outputs)?;
    Ok(Outcome { config: serde_json::to_value(c)?, outputs, failed: false })
}

#[derive(Debug, Serialize)]
struct ModeSpectrum {
    m: u32,
    parity: Parity,
    eigenvalues: Vec<f64>,
    targets: Vec<f64>,
    residuals: Vec<f64>,
}

fn mode_spectrum(m: u32, parity: Parity, count: usize, quad: &RadialQuadrature) -> Result<ModeSpectrum> {
    let op = spectral::assemble_mode(OpKind::Ltilde, m, parity, quad)?;
    let eigenvalues: Vec<f64> = spectral::mode_eigs(&op, count).into_iter().map(|p| p.value).collect();
    let targets = (1..=eigenvalues.len() as u32).map(|j| spectral::ltilde_closed_form(m, j)).collect::<Result<Vec<_>>>()?;
    let residuals = eigenvalues.iter().zip(&targets).map(|(a, b)| (a - b).abs()).collect();
    Ok(ModeSpectrum { m, parity, eigenvalues, targets, residuals })
}

fn run_spectra(c: &SpectraRun, mode: Option<u32>, out: &Path) -> Result<Outcome> {
    let quad = RadialQuadrature::gauss(c.nodes)?;
    let modes: Vec<u32> = match mode {
        Some(m) => vec![m],
        None => (0..=c.max_mode).collect(),
    };
    let mut list = Vec::new();
    for m in modes {
        // the sin copy of a mode carries the same matrix
        list.push(mode_spectrum(m, Parity::Cos, c.count, &quad)?);
    }
    let max_residual = list.iter().flat_map(|s| s.residuals.iter().copied()).fold(0.0, f64::max);
    let negative = if c.max_mode >= 8 { Some(spectral::count_negative_L(c.max_mode, &quad, c.negative_tol)?) } else { None };
    let doc = json!({
        "nodes": c.nodes,
        "modes": list,
        "max_residual": max_residual,
        "negative_count": negative,
        "negative_count_odd": spectral::count_negative_odd(c.max_mode, &quad, c.negative_tol)?,
    });
    let mut outputs = Vec::new();
    write_json(out, "spectra.json", &doc, &mut outputs)?;
    let mut config = serde_json::to_value(c)?;
    config["mode"] = json!(mode);
    Ok(Outcome { config, outputs, failed: false })
}

fn run_hamiltonian(c: &HamiltonianConfig, out: &Path) -> Result<Outcome> {
    let h = spectral::hamiltonian_spectrum(c)?;
    let mut csv = String::from("re,im\n");
    for l in &h.eigenvalues {
        let _ = writeln!(csv, "{:.16e},{:.16e}", l.re, l.im);
    }
    let mut outputs = Vec::new();
    write_text(out, "hamiltonian.csv", &csv, &mut outputs)?;
    write_json(out, "hamiltonian.json", &h, &mut outputs)?;
    Ok(Outcome { config: serde_json::to_value(c)?, outputs, failed: false })
}

fn directions(set: ConstraintSet, eps1: f64) -> Directions<'static> {
    match set {
        ConstraintSet::Unconstrained => Directions::Unconstrained,
        ConstraintSet::Exact => Directions::Exact,
        ConstraintSet::SpectralGap => Directions::SpectralGap,
        ConstraintSet::Windows => Directions::Windows { eps1 },
    }
}

fn run_coercivity(c: &CoercivityRun, out: &Path) -> Result<Outcome> {
    let cfg = CoercivityConfig { max_mode: c.max_mode, n_theta: c.n_theta };
    let mut rows = Vec::new();
    for &n in &c.nodes {
        let quad = RadialQuadrature::gauss(n)?;
        for &set in &c.constraints {
            let a = spectral::coercivity_constant(&directions(set, c.eps1), &quad, &cfg)?;
            rows.push(json!({ "nodes": n, "constraints": set, "constant": a }));
        }
    }
    let doc = json!({ "results": rows, "max_mode": c.max_mode, "n_theta": c.n_theta, "eps1": c.eps1 });
    let mut outputs = Vec::new();
    write_json(out, "coercivity.json", &doc, &mut outputs)?;
    Ok(Outcome { config: serde_json::to_value(c)?, outputs, failed: false })
}

/// Dipole plus `count` positive bumps placed in the upper half-plane.
pub fn random_bumps(grid: Grid2D, amplitude: f64, count: usize, seed: u64) -> Result<VorticityField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peak = dipole::omega_lamb([0.0, 0.5]);
    let bumps: Vec<(Point, f64, f64)> = (0..count)
        .map(|_| {
            let r = rng.gen_range(0.15..0.4);
            let c = [rng.gen_range(-1.5..1.5), rng.gen_range(r + 0.05..1.8)];
            (c, r, rng.gen_range(0.2..1.0))
        })
        .collect();
    let lobe = move |p: Point| -> f64 {
        bumps
            .iter()
            .map(|&(c, r, h)| {
                let q = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (r * r);
                if q < 1.0 {
                    h * (1.0 - 1.0 / (1.0 - q)).exp()
                } else {
                    0.0
                }
            })
            .sum()
    };
    let w = VorticityField::sample(grid, true, |p| {
        dipole::omega_lamb(p) + amplitude * peak * (lobe(p) - lobe([p[0], -p[1]]))
    });
    w.check_support()?;
    Ok(w)
}

fn initial_field(init: &InitialCondition, grid: Grid2D, seed: u64) -> Result<VorticityField> {
    match *init {
        InitialCondition::Lamb => Ok(VorticityField::lamb(grid)),
        InitialCondition::Family { shape, amplitude } => modulation::perturbed_dipole(shape, amplitude, grid),
        InitialCondition::RandomBumps { amplitude, count } => random_bumps(grid, amplitude, count, seed),
    }
}

fn coercivity_or_default(given: Option<f64>, eps1: f64) -> Result<f64> {
    match given {
        Some(a) => Ok(a),
        None => spectral::coercivity_constant(
            &Directions::Windows { eps1 },
            &RadialQuadrature::gauss(200)?,
            &CoercivityConfig::default(),
        ),
    }
}

fn run_evolve(c: &EvolveRun, out: &Path, seed: u64) -> Result<Outcome> {
    let grid = c.solver.grid;
    let omega0 = initial_field(&c.initial, grid, seed)?;
    let mut outputs = Vec::new();
    let mut csv = String::from("t,step,energy,enstrophy,impulse,l2_norm,max_abs,upper_undershoot,odd_defect,center_x1,courant\n");
    let tracking = if c.track {
        let windows = modulation::build_windows(c.eps1, grid)?;
        let reference = modulation::LambReference::new(grid);
        let a = coercivity_or_default(c.coercivity, c.eps1)?;
        Some((windows, reference, a))
    } else {
        None
    };
    let mut tracker = tracking
        .as_ref()
        .map(|(w, r, a)| modulation::Tracker::new(w, r, c.modulation, *a, if c.solver.comoving { 1.0 } else { 0.0 }));
    let mut snap = 0usize;
    let mut snap_names = Vec::new();
    evolve::run_with(&omega0, &c.solver, |w, d| {
        let _ = writeln!(
            csv,
            "{:.10e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            d.t,
            d.step,
            d.energy,
            d.enstrophy,
            d.impulse,
            d.l2_norm,
            d.max_abs,
            d.upper_undershoot,
            d.odd_defect,
            d.center_x1,
            d.courant
        );
        if let Some(t) = tracker.as_mut() {
            t.push(w, d)?;
        }
        if c.write_snapshots {
            let stem = format!("snapshot_{snap:04}");
            field::write_field(&out.join(&stem), w)?;
            snap_names.push(format!("{stem}.bin"));
            snap_names.push(format!("{stem}.json"));
        }
        snap += 1;
        Ok(())
    })?;
    write_text(out, "diagnostics.csv", &csv, &mut outputs)?;
    outputs.extend(snap_names);
    if let Some(t) = tracker {
        let report = t.finish();
        write_text(out, "track.csv", &report.csv(), &mut outputs)?;
        write_json(out, "track_summary.json", &report.summary, &mut outputs)?;
    }
    Ok(Outcome { config: serde_json::to_value(c)?, outputs, failed: false })
}

fn run_sweep(c: &SweepConfig, out: &Path) -> Result<Outcome> {
    let outcome = modulation::run_sweep(c)?;
    let mut outputs = Vec::new();
    for (k, run) in outcome.runs.iter().enumerate() {
        write_text(out, &format!("run_{k:02}.csv"), &run.report.csv(), &mut outputs)?;
    }
    let runs: Vec<Value> = outcome
        .runs
        .iter()
        .enumerate()
        .map(|(k, r)| {
            json!({
                "file": format!("run_{k:02}.csv"),
                "amplitude": r.amplitude,
                "drift": { "energy": r.drift[0], "enstrophy": r.drift[1], "impulse": r.drift[2] },
                "summary": r.report.summary,
            })
        })
        .collect();
    let doc = json!({ "summary": outcome.summary, "runs": runs });
    write_json(out, "summary.json", &doc, &mut outputs)?;
    Ok(Outcome { config: serde_json::to_value(c)?, outputs, failed: false })
}

/// The verify battery. `fast` trims the grid and basis sizes.
pub fn verify_checks(fast: bool) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let k = dipole::constants();
    let c2 = k.c_l * k.c_l;

    // dipole relations
    let pts: Vec<Point> = (0..400)
        .map(|i| {
            let t = i as f64 * 0.7853;
            let r = 0.01 + 1.8 * ((i * 37) % 400) as f64 / 400.0;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    checks.push(Check::at_most("algebraic relation residual", dipole::check_algebraic_relation(&pts), 1e-10));
    let odd = pts.iter().map(|&p| (dipole::omega_lamb(p) + dipole::omega_lamb([p[0], -p[1]])).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("dipole oddness", odd, 0.0));

    let n = if fast { 256 } else { 512 };
    let w = VorticityField::lamb(Grid2D::new(6.0, n)?);
    let ex = dipole::exact_invariants();
    let tol = 1e-3;
    checks.push(Check::at_most("energy vs pi", (field::energy(&w)? / ex.energy - 1.0).abs(), tol));
    checks.push(Check::at_most("enstrophy vs pi c^2", (field::enstrophy(&w) / ex.enstrophy - 1.0).abs(), tol));
    checks.push(Check::at_most("impulse vs pi", (field::impulse(&w) / ex.impulse - 1.0).abs(), tol));

    // eigenvalue formulas
    let quad = RadialQuadrature::gauss(400)?;
    let mut resid = 0.0f64;
    for m in 0..=5 {
        let s = mode_spectrum(m, Parity::Cos, 6, &quad)?;
        resid = s.residuals.iter().copied().fold(resid, f64::max);
    }
    checks.push(Check::at_most("closed-form spectrum residual", resid, 1e-6));
    let neg = spectral::count_negative_L(8, &quad, 1e-8)? as f64;
    checks.push(Check::at_most("negative count minus 3", (neg - 3.0).abs(), 0.0));

    // dipole identities
    let id = spectral::verify_identities(&quad, 64)?;
    checks.push(Check::at_most("operator identity residual", id.max_residual(), 1e-6));
    checks.push(Check::at_most("form on omega_L vs -2 pi c^2", (id.form_omega / (-2.0 * PI * c2) - 1.0).abs(), 1e-4));
    checks.push(Check::at_most("form on d2 omega_L", id.form_d2_omega.abs(), 1e-6));
    checks.push(Check::at_most(
        "rotation form vs 1D quadrature",
        (id.form_rotation / id.form_rotation_reference - 1.0).abs(),
        1e-4,
    ));
    checks.push(Check::at_most("odd-class lambda_1", (id.lambda_1 - id.lambda_1_target).abs(), 1e-8));

    // coercivity
    let cfg = CoercivityConfig::default();
    let exact = spectral::coercivity_constant(&Directions::Exact, &quad, &cfg)?;
    let windows = spectral::coercivity_constant(&Directions::Windows { eps1: 0.05 }, &quad, &cfg)?;
    checks.push(Check::above("coercivity, exact constraints", exact, 0.0));
    checks.push(Check::above("coercivity, windowed constraints", windows, 0.0));

    // hamiltonian
    let h = spectral::hamiltonian_spectrum(&if fast { HamiltonianConfig::new(8, 8) } else { HamiltonianConfig::new(12, 12) })?;
    checks.push(Check::at_most("hamiltonian jordan residual", h.jordan_residual, 1e-5));
    if !fast {
        checks.push(Check::at_most("hamiltonian max|Re|/max|lambda|", h.ratio, 1e-6));
    }

    // conservation smoke run
    let (n, t_end, steps) = if fast { (64, 1.0, 100) } else { (128, 2.0, 400) };
    let grid = Grid2D::new(6.0, n)?;
    let mut scfg = SolverConfig::new(grid, t_end / steps as f64, t_end);
    scfg.output_stride = steps;
    scfg.drift_tol = f64::INFINITY;
    let w0 = modulation::perturbed_dipole(PerturbationShape::BumpInB, 0.02, grid)?;
    let traj = evolve::run(&w0, &scfg)?;
    let (first, last) = (traj.diagnostics[0], traj.diagnostics[traj.diagnostics.len() - 1]);
    let drift = [
        (last.energy / first.energy - 1.0).abs(),
        (last.enstrophy / first.enstrophy - 1.0).abs(),
        (last.impulse / first.impulse - 1.0).abs(),
    ];
    let smoke_tol = if fast { 1e-2 } else { 1e-3 };
    checks.push(Check::at_most("smoke run energy drift", drift[0], smoke_tol));
    checks.push(Check::at_most("smoke run enstrophy drift", drift[1], smoke_tol));
    checks.push(Check::at_most("smoke run impulse drift", drift[2], smoke_tol));
    Ok(checks)
}

fn run_verify(fast: bool, out: &Path) -> Result<Outcome> {
    let checks = verify_checks(fast)?;
    for c in &checks {
        println!("{} {} ({:.3e} vs {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    let failed = checks.iter().any(|c| !c.passed);
    let mut outputs = Vec::new();
    write_json(out, "verify.json", &json!({ "fast": fast, "checks": checks }), &mut outputs)?;

    // inputs for the plotting side
    let sub = |name: &str| -> Result<PathBuf> {
        let p = out.join(name);
        fs::create_dir_all(&p)?;
        Ok(p)
    };
    let mut nested = |name: &str, o: Outcome| {
        outputs.extend(o.outputs.into_iter().map(|f| format!("{name}/{f}")));
    };
    let dip = DipoleRun { half_length: 2.0, points: if fast { 121 } else { 201 } };
    nested("dipole", run_dipole(&dip, &sub("dipole")?)?);
    let sp = SpectraRun { nodes: if fast { 200 } else { 400 }, ..SpectraRun::default() };
    nested("spectra", run_spectra(&sp, None, &sub("spectra")?)?);
    let hc = if fast { HamiltonianConfig::new(8, 8) } else { HamiltonianConfig::new(12, 12) };
    nested("hamiltonian", run_hamiltonian(&hc, &sub("hamiltonian")?)?);
    Ok(Outcome { config: json!({ "fast": fast }), outputs, failed })
}
