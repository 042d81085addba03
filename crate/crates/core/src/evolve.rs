//! Pseudo-spectral time integration of the vorticity equation.
//!
//! The state is kept as a truncated spectrum on the periodic box. Gradients
//! are spectral; the velocity is `u = (-G * ∂2ω, G * ∂1ω)` with `G` the
//! free-space kernel applied by domain doubling, so no periodic images enter
//! the Biot-Savart law. Products are formed on the grid from truncated
//! inputs and truncated again. The truncation is either a sharp cutoff or
//! a sharp cutoff followed by an exponential filter after every step.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dipole::Point;
use crate::error::{LabError, Result};
use crate::fft2::{wavenumber, Fft2};
use crate::field::{self, FreeSpacePoisson, Grid2D, VorticityField};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: Grid2D,
    pub dt: f64,
    pub t_end: f64,
    /// Retained fraction of the wavenumber range.
    #[serde(default = "default_dealias")]
    pub dealias: f64,
    #[serde(default)]
    pub truncation: Truncation,
    /// Integrate in the frame moving with unit speed along `x1`.
    #[serde(default = "default_true")]
    pub comoving: bool,
    /// Steps between diagnostics and snapshots.
    pub output_stride: usize,
    /// Largest tolerated relative drift of E, K and I.
    #[serde(default = "default_drift_tol")]
    pub drift_tol: f64,
}

/// How modes near the cutoff are treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    /// Modes with `|k| >= dealias * k_nyquist` are zeroed.
    Sharp,
    /// Sharp cutoff plus the factor `exp(-strength ((|k1|/k_c)^order + (|k2|/k_c)^order))`
    /// after each step, `k_c = dealias * k_nyquist`.
    Exponential { strength: f64, order: f64 },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Exponential { strength: 36.0, order: 36.0 }
    }
}

impl Truncation {
    fn validate(&self) -> Result<()> {
        if let Truncation::Exponential { strength, order } = *self {
            if !(strength > 0.0 && strength.is_finite() && order >= 2.0 && order.is_finite()) {
                return Err(LabError::Config(format!(
                    "filter needs strength > 0 and order >= 2, got {strength} and {order}"
                )));
            }
        }
        Ok(())
    }
}

fn default_dealias() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_drift_tol() -> f64 {
    1e-4
}

impl SolverConfig {
    pub fn new(grid: Grid2D, dt: f64, t_end: f64) -> Self {
        Self {
            grid,
            dt,
            t_end,
            dealias: default_dealias(),
            truncation: Truncation::default(),
            comoving: true,
            output_stride: 1,
            drift_tol: default_drift_tol(),
        }
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.t_end > 0.0) {
            return Err(LabError::Config(format!("dt and t_end must be positive, got {} and {}", self.dt, self.t_end)));
        }
        let ratio = self.t_end / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(LabError::Config(format!("t_end / dt = {ratio} is not a whole number of steps")));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if !(self.dealias > 0.0 && self.dealias <= 1.0) {
            return Err(LabError::Config(format!("dealias fraction must lie in (0, 1], got {}", self.dealias)));
        }
        self.truncation.validate()?;
        if self.output_stride == 0 {
            return Err(LabError::Config("output_stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: usize,
    pub energy: f64,
    pub enstrophy: f64,
    pub impulse: f64,
    pub l2_norm: f64,
    pub max_abs: f64,
    /// Most negative upper-half value relative to `max |ω|`.
    pub upper_undershoot: f64,
    pub odd_defect: f64,
    /// Lab-frame `x1` of the centre of vorticity in the upper half-plane.
    pub center_x1: f64,
    pub courant: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<VorticityField>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Speed of the computational frame along `x1` (0 or 1).
    pub frame_speed: f64,
}

/// Background flow for the linearized problem.
struct Base {
    u1: Vec<f64>,
    u2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

/// Spectral operator for one grid and truncation.
pub struct EulerSolver {
    grid: Grid2D,
    comoving: bool,
    fft: Fft2,
    poisson: Arc<FreeSpacePoisson>,
    /// Physical wavenumber of each FFT index.
    k: Vec<f64>,
    keep: Vec<bool>,
    /// Per-axis filter factor; the 2D factor is the product.
    damp: Option<Vec<f64>>,
    base: Option<Base>,
}

impl std::fmt::Debug for EulerSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EulerSolver").field("grid", &self.grid).field("comoving", &self.comoving).finish()
    }
}

/// Per-evaluation buffers.
struct Work {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
}

impl Work {
    fn new(len: usize) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self { a: vec![z; len], b: vec![z; len], c: vec![z; len] }
    }
}

impl EulerSolver {
    /// Sharp cutoff only.
    pub fn new(grid: Grid2D, dealias: f64, comoving: bool) -> Self {
        Self::with_truncation(grid, dealias, Truncation::Sharp, comoving)
    }

    pub fn with_truncation(grid: Grid2D, dealias: f64, truncation: Truncation, comoving: bool) -> Self {
        let n = grid.n;
        let scale = std::f64::consts::PI / grid.half_length;
        let kmax = dealias * n as f64 / 2.0;
        let k = (0..n).map(|i| wavenumber(i, n) * scale).collect();
        let keep = (0..n).map(|i| wavenumber(i, n).abs() < kmax && 2 * i != n).collect();
        let damp = match truncation {
            Truncation::Sharp => None,
            Truncation::Exponential { strength, order } => Some(
                (0..n).map(|i| (-strength * (wavenumber(i, n).abs() / kmax).powf(order)).exp()).collect(),
            ),
        };
        Self { grid, comoving, fft: Fft2::new(n), poisson: field::poisson_solver(grid), k, keep, damp, base: None }
    }

    fn from_config(cfg: &SolverConfig) -> Self {
        Self::with_truncation(cfg.grid, cfg.dealias, cfg.truncation, cfg.comoving)
    }

    /// Solver for perturbations of `base`; always comoving.
    pub fn linearized(grid: Grid2D, dealias: f64, truncation: Truncation, base: &VorticityField) -> Self {
        let mut s = Self::with_truncation(grid, dealias, truncation, true);
        let hat = s.to_spectrum(base);
        let mut w = Work::new(grid.len());
        let (d1, d2) = s.gradients(&hat, &mut w);
        let (u1, u2) = s.velocity(&d1, &d2, &mut w);
        s.base = Some(Base { u1, u2, d1, d2 });
        s
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    fn mask(&self, idx: usize) -> bool {
        let n = self.grid.n;
        self.keep[idx / n] && self.keep[idx % n]
    }

    /// Truncated (and once filtered) spectrum in the transposed layout `[k1 * n + k2]`.
    pub fn to_spectrum(&self, w: &VorticityField) -> Vec<Complex64> {
        let mut hat: Vec<Complex64> = w.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut hat, self.grid.n);
        for (idx, z) in hat.iter_mut().enumerate() {
            if !self.mask(idx) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        self.damp(&mut hat);
        hat
    }

    fn damp(&self, hat: &mut [Complex64]) {
        if let Some(damp) = &self.damp {
            let n = self.grid.n;
            for (idx, z) in hat.iter_mut().enumerate() {
                *z *= damp[idx / n] * damp[idx % n];
            }
        }
    }

    pub fn to_field(&self, hat: &[Complex64], odd: bool, time: f64) -> VorticityField {
        let mut buf = hat.to_vec();
        self.fft.inverse(&mut buf, self.grid.n);
        let s = 1.0 / self.grid.len() as f64;
        VorticityField { grid: self.grid, values: buf.iter().map(|z| z.re * s).collect(), odd, time }
    }

    fn gradients(&self, hat: &[Complex64], w: &mut Work) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n;
        // ∂1ω + i ∂2ω in one inverse transform
        for (idx, z) in w.a.iter_mut().enumerate() {
            *z = if self.mask(idx) {
                let (k1, k2) = (self.k[idx / n], self.k[idx % n]);
                hat[idx] * Complex64::new(-k2, k1)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        self.fft.inverse(&mut w.a, n);
        let s = 1.0 / self.grid.len() as f64;
        (w.a.iter().map(|z| z.re * s).collect(), w.a.iter().map(|z| z.im * s).collect())
    }

    fn velocity(&self, d1: &[f64], d2: &[f64], w: &mut Work) -> (Vec<f64>, Vec<f64>) {
        for (z, (a, b)) in w.b.iter_mut().zip(d2.iter().zip(d1)) {
            *z = Complex64::new(*a, *b);
        }
        self.poisson.convolve_complex(&w.b, &mut w.c);
        (w.c.iter().map(|z| -z.re).collect(), w.c.iter().map(|z| z.im).collect())
    }

    fn finish(&self, hat: &[Complex64], product: impl Iterator<Item = f64>, w: &mut Work) -> Vec<Complex64> {
        let n = self.grid.n;
        for (z, p) in w.a.iter_mut().zip(product) {
            *z = Complex64::new(p, 0.0);
        }
        self.fft.forward(&mut w.a, n);
        let mut out = vec![Complex64::new(0.0, 0.0); hat.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            if self.mask(idx) {
                *o = w.a[idx];
                if self.comoving {
                    *o += hat[idx] * Complex64::new(0.0, self.k[idx / n]);
                }
            }
        }
        out
    }

    fn rhs_hat(&self, hat: &[Complex64], w: &mut Work) -> Vec<Complex64> {
        let (d1, d2) = self.gradients(hat, w);
        let (u1, u2) = self.velocity(&d1, &d2, w);
        match &self.base {
            None => {
                let product = (0..d1.len()).map(|k| -(u1[k] * d1[k] + u2[k] * d2[k]));
                self.finish(hat, product, w)
            }
            Some(b) => {
                let product =
                    (0..d1.len()).map(|k| -(b.u1[k] * d1[k] + b.u2[k] * d2[k] + u1[k] * b.d1[k] + u2[k] * b.d2[k]));
                self.finish(hat, product, w)
            }
        }
    }

    /// Largest advecting speed on the grid (in the computational frame).
    pub fn max_speed(&self, hat: &[Complex64]) -> f64 {
        let mut w = Work::new(self.grid.len());
        let (d1, d2) = self.gradients(hat, &mut w);
        let (u1, u2) = self.velocity(&d1, &d2, &mut w);
        let shift = if self.comoving { 1.0 } else { 0.0 };
        match &self.base {
            None => (0..u1.len()).map(|k| (u1[k] - shift).hypot(u2[k])).fold(0.0, f64::max),
            Some(b) => (0..u1.len()).map(|k| (b.u1[k] - shift).hypot(b.u2[k])).fold(0.0, f64::max),
        }
    }

    fn rk4(&self, hat: &[Complex64], dt: f64, w: &mut Work) -> Vec<Complex64> {
        let axpy = |a: &[Complex64], s: f64, b: &[Complex64]| -> Vec<Complex64> {
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        };
        let k1 = self.rhs_hat(hat, w);
        let k2 = self.rhs_hat(&axpy(hat, 0.5 * dt, &k1), w);
        let k3 = self.rhs_hat(&axpy(hat, 0.5 * dt, &k2), w);
        let k4 = self.rhs_hat(&axpy(hat, dt, &k3), w);
        let mut out: Vec<Complex64> =
            (0..hat.len()).map(|i| hat[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0)).collect();
        self.damp(&mut out);
        out
    }

    /// Advances a spectral state by `steps` steps of size `dt` (which may be negative).
    pub fn advance(&self, hat: &[Complex64], dt: f64, steps: usize) -> Vec<Complex64> {
        let mut w = Work::new(self.grid.len());
        let mut cur = hat.to_vec();
        for _ in 0..steps {
            cur = self.rk4(&cur, dt, &mut w);
        }
        cur
    }

    /// Time derivative on the grid.
    pub fn rhs(&self, omega: &VorticityField, dt: f64) -> Result<VorticityField> {
        let hat = self.to_spectrum(omega);
        let courant = self.max_speed(&hat) * dt / self.grid.spacing();
        if courant > 1.0 {
            return Err(LabError::Cfl { courant, limit: 1.0 });
        }
        let mut w = Work::new(self.grid.len());
        Ok(self.to_field(&self.rhs_hat(&hat, &mut w), omega.odd, omega.time))
    }

    pub fn step_rk4(&self, omega: &VorticityField, dt: f64) -> VorticityField {
        let hat = self.to_spectrum(omega);
        self.to_field(&self.advance(&hat, dt, 1), omega.odd, omega.time + dt)
    }
}

/// `-u·∇ω` (plus `∂1ω` in the moving frame) with the default truncation.
pub fn rhs(omega: &VorticityField, dt: f64, comoving: bool) -> Result<VorticityField> {
    omega.validate()?;
    omega.check_support()?;
    EulerSolver::with_truncation(omega.grid, default_dealias(), Truncation::default(), comoving).rhs(omega, dt)
}

pub fn step_rk4(omega: &VorticityField, dt: f64, comoving: bool) -> VorticityField {
    EulerSolver::with_truncation(omega.grid, default_dealias(), Truncation::default(), comoving).step_rk4(omega, dt)
}

fn diagnostics(solver: &EulerSolver, w: &VorticityField, step: usize, courant: f64, frame_shift: f64) -> DiagnosticsRecord {
    let g = w.grid;
    let psi = field::stream_unchecked(w);
    let max_abs = w.max_abs();
    let (mut mass, mut moment, mut low) = (0.0, 0.0, 0.0f64);
    for k in g.len() / 2..g.len() {
        let v = w.values[k];
        let p: Point = g.point(k);
        mass += v;
        moment += v * p[0];
        low = low.min(v);
    }
    let l2 = field::l2_norm_sq(w);
    let _ = solver;
    DiagnosticsRecord {
        t: w.time,
        step,
        energy: field::energy_with_stream(w, &psi),
        enstrophy: 0.5 * l2,
        impulse: field::impulse(w),
        l2_norm: l2.sqrt(),
        max_abs,
        upper_undershoot: if max_abs > 0.0 { low / max_abs } else { 0.0 },
        odd_defect: if w.odd { w.odd_defect() } else { 0.0 },
        center_x1: if mass != 0.0 { moment / mass + frame_shift } else { f64::NAN },
        courant,
    }
}

fn relative_drift(now: f64, start: f64) -> f64 {
    if start == 0.0 {
        now.abs()
    } else {
        ((now - start) / start).abs()
    }
}

fn integrate(
    solver: &EulerSolver,
    omega0: &VorticityField,
    cfg: &SolverConfig,
    check_drift: bool,
    mut observe: impl FnMut(&VorticityField, &DiagnosticsRecord) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if omega0.grid != cfg.grid {
        return Err(LabError::Config("initial field grid differs from the solver grid".into()));
    }
    omega0.validate()?;
    omega0.check_support()?;
    let steps = cfg.steps()?;
    let h = cfg.grid.spacing();
    let frame = if solver.comoving { 1.0 } else { 0.0 };
    let mut hat = solver.to_spectrum(omega0);
    let speed = solver.max_speed(&hat);
    if cfg.dt > 0.5 * h / speed {
        return Err(LabError::Cfl { courant: speed * cfg.dt / h, limit: 0.5 });
    }
    let t0 = omega0.time;
    let first = solver.to_field(&hat, omega0.odd, t0);
    let d0 = diagnostics(solver, &first, 0, speed * cfg.dt / h, frame * t0);
    observe(&first, &d0)?;
    let mut w = Work::new(cfg.grid.len());
    let mut step = 0;
    while step < steps {
        let chunk = cfg.output_stride.min(steps - step);
        for _ in 0..chunk {
            hat = solver.rk4(&hat, cfg.dt, &mut w);
        }
        step += chunk;
        let t = t0 + step as f64 * cfg.dt;
        let snap = solver.to_field(&hat, omega0.odd, t);
        let courant = solver.max_speed(&hat) * cfg.dt / h;
        if courant > 1.0 {
            return Err(LabError::Cfl { courant, limit: 1.0 });
        }
        let d = diagnostics(solver, &snap, step, courant, frame * t);
        if check_drift {
            for (name, now, start) in [
                ("energy", d.energy, d0.energy),
                ("enstrophy", d.enstrophy, d0.enstrophy),
                ("impulse", d.impulse, d0.impulse),
            ] {
                let drift = relative_drift(now, start);
                if drift > cfg.drift_tol {
                    return Err(LabError::ConservationDrift { quantity: name, drift, time: t });
                }
            }
        }
        observe(&snap, &d)?;
    }
    Ok(())
}

/// Nonlinear run, streaming each output to `observe`.
pub fn run_with(
    omega0: &VorticityField,
    cfg: &SolverConfig,
    observe: impl FnMut(&VorticityField, &DiagnosticsRecord) -> Result<()>,
) -> Result<()> {
    let solver = EulerSolver::from_config(cfg);
    integrate(&solver, omega0, cfg, true, observe)
}

pub fn run(omega0: &VorticityField, cfg: &SolverConfig) -> Result<Trajectory> {
    let mut traj = Trajectory { snapshots: Vec::new(), diagnostics: Vec::new(), frame_speed: if cfg.comoving { 1.0 } else { 0.0 } };
    run_with(omega0, cfg, |w, d| {
        traj.snapshots.push(w.clone());
        traj.diagnostics.push(*d);
        Ok(())
    })?;
    Ok(traj)
}

/// Linearized flow about the dipole in the moving frame.
pub fn run_linearized(h0: &VorticityField, cfg: &SolverConfig) -> Result<Trajectory> {
    let base = VorticityField::lamb(cfg.grid);
    let solver = EulerSolver::linearized(cfg.grid, cfg.dealias, cfg.truncation, &base);
    let mut traj = Trajectory { snapshots: Vec::new(), diagnostics: Vec::new(), frame_speed: 1.0 };
    integrate(&solver, h0, cfg, false, |w, d| {
        traj.snapshots.push(w.clone());
        traj.diagnostics.push(*d);
        Ok(())
    })?;
    Ok(traj)
}

/// Runs to `t_end`, integrates back with reversed time and returns
/// `||ω_back - ω_0|| / ||ω_0||` against the truncated initial field.
pub fn time_reversal_error(omega0: &VorticityField, cfg: &SolverConfig) -> Result<f64> {
    cfg.validate()?;
    let steps = cfg.steps()?;
    let solver = EulerSolver::from_config(cfg);
    let start = solver.to_spectrum(omega0);
    let fwd = solver.advance(&start, cfg.dt, steps);
    let back = solver.advance(&fwd, -cfg.dt, steps);
    let num: f64 = start.iter().zip(&back).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = start.iter().map(|a| a.norm_sqr()).sum();
    Ok((num / den).sqrt())
}
