//! Windows, modulation parameters and Lyapunov functionals along a trajectory.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dipole::{self, Point};
use crate::error::{LabError, Result};
use crate::evolve::{self, DiagnosticsRecord, SolverConfig, Trajectory};
use crate::fft2::{wavenumber, Fft2};
use crate::field::{self, Grid2D, VorticityField};
use crate::quad::gauss_legendre_on;

type Profile = Box<dyn Fn(Point) -> f64 + Send + Sync>;

/// Pointwise mollified windows approximating `∂1 ω_L` and `1_B x2`.
///
/// Each window is the average of the target against a radial bump of radius
/// `eps1 / 4`, times a cutoff that vanishes for `x2 <= eps1 / 8` and for
/// `|x| >= 1 + eps1`, then extended oddly to the lower half-plane.
pub struct WindowProfiles {
    pub eps1: f64,
    pub w1: Profile,
    pub w2: Profile,
}

impl std::fmt::Debug for WindowProfiles {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WindowProfiles").field("eps1", &self.eps1).finish()
    }
}

/// C-infinity step: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    let g = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        g(t) / (g(t) + g(1.0 - t))
    }
}

/// Offsets and weights of a discrete radial bump of radius `delta`, summing to one.
fn bump_stencil(delta: f64) -> Vec<(Point, f64)> {
    const RADIAL: usize = 10;
    const ANGULAR: usize = 20;
    let (s, ws) = gauss_legendre_on(RADIAL, 0.0, 1.0);
    let mut out = Vec::with_capacity(RADIAL * ANGULAR);
    for (si, wi) in s.iter().zip(&ws) {
        let eta = (-1.0 / (1.0 - si * si)).exp();
        for k in 0..ANGULAR {
            let t = 2.0 * PI * (k as f64 + 0.5) / ANGULAR as f64;
            out.push(([delta * si * t.cos(), delta * si * t.sin()], wi * si * eta));
        }
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    out.iter_mut().for_each(|p| p.1 /= total);
    out
}

fn window(eps1: f64, target: fn(Point) -> f64) -> Profile {
    let stencil = bump_stencil(0.25 * eps1);
    Box::new(move |p: Point| {
        let (x, sign) = if p[1] < 0.0 { ([p[0], -p[1]], -1.0) } else { (p, 1.0) };
        let r = x[0].hypot(x[1]);
        let cut = smooth_step((x[1] - eps1 / 8.0) / (eps1 / 8.0)) * smooth_step((1.0 + eps1 - r) / (0.5 * eps1));
        if cut == 0.0 {
            return 0.0;
        }
        let avg: f64 = stencil.iter().map(|(d, w)| w * target([x[0] - d[0], x[1] - d[1]])).sum();
        sign * cut * avg
    })
}

fn disk_x2(p: Point) -> f64 {
    if p[0].hypot(p[1]) < 1.0 {
        p[1]
    } else {
        0.0
    }
}

impl WindowProfiles {
    pub fn new(eps1: f64) -> Result<Self> {
        if !(eps1 > 0.0 && eps1 <= 0.2) {
            return Err(LabError::Invalid(format!("window scale must lie in (0, 0.2], got {eps1}")));
        }
        Ok(Self { eps1, w1: window(eps1, dipole::d1_omega_lamb), w2: window(eps1, disk_x2) })
    }
}

fn half_inner(a: &[f64], b: &[f64], cell: f64) -> f64 {
    0.5 * cell * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

fn c2() -> f64 {
    dipole::constants().c_l.powi(2)
}

/// Half-plane L² distances of the window profiles from their targets,
/// by composite Gauss quadrature in polar coordinates.
pub fn window_closeness(profiles: &WindowProfiles) -> f64 {
    let e = profiles.eps1;
    let panels = |edges: &[f64]| -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for w in edges.windows(2) {
            let step = (w[1] - w[0]) / 6.0;
            for s in 0..6 {
                let a = w[0] + s as f64 * step;
                let (x, wx) = gauss_legendre_on(12, a, a + step);
                out.extend(x.into_iter().zip(wx));
            }
        }
        out
    };
    let radial = panels(&[0.0, 1.0 - 0.25 * e, 1.0, 1.0 + 0.25 * e, 1.0 + e]);
    let angular = panels(&[0.0, e, PI - e, PI]);
    let (s1, s2) = radial
        .par_iter()
        .map(|&(r, wr)| {
            let mut acc = (0.0, 0.0);
            for &(t, wt) in &angular {
                let p = [r * t.cos(), r * t.sin()];
                let inside = r < 1.0;
                let d1 = (profiles.w1)(p) - if inside { dipole::d1_omega_lamb(p) } else { 0.0 };
                let d2 = (profiles.w2)(p) - if inside { p[1] } else { 0.0 };
                acc.0 += wr * wt * r * d1 * d1;
                acc.1 += wr * wt * r * d2 * d2;
            }
            acc
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    s1.sqrt() + s2.sqrt()
}

/// Window fields on a grid with the Jacobian of the orthogonality map at the dipole.
#[derive(Debug, Clone)]
pub struct WindowPair {
    pub eps1: f64,
    pub w1: VorticityField,
    pub w2: VorticityField,
    /// `[[-(ω_L, W1), (∂1ω_L, W1)], [-(ω_L, W2), (∂1ω_L, W2)]]`, half-plane products.
    pub gram: [[f64; 2]; 2],
    /// `|W1 - ∂1ω_L| + |W2 - 1_B x2|` in the half-plane L² norm.
    pub closeness: f64,
}

impl WindowPair {
    pub fn determinant(&self) -> f64 {
        self.gram[0][0] * self.gram[1][1] - self.gram[0][1] * self.gram[1][0]
    }

    pub fn grid(&self) -> Grid2D {
        self.w1.grid
    }

    /// Largest half-plane L² norm of the two windows.
    pub fn max_norm(&self) -> f64 {
        let cell = self.grid().cell_area();
        half_inner(&self.w1.values, &self.w1.values, cell)
            .max(half_inner(&self.w2.values, &self.w2.values, cell))
            .sqrt()
    }
}

pub fn build_windows(eps1: f64, grid: Grid2D) -> Result<WindowPair> {
    let profiles = WindowProfiles::new(eps1)?;
    let w1 = VorticityField::sample(grid, true, |p| (profiles.w1)(p));
    let w2 = VorticityField::sample(grid, true, |p| (profiles.w2)(p));
    let lamb = VorticityField::lamb(grid);
    let d1 = VorticityField::sample(grid, true, dipole::d1_omega_lamb);
    let cell = grid.cell_area();
    let hi = |a: &VorticityField, b: &VorticityField| half_inner(&a.values, &b.values, cell);
    let gram = [[-hi(&lamb, &w1), hi(&d1, &w1)], [-hi(&lamb, &w2), hi(&d1, &w2)]];
    let pair = WindowPair { eps1, w1, w2, gram, closeness: window_closeness(&profiles) };
    let floor = 0.5 * hi(&d1, &d1) * field::impulse(&lamb);
    let det = pair.determinant();
    if !(det.abs() >= floor) {
        return Err(LabError::Degenerate(format!(
            "window gram determinant {det:.4e} below {floor:.4e}; retry with a smaller eps1"
        )));
    }
    Ok(pair)
}

/// The sampled dipole with the grid-consistent quantities the functionals need.
#[derive(Debug, Clone)]
pub struct LambReference {
    pub omega: VorticityField,
    /// `ω_L + c² ψ_L + c² x2` with the discrete stream function.
    pub err: Vec<f64>,
    pub impulse: f64,
    pub functional: f64,
}

impl LambReference {
    pub fn new(grid: Grid2D) -> Self {
        let omega = VorticityField::lamb(grid);
        let psi = field::stream_unchecked(&omega);
        let c2 = c2();
        let err = (0..grid.len()).map(|k| omega.values[k] + c2 * (psi.values[k] + grid.point(k)[1])).collect();
        let impulse = field::impulse(&omega);
        let functional = functional_f(&omega);
        Self { omega, err, impulse, functional }
    }

    pub fn grid(&self) -> Grid2D {
        self.omega.grid
    }

    /// `(Err, h)` over the upper half-plane.
    pub fn err_inner(&self, h: &VorticityField) -> f64 {
        half_inner(&self.err, &h.values, self.grid().cell_area())
    }

    /// Discrete residual of `(Err, ω_L) = 0`.
    pub fn err_overlap(&self) -> f64 {
        self.err_inner(&self.omega)
    }
}

/// `K/(2c²) - E + I` in the half-plane convention.
pub fn functional_f(omega: &VorticityField) -> f64 {
    let psi = field::stream_unchecked(omega);
    field::enstrophy(omega) / (2.0 * c2()) - field::energy_with_stream(omega, &psi) + field::impulse(omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QValue {
    /// `c⁻²(Err, h) + (S h, h)`.
    pub direct: f64,
    /// `F[ω_L + h] - F[ω_L]`.
    pub expanded: f64,
}

pub fn functional_q(h: &VorticityField, reference: &LambReference) -> QValue {
    let psi = field::stream_unchecked(h);
    let c2 = c2();
    let quad = field::enstrophy(h) / (2.0 * c2) - field::energy_with_stream(h, &psi);
    let direct = reference.err_inner(h) / c2 + quad;
    let expanded = functional_f(&reference.omega.add(h)) - reference.functional;
    QValue { direct, expanded }
}

/// Sub-grid translation `ω(· + β e1)` by Fourier phase shift.
struct Translator {
    n: usize,
    fft: Fft2,
    hat: Vec<Complex64>,
    k: Vec<f64>,
}

impl Translator {
    fn new(omega: &VorticityField) -> Self {
        let n = omega.grid.n;
        let fft = Fft2::new(n);
        let mut hat: Vec<Complex64> = omega.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.forward(&mut hat, n);
        let scale = PI / omega.grid.half_length;
        let k = (0..n).map(|i| wavenumber(i, n) * scale).collect();
        Self { n, fft, hat, k }
    }

    /// The shifted field and its `β`-derivative. The Nyquist column is
    /// shifted by its real part so both stay real.
    fn eval(&self, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut buf = self.hat.clone();
        for (row, chunk) in buf.chunks_mut(n).enumerate() {
            let k = self.k[row];
            let (m, dm) = if 2 * row == n {
                (Complex64::new((k * beta).cos(), 0.0), Complex64::new(-k * (k * beta).sin(), 0.0))
            } else {
                let e = Complex64::from_polar(1.0, k * beta);
                (e, e * Complex64::new(0.0, k))
            };
            let f = m + Complex64::new(0.0, 1.0) * dm;
            chunk.iter_mut().for_each(|z| *z *= f);
        }
        self.fft.inverse(&mut buf, n);
        let s = 1.0 / (n * n) as f64;
        (buf.iter().map(|z| z.re * s).collect(), buf.iter().map(|z| z.im * s).collect())
    }
}

/// `ω(· + β e1)` by Fourier phase shift on the periodic grid.
pub fn translate(omega: &VorticityField, beta: f64) -> VorticityField {
    let (values, _) = Translator::new(omega).eval(beta);
    VorticityField { grid: omega.grid, values, odd: omega.odd, time: omega.time }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationConfig {
    /// Newton stops once `|G1| + |G2|` is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest accepted `|ω(· + β0) - (1 + α0) ω_L|` at the initial guess.
    pub eps_mod: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 50, eps_mod: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct ModulationState {
    pub alpha: f64,
    pub beta: f64,
    /// `ω(· + β e1) - (1 + α) ω_L`.
    pub h: VorticityField,
    pub newton_iters: usize,
    /// `|(h, W1)| + |(h, W2)|` in half-plane products.
    pub ortho_residual: f64,
    /// Half-plane L² distance from the guessed profile to the input.
    pub initial_distance: f64,
}

/// Newton solve for the amplitude and shift that make the residual orthogonal to both windows.
pub fn solve_modulation(
    omega: &VorticityField,
    windows: &WindowPair,
    reference: &LambReference,
    guess: (f64, f64),
    cfg: &ModulationConfig,
) -> Result<ModulationState> {
    let grid = omega.grid;
    if grid != windows.grid() || grid != reference.grid() {
        return Err(LabError::Invalid("field, windows and reference must share a grid".into()));
    }
    let cell = grid.cell_area();
    let lamb = &reference.omega.values;
    let (w1, w2) = (&windows.w1.values, &windows.w2.values);
    let lw = [half_inner(lamb, w1, cell), half_inner(lamb, w2, cell)];
    let tr = Translator::new(omega);
    let residual = |shifted: &[f64], alpha: f64| -> Vec<f64> {
        shifted.iter().zip(lamb).map(|(s, l)| s - (1.0 + alpha) * l).collect()
    };

    let (mut alpha, mut beta) = guess;
    let (start, _) = tr.eval(beta);
    let initial_distance = half_inner(&residual(&start, alpha), &residual(&start, alpha), cell).sqrt();
    if !(initial_distance <= cfg.eps_mod) {
        return Err(LabError::Domain(format!(
            "distance {initial_distance:.4e} to the guessed dipole exceeds eps_mod = {}",
            cfg.eps_mod
        )));
    }
    let mut last = f64::INFINITY;
    for iter in 0..=cfg.max_iter {
        let (shifted, dshift) = tr.eval(beta);
        let g = [half_inner(&shifted, w1, cell) - (1.0 + alpha) * lw[0], half_inner(&shifted, w2, cell) - (1.0 + alpha) * lw[1]];
        last = g[0].abs() + g[1].abs();
        if !last.is_finite() {
            break;
        }
        if last <= cfg.tol {
            let h = VorticityField { grid, values: residual(&shifted, alpha), odd: omega.odd, time: omega.time };
            return Ok(ModulationState { alpha, beta, h, newton_iters: iter, ortho_residual: last, initial_distance });
        }
        if iter == cfg.max_iter {
            break;
        }
        let j = [[-lw[0], half_inner(&dshift, w1, cell)], [-lw[1], half_inner(&dshift, w2, cell)]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let scale = (j[0][0].abs() + j[0][1].abs()) * (j[1][0].abs() + j[1][1].abs());
        if !(det.abs() > 1e-12 * scale) {
            return Err(LabError::Singular(format!("modulation jacobian determinant {det:.3e} at beta = {beta:.6}")));
        }
        alpha -= (j[1][1] * g[0] - j[0][1] * g[1]) / det;
        beta -= (j[0][0] * g[1] - j[1][0] * g[0]) / det;
    }
    Err(LabError::NoConvergence { iters: cfg.max_iter, residual: last })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovRecord {
    /// `F[ω] - F[ω_L] + (I[ω] - I_L)² / (2 I_L)`.
    #[serde(rename = "A")]
    pub a: f64,
    /// The same from the decomposition `(α, h)`.
    #[serde(rename = "A_expanded")]
    pub a_expanded: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub d: f64,
    /// `B - α I_L - I[h]`.
    pub impulse_residual: f64,
    /// `A - min(a/2, 1/(4c²)) d`.
    pub coercive_margin: f64,
}

/// Evaluates the Lyapunov pair for `ω` decomposed as in `state`.
///
/// `F` is translation invariant, so it is evaluated on the recentred field
/// `(1 + α) ω_L + h`; the impulse is exactly invariant under the phase shift.
pub fn lyapunov(
    omega: &VorticityField,
    state: &ModulationState,
    reference: &LambReference,
    coercivity: f64,
) -> Result<LyapunovRecord> {
    let c2 = c2();
    let il = reference.impulse;
    let alpha = state.alpha;
    let h = &state.h;
    let recentred = reference.omega.scaled(1.0 + alpha).add(h);
    let b = field::impulse(omega) - il;
    let a = functional_f(&recentred) - reference.functional + b * b / (2.0 * il);
    let q = functional_q(h, reference).direct;
    let ih = field::impulse(h);
    let a_expanded = q
        + alpha / c2 * reference.err_inner(h)
        + ih * ih / (2.0 * il)
        + alpha / c2 * (1.0 + 0.5 * alpha) * reference.err_overlap();
    let floor = 1e-13 * (reference.functional.abs() + 1.0);
    if (a - a_expanded).abs() > 1e-7 * a.abs().max(a_expanded.abs()) + floor {
        return Err(LabError::DecompositionMismatch { direct: a, expanded: a_expanded });
    }
    let d = field::distance_d(h);
    let lower = (0.5 * coercivity).min(0.25 / c2) * d;
    Ok(LyapunovRecord { a, a_expanded, b, q, d, impulse_residual: b - alpha * il - ih, coercive_margin: a - lower })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackRow {
    pub t: f64,
    pub alpha: f64,
    /// Lab-frame shift.
    pub beta: f64,
    pub d: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "K")]
    pub enstrophy: f64,
    #[serde(rename = "I")]
    pub impulse: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    #[serde(rename = "A_expanded")]
    pub a_expanded: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub ortho_residual: f64,
    pub impulse_residual: f64,
    pub coercive_margin: f64,
    pub newton_iters: usize,
    pub undershoot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackSummary {
    pub d0: f64,
    pub sup_d: f64,
    /// `sup_t d[h(t)] / d[h(0)]`.
    pub sup_d_ratio: f64,
    /// `sup_t |α| / √d[h(0)]`.
    pub sup_alpha_ratio: f64,
    /// `sup_t (|β' - 1| + |α'|) / √d[h(0)]`.
    pub sup_rate_ratio: f64,
    pub a0: f64,
    pub b0: f64,
    /// `sup_t |A(t) - A(0)| / |A(0)|`.
    pub a_drift: f64,
    pub b_drift: f64,
    pub a_drift_abs: f64,
    pub b_drift_abs: f64,
    pub max_ortho_residual: f64,
    pub max_impulse_residual: f64,
    pub coercivity_violations: usize,
    pub min_undershoot: f64,
    /// `sup (|α| + |β - β_frame|) / |ω - ω_L|` over the solves.
    pub c_mod: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    pub rows: Vec<TrackRow>,
    pub summary: TrackSummary,
}

impl TrackReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("t,alpha,beta,d,A,B,E,K,I\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.t, r.alpha, r.beta, r.d, r.a, r.b, r.energy, r.enstrophy, r.impulse
            ));
        }
        out
    }
}

/// Streaming modulation tracker, warm-started from the previous snapshot.
pub struct Tracker<'a> {
    windows: &'a WindowPair,
    reference: &'a LambReference,
    cfg: ModulationConfig,
    coercivity: f64,
    frame_speed: f64,
    guess: (f64, f64),
    rows: Vec<TrackRow>,
    c_mod: f64,
}

impl<'a> Tracker<'a> {
    pub fn new(
        windows: &'a WindowPair,
        reference: &'a LambReference,
        cfg: ModulationConfig,
        coercivity: f64,
        frame_speed: f64,
    ) -> Self {
        Self { windows, reference, cfg, coercivity, frame_speed, guess: (0.0, 0.0), rows: Vec::new(), c_mod: 0.0 }
    }

    pub fn push(&mut self, omega: &VorticityField, diag: &DiagnosticsRecord) -> Result<()> {
        let index = self.rows.len();
        let wrap = |e| LabError::Snapshot { index, source: Box::new(e) };
        let state = solve_modulation(omega, self.windows, self.reference, self.guess, &self.cfg).map_err(wrap)?;
        let rec = lyapunov(omega, &state, self.reference, self.coercivity).map_err(wrap)?;
        let dist = (0.5 * field::l2_norm_sq(&omega.sub(&self.reference.omega))).sqrt();
        if dist > 0.0 {
            self.c_mod = self.c_mod.max((state.alpha.abs() + state.beta.abs()) / dist);
        }
        self.guess = (state.alpha, state.beta);
        self.rows.push(TrackRow {
            t: omega.time,
            alpha: state.alpha,
            beta: state.beta + self.frame_speed * omega.time,
            d: rec.d,
            a: rec.a,
            b: rec.b,
            energy: diag.energy,
            enstrophy: diag.enstrophy,
            impulse: diag.impulse,
            alpha_prime: 0.0,
            beta_prime: 0.0,
            a_expanded: rec.a_expanded,
            q: rec.q,
            ortho_residual: state.ortho_residual,
            impulse_residual: rec.impulse_residual,
            coercive_margin: rec.coercive_margin,
            newton_iters: state.newton_iters,
            undershoot: diag.upper_undershoot,
        });
        Ok(())
    }

    pub fn finish(self) -> TrackReport {
        let mut rows = self.rows;
        let n = rows.len();
        let deriv = |rows: &[TrackRow], i: usize, f: fn(&TrackRow) -> f64| -> f64 {
            let (a, b) = match (i, n) {
                (_, 0 | 1) => return 0.0,
                (0, _) => (0, 1),
                (i, n) if i + 1 == n => (i - 1, i),
                (i, _) => (i - 1, i + 1),
            };
            (f(&rows[b]) - f(&rows[a])) / (rows[b].t - rows[a].t)
        };
        let primes: Vec<(f64, f64)> = (0..n).map(|i| (deriv(&rows, i, |r| r.alpha), deriv(&rows, i, |r| r.beta))).collect();
        for (r, (ap, bp)) in rows.iter_mut().zip(primes) {
            r.alpha_prime = ap;
            r.beta_prime = bp;
        }
        let first = rows.first().copied();
        let d0 = first.map_or(f64::NAN, |r| r.d);
        let (a0, b0) = first.map_or((f64::NAN, f64::NAN), |r| (r.a, r.b));
        let sup = |f: &dyn Fn(&TrackRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
        let sup_d = sup(&|r| r.d);
        let a_drift_abs = sup(&|r| (r.a - a0).abs());
        let b_drift_abs = sup(&|r| (r.b - b0).abs());
        let summary = TrackSummary {
            d0,
            sup_d,
            sup_d_ratio: sup_d / d0,
            sup_alpha_ratio: sup(&|r| r.alpha.abs()) / d0.sqrt(),
            sup_rate_ratio: sup(&|r| (r.beta_prime - 1.0).abs() + r.alpha_prime.abs()) / d0.sqrt(),
            a0,
            b0,
            a_drift: a_drift_abs / a0.abs(),
            b_drift: b_drift_abs / b0.abs(),
            a_drift_abs,
            b_drift_abs,
            max_ortho_residual: sup(&|r| r.ortho_residual),
            max_impulse_residual: sup(&|r| r.impulse_residual.abs()),
            coercivity_violations: rows.iter().filter(|r| r.coercive_margin < 0.0).count(),
            min_undershoot: rows.iter().map(|r| r.undershoot).fold(0.0, f64::min),
            c_mod: self.c_mod,
        };
        TrackReport { rows, summary }
    }
}

/// Tracks a stored trajectory.
pub fn track(
    traj: &Trajectory,
    windows: &WindowPair,
    reference: &LambReference,
    cfg: &ModulationConfig,
    coercivity: f64,
) -> Result<TrackReport> {
    let mut tracker = Tracker::new(windows, reference, *cfg, coercivity, traj.frame_speed);
    for (w, d) in traj.snapshots.iter().zip(&traj.diagnostics) {
        tracker.push(w, d)?;
    }
    Ok(tracker.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationShape {
    /// `ω_L(x / (1 + ε))`.
    Dilate,
    /// `(1 - ε) ω_L + ε ω_L(· - e1/4)`.
    ShiftBlend,
    /// `ω_L + ε b` with a positive bump inside the upper half-disk.
    BumpInB,
    /// `ω_L + ε b` with a positive bump outside the disk.
    ExteriorBump,
}

fn positive_bump(center: Point, radius: f64, height: f64) -> impl Fn(Point) -> f64 {
    move |p: Point| {
        let lobe = |y: f64| {
            let q = ((p[0] - center[0]).powi(2) + (y - center[1]).powi(2)) / (radius * radius);
            if q < 1.0 {
                height * (1.0 - 1.0 / (1.0 - q)).exp()
            } else {
                0.0
            }
        };
        lobe(p[1]) - lobe(-p[1])
    }
}

/// A member of a perturbation family; nonnegative on the upper half-plane for `ε ∈ [0, 1)`.
pub fn perturbed_dipole(shape: PerturbationShape, eps: f64, grid: Grid2D) -> Result<VorticityField> {
    if !(0.0..1.0).contains(&eps) {
        return Err(LabError::Invalid(format!("perturbation amplitude must lie in [0, 1), got {eps}")));
    }
    let peak = dipole::omega_lamb([0.0, 0.5]);
    let w = match shape {
        PerturbationShape::Dilate => {
            VorticityField::sample(grid, true, |p| dipole::omega_lamb([p[0] / (1.0 + eps), p[1] / (1.0 + eps)]))
        }
        PerturbationShape::ShiftBlend => VorticityField::sample(grid, true, |p| {
            (1.0 - eps) * dipole::omega_lamb(p) + eps * dipole::omega_lamb([p[0] - 0.25, p[1]])
        }),
        PerturbationShape::BumpInB => {
            let b = positive_bump([0.25, 0.45], 0.35, peak);
            VorticityField::sample(grid, true, |p| dipole::omega_lamb(p) + eps * b(p))
        }
        PerturbationShape::ExteriorBump => {
            let b = positive_bump([0.0, 1.6], 0.4, peak);
            VorticityField::sample(grid, true, |p| dipole::omega_lamb(p) + eps * b(p))
        }
    };
    w.check_support()?;
    Ok(w)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub shape: PerturbationShape,
    pub amplitudes: Vec<f64>,
    pub solver: SolverConfig,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default)]
    pub modulation: ModulationConfig,
    /// Coercivity constant for the lower-bound check; computed when absent.
    #[serde(default)]
    pub coercivity: Option<f64>,
}

fn default_eps1() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub amplitude: f64,
    pub report: TrackReport,
    /// Largest relative drift of E, K and I over the outputs.
    pub drift: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub shape: PerturbationShape,
    pub amplitudes: Vec<f64>,
    pub d0: Vec<f64>,
    pub sup_d: Vec<f64>,
    /// Least-squares slope of `log sup_t d` against `log d0` over the nonzero amplitudes.
    pub slope: f64,
    /// `sup_t d` of the zero-amplitude runs, if any: the discretization floor.
    pub control_sup_d: Option<f64>,
    #[serde(rename = "C_stab")]
    pub c_stab: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C_mod")]
    pub c_mod: f64,
    pub max_a_drift: f64,
    pub max_b_drift: f64,
    pub max_a_drift_abs: f64,
    pub max_b_drift_abs: f64,
    pub max_conservation_drift: f64,
    pub coercivity: f64,
    pub window_closeness: f64,
    pub window_determinant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub runs: Vec<SweepRun>,
    pub summary: SweepSummary,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.solver.validate()?;
    if cfg.amplitudes.iter().filter(|&&a| a > 0.0).count() < 2 {
        return Err(LabError::Config("a sweep needs at least two nonzero amplitudes".into()));
    }
    let grid = cfg.solver.grid;
    let windows = build_windows(cfg.eps1, grid)?;
    let reference = LambReference::new(grid);
    let coercivity = match cfg.coercivity {
        Some(a) => a,
        None => {
            let quad = crate::spectral::RadialQuadrature::gauss(200)?;
            crate::spectral::coercivity_constant(
                &crate::spectral::Directions::Windows { eps1: cfg.eps1 },
                &quad,
                &crate::spectral::CoercivityConfig::default(),
            )?
        }
    };
    let frame = if cfg.solver.comoving { 1.0 } else { 0.0 };
    let runs = cfg
        .amplitudes
        .par_iter()
        .map(|&amp| -> Result<SweepRun> {
            let omega0 = perturbed_dipole(cfg.shape, amp, grid)?;
            let mut tracker = Tracker::new(&windows, &reference, cfg.modulation, coercivity, frame);
            evolve::run_with(&omega0, &cfg.solver, |w, d| tracker.push(w, d))?;
            let report = tracker.finish();
            let rows = &report.rows;
            let worst = |f: fn(&TrackRow) -> f64| rows.iter().map(|r| ((f(r) - f(&rows[0])) / f(&rows[0])).abs()).fold(0.0, f64::max);
            let drift = [worst(|r| r.energy), worst(|r| r.enstrophy), worst(|r| r.impulse)];
            Ok(SweepRun { amplitude: amp, report, drift })
        })
        .collect::<Result<Vec<_>>>()?;
    let d0: Vec<f64> = runs.iter().map(|r| r.report.summary.d0).collect();
    let sup_d: Vec<f64> = runs.iter().map(|r| r.report.summary.sup_d).collect();
    let perturbed: Vec<&SweepRun> = runs.iter().filter(|r| r.amplitude > 0.0).collect();
    let logs = |f: fn(&TrackSummary) -> f64| perturbed.iter().map(|r| f(&r.report.summary).ln()).collect::<Vec<_>>();
    let fold = |f: &dyn Fn(&SweepRun) -> f64| perturbed.iter().map(|r| f(r)).fold(0.0, f64::max);
    let control_sup_d = runs
        .iter()
        .filter(|r| r.amplitude == 0.0)
        .map(|r| r.report.summary.sup_d)
        .reduce(f64::max);
    let summary = SweepSummary {
        shape: cfg.shape,
        amplitudes: cfg.amplitudes.clone(),
        slope: fit_slope(&logs(|s| s.d0), &logs(|s| s.sup_d)),
        control_sup_d,
        d0,
        sup_d,
        c_stab: fold(&|r| r.report.summary.sup_d_ratio),
        c1: fold(&|r| r.report.summary.sup_alpha_ratio),
        c2: fold(&|r| r.report.summary.sup_rate_ratio),
        c_mod: fold(&|r| r.report.summary.c_mod),
        max_a_drift: fold(&|r| r.report.summary.a_drift),
        max_b_drift: fold(&|r| r.report.summary.b_drift),
        max_a_drift_abs: fold(&|r| r.report.summary.a_drift_abs),
        max_b_drift_abs: fold(&|r| r.report.summary.b_drift_abs),
        max_conservation_drift: runs.iter().map(|r| r.drift.iter().copied().fold(0.0, f64::max)).fold(0.0, f64::max),
        coercivity,
        window_closeness: windows.closeness,
        window_determinant: windows.determinant(),
    };
    Ok(SweepOutcome { runs, summary })
}
