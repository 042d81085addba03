//! Disk-restricted operators `L~ = I - c^2 1_B (-Δ)^-1 1_B` and
//! `S~ = L~ / (2 c^2)` split into angular modes, their Nyström spectra, the
//! coercivity constant on the odd class and the Galerkin spectrum of `J L~`.
//!
//! Radial functions are stored by value at the quadrature nodes. The mode
//! matrices are symmetrized by the similarity `y_i = sqrt(w_i r_i) f_i`, so
//! the Euclidean product of `y` is the `L^2(r dr)` product of `f`.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dipole::{self, Point};
use crate::error::{LabError, Result};
use crate::quad::gauss_legendre_on;
use crate::specfun::{jn, jn_prime, zero_table};

#[derive(Debug, Clone, PartialEq)]
pub struct RadialQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialQuadrature {
    /// Gauss-Legendre rule on `(0, 1)`.
    pub fn gauss(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(LabError::Invalid(format!("radial rule needs at least 2 nodes, got {n}")));
        }
        let (nodes, weights) = gauss_legendre_on(n, 0.0, 1.0);
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn sqrt_measure(&self) -> Vec<f64> {
        self.nodes.iter().zip(&self.weights).map(|(r, w)| (r * w).sqrt()).collect()
    }

    /// `∫_0^1 f g r dr`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * self.nodes[i] * f[i] * g[i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Ltilde,
    Stilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Sin,
    Cos,
}

/// Angular mode `m` of the positive inverse Laplacian, acting against `ρ dρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreenModeKernel {
    pub m: u32,
}

impl GreenModeKernel {
    pub fn eval(&self, r: f64, rho: f64) -> f64 {
        let (lo, hi) = if r < rho { (r, rho) } else { (rho, r) };
        if self.m == 0 {
            -hi.ln()
        } else {
            (lo / hi).powi(self.m as i32) / (2.0 * self.m as f64)
        }
    }

    /// `∫_0^1 K(r, ρ) ρ dρ` in closed form.
    pub fn moment(&self, r: f64) -> f64 {
        let m = self.m;
        if m == 0 {
            let f = |p: f64| if p == 0.0 { 0.0 } else { -(0.5 * p * p * p.ln() - 0.25 * p * p) };
            return -r.ln() * r * r / 2.0 + f(1.0) - f(r);
        }
        let mf = m as f64;
        let inner = r * r / (mf + 2.0);
        let outer = if m == 2 {
            -r * r * r.ln()
        } else {
            r.powi(m as i32) * (1.0 - r.powf(2.0 - mf)) / (2.0 - mf)
        };
        (inner + outer) / (2.0 * mf)
    }
}

/// One mode of `L~` or `S~` in the symmetrized Nyström convention.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub kind: OpKind,
    pub m: u32,
    pub parity: Parity,
    pub matrix: DMatrix<f64>,
    quad: RadialQuadrature,
    scale: Vec<f64>,
}

impl ModeOperator {
    pub fn quadrature(&self) -> &RadialQuadrature {
        &self.quad
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    /// Applies the operator to a radial profile given by node values.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let y = DVector::from_iterator(f.len(), f.iter().zip(&self.scale).map(|(v, s)| v * s));
        let z = &self.matrix * y;
        z.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    /// `∫_0^1 (A f) f r dr`.
    pub fn radial_form(&self, f: &[f64]) -> f64 {
        self.quad.inner(&self.apply(f), f)
    }
}

pub fn assemble_mode(kind: OpKind, m: u32, parity: Parity, quad: &RadialQuadrature) -> Result<ModeOperator> {
    let c = dipole::constants().c_l;
    assemble_mode_with_coupling(kind, m, parity, quad, c * c)
}

/// As [`assemble_mode`] with the coupling `c_L^2` in front of the Green
/// operator replaced by `coupling`.
pub fn assemble_mode_with_coupling(
    kind: OpKind,
    m: u32,
    parity: Parity,
    quad: &RadialQuadrature,
    coupling: f64,
) -> Result<ModeOperator> {
    if kind == OpKind::Stilde && (parity == Parity::Cos || m == 0) {
        return Err(LabError::Invalid(format!(
            "S~ acts on the odd class: mode {m} with {parity:?} parity is not in it"
        )));
    }
    let n = quad.len();
    let kernel = GreenModeKernel { m };
    let scale = quad.sqrt_measure();
    let r = &quad.nodes;
    let wr: Vec<f64> = r.iter().zip(&quad.weights).map(|(a, b)| a * b).collect();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let k = kernel.eval(r[i], r[j]);
            row_sum += k * wr[j];
            g[(i, j)] = scale[i] * k * scale[j];
        }
        // Singularity subtraction: the quadrature error of the row against
        // a constant goes onto the diagonal.
        g[(i, i)] += kernel.moment(r[i]) - row_sum;
    }
    let mut matrix = DMatrix::<f64>::identity(n, n) - g * coupling;
    if kind == OpKind::Stilde {
        let c = dipole::constants().c_l;
        matrix /= 2.0 * c * c;
    }
    Ok(ModeOperator { kind, m, parity, matrix, quad: quad.clone(), scale })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeEigenpair {
    pub value: f64,
    /// Node values, unit `L^2(r dr)` norm, first significant entry positive.
    pub vector: Vec<f64>,
}

pub fn mode_eigs(op: &ModeOperator, count: usize) -> Vec<ModeEigenpair> {
    let eig = SymmetricEigen::new(op.matrix.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order
        .into_iter()
        .take(count)
        .map(|k| {
            let col = eig.eigenvectors.column(k);
            let mut v: Vec<f64> = col.iter().zip(&op.scale).map(|(y, s)| y / s).collect();
            let norm = op.quad.inner(&v, &v).sqrt();
            let big = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let first = v.iter().find(|x| x.abs() > 1e-8 * big).copied().unwrap_or(1.0);
            let s = first.signum() / norm;
            v.iter_mut().for_each(|x| *x *= s);
            ModeEigenpair { value: eig.eigenvalues[k], vector: v }
        })
        .collect()
}

/// The closed-form eigenvalue `1 - c^2 / μ_{m-1,j}^2` of mode `m` of `L~`
/// (with `μ_{-1,j} = μ_{0,j}`).
pub fn ltilde_closed_form(m: u32, j: u32) -> Result<f64> {
    let c = dipole::constants().c_l;
    let mu = zero_table().get(m.saturating_sub(1), j)?;
    Ok(1.0 - c * c / (mu * mu))
}

fn mode_list(max_mode: u32, odd_only: bool) -> Vec<(u32, Parity)> {
    let mut out = Vec::new();
    for m in 0..=max_mode {
        if !odd_only {
            out.push((m, Parity::Cos));
        }
        if m > 0 {
            out.push((m, Parity::Sin));
        }
    }
    out
}

fn count_negative(kind: OpKind, max_mode: u32, quad: &RadialQuadrature, tol: f64, odd_only: bool) -> Result<usize> {
    // cos and sin copies of a mode are the same matrix for L~.
    let counts: Result<Vec<usize>> = mode_list(max_mode, odd_only)
        .into_par_iter()
        .map(|(m, parity)| {
            let op = assemble_mode(kind, m, parity, quad)?;
            let eig = SymmetricEigen::new(op.matrix).eigenvalues;
            Ok(eig.iter().filter(|&&l| l < -tol).count())
        })
        .collect();
    Ok(counts?.into_iter().sum())
}

/// Negative directions of `L~` over modes `0..=max_mode`, both parities.
#[allow(non_snake_case)]
pub fn count_negative_L(max_mode: u32, quad: &RadialQuadrature, tol: f64) -> Result<usize> {
    if max_mode < 8 {
        return Err(LabError::Invalid(format!("negative count needs modes up to at least 8, got {max_mode}")));
    }
    count_negative(OpKind::Ltilde, max_mode, quad, tol, false)
}

/// Negative directions of `L~` restricted to sin modes.
pub fn count_negative_odd(max_mode: u32, quad: &RadialQuadrature, tol: f64) -> Result<usize> {
    count_negative(OpKind::Ltilde, max_mode, quad, tol, true)
}

/// Fourier coefficient of `f` at radius `r` against `cos mθ` or `sin mθ`,
/// by the trapezoid rule on `n_theta` angles.
pub fn angular_coefficient(f: &dyn Fn(Point) -> f64, r: f64, m: u32, parity: Parity, n_theta: usize) -> f64 {
    let dt = 2.0 * PI / n_theta as f64;
    let mut s = 0.0;
    for b in 0..n_theta {
        let t = b as f64 * dt;
        let trig = match parity {
            Parity::Cos => (m as f64 * t).cos(),
            Parity::Sin => (m as f64 * t).sin(),
        };
        s += f([r * t.cos(), r * t.sin()]) * trig;
    }
    let norm = if m == 0 { 2.0 * PI } else { PI };
    s * dt / norm
}

fn radial_profile(f: &dyn Fn(Point) -> f64, quad: &RadialQuadrature, m: u32, parity: Parity, n_theta: usize) -> Vec<f64> {
    quad.nodes.iter().map(|&r| angular_coefficient(f, r, m, parity, n_theta)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Composite Simpson rule on `[a, b]` with `panels` (even) subintervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Residuals of the dipole identities for `L~` and the associated forms.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// `max |L~ ω_L + c^2 1_B x2|` over nodes and modes.
    pub residual_omega: f64,
    /// `max |L~ ∂2 ω_L + c^2 1_B|`.
    pub residual_d2_omega: f64,
    /// `max |L~ (x^⊥·∇ω_L) + c^2 x1 1_B|`.
    pub residual_rotation: f64,
    pub form_omega: f64,
    pub form_omega_target: f64,
    pub form_d2_omega: f64,
    pub form_rotation: f64,
    /// Simpson evaluation of `π ∫ 2 c^3 J_1(c r) r^2 / J_0(c) dr`.
    pub form_rotation_reference: f64,
    /// `(g_1, 1_B x2)` with `g_1` the lowest odd eigenfunction of `S~`.
    pub cross_term: f64,
    pub cross_term_target: f64,
    pub lambda_1: f64,
    pub lambda_1_target: f64,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_omega.max(self.residual_d2_omega).max(self.residual_rotation)
    }
}

pub fn verify_identities(quad: &RadialQuadrature, n_theta: usize) -> Result<IdentityReport> {
    let k = dipole::constants();
    let (c, c2) = (k.c_l, k.c_l * k.c_l);
    let mut residual = [0.0f64; 3];
    let mut forms = [0.0f64; 3];

    let x1 = |p: Point| if p[0].hypot(p[1]) < 1.0 { p[0] } else { 0.0 };
    let x2 = |p: Point| if p[0].hypot(p[1]) < 1.0 { p[1] } else { 0.0 };
    let one = |p: Point| if p[0].hypot(p[1]) < 1.0 { 1.0 } else { 0.0 };
    type Field<'a> = &'a dyn Fn(Point) -> f64;
    let cases: [(Field, Field, &[(u32, Parity)]); 3] = [
        (&dipole::omega_lamb, &x2, &[(1, Parity::Sin)]),
        (&dipole::d2_omega_lamb, &one, &[(0, Parity::Cos), (2, Parity::Cos)]),
        (&dipole::dtheta_omega_lamb, &x1, &[(1, Parity::Cos)]),
    ];
    for (q, (field, rhs, modes)) in cases.iter().enumerate() {
        for &(m, parity) in modes.iter() {
            let op = assemble_mode(OpKind::Ltilde, m, parity, quad)?;
            let f = radial_profile(*field, quad, m, parity, n_theta);
            let g: Vec<f64> = radial_profile(*rhs, quad, m, parity, n_theta).iter().map(|v| -c2 * v).collect();
            let lf = op.apply(&f);
            residual[q] = residual[q].max(max_abs_diff(&lf, &g));
            let angular = if m == 0 { 2.0 * PI } else { PI };
            forms[q] += angular * quad.inner(&lf, &f);
        }
    }

    let j0c = jn(0, c);
    let form_rotation_reference =
        PI * simpson(|r| 2.0 * c * c2 * jn(1, c * r) * r * r / j0c, 0.0, 1.0, 2000);

    let s1 = assemble_mode(OpKind::Stilde, 1, Parity::Sin, quad)?;
    let pair = mode_eigs(&s1, 1).remove(0);
    let mu01 = zero_table().get(0, 1)?;
    let j1 = jn(1, mu01);
    // rescale to the norm of J_1(μ_{0,1} r), which is J_1(μ_{0,1})^2 / 2
    let g1: Vec<f64> = pair.vector.iter().map(|v| v * (0.5 * j1 * j1).sqrt()).collect();
    let cross_term = PI * quad.inner(&g1, &quad.nodes);

    Ok(IdentityReport {
        residual_omega: residual[0],
        residual_d2_omega: residual[1],
        residual_rotation: residual[2],
        form_omega: forms[0],
        form_omega_target: -2.0 * PI * c2,
        form_d2_omega: forms[1],
        form_rotation: forms[2],
        form_rotation_reference,
        cross_term,
        cross_term_target: PI / mu01 * jn(2, mu01),
        lambda_1: pair.value,
        lambda_1_target: (1.0 - c2 / (mu01 * mu01)) / (2.0 * c2),
    })
}

/// Orthogonality constraints for the coercivity problem on the odd class.
pub enum Directions<'a> {
    /// No constraints: the smallest eigenvalue of `S~`.
    Unconstrained,
    /// `1_B x2` and `∂1 ω_L`.
    Exact,
    /// `g_1 = J_1(μ_{0,1} r) sin θ` and `∂1 ω_L`.
    SpectralGap,
    /// Mollified windows of width `eps1`.
    Windows { eps1: f64 },
    Custom(Vec<&'a (dyn Fn(Point) -> f64 + Sync)>),
}

#[derive(Debug, Clone)]
pub struct CoercivityConfig {
    pub max_mode: u32,
    pub n_theta: usize,
}

impl Default for CoercivityConfig {
    fn default() -> Self {
        Self { max_mode: 8, n_theta: 128 }
    }
}

/// Smallest eigenvalue of `S~` on the odd class compressed to the
/// orthogonal complement of the given directions.
///
/// The sin blocks `m = 1..=max_mode` are diagonalized separately. The
/// compressed spectrum below `σ` is counted through the inertia of the
/// bordered matrix, `#{λ < σ} + n_+(Vᵀ (Λ - σ)^-1 V) - k`, and the first
/// eigenvalue is located by bisection.
pub fn coercivity_constant(dirs: &Directions, quad: &RadialQuadrature, cfg: &CoercivityConfig) -> Result<f64> {
    let gap_direction = {
        let mu01 = zero_table().get(0, 1)?;
        move |p: Point| {
            let r = p[0].hypot(p[1]);
            if r < 1.0 && r > 0.0 {
                jn(1, mu01 * r) * p[1] / r
            } else {
                0.0
            }
        }
    };
    let x2 = |p: Point| if p[0].hypot(p[1]) < 1.0 { p[1] } else { 0.0 };
    let windows;
    let fields: Vec<&(dyn Fn(Point) -> f64 + Sync)> = match dirs {
        Directions::Unconstrained => Vec::new(),
        Directions::Exact => vec![&x2, &dipole::d1_omega_lamb],
        Directions::SpectralGap => vec![&gap_direction, &dipole::d1_omega_lamb],
        Directions::Windows { eps1 } => {
            windows = crate::modulation::WindowProfiles::new(*eps1)?;
            vec![&*windows.w1 as &(dyn Fn(Point) -> f64 + Sync), &*windows.w2]
        }
        Directions::Custom(v) => v.clone(),
    };
    constrained_minimum(&fields, quad, cfg)
}

fn constrained_minimum(
    fields: &[&(dyn Fn(Point) -> f64 + Sync)],
    quad: &RadialQuadrature,
    cfg: &CoercivityConfig,
) -> Result<f64> {
    let scale = quad.sqrt_measure();
    let blocks: Result<Vec<(Vec<f64>, Vec<Vec<f64>>)>> = (1..=cfg.max_mode)
        .into_par_iter()
        .map(|m| {
            let op = assemble_mode(OpKind::Stilde, m, Parity::Sin, quad)?;
            let eig = SymmetricEigen::new(op.matrix);
            let coords = fields
                .iter()
                .map(|f| {
                    let prof = radial_profile(*f, quad, m, Parity::Sin, cfg.n_theta);
                    let y = DVector::from_iterator(prof.len(), prof.iter().zip(&scale).map(|(v, s)| v * s));
                    (eig.eigenvectors.transpose() * y).iter().copied().collect()
                })
                .collect();
            Ok((eig.eigenvalues.iter().copied().collect(), coords))
        })
        .collect();
    let blocks = blocks?;
    let lambda: Vec<f64> = blocks.iter().flat_map(|b| b.0.iter().copied()).collect();
    let k = fields.len();
    let u: Vec<Vec<f64>> = (0..k).map(|i| blocks.iter().flat_map(|b| b.1[i].iter().copied()).collect()).collect();

    let gram = DMatrix::from_fn(k, k, |i, j| dot(&u[i], &u[j]));
    for i in 0..k {
        if gram[(i, i)] == 0.0 {
            return Err(LabError::Degenerate(format!("constraint {i} has no odd-class content")));
        }
    }
    if k > 1 {
        let d = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] / (gram[(i, i)] * gram[(j, j)]).sqrt());
        let smallest = SymmetricEigen::new(d).eigenvalues.min();
        if smallest < 1e-10 {
            return Err(LabError::Degenerate(format!(
                "constraint directions are numerically collinear (normalized Gram eigenvalue {smallest:.2e})"
            )));
        }
    }

    let count_below = |sigma: f64| -> usize {
        let below = lambda.iter().filter(|&&l| l < sigma).count();
        if k == 0 {
            return below;
        }
        let inv: Vec<f64> = lambda.iter().map(|&l| 1.0 / (l - sigma)).collect();
        let mm = DMatrix::from_fn(k, k, |i, j| (0..lambda.len()).map(|t| u[i][t] * u[j][t] * inv[t]).sum::<f64>());
        let pos = SymmetricEigen::new(mm).eigenvalues.iter().filter(|&&e| e > 0.0).count();
        (below + pos).saturating_sub(k)
    };

    let lmin = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lmin - 1.0, lmax + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1e-3) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Radial family of the Galerkin basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// `J_m(μ_{m,j} r)` only.
    Dirichlet,
    /// Adds `J_m(c_L r)` for `m ∈ {0, 2}` and the harmonic `r^m` to each mode.
    Augmented,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub max_mode: u32,
    pub max_index: u32,
    #[serde(default = "default_radial_nodes")]
    pub radial_nodes: usize,
    #[serde(default = "default_angular_nodes")]
    pub angular_nodes: usize,
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
}

fn default_radial_nodes() -> usize {
    120
}
fn default_angular_nodes() -> usize {
    128
}
fn default_basis() -> BasisKind {
    BasisKind::Augmented
}

impl HamiltonianConfig {
    pub fn new(max_mode: u32, max_index: u32) -> Self {
        Self {
            max_mode,
            max_index,
            radial_nodes: default_radial_nodes(),
            angular_nodes: default_angular_nodes(),
            basis: default_basis(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HamiltonianSpectrum {
    pub config: HamiltonianConfig,
    #[serde(skip)]
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_abs_re: f64,
    pub max_abs: f64,
    /// `max |Re λ| / max |λ|`.
    pub ratio: f64,
    /// Relative skew defect of the transport matrix before averaging.
    pub skew_defect: f64,
    /// `|A c_ω - c_∂1ω| / |c_∂1ω|` in orthonormal coordinates.
    pub jordan_residual: f64,
    /// `|A c_∂1ω| / |c_∂1ω|`.
    pub kernel_residual: f64,
    pub block_sizes: [usize; 2],
}

struct BasisFn {
    m: u32,
    parity: Parity,
    radial: Vec<f64>,
    radial_d: Vec<f64>,
    green: Vec<f64>,
}

fn build_basis(cfg: &HamiltonianConfig, r: &[f64]) -> Result<Vec<BasisFn>> {
    let c = dipole::constants().c_l;
    let mut out = Vec::new();
    for m in 0..=cfg.max_mode {
        let mf = m as f64;
        let mut radials: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
        let mut ks = zero_table().zeros(m, cfg.max_index)?;
        if cfg.basis == BasisKind::Augmented && (m == 0 || m == 2) {
            ks.push(c);
        }
        for k in ks {
            // (-Δ)^-1 of J_m(k r) e^{imθ} 1_B inside the disk
            let harmonic = if m == 0 { -jn(0, k) / (k * k) } else { -jn(m - 1, k) / (2.0 * mf * k) };
            radials.push((
                r.iter().map(|&x| jn(m, k * x)).collect(),
                r.iter().map(|&x| k * jn_prime(m, k * x)).collect(),
                r.iter().map(|&x| jn(m, k * x) / (k * k) + harmonic * x.powi(m as i32)).collect(),
            ));
        }
        if cfg.basis == BasisKind::Augmented {
            let a = if m == 0 { 0.25 } else { 0.25 / mf };
            radials.push((
                r.iter().map(|&x| x.powi(m as i32)).collect(),
                r.iter().map(|&x| if m == 0 { 0.0 } else { mf * x.powi(m as i32 - 1) }).collect(),
                r.iter().map(|&x| -x.powi(m as i32 + 2) / (4.0 * (mf + 1.0)) + a * x.powi(m as i32)).collect(),
            ));
        }
        let parities: &[Parity] = if m == 0 { &[Parity::Cos] } else { &[Parity::Cos, Parity::Sin] };
        for &parity in parities {
            for (radial, radial_d, green) in &radials {
                out.push(BasisFn { m, parity, radial: radial.clone(), radial_d: radial_d.clone(), green: green.clone() });
            }
        }
    }
    Ok(out)
}

fn trig(m: u32, parity: Parity, t: f64) -> (f64, f64) {
    let mf = m as f64;
    match parity {
        Parity::Cos => ((mf * t).cos(), -mf * (mf * t).sin()),
        Parity::Sin => ((mf * t).sin(), mf * (mf * t).cos()),
    }
}

/// Galerkin spectrum of `J L~` on the disk, split by `x2` parity.
pub fn hamiltonian_spectrum(cfg: &HamiltonianConfig) -> Result<HamiltonianSpectrum> {
    if cfg.max_index == 0 || cfg.radial_nodes < 2 || cfg.angular_nodes < 4 {
        return Err(LabError::Invalid("hamiltonian basis and quadrature must be non-empty".into()));
    }
    let k = dipole::constants();
    let c2 = k.c_l * k.c_l;
    let quad = RadialQuadrature::gauss(cfg.radial_nodes)?;
    let r = quad.nodes();
    let w = quad.weights();
    let nt = cfg.angular_nodes;
    let dt = 2.0 * PI / nt as f64;
    let theta: Vec<f64> = (0..nt).map(|b| b as f64 * dt).collect();
    let basis = build_basis(cfg, r)?;
    let nb = basis.len();

    // ψ_moving = psi_amp J_1(c r) sin θ inside the disk
    let p_r: Vec<f64> = r.iter().map(|&x| k.psi_amp * k.c_l * jn_prime(1, k.c_l * x)).collect();
    let q_r: Vec<f64> = r.iter().map(|&x| k.psi_amp * jn(1, k.c_l * x)).collect();

    let ang: Vec<Vec<(f64, f64)>> = basis.iter().map(|b| theta.iter().map(|&t| trig(b.m, b.parity, t)).collect()).collect();
    // angular factors of the tensor rule
    let t0 = |a: usize, b: usize| -> f64 { (0..nt).map(|i| ang[a][i].0 * ang[b][i].0).sum::<f64>() * dt };
    let t_sin = |a: usize, b: usize| -> f64 { (0..nt).map(|i| ang[a][i].0 * theta[i].sin() * ang[b][i].1).sum::<f64>() * dt };
    let t_cos = |a: usize, b: usize| -> f64 { (0..nt).map(|i| ang[a][i].0 * theta[i].cos() * ang[b][i].0).sum::<f64>() * dt };

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..nb)
        .into_par_iter()
        .map(|a| {
            let fa = &basis[a];
            let mut mass = vec![0.0; nb];
            let mut green = vec![0.0; nb];
            let mut transport = vec![0.0; nb];
            for b in 0..nb {
                let fb = &basis[b];
                if fa.m == fb.m && fa.parity == fb.parity {
                    let ang0 = t0(a, b);
                    let (mut s_m, mut s_g) = (0.0, 0.0);
                    for i in 0..r.len() {
                        s_m += w[i] * r[i] * fa.radial[i] * fb.radial[i];
                        s_g += w[i] * r[i] * fa.radial[i] * fb.green[i];
                    }
                    mass[b] = s_m * ang0;
                    green[b] = s_g * ang0;
                }
                if fa.m.abs_diff(fb.m) == 1 {
                    let (a1, a2) = (t_sin(a, b), t_cos(a, b));
                    if a1 != 0.0 || a2 != 0.0 {
                        // the area element r dr cancels the 1/r of the Jacobian
                        let mut s = 0.0;
                        for i in 0..r.len() {
                            s += w[i] * fa.radial[i] * (p_r[i] * fb.radial[i] * a1 - q_r[i] * fb.radial_d[i] * a2);
                        }
                        transport[b] = s;
                    }
                }
            }
            (mass, green, transport)
        })
        .collect();
    let mass = DMatrix::from_fn(nb, nb, |i, j| rows[i].0[j]);
    let green = DMatrix::from_fn(nb, nb, |i, j| rows[i].1[j]);
    let transport = DMatrix::from_fn(nb, nb, |i, j| rows[i].2[j]);

    let skew_defect = (&transport + transport.transpose()).amax() / transport.amax().max(f64::MIN_POSITIVE);
    if skew_defect > 1e-8 {
        return Err(LabError::Quadrature(format!(
            "transport matrix skew defect {skew_defect:.2e} exceeds 1e-8; refine the 2D rule"
        )));
    }
    let jh = (&transport - transport.transpose()) * 0.5;
    let lh = &mass - green * c2;
    let lh = (&lh + lh.transpose()) * 0.5;

    let project = |f: fn(Point) -> f64, idx: &[usize]| -> DVector<f64> {
        DVector::from_iterator(
            idx.len(),
            idx.iter().map(|&a| {
                let mut s = 0.0;
                for i in 0..r.len() {
                    for (bidx, &t) in theta.iter().enumerate() {
                        s += w[i] * r[i] * basis[a].radial[i] * ang[a][bidx].0 * f([r[i] * t.cos(), r[i] * t.sin()]);
                    }
                }
                s * dt
            }),
        )
    };

    let mut eigenvalues = Vec::with_capacity(nb);
    let mut block_sizes = [0usize; 2];
    let (mut jordan_residual, mut kernel_residual) = (f64::NAN, f64::NAN);
    for (slot, parity) in [Parity::Cos, Parity::Sin].into_iter().enumerate() {
        let idx: Vec<usize> = (0..nb).filter(|&a| basis[a].parity == parity).collect();
        block_sizes[slot] = idx.len();
        let sub = |m: &DMatrix<f64>| DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
        let chol = sub(&mass)
            .cholesky()
            .ok_or_else(|| LabError::Singular(format!("{parity:?} block mass matrix is not positive definite")))?;
        let l = chol.l();
        let whiten = |m: DMatrix<f64>| -> DMatrix<f64> {
            let left = l.solve_lower_triangular(&m).expect("triangular factor is nonsingular");
            l.solve_lower_triangular(&left.transpose()).expect("triangular factor is nonsingular").transpose()
        };
        let jo = whiten(sub(&jh));
        let lo = whiten(sub(&lh));
        let a = &jo * &lo;
        if parity == Parity::Sin {
            let co = l.solve_lower_triangular(&project(dipole::omega_lamb, &idx)).expect("nonsingular");
            let cd = l.solve_lower_triangular(&project(dipole::d1_omega_lamb, &idx)).expect("nonsingular");
            let norm = cd.norm();
            jordan_residual = (&a * &co - &cd).norm() / norm;
            kernel_residual = (&a * &cd).norm() / norm;
        }
        eigenvalues.extend(a.complex_eigenvalues().iter().copied());
    }

    let max_abs_re = eigenvalues.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    let max_abs = eigenvalues.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    Ok(HamiltonianSpectrum {
        config: cfg.clone(),
        ratio: max_abs_re / max_abs,
        eigenvalues,
        max_abs_re,
        max_abs,
        skew_defect,
        jordan_residual,
        kernel_residual,
        block_sizes,
    })
}
