//! Uniform-grid vorticity fields, free-space Poisson inversion and the
//! conserved functionals.
//!
//! Samples sit at cell centers `x_i = -L + (i + 1/2) h`, `h = 2L / n`, stored
//! row-major with the x2 index as the row: `values[j * n + i]`. With `n` even
//! the row `n - 1 - j` is the mirror image of row `j` under `x2 -> -x2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dipole::{self, Point};
use crate::error::{LabError, Result};
use crate::fft2::Fft2;

/// Average of `ln |y|` over the unit square centred at the origin.
pub const UNIT_CELL_LOG_MEAN: f64 = PI / 4.0 - 1.5 - std::f64::consts::LN_2 / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub half_length: f64,
    pub n: usize,
}

impl Grid2D {
    pub fn new(half_length: f64, n: usize) -> Result<Self> {
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(LabError::Invalid(format!("half_length must be positive, got {half_length}")));
        }
        if n == 0 || n % 2 != 0 {
            return Err(LabError::Invalid(format!("n must be even and positive, got {n}")));
        }
        Ok(Self { half_length, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing().powi(2)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_length + (i as f64 + 0.5) * self.spacing()
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        [self.coord(idx % self.n), self.coord(idx / self.n)]
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Index of the mirror sample under `x2 -> -x2`.
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        let (j, i) = (idx / self.n, idx % self.n);
        (self.n - 1 - j) * self.n + i
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VorticityField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub odd: bool,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl VorticityField {
    pub fn zeros(grid: Grid2D, odd: bool) -> Self {
        Self { grid, values: vec![0.0; grid.len()], odd, time: 0.0 }
    }

    pub fn sample(grid: Grid2D, odd: bool, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.point(k))).collect();
        Self { grid, values, odd, time: 0.0 }
    }

    pub fn lamb(grid: Grid2D) -> Self {
        Self::sample(grid, true, dipole::omega_lamb)
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>, odd: bool) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Invalid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        let f = Self { grid, values, odd, time: 0.0 };
        f.validate()?;
        Ok(f)
    }

    /// Largest `|w(x1, x2) + w(x1, -x2)|` over mirrored sample pairs.
    pub fn odd_defect(&self) -> f64 {
        let half = self.grid.len() / 2;
        (0..half)
            .map(|k| (self.values[k] + self.values[self.grid.mirror(k)]).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Invalid(format!("non-finite sample at index {k}")));
        }
        if self.odd {
            let d = self.odd_defect();
            if d > 1e-12 {
                return Err(LabError::Invalid(format!("odd symmetry defect {d:.3e}")));
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        out.odd = self.odd && other.odd;
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    /// Mirror image under `x2 -> -x2` (no sign change).
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for k in 0..self.grid.len() {
            out.values[k] = self.values[self.grid.mirror(k)];
        }
        out
    }

    /// Fraction of total absolute mass outside the disk `|x| <= L / 2`.
    pub fn outer_mass_fraction(&self) -> f64 {
        let r0 = 0.5 * self.grid.half_length;
        let mut total = 0.0;
        let mut outer = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let p = self.grid.point(k);
            total += v.abs();
            if p[0].hypot(p[1]) > r0 {
                outer += v.abs();
            }
        }
        if total == 0.0 {
            0.0
        } else {
            outer / total
        }
    }

    pub fn check_support(&self) -> Result<()> {
        let frac = self.outer_mass_fraction();
        if frac > 1e-10 {
            return Err(LabError::Support(format!(
                "{frac:.3e} of the absolute mass lies outside |x| <= L/2; enlarge the box"
            )));
        }
        Ok(())
    }
}

/// Free-space convolution with `(1/2pi) log|x|` by domain doubling.
pub struct FreeSpacePoisson {
    grid: Grid2D,
    fft: Fft2,
    /// Kernel spectrum in transposed layout, scaled by `h^2 / (2n)^2`.
    kernel_hat: Vec<f64>,
}

impl std::fmt::Debug for FreeSpacePoisson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FreeSpacePoisson").field("grid", &self.grid).finish()
    }
}

impl FreeSpacePoisson {
    pub fn new(grid: Grid2D) -> Self {
        let n = grid.n;
        let m = 2 * n;
        let h = grid.spacing();
        let self_value = (h.ln() + UNIT_CELL_LOG_MEAN) / (2.0 * PI);
        let mut k = vec![Complex64::new(0.0, 0.0); m * m];
        for b in 0..m {
            let db = if b < n { b as f64 } else { b as f64 - m as f64 };
            for a in 0..m {
                let da = if a < n { a as f64 } else { a as f64 - m as f64 };
                let v = if a == 0 && b == 0 {
                    self_value
                } else {
                    (h * da.hypot(db)).ln() / (2.0 * PI)
                };
                k[b * m + a] = Complex64::new(v, 0.0);
            }
        }
        let fft = Fft2::new(m);
        fft.forward(&mut k, m);
        let scale = h * h / (m * m) as f64;
        let kernel_hat = k.iter().map(|z| z.re * scale).collect();
        Self { grid, fft, kernel_hat }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Convolves the real and imaginary parts of `input` independently.
    pub fn convolve_complex(&self, input: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.n;
        let m = 2 * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for j in 0..n {
            buf[j * m..j * m + n].copy_from_slice(&input[j * n..(j + 1) * n]);
        }
        self.fft.forward(&mut buf, n);
        for (z, g) in buf.iter_mut().zip(&self.kernel_hat) {
            *z *= *g;
        }
        self.fft.inverse(&mut buf, n);
        for j in 0..n {
            out[j * n..(j + 1) * n].copy_from_slice(&buf[j * m..j * m + n]);
        }
    }

    pub fn solve(&self, omega: &[f64]) -> Vec<f64> {
        let input: Vec<Complex64> = omega.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); omega.len()];
        self.convolve_complex(&input, &mut out);
        out.iter().map(|z| z.re).collect()
    }
}

/// Shared solver per grid; kernel spectra are expensive to rebuild.
pub fn poisson_solver(grid: Grid2D) -> Arc<FreeSpacePoisson> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<FreeSpacePoisson>>>> = OnceLock::new();
    let key = (grid.half_length.to_bits(), grid.n);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().expect("poisson cache").get(&key) {
        return s.clone();
    }
    let solver = Arc::new(FreeSpacePoisson::new(grid));
    cache.lock().expect("poisson cache").insert(key, solver.clone());
    solver
}

/// `psi = Delta^{-1} omega` with the free-space log kernel.
pub fn poisson_freespace(omega: &VorticityField) -> Result<StreamField> {
    omega.check_support()?;
    Ok(stream_unchecked(omega))
}

pub(crate) fn stream_unchecked(omega: &VorticityField) -> StreamField {
    let values = poisson_solver(omega.grid).solve(&omega.values);
    StreamField { grid: omega.grid, values }
}

/// 5-point discrete Laplacian; boundary samples are left at zero.
pub fn discrete_laplacian(grid: Grid2D, f: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let h2 = grid.cell_area();
    let mut out = vec![0.0; n * n];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = j * n + i;
            out[k] = (f[k - 1] + f[k + 1] + f[k - n] + f[k + n] - 4.0 * f[k]) / h2;
        }
    }
    out
}

pub fn inner(a: &VorticityField, b: &VorticityField) -> f64 {
    a.grid.cell_area() * a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>()
}

pub fn l2_norm_sq(a: &VorticityField) -> f64 {
    inner(a, a)
}

/// `-(1/4) int omega psi`.
pub fn energy(omega: &VorticityField) -> Result<f64> {
    let psi = poisson_freespace(omega)?;
    Ok(energy_with_stream(omega, &psi))
}

pub fn energy_with_stream(omega: &VorticityField, psi: &StreamField) -> f64 {
    let s: f64 = omega.values.iter().zip(&psi.values).map(|(w, p)| w * p).sum();
    -0.25 * omega.grid.cell_area() * s
}

pub fn enstrophy(omega: &VorticityField) -> f64 {
    0.5 * l2_norm_sq(omega)
}

pub fn impulse(omega: &VorticityField) -> f64 {
    let g = omega.grid;
    let s: f64 = omega.values.iter().enumerate().map(|(k, w)| g.coord(k / g.n) * w).sum();
    0.5 * g.cell_area() * s
}

/// `int |x2 omega|` over the plane.
pub fn x2_weighted_l1(omega: &VorticityField) -> f64 {
    let g = omega.grid;
    let s: f64 = omega.values.iter().enumerate().map(|(k, w)| (g.coord(k / g.n) * w).abs()).sum();
    g.cell_area() * s
}

/// One weighted quadrature node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSample {
    pub point: Point,
    pub weight: f64,
    pub value: f64,
}

/// Energy of an odd field from its upper-half samples via the half-plane
/// Green's function. The self term uses the cell average of the logarithmic
/// singularity over a square of the sample's area.
pub fn energy_halfplane(samples: &[QuadSample]) -> f64 {
    let mut total = 0.0;
    for (a, sa) in samples.iter().enumerate() {
        if sa.value == 0.0 {
            continue;
        }
        let x = sa.point;
        let mut row = 0.0;
        for (b, sb) in samples.iter().enumerate() {
            if sb.value == 0.0 {
                continue;
            }
            let y = sb.point;
            let k = if a == b {
                let cell_log = 0.5 * sb.weight.ln() + UNIT_CELL_LOG_MEAN;
                (4.0 * x[1] * y[1]).ln() - 2.0 * cell_log
            } else {
                let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                (1.0 + 4.0 * x[1] * y[1] / d2).ln()
            };
            row += k * sb.weight * sb.value;
        }
        total += row * sa.weight * sa.value;
    }
    total / (8.0 * PI)
}

pub fn upper_half_samples(omega: &VorticityField) -> Vec<QuadSample> {
    let g = omega.grid;
    let w = g.cell_area();
    (g.len() / 2..g.len())
        .map(|k| QuadSample { point: g.point(k), weight: w, value: omega.values[k] })
        .collect()
}

/// `c^-2 ||Err h||_1 + ||h||_2^2` over the plane.
pub fn distance_d(h: &VorticityField) -> f64 {
    let g = h.grid;
    let c2 = dipole::constants().c_l.powi(2);
    let mut lin = 0.0;
    let mut quad = 0.0;
    for (k, v) in h.values.iter().enumerate() {
        lin += (dipole::err_lamb(g.point(k)) * v).abs();
        quad += v * v;
    }
    g.cell_area() * (lin / c2 + quad)
}

/// Distance functional from arbitrary weighted samples covering the plane.
pub fn distance_d_samples(samples: &[QuadSample]) -> f64 {
    let c2 = dipole::constants().c_l.powi(2);
    samples
        .iter()
        .map(|s| s.weight * ((dipole::err_lamb(s.point) * s.value).abs() / c2 + s.value * s.value))
        .sum()
}

/// `E / (||x2 omega||_1 ||omega||_2)`.
pub fn interpolation_ratio(omega: &VorticityField) -> Result<f64> {
    let e = energy(omega)?;
    Ok(e / (x2_weighted_l1(omega) * l2_norm_sq(omega).sqrt()))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldSidecar {
    #[serde(rename = "L")]
    pub half_length: f64,
    pub n: usize,
    pub odd_flag: bool,
    pub time: f64,
}

/// Writes `<stem>.bin` (little-endian f64, row-major) and `<stem>.json`.
pub fn write_field(stem: &Path, omega: &VorticityField) -> Result<(PathBuf, PathBuf)> {
    let bin = stem.with_extension("bin");
    let json = stem.with_extension("json");
    let mut bytes = Vec::with_capacity(8 * omega.values.len());
    for v in &omega.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    let side = FieldSidecar {
        half_length: omega.grid.half_length,
        n: omega.grid.n,
        odd_flag: omega.odd,
        time: omega.time,
    };
    fs::write(&json, serde_json::to_string_pretty(&side)?)?;
    Ok((bin, json))
}

pub fn read_field(stem: &Path) -> Result<VorticityField> {
    let side: FieldSidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let bytes = fs::read(stem.with_extension("bin"))?;
    let grid = Grid2D::new(side.half_length, side.n)?;
    if bytes.len() != 8 * grid.len() {
        return Err(LabError::Invalid(format!(
            "binary holds {} bytes, expected {}",
            bytes.len(),
            8 * grid.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut f = VorticityField::from_values(grid, values, side.odd_flag)?;
    f.time = side.time;
    Ok(f)
}

/// CSV with header `x1,x2,omega`.
pub fn write_field_csv(path: &Path, omega: &VorticityField) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x1,x2,omega")?;
    for (k, v) in omega.values.iter().enumerate() {
        let p = omega.grid.point(k);
        writeln!(w, "{:.10e},{:.10e},{:.16e}", p[0], p[1], v)?;
    }
    w.flush()?;
    Ok(())
}
