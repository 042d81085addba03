//! Bessel functions of the first kind, integer order, real argument.
//!
//! Small arguments use the ascending series. Everything else goes through
//! Miller's backward recurrence normalized with `J_0 + 2 sum J_2k = 1`.

use std::sync::{OnceLock, RwLock};

use crate::error::{LabError, Result};

pub const MAX_ORDER: u32 = 64;
pub const MAX_INDEX: u32 = 64;

const RESCALE_AT: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

fn check_args(m: u32, x: f64) -> Result<()> {
    if m > MAX_ORDER {
        return Err(LabError::UnsupportedOrder { m, max: MAX_ORDER });
    }
    if !x.is_finite() || x < 0.0 {
        return Err(LabError::Domain(format!("bessel argument must be finite and >= 0, got {x}")));
    }
    Ok(())
}

/// `J_m(x)` for `0 <= x`, `m <= 64`.
pub fn bessel_j(m: u32, x: f64) -> Result<f64> {
    check_args(m, x)?;
    Ok(jn(m, x))
}

/// `J_m'(x)`.
pub fn bessel_j_prime(m: u32, x: f64) -> Result<f64> {
    check_args(m, x)?;
    Ok(jn_prime(m, x))
}

/// `j`-th positive zero of `J_m`, `1 <= j <= 64`.
pub fn bessel_zero(m: u32, j: u32) -> Result<f64> {
    zero_table().get(m, j)
}

/// First positive zero of `J_1`; the dipole wavenumber.
pub fn c_lamb() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| zero_table().get(1, 1).expect("zero (1,1) is in range"))
}

pub(crate) fn jn(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if use_series(m, x) {
        series(m, x)
    } else {
        let mut out = vec![0.0; m as usize + 1];
        miller(x, &mut out);
        out[m as usize]
    }
}

pub(crate) fn jn_prime(m: u32, x: f64) -> f64 {
    if m == 0 {
        -jn(1, x)
    } else {
        0.5 * (jn(m - 1, x) - jn(m + 1, x))
    }
}

/// Fills `out[k] = J_k(x)` for `k = 0..out.len()` with a single recurrence pass.
pub fn bessel_j_orders(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if x == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
    } else if x < 1e-6 {
        for (k, v) in out.iter_mut().enumerate() {
            *v = series(k as u32, x);
        }
    } else {
        miller(x, out);
    }
}

fn use_series(m: u32, x: f64) -> bool {
    x <= 1.0 || 0.25 * x * x <= (m + 1) as f64
}

fn series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=m {
        lead *= half / k as f64;
    }
    let q = -half * half;
    let mut term = lead;
    let mut sum = lead;
    for k in 1..200 {
        term *= q / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(x: f64, out: &mut [f64]) {
    let nmax = out.len() - 1;
    let top = (nmax as f64).max(x);
    let mut start = (top + 30.0 + (50.0 * top).sqrt()) as usize;
    start += start % 2;
    out.fill(0.0);

    let two_over_x = 2.0 / x;
    let mut above = 0.0;
    let mut cur = 1e-30;
    let mut even_sum = 0.0;
    for k in (1..=start).rev() {
        let below = k as f64 * two_over_x * cur - above;
        above = cur;
        cur = below;
        let idx = k - 1;
        if idx <= nmax {
            out[idx] = cur;
        }
        if idx >= 2 && idx % 2 == 0 {
            even_sum += cur;
        }
        if cur.abs() > RESCALE_AT {
            cur *= RESCALE_BY;
            above *= RESCALE_BY;
            even_sum *= RESCALE_BY;
            for v in out[idx.min(nmax)..].iter_mut() {
                *v *= RESCALE_BY;
            }
        }
    }
    let norm = cur + 2.0 * even_sum;
    for v in out.iter_mut() {
        *v /= norm;
    }
}

/// Cached zeros `mu_{m,j}`, filled per order on first use.
#[derive(Debug, Default)]
pub struct BesselZeroTable {
    rows: RwLock<Vec<Vec<f64>>>,
}

impl BesselZeroTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, m: u32, j: u32) -> Result<f64> {
        if m > MAX_ORDER {
            return Err(LabError::UnsupportedOrder { m, max: MAX_ORDER });
        }
        if j == 0 || j > MAX_INDEX {
            return Err(LabError::UnsupportedIndex { j, max: MAX_INDEX });
        }
        {
            let rows = self.rows.read().expect("zero table lock");
            if let Some(z) = rows.get(m as usize).and_then(|r| r.get(j as usize - 1)) {
                return Ok(*z);
            }
        }
        let zeros = find_zeros(m, MAX_INDEX as usize);
        let mut rows = self.rows.write().expect("zero table lock");
        if rows.len() <= m as usize {
            rows.resize(m as usize + 1, Vec::new());
        }
        rows[m as usize] = zeros;
        Ok(rows[m as usize][j as usize - 1])
    }

    /// The first `count` zeros of `J_m`.
    pub fn zeros(&self, m: u32, count: u32) -> Result<Vec<f64>> {
        (1..=count).map(|j| self.get(m, j)).collect()
    }
}

pub fn zero_table() -> &'static BesselZeroTable {
    static TABLE: OnceLock<BesselZeroTable> = OnceLock::new();
    TABLE.get_or_init(BesselZeroTable::new)
}

fn find_zeros(m: u32, count: usize) -> Vec<f64> {
    const STEP: f64 = 0.5;
    let mut zeros = Vec::with_capacity(count);
    let mut a = m.max(1) as f64;
    let mut fa = jn(m, a);
    while zeros.len() < count {
        let b = a + STEP;
        let fb = jn(m, b);
        if fa * fb < 0.0 || fb == 0.0 {
            zeros.push(refine_zero(m, a, b, fa));
        }
        a = b;
        fa = fb;
    }
    zeros
}

fn refine_zero(m: u32, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    while hi - lo > 1e-14 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = jn(m, mid);
        if fm == 0.0 {
            return mid;
        }
        if fm * flo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    let x = 0.5 * (lo + hi);
    let d = jn_prime(m, x);
    if d != 0.0 {
        let polished = x - jn(m, x) / d;
        if polished > lo - 1e-12 && polished < hi + 1e-12 {
            return polished;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j_prime(0, 0.0).unwrap(), 0.0);
        assert!((bessel_j_prime(1, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bessel_j(0, -1.0), Err(LabError::Domain(_))));
        assert!(matches!(bessel_j(0, f64::NAN), Err(LabError::Domain(_))));
        assert!(matches!(bessel_j(65, 1.0), Err(LabError::UnsupportedOrder { .. })));
        assert!(matches!(bessel_j_prime(70, 1.0), Err(LabError::UnsupportedOrder { .. })));
        assert!(matches!(bessel_zero(0, 0), Err(LabError::UnsupportedIndex { .. })));
        assert!(matches!(bessel_zero(0, 65), Err(LabError::UnsupportedIndex { .. })));
        assert!(matches!(bessel_zero(65, 1), Err(LabError::UnsupportedOrder { .. })));
    }

    #[test]
    fn known_zeros() {
        assert!((bessel_zero(0, 1).unwrap() - 2.404_825_557_695_773).abs() < 1e-13);
        assert!((c_lamb() - 3.831_705_970_207_512).abs() < 1e-13);
        let a = bessel_zero(0, 1).unwrap();
        let b = bessel_zero(1, 1).unwrap();
        let c = bessel_zero(0, 2).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn batch_matches_single() {
        let mut out = vec![0.0; 20];
        for &x in &[0.3, 2.0, 7.5, 33.0] {
            bessel_j_orders(x, &mut out);
            for (k, v) in out.iter().enumerate() {
                let s = jn(k as u32, x);
                assert!((v - s).abs() <= 1e-14 * s.abs().max(1e-3), "k={k} x={x}");
            }
        }
    }
}
