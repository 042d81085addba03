//! Helpers shared by the integration tests.
#![allow(dead_code)]

use lamblab::field::{Grid2D, VorticityField};
use lamblab::quad::gauss_legendre_on;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const C_L: f64 = 3.831_705_970_207_512_3;

pub fn lu_det_sign(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m = a.to_vec();
    let mut sign = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            sign = -sign;
        }
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
        sign *= m[col][col].signum();
    }
    sign
}

/// Unsymmetrized Nyström matrix rebuilt from the kernel, with the diagonal
/// correction taken from a fine split Gauss rule.
pub fn raw_matrix(m: u32, n: usize) -> Vec<Vec<f64>> {
    let (r, w) = gauss_legendre_on(n, 0.0, 1.0);
    let kern = |a: f64, b: f64| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if m == 0 {
            -hi.ln()
        } else {
            (lo / hi).powi(m as i32) / (2.0 * m as f64)
        }
    };
    let c2 = C_L * C_L;
    (0..n)
        .map(|i| {
            let (xa, wa) = gauss_legendre_on(300, 0.0, r[i]);
            let (xb, wb) = gauss_legendre_on(300, r[i], 1.0);
            let moment: f64 = xa.iter().zip(&wa).chain(xb.iter().zip(&wb)).map(|(p, q)| q * p * kern(r[i], *p)).sum();
            let row: f64 = (0..n).map(|j| kern(r[i], r[j]) * w[j] * r[j]).sum();
            (0..n)
                .map(|j| {
                    let mut g = kern(r[i], r[j]) * w[j] * r[j];
                    if i == j {
                        g += moment - row;
                    }
                    f64::from(i == j) - c2 * g
                })
                .collect()
        })
        .collect()
}

pub fn brute_force_eigs(a: &[Vec<f64>], lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let shifted = |s: f64| -> f64 {
        let b: Vec<Vec<f64>> =
            a.iter().enumerate().map(|(i, row)| row.iter().enumerate().map(|(j, v)| v - if i == j { s } else { 0.0 }).collect()).collect();
        lu_det_sign(&b)
    };
    let mut out = Vec::new();
    let steps = 20000;
    let h = (hi - lo) / steps as f64;
    let mut prev = shifted(lo);
    for k in 1..=steps {
        let x = lo + k as f64 * h;
        let cur = shifted(x);
        if cur != prev {
            let (mut a0, mut b0) = (x - h, x);
            for _ in 0..60 {
                let mid = 0.5 * (a0 + b0);
                if shifted(mid) == prev {
                    a0 = mid;
                } else {
                    b0 = mid;
                }
            }
            out.push(0.5 * (a0 + b0));
            if out.len() == count {
                break;
            }
        }
        prev = cur;
    }
    out
}

pub fn random_odd_field(grid: Grid2D, seed: u64, bumps: usize) -> VorticityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                rng.gen_range(-0.8..0.8),
                rng.gen_range(0.2..0.9),
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.2..1.0),
            )
        })
        .collect();
    VorticityField::sample(grid, true, |p| {
        params
            .iter()
            .map(|&(cx, cy, s, a)| {
                let g = |y: f64| {
                    let q = ((p[0] - cx).powi(2) + (y - cy).powi(2)) / (s * s);
                    if q < 1.0 {
                        (1.0 - q).powi(3)
                    } else {
                        0.0
                    }
                };
                a * (g(p[1]) - g(-p[1]))
            })
            .sum()
    })
}
