//! Closed-form Lamb-Chaplygin dipole travelling at unit speed along `+x1`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;

use crate::specfun::{c_lamb, jn};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DipoleConstants {
    pub c_l: f64,
    /// Vorticity prefactor `-2 c / J_0(c)`.
    pub amp: f64,
    /// Moving-frame stream prefactor `2 / (c J_0(c))`.
    pub psi_amp: f64,
}

impl DipoleConstants {
    fn compute() -> Self {
        let c_l = c_lamb();
        let j0 = jn(0, c_l);
        assert!(j0 < 0.0, "J_0(c_L) must be negative");
        Self { c_l, amp: -2.0 * c_l / j0, psi_amp: 2.0 / (c_l * j0) }
    }
}

pub fn constants() -> &'static DipoleConstants {
    static K: OnceLock<DipoleConstants> = OnceLock::new();
    K.get_or_init(DipoleConstants::compute)
}

/// Energy, enstrophy and impulse of the dipole.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ExactInvariants {
    pub energy: f64,
    pub enstrophy: f64,
    pub impulse: f64,
}

pub fn exact_invariants() -> ExactInvariants {
    let c = constants().c_l;
    ExactInvariants { energy: PI, enstrophy: PI * c * c, impulse: PI }
}

#[inline]
fn polar(p: Point) -> (f64, f64, f64) {
    let r = p[0].hypot(p[1]);
    if r == 0.0 {
        (0.0, 1.0, 0.0)
    } else {
        (r, p[0] / r, p[1] / r)
    }
}

pub fn omega_lamb(p: Point) -> f64 {
    let (r, _, s) = polar(p);
    if r >= 1.0 {
        return 0.0;
    }
    let k = constants();
    k.amp * jn(1, k.c_l * r) * s
}

pub fn psi_lamb_moving(p: Point) -> f64 {
    let (r, _, s) = polar(p);
    if r == 0.0 {
        return 0.0;
    }
    if r < 1.0 {
        let k = constants();
        k.psi_amp * jn(1, k.c_l * r) * s
    } else {
        (1.0 - 1.0 / (r * r)) * p[1]
    }
}

/// Lab-frame stream function `psi_moving - x2`.
pub fn psi_lamb_lab(p: Point) -> f64 {
    psi_lamb_moving(p) - p[1]
}

pub fn err_lamb(p: Point) -> f64 {
    let r2 = p[0] * p[0] + p[1] * p[1];
    if r2 < 1.0 {
        return 0.0;
    }
    let c = constants().c_l;
    c * c * (1.0 - 1.0 / r2) * p[1]
}

/// `d/dx1` of the dipole vorticity, `-(amp c / 2) J_2(c r) sin 2t` inside the disk.
pub fn d1_omega_lamb(p: Point) -> f64 {
    let (r, co, s) = polar(p);
    if r >= 1.0 {
        return 0.0;
    }
    let k = constants();
    -k.amp * k.c_l * jn(2, k.c_l * r) * s * co
}

pub fn d2_omega_lamb(p: Point) -> f64 {
    let (r, _, s) = polar(p);
    if r >= 1.0 {
        return 0.0;
    }
    let k = constants();
    let cr = k.c_l * r;
    let j1_over_r = if r == 0.0 { 0.5 * k.c_l } else { jn(1, cr) / r };
    k.amp * (j1_over_r - k.c_l * jn(2, cr) * s * s)
}

/// Angular derivative `x^perp . grad omega = amp J_1(c r) cos t`.
pub fn dtheta_omega_lamb(p: Point) -> f64 {
    let (r, co, _) = polar(p);
    if r >= 1.0 {
        return 0.0;
    }
    let k = constants();
    k.amp * jn(1, k.c_l * r) * co
}

/// Max of `|omega + c^2 psi_moving|` over points of the open unit disk.
pub fn check_algebraic_relation(points: &[Point]) -> f64 {
    let c2 = constants().c_l.powi(2);
    points
        .iter()
        .filter(|p| p[0].hypot(p[1]) < 1.0)
        .map(|&p| (omega_lamb(p) + c2 * psi_lamb_moving(p)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_and_parity() {
        assert_eq!(omega_lamb([0.3, 0.0]), 0.0);
        assert_eq!(omega_lamb([0.0, 2.0]), 0.0);
        assert_eq!(err_lamb([0.5, 0.5]), 0.0);
        for &p in &[[0.2, 0.4], [-0.7, 0.1], [0.05, 0.9]] {
            assert_eq!(omega_lamb(p), -omega_lamb([p[0], -p[1]]));
        }
        assert!(err_lamb([3.0, -4.0]) < 0.0);
        assert_eq!(err_lamb([3.0, 4.0]), -err_lamb([3.0, -4.0]));
    }

    #[test]
    fn exterior_branch() {
        assert!((psi_lamb_moving([0.0, 2.0]) - 1.5).abs() < 1e-15);
        for k in 0..16 {
            let t = k as f64 * 0.4;
            assert!(psi_lamb_moving([t.cos(), t.sin()]).abs() < 1e-15);
        }
    }

    #[test]
    fn constants_signs() {
        let k = constants();
        assert!(k.amp > 0.0);
        assert!(k.psi_amp < 0.0);
        let inv = exact_invariants();
        assert_eq!(inv.energy, PI);
        assert_eq!(inv.impulse, PI);
    }

    #[test]
    fn relation_single_point() {
        assert!(check_algebraic_relation(&[[0.0, 0.5]]) <= 1e-12);
        assert!(check_algebraic_relation(&[[0.0, 1.0 - 1e-9]]) <= 1e-9);
    }
}
