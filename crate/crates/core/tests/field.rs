use std::f64::consts::PI;

use lamblab::dipole::{self, exact_invariants};
use lamblab::field::*;
use lamblab::quad::gauss_legendre_on;
use proptest::prelude::*;

mod common;
use common::random_odd_field;

#[test]
fn dipole_stream_function_matches_closed_form() {
    let g = Grid2D::new(6.0, 512).unwrap();
    let w = VorticityField::lamb(g);
    let psi = poisson_freespace(&w).unwrap();
    let mut worst = 0.0f64;
    for k in 0..g.len() {
        let p = g.point(k);
        if p[0].hypot(p[1]) < 1.0 {
            worst = worst.max((psi.values[k] + p[1] - dipole::psi_lamb_moving(p)).abs());
        }
    }
    assert!(worst <= 5e-4, "max error {worst:.3e}");
}

#[test]
fn radial_bump_exterior_is_logarithmic() {
    let g = Grid2D::new(6.0, 256).unwrap();
    let bump = |p: [f64; 2]| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        (-r2 / 0.09).exp()
    };
    let w = VorticityField::sample(g, false, bump);
    let mass: f64 = w.values.iter().sum::<f64>() * g.cell_area();
    let psi = poisson_freespace(&w).unwrap();
    for k in 0..g.len() {
        let p = g.point(k);
        let r = p[0].hypot(p[1]);
        if (1.5..2.9).contains(&r) {
            let expect = mass / (2.0 * PI) * r.ln();
            assert!((psi.values[k] - expect).abs() <= 1e-6, "r={r}");
        }
    }
}

#[test]
fn discrete_laplacian_recovers_source() {
    let mut errs = Vec::new();
    for n in [96, 192] {
        let g = Grid2D::new(6.0, n).unwrap();
        let w = VorticityField::sample(g, false, |p| (-(p[0] * p[0] + p[1] * p[1]) / 0.25).exp());
        let psi = poisson_freespace(&w).unwrap();
        let lap = discrete_laplacian(g, &psi.values);
        let mut e = 0.0f64;
        for k in 0..g.len() {
            let p = g.point(k);
            if p[0].abs() < 1.5 && p[1].abs() < 1.5 {
                e = e.max((lap[k] - w.values[k]).abs());
            }
        }
        errs.push(e);
    }
    assert!(errs[1] < 1e-2);
    assert!(errs[0] / errs[1] > 3.5, "not second order: {errs:?}");
}

#[test]
fn dipole_invariants_at_512() {
    let g = Grid2D::new(6.0, 512).unwrap();
    let w = VorticityField::lamb(g);
    let ex = exact_invariants();
    let e = energy(&w).unwrap();
    assert!((e / ex.energy - 1.0).abs() <= 1e-3, "E={e}");
    assert!((enstrophy(&w) / ex.enstrophy - 1.0).abs() <= 1e-3);
    assert!((impulse(&w) / ex.impulse - 1.0).abs() <= 1e-3);
}

#[test]
fn bilinearity_and_mirror() {
    let g = Grid2D::new(4.0, 64).unwrap();
    let w = random_odd_field(g, 3, 4);
    let e1 = energy(&w).unwrap();
    let e2 = energy(&w.scaled(2.0)).unwrap();
    assert_eq!(e2 / e1, 4.0);
    assert_eq!(impulse(&w.mirrored()), -impulse(&w));
}

#[test]
fn halfplane_energy_matches_full_plane() {
    let g = Grid2D::new(4.0, 64).unwrap();
    for seed in 0..3 {
        let w = random_odd_field(g, seed, 3);
        let full = energy(&w).unwrap();
        let half = energy_halfplane(&upper_half_samples(&w));
        assert!((half / full - 1.0).abs() <= 5e-3, "seed {seed}: {half} vs {full}");
    }
}

#[test]
fn halfplane_energy_of_dipole_on_polar_samples() {
    let (rs, wr) = gauss_legendre_on(100, 0.0, 1.0);
    let (ts, wt) = gauss_legendre_on(50, 0.0, PI);
    let mut samples = Vec::new();
    for (r, a) in rs.iter().zip(&wr) {
        for (t, b) in ts.iter().zip(&wt) {
            let p = [r * t.cos(), r * t.sin()];
            samples.push(QuadSample { point: p, weight: a * b * r, value: dipole::omega_lamb(p) });
        }
    }
    let e = energy_halfplane(&samples);
    assert!((e - PI).abs() <= 2e-2 * PI, "E={e}");
}

#[test]
fn distance_inside_disk_is_l2() {
    let g = Grid2D::new(4.0, 64).unwrap();
    let h = VorticityField::sample(g, true, |p| {
        if p[0].hypot(p[1]) < 0.9 {
            p[1] * (1.0 - p[0] * p[0])
        } else {
            0.0
        }
    });
    assert_eq!(distance_d(&h), l2_norm_sq(&h));
}

#[test]
fn distance_on_annulus_matches_closed_form() {
    // h = sign(x2) on 2 <= |x| <= 3: c^-2 ||Err h||_1 = 4 int_2^3 (r^2 - 1) dr = 64/3.
    let closed = 64.0 / 3.0 + 5.0 * PI;
    let (rs, wr) = gauss_legendre_on(40, 2.0, 3.0);
    let (ts, wt) = gauss_legendre_on(80, 0.0, PI);
    let mut samples = Vec::new();
    for (r, a) in rs.iter().zip(&wr) {
        for (t, b) in ts.iter().zip(&wt) {
            for sign in [1.0, -1.0] {
                let p = [r * t.cos(), sign * r * t.sin()];
                samples.push(QuadSample { point: p, weight: a * b * r, value: sign });
            }
        }
    }
    let direct = distance_d_samples(&samples);
    assert!((direct - closed).abs() <= 1e-6, "{direct} vs {closed}");

    let g = Grid2D::new(4.0, 512).unwrap();
    let h = VorticityField::sample(g, true, |p| {
        let r = p[0].hypot(p[1]);
        if (2.0..=3.0).contains(&r) {
            p[1].signum()
        } else {
            0.0
        }
    });
    assert!((distance_d(&h) / closed - 1.0).abs() < 2e-2);
}

#[test]
fn sandwich_and_interpolation_ratio() {
    let g = Grid2D::new(4.0, 64).unwrap();
    let c_d = 2.0 * PI.sqrt();
    let lamb_ratio = interpolation_ratio(&VorticityField::lamb(Grid2D::new(4.0, 128).unwrap())).unwrap();
    let mut max_ratio = 0.0f64;
    for seed in 0..100 {
        let h = random_odd_field(g, 1000 + seed, 2).scaled(0.05);
        let d = distance_d(&h);
        let l2 = l2_norm_sq(&h);
        let x2l1 = x2_weighted_l1(&h);
        assert!(l2 <= d);
        assert!(d <= x2l1 + l2 + 1e-14);
        assert!(x2l1 <= c_d * (d + d.sqrt()));
        max_ratio = max_ratio.max(interpolation_ratio(&h).unwrap());
    }
    assert!(max_ratio <= lamb_ratio * 1.01, "random {max_ratio} vs dipole {lamb_ratio}");
}

#[test]
fn invariants_converge_with_resolution() {
    let ex = exact_invariants();
    let mut first = None;
    for n in [128, 512] {
        let w = VorticityField::lamb(Grid2D::new(6.0, n).unwrap());
        let errs = [
            (energy(&w).unwrap() / ex.energy - 1.0).abs(),
            (enstrophy(&w) / ex.enstrophy - 1.0).abs(),
            (impulse(&w) / ex.impulse - 1.0).abs(),
        ];
        match first {
            None => first = Some(errs),
            Some(coarse) => {
                for q in 0..3 {
                    assert!(errs[q] < coarse[q], "q={q}: {errs:?} vs {coarse:?}");
                }
            }
        }
    }
}

#[test]
fn field_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid2D::new(4.0, 16).unwrap();
    let mut w = random_odd_field(g, 9, 2);
    w.time = 1.25;
    let (bin, json) = write_field(&dir.path().join("snap"), &w).unwrap();
    assert_eq!(std::fs::metadata(&bin).unwrap().len(), 8 * 256);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(side["L"], 4.0);
    assert_eq!(side["n"], 16);
    assert_eq!(side["odd_flag"], true);
    let back = read_field(&dir.path().join("snap")).unwrap();
    assert_eq!(back, w);
    let bytes = std::fs::read(bin).unwrap();
    assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), w.values[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn stream_of_odd_field_is_odd(seed in 0u64..1000) {
        let g = Grid2D::new(4.0, 32).unwrap();
        let w = random_odd_field(g, seed, 2);
        let psi = poisson_freespace(&w).unwrap();
        let scale = psi.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..g.len() / 2 {
            prop_assert!((psi.values[k] + psi.values[g.mirror(k)]).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
