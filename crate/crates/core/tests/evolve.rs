use lamblab::dipole;
use lamblab::error::LabError;
use lamblab::evolve::*;
use lamblab::field::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 0.3;
const OFFSET: f64 = 0.6;
const PEAK: f64 = 5.0;

fn gauss(x: f64, y: f64) -> f64 {
    PEAK * (-(x * x + y * y) / (SIGMA * SIGMA)).exp()
}

/// Opposite Gaussian vortices at `(0, ±OFFSET)`.
fn gaussian_pair(grid: Grid2D) -> VorticityField {
    VorticityField::sample(grid, true, |p| gauss(p[0], p[1] - OFFSET) - gauss(p[0], p[1] + OFFSET))
}

/// Closed-form `-u·∇ω` for the pair; each vortex has swirl `Γ (1 - e^{-r²/σ²}) / (2π r)`.
fn gaussian_pair_rhs(p: [f64; 2]) -> f64 {
    let swirl = |x: f64, y: f64| {
        let r2 = x * x + y * y;
        let f = if r2 < 1e-14 {
            PEAK / 2.0
        } else {
            PEAK * SIGMA * SIGMA / (2.0 * r2) * (1.0 - (-r2 / (SIGMA * SIGMA)).exp())
        };
        [-y * f, x * f]
    };
    let (x, y) = (p[0], p[1]);
    let (ua, ub) = (swirl(x, y - OFFSET), swirl(x, y + OFFSET));
    let u = [ua[0] - ub[0], ua[1] - ub[1]];
    let ga = gauss(x, y - OFFSET) * (-2.0 / (SIGMA * SIGMA));
    let gb = gauss(x, y + OFFSET) * (-2.0 / (SIGMA * SIGMA));
    let grad = [(ga - gb) * x, ga * (y - OFFSET) - gb * (y + OFFSET)];
    -(u[0] * grad[0] + u[1] * grad[1])
}

fn stable_dt(grid: Grid2D, speed: f64, t_end: f64) -> f64 {
    let steps = (t_end / (0.5 * grid.spacing() / speed)).ceil();
    t_end / steps
}

fn random_field_in_disk(grid: Grid2D, seed: u64) -> VorticityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(0.3..0.7), rng.gen_range(0.15..0.25), rng.gen_range(-1.0..1.0)))
        .collect();
    VorticityField::sample(grid, true, |p| {
        bumps
            .iter()
            .map(|&(cx, cy, s, a)| {
                let lobe = |y: f64| {
                    let q = ((p[0] - cx).powi(2) + (y - cy).powi(2)) / (s * s);
                    if q < 1.0 {
                        (1.0 - q).powi(4)
                    } else {
                        0.0
                    }
                };
                a * (lobe(p[1]) - lobe(-p[1]))
            })
            .sum()
    })
}

#[test]
fn rhs_matches_closed_form_for_gaussian_pair() {
    let mut errs = Vec::new();
    for n in [128, 256, 512] {
        let g = Grid2D::new(6.0, n).unwrap();
        let r = rhs(&gaussian_pair(g), 1e-3, false).unwrap();
        let scale = (0..g.len()).map(|k| gaussian_pair_rhs(g.point(k)).abs()).fold(0.0, f64::max);
        let err = (0..g.len()).map(|k| (r.values[k] - gaussian_pair_rhs(g.point(k))).abs()).fold(0.0, f64::max);
        errs.push(err / scale);
    }
    assert!(errs[2] <= 1e-7, "{errs:?}");
    assert!(errs[0] / errs[1] > 16.0 && errs[1] / errs[2] > 8.0, "{errs:?}");
}

#[test]
fn comoving_rhs_adds_the_frame_derivative() {
    let g = Grid2D::new(6.0, 256).unwrap();
    let w = gaussian_pair(g);
    let lab = rhs(&w, 1e-3, false).unwrap();
    let moving = rhs(&w, 1e-3, true).unwrap();
    let d1 = |p: [f64; 2]| {
        let s2 = SIGMA * SIGMA;
        -2.0 * p[0] / s2 * (gauss(p[0], p[1] - OFFSET) - gauss(p[0], p[1] + OFFSET))
    };
    let err = (0..g.len()).map(|k| (moving.values[k] - lab.values[k] - d1(g.point(k))).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err:.3e}");
}

#[test]
fn dipole_rhs_approaches_traveling_wave_relation() {
    let mut interior = Vec::new();
    let mut frame = Vec::new();
    for n in [128, 256, 512] {
        let g = Grid2D::new(6.0, n).unwrap();
        let w = VorticityField::lamb(g);
        let lab = rhs(&w, 1e-4, false).unwrap();
        let moving = rhs(&w, 1e-4, true).unwrap();
        let (mut e, mut m) = (0.0f64, 0.0f64);
        for k in 0..g.len() {
            let p = g.point(k);
            if p[0].hypot(p[1]) < 0.5 {
                e = e.max((lab.values[k] + dipole::d1_omega_lamb(p)).abs());
                m = m.max(moving.values[k].abs());
            }
        }
        interior.push(e);
        frame.push(m);
    }
    println!("max |rhs + d1 omega| for r < 0.5 at n = 128, 256, 512: {interior:?}");
    println!("max |comoving rhs| for r < 0.5: {frame:?}");
    assert!(interior[0] > interior[1] && interior[1] > interior[2], "{interior:?}");
    assert!(frame[0] > frame[1] && frame[1] > frame[2], "{frame:?}");
    assert!(interior[2] < 0.05 && frame[2] < 0.05, "{interior:?} {frame:?}");
}

#[test]
fn radial_vorticity_is_steady() {
    let g = Grid2D::new(6.0, 512).unwrap();
    let w = VorticityField::sample(g, false, |p| (-(p[0] * p[0] + p[1] * p[1]) / 0.25).exp());
    let r = rhs(&w, 1e-3, false).unwrap();
    assert!(r.max_abs() <= 1e-10, "{:.3e}", r.max_abs());
}

#[test]
fn rhs_keeps_odd_symmetry() {
    let g = Grid2D::new(6.0, 256).unwrap();
    for seed in 0..3 {
        let w = random_field_in_disk(g, seed);
        let r = rhs(&w, 1e-3, true).unwrap();
        assert!(r.odd_defect() <= 1e-12 * r.max_abs(), "{:.3e}", r.odd_defect());
    }
}

#[test]
fn rhs_rejects_cfl_violation() {
    let g = Grid2D::new(6.0, 128).unwrap();
    let w = VorticityField::lamb(g);
    assert!(matches!(rhs(&w, 1.0, false), Err(LabError::Cfl { .. })));
    let mut cfg = SolverConfig::new(g, 0.05, 1.0);
    cfg.output_stride = 5;
    assert!(matches!(run(&w, &cfg), Err(LabError::Cfl { .. })));
}

#[test]
fn config_validation() {
    let g = Grid2D::new(6.0, 64).unwrap();
    assert!(SolverConfig::new(g, 0.03, 1.0).validate().is_err());
    assert!(SolverConfig::new(g, -0.01, 1.0).validate().is_err());
    assert_eq!(SolverConfig::new(g, 0.01, 1.0).steps().unwrap(), 100);
    let mut cfg = SolverConfig::new(g, 0.01, 1.0);
    cfg.dealias = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = SolverConfig::new(g, 0.01, 1.0);
    cfg.output_stride = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = SolverConfig::new(g, 0.01, 1.0);
    cfg.truncation = Truncation::Exponential { strength: -1.0, order: 36.0 };
    assert!(cfg.validate().is_err());
}

#[test]
fn config_json_defaults_and_unknown_fields() {
    let text = r#"{"grid": {"half_length": 6.0, "n": 64}, "dt": 0.01, "t_end": 1.0, "output_stride": 10}"#;
    let cfg: SolverConfig = serde_json::from_str(text).unwrap();
    assert!(cfg.comoving);
    assert_eq!(cfg.dealias, 1.0);
    assert_eq!(cfg.truncation, Truncation::Exponential { strength: 36.0, order: 36.0 });
    assert_eq!(cfg.drift_tol, 1e-4);
    let sharp = r#"{"grid": {"half_length": 6.0, "n": 64}, "dt": 0.01, "t_end": 1.0, "output_stride": 10,
        "dealias": 0.6666666666666666, "truncation": {"kind": "sharp"}}"#;
    let cfg: SolverConfig = serde_json::from_str(sharp).unwrap();
    assert_eq!(cfg.truncation, Truncation::Sharp);
    let bad = r#"{"grid": {"half_length": 6.0, "n": 64}, "dt": 0.01, "t_end": 1.0, "output_stride": 10, "cfl": 1}"#;
    assert!(serde_json::from_str::<SolverConfig>(bad).is_err());
}

/// Solutions at `dt`, `dt/2`, `dt/4` for a smooth pair with the sharp cutoff.
#[test]
fn rk4_is_fourth_order() {
    let g = Grid2D::new(6.0, 128).unwrap();
    let w = gaussian_pair(g);
    let solve = |steps: usize| {
        let mut cfg = SolverConfig::new(g, 0.5 / steps as f64, 0.5);
        cfg.truncation = Truncation::Sharp;
        cfg.output_stride = steps;
        run(&w, &cfg).unwrap().snapshots.pop().unwrap()
    };
    let (a, b, c) = (solve(40), solve(80), solve(160));
    let ratio = (l2_norm_sq(&a.sub(&b)) / l2_norm_sq(&b.sub(&c))).sqrt();
    assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio:.3}");
}

/// Time-step part of the enstrophy drift: the drift at `dt` minus the drift at `dt/8`.
#[test]
fn invariant_drift_shrinks_with_dt_for_smooth_data() {
    let g = Grid2D::new(6.0, 128).unwrap();
    let w = gaussian_pair(g);
    let drift = |steps: usize| {
        let mut cfg = SolverConfig::new(g, 1.0 / steps as f64, 1.0);
        cfg.truncation = Truncation::Sharp;
        cfg.output_stride = steps;
        let tr = run(&w, &cfg).unwrap();
        let (a, b) = (tr.diagnostics[0], tr.diagnostics[1]);
        (b.enstrophy - a.enstrophy) / a.enstrophy
    };
    let floor = drift(800);
    let (coarse, fine) = (drift(50) - floor, drift(100) - floor);
    println!("enstrophy drift from time stepping: {coarse:.3e} -> {fine:.3e}");
    assert!((coarse / fine).abs() >= 16.0, "{coarse:.3e} {fine:.3e}");
}

#[test]
fn dipole_translates_at_unit_speed_in_lab_frame() {
    let g = Grid2D::new(6.0, 128).unwrap();
    let t_end = 5.0;
    let mut cfg = SolverConfig::new(g, stable_dt(g, 3.6, t_end), t_end);
    cfg.comoving = false;
    cfg.drift_tol = 1e-2;
    cfg.output_stride = cfg.steps().unwrap();
    let w = VorticityField::sample(g, true, |p| dipole::omega_lamb([p[0] + 1.9, p[1]]));
    let tr = run(&w, &cfg).unwrap();
    let (a, b) = (tr.diagnostics[0], *tr.diagnostics.last().unwrap());
    let moved = b.center_x1 - a.center_x1;
    assert!((moved - 5.0).abs() <= 0.05, "moved {moved:.4}");
    assert!(b.odd_defect <= 1e-10 * b.max_abs);
}

#[test]
fn comoving_dipole_stays_centred() {
    let g = Grid2D::new(6.0, 128).unwrap();
    let mut cfg = SolverConfig::new(g, stable_dt(g, 2.6, 4.0), 4.0);
    cfg.output_stride = cfg.steps().unwrap() / 4;
    cfg.drift_tol = 1e-2;
    let tr = run(&VorticityField::lamb(g), &cfg).unwrap();
    for d in &tr.diagnostics {
        assert!((d.center_x1 - d.t).abs() < 0.02, "t = {} centre {}", d.t, d.center_x1);
        assert!(d.courant <= 0.5 + 1e-12);
    }
    let times: Vec<f64> = tr.snapshots.iter().map(|s| s.time).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn drift_beyond_tolerance_aborts() {
    let g = Grid2D::new(6.0, 64).unwrap();
    let mut cfg = SolverConfig::new(g, stable_dt(g, 2.6, 2.0), 2.0);
    cfg.truncation = Truncation::Sharp;
    cfg.output_stride = 4;
    cfg.drift_tol = 1e-9;
    let err = run(&VorticityField::lamb(g), &cfg).unwrap_err();
    assert!(matches!(err, LabError::ConservationDrift { .. }), "{err}");
}

#[test]
fn time_reversal_returns_to_start() {
    let g = Grid2D::new(6.0, 512).unwrap();
    let w = VorticityField::lamb(g);
    let t_end = 0.5;
    let mut cfg = SolverConfig::new(g, stable_dt(g, 2.6, t_end), t_end);
    cfg.output_stride = cfg.steps().unwrap();
    cfg.truncation = Truncation::Sharp;
    cfg.dealias = 2.0 / 3.0;
    let sharp = time_reversal_error(&w, &cfg).unwrap();
    assert!(sharp <= 1e-4, "{sharp:.3e}");
    let filtered = time_reversal_error(&w, &SolverConfig { truncation: Truncation::default(), dealias: 1.0, ..cfg }).unwrap();
    println!("reversal error: sharp {sharp:.3e}, filtered {filtered:.3e}");
    assert!(filtered > sharp);
}

/// The sampled `∂1ω_L` jumps across the circle, so the norm drift is a resolution effect.
#[test]
fn linearized_kernel_direction_keeps_its_norm() {
    let change = |n: usize| {
        let g = Grid2D::new(6.0, n).unwrap();
        let t_end = 10.0;
        let mut cfg = SolverConfig::new(g, stable_dt(g, 2.6, t_end), t_end);
        cfg.output_stride = cfg.steps().unwrap() / 10;
        let h0 = VorticityField::sample(g, true, dipole::d1_omega_lamb);
        let tr = run_linearized(&h0, &cfg).unwrap();
        let n0 = tr.diagnostics[0].l2_norm;
        tr.diagnostics.iter().map(|d| (d.l2_norm / n0 - 1.0).abs()).fold(0.0, f64::max)
    };
    let (coarse, fine) = (change(128), change(256));
    println!("kernel direction, max relative norm change: n=128 {coarse:.3e}, n=256 {fine:.3e}");
    assert!(fine < 0.5 * coarse && fine < 0.1, "{coarse:.3e} {fine:.3e}");
}

#[test]
fn linearized_dipole_direction_follows_jordan_chain() {
    let g = Grid2D::new(6.0, 256).unwrap();
    let t_end = 4.0;
    let mut cfg = SolverConfig::new(g, stable_dt(g, 2.6, t_end), t_end);
    cfg.output_stride = cfg.steps().unwrap() / 4;
    let tr = run_linearized(&VorticityField::lamb(g), &cfg).unwrap();
    let d1 = VorticityField::sample(g, true, dipole::d1_omega_lamb);
    for (s, d) in tr.snapshots.iter().zip(&tr.diagnostics).skip(1) {
        let rate = s.sub(&tr.snapshots[0]).scaled(1.0 / d.t);
        let corr = inner(&rate, &d1) / (l2_norm_sq(&rate) * l2_norm_sq(&d1)).sqrt();
        let ratio = (l2_norm_sq(&rate) / l2_norm_sq(&d1)).sqrt();
        assert!(corr < -0.97, "t = {} corr {corr:.5}", d.t);
        assert!((ratio - 1.0).abs() < 0.05, "t = {} ratio {ratio:.4}", d.t);
    }
}

/// `sup y` over the second half of the run divided by `sup y` over the first; `e^{γt}` gives `e^{γT/2}`.
fn late_to_early_sup(pts: &[(f64, f64)]) -> f64 {
    let half = pts.last().unwrap().0 / 2.0;
    let sup = |keep: &dyn Fn(f64) -> bool| pts.iter().filter(|p| keep(p.0)).map(|p| p.1).fold(0.0, f64::max);
    sup(&|t| t > half) / sup(&|t| t <= half)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn linearized_growth_is_subexponential(seed in 0u64..1000) {
        let g = Grid2D::new(6.0, 128).unwrap();
        let t_end = 40.0;
        let mut cfg = SolverConfig::new(g, stable_dt(g, 2.6, t_end), t_end);
        cfg.output_stride = cfg.steps().unwrap() / 40;
        let tr = run_linearized(&random_field_in_disk(g, seed), &cfg).unwrap();
        let pts: Vec<(f64, f64)> = tr.diagnostics.iter().map(|d| (d.t, d.l2_norm)).collect();
        let ratio = late_to_early_sup(&pts);
        prop_assert!(ratio <= 1.5, "late/early sup {}", ratio);
    }

    #[test]
    fn runs_preserve_odd_symmetry(seed in 0u64..1000) {
        let g = Grid2D::new(6.0, 64).unwrap();
        let w = random_field_in_disk(g, seed).add(&VorticityField::lamb(g));
        let mut cfg = SolverConfig::new(g, stable_dt(g, 3.0, 1.0), 1.0);
        cfg.output_stride = 10;
        cfg.drift_tol = 1.0;
        let tr = run(&w, &cfg).unwrap();
        for d in &tr.diagnostics {
            prop_assert!(d.odd_defect <= 1e-10 * d.max_abs);
        }
    }
}


