use std::sync::OnceLock;

use qpwaves::linop::{assemble_linearized, diagonalize_and_fit};
use qpwaves::qpsolver::{
    evolve_discrepancy, first_order_ansatz, momentum_variation, newton_refine, residual, QpConfig, SolveParams,
    TorusEmbedding,
};
use qpwaves::resonance::TangentialSet;

fn solve(sites: &[i64], zeta: &[f64], lmax: usize) -> TorusEmbedding {
    let s = TangentialSet::new(sites.to_vec()).unwrap();
    let e0 = first_order_ansatz(&s, zeta, lmax).unwrap();
    newton_refine(&e0, &SolveParams::new(zeta.to_vec(), lmax), &QpConfig::default())
        .unwrap()
        .embedding
}

fn two_site() -> &'static TorusEmbedding {
    static E: OnceLock<TorusEmbedding> = OnceLock::new();
    E.get_or_init(|| solve(&[1, 2], &[4e-4, 4e-4], 4))
}

fn stokes() -> &'static TorusEmbedding {
    static E: OnceLock<TorusEmbedding> = OnceLock::new();
    E.get_or_init(|| solve(&[1], &[4e-4], 10))
}

#[test]
fn reversed_solution_is_a_solution() {
    let cfg = QpConfig::default();
    for e in [stokes(), two_site()] {
        let r0 = residual(e, &cfg).unwrap().norm;
        let r1 = residual(&e.reversed(), &cfg).unwrap().norm;
        assert!(r0 < 1e-10 && r1 < 1e-10, "{r0:e} {r1:e}");
    }
}

#[test]
fn phase_shift_preserves_residual() {
    let cfg = QpConfig::default();
    let e = two_site();
    let r0 = residual(e, &cfg).unwrap().norm;
    for theta in [[0.3, -1.1], [2.0, 0.5], [-0.7, 3.0]] {
        let r = residual(&e.phase_shifted(&theta), &cfg).unwrap().norm;
        assert!((r - r0).abs() <= 1e-12, "{theta:?}: {r:e} vs {r0:e}");
    }
}

#[test]
fn momentum_is_constant_along_the_torus() {
    let times: Vec<f64> = (0..20).map(|k| 0.37 * k as f64).collect();
    for e in [stokes(), two_site()] {
        let dm = momentum_variation(e, &times, &QpConfig::default()).unwrap();
        assert!(dm <= 1e-8, "{dm:e}");
    }
}

#[test]
fn time_evolution_follows_the_torus() {
    let d = evolve_discrepancy(stokes(), 1.0, 1e-3, &QpConfig::default()).unwrap();
    assert!(d <= 1e-7, "{d:e}");
}

#[test]
fn m1_flips_sign_with_direction() {
    let cfg = QpConfig::default();
    let fit = |site: i64| {
        let e = solve(&[site], &[4e-4], 10);
        let lop = assemble_linearized(&e, &cfg, 6, 48, true).unwrap();
        diagonalize_and_fit(&lop, None).unwrap().m1
    };
    let (p, m) = (fit(2), fit(-2));
    assert!(p > 0.0 && m < 0.0, "{p:e} {m:e}");
    assert!((p + m).abs() <= 1e-3 * p.abs(), "{p:e} {m:e}");
}

#[test]
fn fit_is_stable_under_window_change() {
    let cfg = QpConfig::default();
    let lop = assemble_linearized(stokes(), &cfg, 6, 48, true).unwrap();
    let full = diagonalize_and_fit(&lop, None).unwrap();
    let sub = diagonalize_and_fit(&lop, Some((6, 14))).unwrap();
    assert!((full.m1 - sub.m1).abs() <= 1e-6 * full.m1.abs(), "{} {}", full.m1, sub.m1);
    assert!(full.fit_residual < 1e-10 && sub.fit_residual < 1e-10);
}
