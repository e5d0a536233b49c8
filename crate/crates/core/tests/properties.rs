use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpwaves::dno::DnoConfig;
use qpwaves::normalform::{frequency_amplitude, invert_frequency_amplitude, twist_matrix};
use qpwaves::resonance::{benjamin_feir, sqrt_combination_is_zero, ResonanceTuple, TangentialSet};
use qpwaves::spectral::SpectralField1D;
use qpwaves::wavesys::{hamiltonian, vector_field, SurfaceState, WaveConfig};

/// Exact test against a float test with a tolerance gap: both must agree
/// whenever the float sum is clearly zero or clearly not.
#[test]
fn exact_sqrt_agrees_with_float() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut zeros = 0;
    for n in 0..10_000 {
        let len = rng.random_range(2..=4);
        let mut js: Vec<i64> = (0..len).map(|_| rng.random_range(1..=60) * [1, -1][rng.random_range(0..2)]).collect();
        let mut ells: Vec<i64> = (0..len).map(|_| rng.random_range(-3..=3)).collect();
        // Every fourth instance is built to cancel: j and 4j with weights 2, −1.
        if n % 4 == 0 {
            let j = js[0];
            js.push(4 * j);
            ells.push(0);
            ells[0] = 2;
            *ells.last_mut().unwrap() = -1;
            for l in ells.iter_mut().skip(1).take(len - 1) {
                *l = 0;
            }
        }
        let float: f64 = js.iter().zip(&ells).map(|(&j, &l)| l as f64 * (j.abs() as f64).sqrt()).sum();
        let exact = sqrt_combination_is_zero(&js, &ells);
        if exact {
            zeros += 1;
            assert!(float.abs() < 1e-12, "{js:?} {ells:?}");
        } else {
            assert!(float.abs() > 1e-9, "{js:?} {ells:?} float {float:e}");
        }
    }
    assert!(zeros >= 2500);
}

/// X_H = (∂H/∂ψ, −∂H/∂η) against centered differences of H along cos kx and
/// sin kx.
#[test]
fn hamiltonian_gradient_matches_vector_field() {
    let jm = 16;
    let cfg = WaveConfig {
        dno: DnoConfig::new(10, jm),
        gravity: 1.0,
    };
    let eta = SpectralField1D::from_fn(jm, |x| 0.03 * x.cos() + 0.01 * (2.0 * x).sin());
    let psi = SpectralField1D::from_fn(jm, |x| 0.02 * x.sin() - 0.015 * (3.0 * x).cos());
    let s = SurfaceState::new(eta, psi).unwrap();
    let xh = vector_field(&s, &cfg).unwrap().field;
    let h = 1e-5;
    for k in 1..=4 {
        for dir in [SpectralField1D::cos(jm, k, 1.0), SpectralField1D::sin(jm, k, 1.0)] {
            let zero = SpectralField1D::cos(jm, k, 0.0);
            let along = |de: &SpectralField1D, dp: &SpectralField1D| {
                let plus = SurfaceState::new(s.eta.add(&de.scale(h)), s.psi.add(&dp.scale(h))).unwrap();
                let minus = SurfaceState::new(s.eta.add(&de.scale(-h)), s.psi.add(&dp.scale(-h))).unwrap();
                (hamiltonian(&plus, &cfg).unwrap() - hamiltonian(&minus, &cfg).unwrap()) / (2.0 * h)
            };
            let d_psi = along(&zero, &dir);
            let d_eta = along(&dir, &zero);
            assert!((d_psi - xh.eta.integral_product(&dir)).abs() < 1e-9, "k={k}: {d_psi:e}");
            assert!((d_eta + xh.psi.integral_product(&dir)).abs() < 1e-9, "k={k}: {d_eta:e}");
        }
    }
}

proptest! {
    #[test]
    fn benjamin_feir_members_are_resonant(lambda in -20i64..=20, b in 1i64..=6) {
        prop_assume!(lambda != 0);
        let t = benjamin_feir(lambda, b).unwrap();
        prop_assert!(t.is_resonant());
        prop_assert_eq!(t.canonical().canonical(), t.canonical());
    }

    #[test]
    fn canonical_form_is_permutation_invariant(sites in proptest::collection::vec(1i64..50, 4), perm in 0usize..24) {
        let signs = vec![1i8, 1, -1, -1];
        let t = ResonanceTuple::new(sites.clone(), signs.clone()).unwrap();
        let mut idx: Vec<usize> = (0..4).collect();
        let mut p = perm;
        for i in (1..4).rev() {
            idx.swap(i, p % (i + 1));
            p /= i + 1;
        }
        let u = ResonanceTuple::new(idx.iter().map(|&i| sites[i]).collect(), idx.iter().map(|&i| signs[i]).collect()).unwrap();
        prop_assert_eq!(t.canonical(), u.canonical());
    }

    #[test]
    fn twist_is_symmetric_and_inverts(a in 1i64..8, b in 1i64..8, za in 1e-4f64..1e-2, zb in 1e-4f64..1e-2) {
        prop_assume!(a != b);
        let s = TangentialSet::new(vec![a, -b]).unwrap();
        let m = twist_matrix(&s);
        prop_assert_eq!(m.entries[0][1], m.entries[1][0]);
        let s2 = TangentialSet::new(vec![a, b]).unwrap();
        prop_assume!(twist_matrix(&s2).determinant().abs() > 1e-12);
        let omega = frequency_amplitude(&s2, &[za, zb]).unwrap();
        let back = invert_frequency_amplitude(&s2, &omega).unwrap();
        prop_assert!((back.zeta[0] - za).abs() < 1e-12 && (back.zeta[1] - zb).abs() < 1e-12);
    }

    #[test]
    fn grid_roundtrip(coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12)) {
        let modes: Vec<(i64, num_complex::Complex64)> = coeffs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (i as i64 + 1, num_complex::Complex64::new(a, b)))
            .collect();
        let f = SpectralField1D::from_modes(16, &modes);
        let g = SpectralField1D::from_grid(&f.to_grid(64), 16);
        prop_assert!(f.sub(&g).norm_l2() < 1e-13);
    }
}
