//! Quartic Birkhoff normal form on the tangential sites.
//!
//! With `I_k = |u_k|²` the action-dependent quartic part is `½ 𝔸 I·I`, where
//! `𝔸_kk = |k|³/(2π)` and `𝔸_{k k'} = max(|k|,|k'|)·min(|k|,|k'|)²/π` for
//! same-sign pairs. Sextic and higher action terms are not modeled.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::resonance::TangentialSet;

/// Symmetric twist matrix indexed like the tangential set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwistMatrix {
    pub sites: Vec<i64>,
    pub entries: Vec<Vec<f64>>,
}

impl TwistMatrix {
    pub fn nu(&self) -> usize {
        self.sites.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.nu();
        DMatrix::from_fn(n, n, |i, j| self.entries[i][j])
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn twist_entry(k1: i64, k2: i64) -> f64 {
    let (a, b) = (k1.unsigned_abs() as f64, k2.unsigned_abs() as f64);
    if k1 == k2 {
        a.powi(3) / (2.0 * PI)
    } else if k1.signum() == k2.signum() {
        a.max(b) * a.min(b).powi(2) / PI
    } else {
        0.0
    }
}

pub fn twist_matrix(s: &TangentialSet) -> TwistMatrix {
    let sites = s.sites().to_vec();
    let entries = sites
        .iter()
        .map(|&k1| sites.iter().map(|&k2| twist_entry(k1, k2)).collect())
        .collect();
    TwistMatrix { sites, entries }
}

/// `ω = ω̄ + 𝔸ζ`.
pub fn frequency_amplitude(s: &TangentialSet, zeta: &[f64]) -> Result<Vec<f64>> {
    if zeta.len() != s.nu() {
        return Err(Error::InvalidInput(format!(
            "expected {} actions, got {}",
            s.nu(),
            zeta.len()
        )));
    }
    let shift = twist_matrix(s).apply(zeta);
    Ok(s.linear_frequencies()
        .iter()
        .zip(shift)
        .map(|(w, d)| w + d)
        .collect())
}

/// Result of inverting the frequency-amplitude map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionSolution {
    pub zeta: Vec<f64>,
    /// Set when some `ζ_i ≤ 0`, i.e. the target lies outside the bifurcation cone.
    pub negative_action: bool,
}

/// Solves `𝔸ζ = ω_target − ω̄`.
pub fn invert_frequency_amplitude(s: &TangentialSet, omega_target: &[f64]) -> Result<ActionSolution> {
    invert_with_twist(&twist_matrix(s), &s.linear_frequencies(), omega_target)
}

/// As [`invert_frequency_amplitude`] with an explicit matrix.
pub fn invert_with_twist(
    twist: &TwistMatrix,
    omega_bar: &[f64],
    omega_target: &[f64],
) -> Result<ActionSolution> {
    let n = twist.nu();
    if omega_target.len() != n || omega_bar.len() != n {
        return Err(Error::InvalidInput("frequency vector length mismatch".into()));
    }
    let a = twist.matrix();
    let det = a.determinant();
    let scale = a.amax().max(1e-300).powi(n as i32);
    if det.abs() <= 1e-12 * scale {
        return Err(Error::SingularTwist { det });
    }
    let rhs = DVector::from_iterator(n, omega_target.iter().zip(omega_bar).map(|(t, b)| t - b));
    let zeta = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularTwist { det })?;
    let zeta: Vec<f64> = zeta.iter().copied().collect();
    let negative_action = zeta.iter().any(|&z| z <= 0.0) && zeta.iter().any(|&z| z != 0.0);
    Ok(ActionSolution {
        zeta,
        negative_action,
    })
}

/// `Σ √|k| I_k + ½ 𝔸 I·I`.
pub fn birkhoff_energy(s: &TangentialSet, actions: &[f64]) -> Result<f64> {
    if actions.len() != s.nu() {
        return Err(Error::InvalidInput("action vector length mismatch".into()));
    }
    if actions.iter().any(|&i| i < 0.0) {
        return Err(Error::InvalidInput("actions must be nonnegative".into()));
    }
    let lin: f64 = s
        .linear_frequencies()
        .iter()
        .zip(actions)
        .map(|(w, i)| w * i)
        .sum();
    let ai = twist_matrix(s).apply(actions);
    let quad: f64 = ai.iter().zip(actions).map(|(a, i)| a * i).sum();
    Ok(lin + 0.5 * quad)
}

/// Actions and angles on the tangential sites, `u_k = √I_k e^{-iθ_k}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionAngleState {
    pub sites: Vec<i64>,
    pub actions: Vec<f64>,
    pub angles: Vec<f64>,
}

impl ActionAngleState {
    pub fn new(sites: Vec<i64>, actions: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        if actions.len() != sites.len() || angles.len() != sites.len() {
            return Err(Error::InvalidInput("action-angle length mismatch".into()));
        }
        if actions.iter().any(|&i| !(i > 0.0)) {
            return Err(Error::InvalidInput("actions must be positive".into()));
        }
        Ok(Self {
            sites,
            actions,
            angles,
        })
    }

    /// Complex coordinates `u_k`.
    pub fn coordinates(&self) -> Vec<num_complex::Complex64> {
        self.actions
            .iter()
            .zip(&self.angles)
            .map(|(i, th)| num_complex::Complex64::from_polar(i.sqrt(), -th))
            .collect()
    }

    /// Inverse of [`ActionAngleState::coordinates`]; zero coordinates are rejected.
    pub fn from_coordinates(sites: Vec<i64>, u: &[num_complex::Complex64]) -> Result<Self> {
        let actions = u.iter().map(|z| z.norm_sqr()).collect();
        let angles = u.iter().map(|z| -z.arg()).collect();
        Self::new(sites, actions, angles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(s: &[i64]) -> TangentialSet {
        TangentialSet::new(s.to_vec()).unwrap()
    }

    #[test]
    fn twist_examples() {
        let a1 = twist_matrix(&set(&[1]));
        assert!((a1.entries[0][0] - 1.0 / (2.0 * PI)).abs() < 1e-16);
        let a2 = twist_matrix(&set(&[1, 2]));
        let c = 1.0 / (2.0 * PI);
        let expected = [[c, 4.0 * c], [4.0 * c, 8.0 * c]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a2.entries[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!((a2.determinant() + 8.0 / (4.0 * PI * PI)).abs() < 1e-14);
        let a3 = twist_matrix(&set(&[1, -2]));
        assert_eq!(a3.entries[0][1], 0.0);
        assert_eq!(a3.entries[1][0], 0.0);
    }

    #[test]
    fn frequency_examples() {
        let s1 = set(&[1]);
        assert!((frequency_amplitude(&s1, &[2.0 * PI]).unwrap()[0] - 2.0).abs() < 1e-15);
        let s2 = set(&[1, 2]);
        let w = frequency_amplitude(&s2, &[PI, PI]).unwrap();
        assert!((w[0] - 2.5 - 1.0).abs() < 1e-14);
        assert!((w[1] - 2f64.sqrt() - 6.0).abs() < 1e-14);
        let w0 = frequency_amplitude(&s2, &[0.0, 0.0]).unwrap();
        assert_eq!(w0, s2.linear_frequencies());
    }

    #[test]
    fn inversion() {
        let s1 = set(&[1]);
        let z = invert_frequency_amplitude(&s1, &[2.0]).unwrap();
        assert!((z.zeta[0] - 2.0 * PI).abs() < 1e-13);
        assert!(!z.negative_action);
        let z0 = invert_frequency_amplitude(&s1, &[1.0]).unwrap();
        assert_eq!(z0.zeta, vec![0.0]);
        let neg = invert_frequency_amplitude(&s1, &[0.5]).unwrap();
        assert!(neg.negative_action);
        let singular = TwistMatrix {
            sites: vec![1, 2],
            entries: vec![vec![1.0, 2.0], vec![2.0, 4.0]],
        };
        assert!(matches!(
            invert_with_twist(&singular, &[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::SingularTwist { .. })
        ));
    }

    #[test]
    fn energy_and_gradient() {
        let s1 = set(&[1]);
        assert_eq!(birkhoff_energy(&s1, &[0.0]).unwrap(), 0.0);
        let e = birkhoff_energy(&s1, &[1.0]).unwrap();
        assert!((e - 1.0 - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let s = set(&[1, 3, -2]);
        let i0 = [0.3, 0.2, 0.5];
        let w = frequency_amplitude(&s, &i0).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut ip = i0;
            let mut im = i0;
            ip[k] += h;
            im[k] -= h;
            let g = (birkhoff_energy(&s, &ip).unwrap() - birkhoff_energy(&s, &im).unwrap()) / (2.0 * h);
            assert!((g - w[k]).abs() < 1e-8, "component {k}: {g} vs {}", w[k]);
        }
    }

    #[test]
    fn action_angle_roundtrip() {
        let st = ActionAngleState::new(vec![1, 2], vec![0.5, 2.0], vec![0.3, -1.2]).unwrap();
        let back = ActionAngleState::from_coordinates(vec![1, 2], &st.coordinates()).unwrap();
        for k in 0..2 {
            assert!((back.actions[k] - st.actions[k]).abs() < 1e-15);
            assert!((back.angles[k] - st.angles[k]).abs() < 1e-15);
        }
        assert!(ActionAngleState::new(vec![1], vec![0.0], vec![0.0]).is_err());
    }
}
