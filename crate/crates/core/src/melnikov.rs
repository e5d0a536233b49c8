//! Small-divisor checks: diophantine, zero-order and second-order Melnikov
//! conditions, the momentum reduction radius, and Monte Carlo measure estimates.
//!
//! Weights use `⟨ℓ⟩ = (1 + |ℓ|₂²)^{1/2}`. Scans run over the sup-norm box
//! `0 < |ℓ|_∞ ≤ L`; since every divisor is odd under `(ℓ, j, k) ↦ (−ℓ, k, j)`
//! only the half-space with first nonzero entry positive is visited. Ties at
//! the threshold pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linop::DiagonalModel;
use crate::normalform::twist_matrix;
use crate::resonance::TangentialSet;
use crate::spectral::multi_indices;

/// Violations kept in a report; the count is always exact.
pub const MAX_REPORTED_VIOLATIONS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MelnikovParams {
    pub gamma: f64,
    pub tau: f64,
    /// Second-order gap constant.
    pub eta_m: f64,
    /// Derivative-loss exponent for the lossy variant.
    pub loss_exponent: f64,
    pub lmax: usize,
    pub jmax: i64,
}

impl MelnikovParams {
    /// `τ = ν + 1`, `γ = ε^{5/2}`, `η_M = γ³`, `𝚍 = 2`, `L = 200`, `J = 10⁴`.
    pub fn defaults(eps: f64, nu: usize) -> Self {
        let gamma = eps.powf(2.5);
        Self {
            gamma,
            tau: nu as f64 + 1.0,
            eta_m: gamma.powi(3),
            loss_exponent: 2.0,
            lmax: 200,
            jmax: 10_000,
        }
    }

    pub fn validate(&self, nu: usize) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidInput(format!("γ must be positive, got {}", self.gamma)));
        }
        if !(self.tau > nu as f64 - 1.0) {
            return Err(Error::InvalidInput(format!("τ must exceed ν−1, got {}", self.tau)));
        }
        if self.eta_m < 0.0 {
            return Err(Error::InvalidInput("η_M must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `⟨ℓ⟩ = (1 + |ℓ|₂²)^{1/2}`.
pub fn bracket(ell: &[i64]) -> f64 {
    (1.0 + ell.iter().map(|&l| (l * l) as f64).sum::<f64>()).sqrt()
}

fn dot(w: &[f64], ell: &[i64]) -> f64 {
    w.iter().zip(ell).map(|(a, &b)| a * b as f64).sum()
}

fn dot_i(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nonzero `ℓ` with `|ℓ|_∞ ≤ lmax` and first nonzero entry positive.
pub fn half_space(nu: usize, lmax: usize) -> Vec<Vec<i64>> {
    multi_indices(nu, lmax)
        .into_iter()
        .filter(|l| l.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub ell: Vec<i64>,
    pub j: Option<i64>,
    pub k: Option<i64>,
    pub divisor: f64,
    pub threshold: f64,
}

/// Reduction radius at one `ℓ`; `None` means no reduction (infinite radius).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusEntry {
    pub ell: Vec<i64>,
    pub v_dot_ell: i64,
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MelnikovReport {
    pub passed: bool,
    /// Smallest `|divisor|` over the scan.
    pub min_divisor: f64,
    /// Smallest `|divisor| / threshold`; the check passes iff this is ≥ 1.
    pub min_ratio: f64,
    /// Minimizer of the ratio: `ℓ`, and `(j, k)` for second-order scans.
    pub argmin_ell: Vec<i64>,
    pub argmin_j: Option<i64>,
    pub argmin_k: Option<i64>,
    pub checked: u64,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
    pub radii: Vec<RadiusEntry>,
    /// Triples beyond the reduction radius, not enumerated.
    pub certified: u64,
    /// Certified triples additionally evaluated.
    pub certified_sampled: u64,
    /// Sampled certified triples that fail the bound; nonzero means the
    /// reduction is unsound.
    pub certified_sample_failures: u64,
}

#[derive(Clone, Debug)]
struct Partial {
    min_divisor: f64,
    min_ratio: f64,
    arg: (usize, Option<i64>, Option<i64>),
    checked: u64,
    violation_count: u64,
    violations: Vec<Violation>,
    certified: u64,
    sampled: u64,
    sample_failures: u64,
}

impl Partial {
    fn new() -> Self {
        Self {
            min_divisor: f64::INFINITY,
            min_ratio: f64::INFINITY,
            arg: (usize::MAX, None, None),
            checked: 0,
            violation_count: 0,
            violations: Vec::new(),
            certified: 0,
            sampled: 0,
            sample_failures: 0,
        }
    }

    fn record(&mut self, idx: usize, ell: &[i64], j: Option<i64>, k: Option<i64>, divisor: f64, threshold: f64) {
        self.checked += 1;
        let d = divisor.abs();
        self.min_divisor = self.min_divisor.min(d);
        let ratio = if threshold > 0.0 { d / threshold } else { f64::INFINITY };
        if ratio < self.min_ratio || (ratio == self.min_ratio && (idx, j, k) < self.arg) {
            self.min_ratio = ratio;
            self.arg = (idx, j, k);
        }
        if d < threshold {
            self.violation_count += 1;
            self.violations.push(Violation {
                ell: ell.to_vec(),
                j,
                k,
                divisor,
                threshold,
            });
            self.trim();
        }
    }

    /// Keeps the smallest keys so the retained list is partition independent.
    fn trim(&mut self) {
        if self.violations.len() > 2 * MAX_REPORTED_VIOLATIONS {
            self.sort_violations();
            self.violations.truncate(MAX_REPORTED_VIOLATIONS);
        }
    }

    fn sort_violations(&mut self) {
        self.violations
            .sort_by(|a, b| (&a.ell, a.j, a.k).cmp(&(&b.ell, b.j, b.k)));
    }

    fn merge(mut self, o: Self) -> Self {
        self.min_divisor = self.min_divisor.min(o.min_divisor);
        if o.min_ratio < self.min_ratio || (o.min_ratio == self.min_ratio && o.arg < self.arg) {
            self.min_ratio = o.min_ratio;
            self.arg = o.arg;
        }
        self.checked += o.checked;
        self.violation_count += o.violation_count;
        self.violations.extend(o.violations);
        self.trim();
        self.certified += o.certified;
        self.sampled += o.sampled;
        self.sample_failures += o.sample_failures;
        self
    }

    fn finish(mut self, ells: &[Vec<i64>], radii: Vec<RadiusEntry>) -> MelnikovReport {
        self.sort_violations();
        self.violations.truncate(MAX_REPORTED_VIOLATIONS);
        MelnikovReport {
            passed: self.violation_count == 0,
            min_divisor: self.min_divisor,
            min_ratio: self.min_ratio,
            argmin_ell: ells.get(self.arg.0).cloned().unwrap_or_default(),
            argmin_j: self.arg.1,
            argmin_k: self.arg.2,
            checked: self.checked,
            violation_count: self.violation_count,
            violations: self.violations,
            radii,
            certified: self.certified,
            certified_sampled: self.sampled,
            certified_sample_failures: self.sample_failures,
        }
    }
}

fn scan_first_order(w: &[f64], gamma: f64, tau: f64, lmax: usize) -> MelnikovReport {
    let ells = half_space(w.len(), lmax);
    let partial = ells
        .par_iter()
        .enumerate()
        .fold(Partial::new, |mut p, (i, ell)| {
            let th = gamma * bracket(ell).powf(-tau);
            p.record(i, ell, None, None, dot(w, ell), th);
            p
        })
        .reduce(Partial::new, Partial::merge);
    partial.finish(&ells, Vec::new())
}

/// `|ω·ℓ| ≥ γ⟨ℓ⟩^{-τ}` for `0 < |ℓ|_∞ ≤ lmax`.
pub fn diophantine_check(omega: &[f64], gamma: f64, tau: f64, lmax: usize) -> MelnikovReport {
    scan_first_order(omega, gamma, tau, lmax)
}

/// `|(ω − 𝔪₁𝚟)·ℓ| ≥ γ⟨ℓ⟩^{-τ}` for `0 < |ℓ|_∞ ≤ lmax`.
pub fn zero_melnikov(omega: &[f64], m1: f64, v: &[i64], gamma: f64, tau: f64, lmax: usize) -> MelnikovReport {
    scan_first_order(&shifted(omega, m1, v), gamma, tau, lmax)
}

fn shifted(omega: &[f64], m1: f64, v: &[i64]) -> Vec<f64> {
    omega.iter().zip(v).map(|(w, &vi)| w - m1 * vi as f64).collect()
}

/// Radius beyond which same-sign triples at `ℓ` satisfy the second-order
/// bound as a consequence of the zero-order one:
/// `R = ((1+|𝔪₁/₂|)|𝚟·ℓ| / (2((γ−η_M)⟨ℓ⟩^{-τ} − 2 sup|r|)))²`.
pub fn reduction_radius(
    omega: &[f64],
    d: &DiagonalModel,
    v: &[i64],
    ell: &[i64],
    p: &MelnikovParams,
) -> Option<f64> {
    let w = shifted(omega, d.m1, v);
    let weight = bracket(ell).powf(-p.tau);
    if dot(&w, ell).abs() < p.gamma * weight {
        return None;
    }
    let vl = dot_i(v, ell);
    if vl == 0 {
        return Some(0.0);
    }
    let denom = (p.gamma - p.eta_m) * weight - 2.0 * d.r_sup();
    if denom <= 0.0 {
        return None;
    }
    Some(((1.0 + d.m_half.abs()) * vl.unsigned_abs() as f64 / (2.0 * denom)).powi(2))
}

/// Sorted, disjoint integer intervals.
fn union(mut ivs: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    ivs.retain(|(a, b)| a <= b);
    ivs.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::new();
    for (a, b) in ivs {
        match out.last_mut() {
            Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Second-order Melnikov scan over momentum-admissible triples
/// `𝚟·ℓ + j − k = 0`, `0 < |ℓ|_∞ ≤ L`, `0 < |j|, |k| ≤ J`:
/// `|ω·ℓ + d_j − d_k| ≥ η_M⟨ℓ⟩^{-τ}`.
///
/// Same-sign triples with `|j|, |k| ≥ R(ℓ)` are counted as certified and not
/// enumerated. Every `sample_stride`-th certified triple (by `j`) is still
/// evaluated; pass `0` to skip sampling.
pub fn second_melnikov(
    omega: &[f64],
    d: &DiagonalModel,
    v: &[i64],
    p: &MelnikovParams,
    sample_stride: usize,
) -> Result<MelnikovReport> {
    if omega.len() != v.len() {
        return Err(Error::InvalidInput("ω and 𝚟 lengths differ".into()));
    }
    p.validate(v.len())?;
    let jm = p.jmax;
    let ells = half_space(v.len(), p.lmax);
    let radii: Vec<RadiusEntry> = ells
        .iter()
        .map(|ell| RadiusEntry {
            ell: ell.clone(),
            v_dot_ell: dot_i(v, ell),
            radius: reduction_radius(omega, d, v, ell, p),
        })
        .collect();
    let dj: Vec<f64> = (-jm..=jm).map(|j| d.d(j)).collect();
    let dval = |j: i64| dj[(j + jm) as usize];

    let partial = ells
        .par_iter()
        .enumerate()
        .fold(Partial::new, |mut part, (i, ell)| {
            let vl = radii[i].v_dot_ell;
            let th = p.eta_m * bracket(ell).powf(-p.tau);
            let wl = dot(omega, ell);
            // j with 0 < |j| ≤ J, k = j + vl with 0 < |k| ≤ J.
            let lo = (-jm).max(-jm - vl);
            let hi = jm.min(jm - vl);
            if lo > hi {
                return part;
            }
            let psi = |j: i64| wl + dval(j) - dval(j + vl);
            let admissible = |j: i64| j != 0 && j + vl != 0;
            let enumerate = |part: &mut Partial, a: i64, b: i64| {
                for j in a.max(lo)..=b.min(hi) {
                    if admissible(j) {
                        part.record(i, ell, Some(j), Some(j + vl), psi(j), th);
                    }
                }
            };
            let certify = |part: &mut Partial, a: i64, b: i64| {
                if a > b {
                    return;
                }
                let inside = |x: i64| (a..=b).contains(&x) as i64;
                let excluded = inside(0) + if vl != 0 { inside(-vl) } else { 0 };
                part.certified += (b - a + 1 - excluded) as u64;
                if sample_stride == 0 {
                    return;
                }
                let mut j = a;
                while j <= b {
                    if admissible(j) {
                        part.sampled += 1;
                        if psi(j).abs() < th {
                            part.sample_failures += 1;
                        }
                    }
                    j += sample_stride as i64;
                }
            };
            match radii[i].radius {
                Some(r) if r.ceil() < jm as f64 => {
                    let rc = r.ceil() as i64;
                    // Not certified: |j| < R, |k| < R, or j, k of opposite sign.
                    let inner = union(vec![
                        (-rc + 1, rc - 1),
                        (-rc + 1 - vl, rc - 1 - vl),
                        (0.min(-vl), 0.max(-vl)),
                    ]);
                    let mut prev = lo;
                    for &(a, b) in &inner {
                        let (a, b) = (a.max(lo), b.min(hi));
                        if a > b {
                            continue;
                        }
                        certify(&mut part, prev, a - 1);
                        enumerate(&mut part, a, b);
                        prev = b + 1;
                    }
                    certify(&mut part, prev, hi);
                }
                _ => enumerate(&mut part, lo, hi),
            }
            part
        })
        .reduce(Partial::new, Partial::merge);
    Ok(partial.finish(&ells, radii))
}

/// As [`second_melnikov`] with threshold `γ/(⟨j⟩^𝚍⟨k⟩^𝚍)` and full
/// enumeration of `|j|, |k| ≤ J`.
pub fn second_melnikov_lossy(
    omega: &[f64],
    d: &DiagonalModel,
    v: &[i64],
    p: &MelnikovParams,
) -> Result<MelnikovReport> {
    if !(p.loss_exponent > 1.0) {
        return Err(Error::InvalidInput(format!(
            "loss exponent must exceed 1, got {}",
            p.loss_exponent
        )));
    }
    if omega.len() != v.len() {
        return Err(Error::InvalidInput("ω and 𝚟 lengths differ".into()));
    }
    let jm = p.jmax;
    let ells = half_space(v.len(), p.lmax);
    let br = |j: i64| (1.0 + (j * j) as f64).sqrt();
    let partial = ells
        .par_iter()
        .enumerate()
        .fold(Partial::new, |mut part, (i, ell)| {
            let vl = dot_i(v, ell);
            let wl = dot(omega, ell);
            for j in (-jm).max(-jm - vl)..=jm.min(jm - vl) {
                let k = j + vl;
                if j == 0 || k == 0 {
                    continue;
                }
                let th = p.gamma / (br(j) * br(k)).powf(p.loss_exponent);
                part.record(i, ell, Some(j), Some(k), wl + d.d(j) - d.d(k), th);
            }
            part
        })
        .reduce(Partial::new, Partial::merge);
    Ok(partial.finish(&ells, Vec::new()))
}

/// `𝔪₁` model `(1/π) Σ_{n∈S} n|n| ζ_n`.
pub fn m1_model(s: &TangentialSet, zeta: &[f64]) -> f64 {
    s.sites()
        .iter()
        .zip(zeta)
        .map(|(&n, z)| (n * n.abs()) as f64 * z)
        .sum::<f64>()
        / std::f64::consts::PI
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub eps: f64,
    pub samples: usize,
    pub passed: usize,
    pub fraction: f64,
    pub seed: u64,
}

/// Fraction of `ζ ∈ [ε², 2ε²]^ν` (uniform) for which `ω̄ + 𝔸ζ` passes the
/// diophantine and zero-order Melnikov checks. Sample `i` draws from a ChaCha
/// stream `i` under `seed`, so the result does not depend on thread count.
pub fn measure_estimate(
    s: &TangentialSet,
    eps: f64,
    p: &MelnikovParams,
    n_samples: usize,
    seed: u64,
) -> Result<MeasureEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    p.validate(s.nu())?;
    let nu = s.nu();
    let ells = half_space(nu, p.lmax);
    let th: Vec<f64> = ells.iter().map(|l| p.gamma * bracket(l).powf(-p.tau)).collect();
    let flat: Vec<f64> = ells.iter().flat_map(|l| l.iter().map(|&x| x as f64)).collect();
    let vf: Vec<f64> = s.velocity().iter().map(|&x| x as f64).collect();
    let a = twist_matrix(s);
    let wbar = s.linear_frequencies();
    let e2 = eps * eps;

    let passes = |w: &[f64]| -> bool {
        flat.chunks_exact(nu).zip(&th).all(|(l, &t)| {
            let x: f64 = w.iter().zip(l).map(|(a, b)| a * b).sum();
            x.abs() >= t
        })
    };
    let passed = (0..n_samples)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let zeta: Vec<f64> = (0..nu).map(|_| e2 * (1.0 + rng.random::<f64>())).collect();
            let shift = a.apply(&zeta);
            let w: Vec<f64> = wbar.iter().zip(&shift).map(|(x, y)| x + y).collect();
            if !passes(&w) {
                return false;
            }
            let m1 = m1_model(s, &zeta);
            let wz: Vec<f64> = w.iter().zip(&vf).map(|(x, v)| x - m1 * v).collect();
            passes(&wz)
        })
        .count();
    Ok(MeasureEstimate {
        eps,
        samples: n_samples,
        passed,
        fraction: passed as f64 / n_samples as f64,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diophantine_examples() {
        let r = diophantine_check(&[1.0, 2.0], 1e-3, 1.5, 2);
        assert!(!r.passed);
        assert_eq!(r.min_divisor, 0.0);
        assert_eq!(r.argmin_ell, vec![2, -1]);
        let r1 = diophantine_check(&[1.0], 0.5, 1.0, 50);
        assert!(r1.passed);
        assert!(!diophantine_check(&[1.0], 2.0, 1.0, 5).passed);
    }

    #[test]
    fn zero_melnikov_reduces() {
        let w = [1.0, 2f64.sqrt()];
        let a = diophantine_check(&w, 1e-3, 3.0, 30);
        let b = zero_melnikov(&w, 0.0, &[1, 2], 1e-3, 3.0, 30);
        assert_eq!(a, b);
    }

    #[test]
    fn radius_zero_on_momentum_kernel() {
        let p = MelnikovParams::defaults(0.1, 2);
        let d = DiagonalModel::linear();
        let w = [1.0, 2f64.sqrt()];
        assert_eq!(reduction_radius(&w, &d, &[1, 2], &[2, -1], &p), Some(0.0));
        assert!(reduction_radius(&w, &d, &[1, 2], &[1, 0], &p).unwrap() > 0.0);
    }

    #[test]
    fn benjamin_feir_divisor() {
        let s = TangentialSet::new(vec![-1, 4]).unwrap();
        let w = s.linear_frequencies();
        let p = MelnikovParams {
            lmax: 1,
            jmax: 20,
            ..MelnikovParams::defaults(0.1, 2)
        };
        let r = second_melnikov(&w, &DiagonalModel::linear(), s.velocity(), &p, 1).unwrap();
        assert_eq!(r.min_divisor, 0.0);
        assert!(r.violations.iter().any(|v| v.ell == vec![1, -1] && v.j == Some(9) && v.k == Some(4)));
    }

    #[test]
    fn interval_union() {
        assert_eq!(union(vec![(3, 5), (-1, 1), (2, 2), (9, 8)]), vec![(-1, 5)]);
    }

    #[test]
    fn certified_counting_is_complete() {
        // With a huge radius nothing is certified; with a small one the
        // certified and enumerated counts must add up to all triples.
        let s = TangentialSet::new(vec![1, 2]).unwrap();
        let w = [1.3, 1.9];
        let p = MelnikovParams {
            gamma: 0.3,
            tau: 1.1,
            eta_m: 0.0,
            loss_exponent: 2.0,
            lmax: 3,
            jmax: 400,
        };
        let r = second_melnikov(&w, &DiagonalModel::linear(), s.velocity(), &p, 1).unwrap();
        let mut total = 0u64;
        for ell in half_space(2, 3) {
            let vl = dot_i(s.velocity(), &ell);
            for j in -400i64..=400 {
                let k = j + vl;
                if j != 0 && k != 0 && k.abs() <= 400 {
                    total += 1;
                }
            }
        }
        assert!(r.certified > 0);
        assert_eq!(r.checked + r.certified, total);
        assert_eq!(r.certified_sampled, r.certified);
        assert_eq!(r.certified_sample_failures, 0);
    }

    #[test]
    fn lossy_vacuous_for_large_exponent() {
        let p = MelnikovParams {
            loss_exponent: 60.0,
            lmax: 2,
            jmax: 30,
            ..MelnikovParams::defaults(0.1, 2)
        };
        let w = [1.0, 2f64.sqrt()];
        let r = second_melnikov_lossy(&w, &DiagonalModel::linear(), &[1, 2], &p).unwrap();
        for v in &r.violations {
            assert!(v.j.unwrap().abs() < 2 || v.k.unwrap().abs() < 2);
        }
        let bad = MelnikovParams { loss_exponent: 1.0, ..p };
        assert!(second_melnikov_lossy(&w, &DiagonalModel::linear(), &[1, 2], &bad).is_err());
    }

    #[test]
    fn measure_deterministic_and_monotone() {
        let s = TangentialSet::new(vec![1, 2]).unwrap();
        let p = |g: f64| MelnikovParams {
            gamma: g,
            lmax: 30,
            ..MelnikovParams::defaults(0.1, 2)
        };
        let a = measure_estimate(&s, 0.1, &p(1e-3), 500, 7).unwrap();
        let b = measure_estimate(&s, 0.1, &p(1e-3), 500, 7).unwrap();
        assert_eq!(a, b);
        let c = measure_estimate(&s, 0.1, &p(1e-2), 500, 7).unwrap();
        assert!(c.fraction <= a.fraction);
        let tiny = measure_estimate(&s, 0.1, &p(1e-14), 200, 7).unwrap();
        assert_eq!(tiny.fraction, 1.0);
    }
}
