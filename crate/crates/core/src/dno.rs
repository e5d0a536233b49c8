//! Dirichlet-Neumann operator `G(η)ψ = (∂_yΦ - η_x ∂_xΦ)|_{y=η}` for the
//! infinite-depth problem.
//!
//! Evaluation writes the harmonic extension as `Φ = Σ_k a_k e^{|k|y + ikx}`,
//! expands `ψ = Σ_n (η^n/n!) |D|^n f` with `f = Σ_k a_k e^{ikx}` and solves for
//! `f` order by order in `η`:
//!
//! ```text
//! f_0 = ψ,    f_m = -Σ_{n=1..m} (η^n/n!) |D|^n f_{m-n}
//! G_m ψ = Σ_{n=0..m} (η^n/n!) |D|^{n+1} f_{m-n} - Σ_{n=0..m-1} η_x (η^n/n!) ∂_x |D|^n f_{m-1-n}
//! ```
//!
//! `G(η) = Σ_{m≤M} G_m(η)`, `G_0 = |D|`. The mean of `η` is removed first since
//! `G(η + c) = G(η)` in infinite depth.

use crate::error::{Error, Result};
use crate::spectral::{Multiplier, SpectralField1D, DEFAULT_JMAX};

/// Expansion order default.
pub const DEFAULT_ORDER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DnoConfig {
    /// Expansion order `M`; the error is `O(‖η‖^{M+1})`.
    pub order: usize,
    /// x-truncation used for all intermediate fields.
    pub jmax: usize,
}

impl Default for DnoConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            jmax: DEFAULT_JMAX,
        }
    }
}

impl DnoConfig {
    pub fn new(order: usize, jmax: usize) -> Self {
        Self { order, jmax }
    }
}

/// Per-order terms `G_m(η)ψ` of the expansion.
pub fn dno_terms(
    eta: &SpectralField1D,
    psi: &SpectralField1D,
    cfg: &DnoConfig,
) -> Result<Vec<SpectralField1D>> {
    let jm = cfg.jmax;
    let eta = eta.resized(jm).zero_mean();
    let psi = psi.resized(jm).zero_mean();
    let m_max = cfg.order;

    // η^n / n!
    let mut powers = vec![SpectralField1D::constant(jm, 1.0)];
    for n in 1..=m_max {
        let p = powers[n - 1].mul(&eta).scale(1.0 / n as f64);
        powers.push(p);
    }
    let eta_x = eta.dx();
    let abs_pow = |f: &SpectralField1D, n: usize| -> SpectralField1D {
        f.apply(&Multiplier::abs_d_pow(n as f64))
            .expect("nonnegative powers are defined at j = 0")
    };

    let mut f_terms: Vec<SpectralField1D> = vec![psi];
    let mut g_terms = Vec::with_capacity(m_max + 1);
    let mut run = 0usize;
    for m in 0..=m_max {
        if m > 0 {
            let mut fm = SpectralField1D::zeros(jm);
            for n in 1..=m {
                fm = fm.sub(&powers[n].mul(&abs_pow(&f_terms[m - n], n)));
            }
            f_terms.push(fm);
        }
        let mut gm = SpectralField1D::zeros(jm);
        for n in 0..=m {
            let t = abs_pow(&f_terms[m - n], n + 1);
            gm = gm.add(&if n == 0 { t } else { powers[n].mul(&t) });
        }
        for n in 0..m {
            let t = abs_pow(&f_terms[m - 1 - n], n).dx();
            gm = gm.sub(&SpectralField1D::product(&[&eta_x, &powers[n], &t], jm));
        }
        if m > 0 {
            let prev = g_terms.last().map(SpectralField1D::norm_l2).unwrap_or(0.0);
            let cur = gm.norm_l2();
            // Terms this small relative to G_0ψ are truncation or round-off
            // artifacts and carry no trend.
            let floor = (1e-10 * g_terms[0].norm_l2()).max(1e-300);
            let ratio = if prev > floor { cur / prev } else { 0.0 };
            run = if ratio > 0.9 && cur > floor { run + 1 } else { 0 };
            if run >= 3 {
                return Err(Error::DnoDivergence { order: m, ratio });
            }
        }
        g_terms.push(gm);
    }
    Ok(g_terms)
}

/// `G(η)ψ` truncated at order `cfg.order`.
pub fn dno_apply(
    eta: &SpectralField1D,
    psi: &SpectralField1D,
    cfg: &DnoConfig,
) -> Result<SpectralField1D> {
    let terms = dno_terms(eta, psi, cfg)?;
    Ok(terms
        .iter()
        .skip(1)
        .fold(terms[0].clone(), |acc, t| acc.add(t)))
}

/// `∫_T ψ₁ G(η)ψ₂ dx`.
pub fn dno_bilinear(
    eta: &SpectralField1D,
    psi1: &SpectralField1D,
    psi2: &SpectralField1D,
    cfg: &DnoConfig,
) -> Result<f64> {
    Ok(psi1.integral_product(&dno_apply(eta, psi2, cfg)?))
}
