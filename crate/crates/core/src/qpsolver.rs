//! Quasi-periodic traveling waves as embedded tori.
//!
//! A torus embedding stores a profile `Ũ(Θ) = Σ_ℓ c_ℓ e^{iℓ·Θ}` and a frequency
//! vector `ω`; the wave is `U(φ, x) = Ũ(φ − 𝚟x)` and solves the water-wave
//! system when `F = ω·∂_φU − X_H(U)` vanishes. Mode `ℓ` of the profile sits at
//! x-wavenumber `j = −𝚟·ℓ`; modes with `𝚟·ℓ = 0` are x-averages and are kept
//! at zero (the ψ-mean is decoupled).
//!
//! [`newton_refine`] solves `F = 0` for the profile and `ω` with the tangential
//! actions prescribed and the tangential phases fixed.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dno::DnoConfig;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::linop::{slice_jacobian, SliceJacobian};
use crate::normalform::frequency_amplitude;
use crate::resonance::TangentialSet;
use crate::spectral::{dot_f, dot_i, grid_size, multi_indices, SpectralField1D, TorusField};
use crate::wavesys::{evolve, momentum, vector_field, EvolveOptions, SurfaceState, WaveConfig};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn neg(l: &[i64]) -> Vec<i64> {
    l.iter().map(|x| -x).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusEmbedding {
    pub sites: TangentialSet,
    pub omega: Vec<f64>,
    /// Θ-field (`jmax = 0`) with components `(η̃, ψ̃)`.
    pub profile: TorusField,
}

impl TorusEmbedding {
    /// Zero profile at the linear frequencies.
    pub fn zero(sites: TangentialSet, lmax: usize) -> Self {
        let nu = sites.nu();
        Self {
            omega: sites.linear_frequencies(),
            profile: TorusField::zeros(nu, lmax, 0, 2),
            sites,
        }
    }

    pub fn nu(&self) -> usize {
        self.sites.nu()
    }

    pub fn lmax(&self) -> usize {
        self.profile.lmax()
    }

    pub fn velocity(&self) -> &[i64] {
        self.sites.velocity()
    }

    /// x-wavenumber `−𝚟·ℓ` of Θ-mode `ℓ`.
    pub fn wavenumber(&self, ell: &[i64]) -> i64 {
        -dot_i(self.velocity(), ell)
    }

    /// Largest `|𝚟·ℓ|` over the truncation box.
    pub fn x_bound(&self) -> usize {
        self.lmax() * self.velocity().iter().map(|v| v.unsigned_abs() as usize).sum::<usize>()
    }

    pub fn coeff(&self, comp: usize, ell: &[i64]) -> Complex64 {
        self.profile.get(comp, ell, 0)
    }

    /// `U(φ, ·)` as an x-state truncated at `jmax`.
    pub fn slice(&self, phi: &[f64], jmax: usize) -> SurfaceState {
        let mut eta = vec![ZERO; 2 * jmax + 1];
        let mut psi = vec![ZERO; 2 * jmax + 1];
        for ell in multi_indices(self.nu(), self.lmax()) {
            let j = self.wavenumber(&ell);
            if j == 0 || j.unsigned_abs() as usize > jmax {
                continue;
            }
            let ph = Complex64::from_polar(1.0, dot_f(phi, &ell));
            let k = (j + jmax as i64) as usize;
            eta[k] += self.coeff(0, &ell) * ph;
            psi[k] += self.coeff(1, &ell) * ph;
        }
        SurfaceState {
            eta: SpectralField1D::from_coeffs(eta, true).expect("odd length"),
            psi: SpectralField1D::from_coeffs(psi, true).expect("odd length"),
        }
    }

    /// `(η, ψ)(φ, x)`.
    pub fn eval(&self, phi: &[f64], x: f64) -> (f64, f64) {
        let mut out = (0.0, 0.0);
        for ell in multi_indices(self.nu(), self.lmax()) {
            if self.wavenumber(&ell) == 0 {
                continue;
            }
            let th = dot_f(phi, &ell) - dot_i(self.velocity(), &ell) as f64 * x;
            let e = Complex64::from_polar(1.0, th);
            out.0 += (self.coeff(0, &ell) * e).re;
            out.1 += (self.coeff(1, &ell) * e).re;
        }
        out
    }

    /// Surface at time `t`, `U(ωt, ·)`.
    pub fn surface_at(&self, t: f64, jmax: usize) -> SurfaceState {
        let phi: Vec<f64> = self.omega.iter().map(|w| w * t).collect();
        self.slice(&phi, jmax)
    }

    /// Complex coordinate `u` on tangential site `i` (Θ-mode `−e_i`).
    pub fn tangential_u(&self, i: usize) -> Complex64 {
        let j = self.velocity()[i];
        let mut ell = vec![0i64; self.nu()];
        ell[i] = -1;
        let a = (j.unsigned_abs() as f64).powf(0.25);
        FRAC_1_SQRT_2 * (self.coeff(0, &ell) / a + I * a * self.coeff(1, &ell))
    }

    /// `|u_i|²` on the tangential sites.
    pub fn actions(&self) -> Vec<f64> {
        (0..self.nu()).map(|i| self.tangential_u(i).norm_sqr()).collect()
    }

    pub fn resized(&self, lmax: usize) -> Self {
        let mut profile = TorusField::zeros(self.nu(), lmax, 0, 2);
        for ell in multi_indices(self.nu(), lmax.min(self.lmax())) {
            for c in 0..2 {
                profile.set(c, &ell, 0, self.coeff(c, &ell));
            }
        }
        Self {
            sites: self.sites.clone(),
            omega: self.omega.clone(),
            profile,
        }
    }

    /// `Ũ(Θ + θ)`.
    pub fn phase_shifted(&self, theta: &[f64]) -> Self {
        let mut out = self.clone();
        out.profile = self
            .profile
            .map_modes(|_, ell, _, c| c * Complex64::from_polar(1.0, dot_f(theta, ell)));
        out
    }

    /// Embedding of `(φ, x) ↦ S U(−φ, x)`, `S(η, ψ)(x) = (η(−x), −ψ(−x))`.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.profile = self.profile.map_modes(|comp, ell, _, _| {
            let c = self.coeff(comp, &neg(ell));
            if comp == 0 {
                c
            } else {
                -c
            }
        });
        out
    }

    /// CSV `t,x,eta,psi` on `nx` equispaced points per time.
    pub fn write_snapshots_csv<W: Write>(&self, mut w: W, times: &[f64], nx: usize) -> std::io::Result<()> {
        writeln!(w, "t,x,eta,psi")?;
        for &t in times {
            let phi: Vec<f64> = self.omega.iter().map(|o| o * t).collect();
            for m in 0..nx {
                let x = 2.0 * PI * m as f64 / nx as f64;
                let (e, p) = self.eval(&phi, x);
                writeln!(w, "{t:.16e},{x:.16e},{e:.16e},{p:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Linear solution on the tangential sites:
/// `η̃ = Σ √(2ζ_i)|j_i|^{1/4} cos Θ_i`, `ψ̃ = −Σ √(2ζ_i)|j_i|^{−1/4} sin Θ_i`,
/// with `ω = ω̄ + 𝔸ζ`.
pub fn first_order_ansatz(sites: &TangentialSet, zeta: &[f64], lmax: usize) -> Result<TorusEmbedding> {
    if zeta.len() != sites.nu() {
        return Err(Error::InvalidInput("action vector length mismatch".into()));
    }
    if zeta.iter().any(|&z| !(z >= 0.0)) {
        return Err(Error::InvalidInput("actions must be nonnegative".into()));
    }
    if lmax == 0 {
        return Err(Error::Truncation("Θ-truncation must be at least 1".into()));
    }
    let mut e = TorusEmbedding::zero(sites.clone(), lmax);
    e.omega = frequency_amplitude(sites, zeta)?;
    let nu = sites.nu();
    for (i, (&j, &z)) in sites.sites().iter().zip(zeta).enumerate() {
        let a = (j.unsigned_abs() as f64).powf(0.25);
        let amp = (2.0 * z).sqrt();
        let mut ell = vec![0i64; nu];
        ell[i] = 1;
        e.profile.set_real(0, &ell, 0, Complex64::new(amp * a / 2.0, 0.0));
        e.profile.set_real(1, &ell, 0, Complex64::new(0.0, amp / a / 2.0));
    }
    Ok(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QpConfig {
    /// Expansion order of the Dirichlet-Neumann operator.
    pub order: usize,
    pub gravity: f64,
    /// x-truncation of the slices; defaults to twice the largest `|𝚟·ℓ|` in
    /// the box so that the Galerkin Jacobian matches the discrete field.
    pub jmax_x: Option<usize>,
    /// φ-grid points per section dimension; defaults to `grid_size(4L + 1)`.
    pub phi_grid: Option<usize>,
    /// Sobolev index of the reported weighted residual norm.
    pub sobolev_s: f64,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            order: crate::dno::DEFAULT_ORDER,
            gravity: 1.0,
            jmax_x: None,
            phi_grid: None,
            sobolev_s: 4.0,
        }
    }
}

impl QpConfig {
    pub fn wave(&self, e: &TorusEmbedding) -> Result<WaveConfig> {
        let need = e.x_bound();
        let jx = self.jmax_x.unwrap_or(2 * need);
        if jx < need {
            return Err(Error::Truncation(format!(
                "x-truncation {jx} below the largest profile wavenumber {need}"
            )));
        }
        Ok(WaveConfig {
            dno: DnoConfig::new(self.order, jx),
            gravity: self.gravity,
        })
    }

    /// φ sample points. The integrands `X_H(U(φ))[j] e^{−iℓ·φ}` with
    /// `j = −𝚟·ℓ` are constant along `φ ↦ φ + 𝚟c`, so the torus average equals
    /// the average over the section `φ_i = 0`, where `i` is a site of least
    /// `|𝚟_i|`. The section grid has `grid_size(4L + 1)` points per dimension.
    pub fn phi_points(&self, e: &TorusEmbedding) -> Vec<Vec<f64>> {
        let nu = e.nu();
        let v = e.velocity();
        let fixed = (0..nu).min_by_key(|&i| v[i].unsigned_abs()).unwrap_or(0);
        let n = self.phi_grid.unwrap_or_else(|| grid_size(4 * e.lmax() + 1));
        let total = n.pow(nu as u32 - 1);
        (0..total)
            .map(|mut k| {
                let mut p = vec![0.0; nu];
                for d in (0..nu).rev().filter(|&d| d != fixed) {
                    p[d] = 2.0 * PI * (k % n) as f64 / n as f64;
                    k /= n;
                }
                p
            })
            .collect()
    }
}

/// `(1/P) Σ_p f_p(−𝚟·ℓ) e^{−iℓ·φ_p}` for every Θ-mode.
fn project_slices(e: &TorusEmbedding, phis: &[Vec<f64>], slices: &[SurfaceState]) -> TorusField {
    let mut out = TorusField::zeros(e.nu(), e.lmax(), 0, 2);
    let p = phis.len() as f64;
    for ell in multi_indices(e.nu(), e.lmax()) {
        let j = e.wavenumber(&ell);
        if j == 0 {
            continue;
        }
        let mut acc = [ZERO; 2];
        for (phi, s) in phis.iter().zip(slices) {
            let ph = Complex64::from_polar(1.0, -dot_f(phi, &ell));
            acc[0] += s.eta.coeff(j) * ph;
            acc[1] += s.psi.coeff(j) * ph;
        }
        out.set(0, &ell, 0, acc[0] / p);
        out.set(1, &ell, 0, acc[1] / p);
    }
    out
}

/// `X_H(U)` in Θ-coordinates; `linear` uses `(|D|ψ, −gη)`.
pub fn theta_vector_field(e: &TorusEmbedding, cfg: &QpConfig, linear: bool) -> Result<TorusField> {
    if linear {
        let g = cfg.gravity;
        return Ok(e.profile.map_modes(|comp, ell, _, _| {
            let j = e.wavenumber(ell);
            if j == 0 {
                return ZERO;
            }
            if comp == 0 {
                e.coeff(1, ell) * j.unsigned_abs() as f64
            } else {
                -e.coeff(0, ell) * g
            }
        }));
    }
    let wave = cfg.wave(e)?;
    let phis = cfg.phi_points(e);
    let slices = phis
        .par_iter()
        .map(|phi| vector_field(&e.slice(phi, wave.jmax()), &wave).map(|t| t.field))
        .collect::<Result<Vec<_>>>()?;
    Ok(project_slices(e, &phis, &slices))
}

#[derive(Clone, Debug)]
pub struct Residual {
    pub field: TorusField,
    /// `(Σ |F_ℓ|²)^{1/2}` over both components and all modes.
    pub norm: f64,
    /// `(Σ ⟨ℓ, j⟩^{2s} |F_ℓ|²)^{1/2}` with `⟨ℓ, j⟩ = (1 + |ℓ|² + j²)^{1/2}`.
    pub norm_sobolev: f64,
    pub sobolev_s: f64,
}

fn residual_impl(e: &TorusEmbedding, cfg: &QpConfig, linear: bool) -> Result<Residual> {
    let w = theta_vector_field(e, cfg, linear)?;
    let field = e.profile.map_modes(|comp, ell, _, c| {
        if e.wavenumber(ell) == 0 {
            ZERO
        } else {
            I * dot_f(&e.omega, ell) * c - w.get(comp, ell, 0)
        }
    });
    let s = cfg.sobolev_s;
    let (mut n0, mut ns) = (0.0, 0.0);
    for (_, ell, _, c) in field.modes() {
        let j = e.wavenumber(&ell) as f64;
        let br = 1.0 + ell.iter().map(|&l| (l * l) as f64).sum::<f64>() + j * j;
        n0 += c.norm_sqr();
        ns += br.powf(s) * c.norm_sqr();
    }
    Ok(Residual {
        field,
        norm: n0.sqrt(),
        norm_sobolev: ns.sqrt(),
        sobolev_s: s,
    })
}

/// `F = ω·∂_φU − X_H(U)` on the Θ-torus.
pub fn residual(e: &TorusEmbedding, cfg: &QpConfig) -> Result<Residual> {
    residual_impl(e, cfg, false)
}

/// As [`residual`] with `X_H` replaced by its linearization at zero.
pub fn residual_linear(e: &TorusEmbedding, cfg: &QpConfig) -> Result<Residual> {
    residual_impl(e, cfg, true)
}

/// Fourier coefficients in φ of the slice Jacobians,
/// `Â_m[j, j'] = (1/P) Σ_p dX_H(U(φ_p))[j, j'] e^{−im·φ_p}`, restricted to the
/// momentum-consistent entries `j − j' = −𝚟·m`.
pub struct JacobianHat {
    v: Vec<i64>,
    phis: Vec<Vec<f64>>,
    slices: Vec<SliceJacobian>,
}

impl JacobianHat {
    pub fn new(e: &TorusEmbedding, cfg: &QpConfig) -> Result<Self> {
        Self::from_wave(e, cfg, cfg.wave(e)?)
    }

    /// Slices truncated at `|j| ≤ jmax` instead of the configured x-truncation.
    pub fn with_jmax(e: &TorusEmbedding, cfg: &QpConfig, jmax: usize) -> Result<Self> {
        if jmax < e.x_bound() {
            return Err(Error::Truncation(format!(
                "x-truncation {jmax} below the largest profile wavenumber {}",
                e.x_bound()
            )));
        }
        let mut wave = cfg.wave(e)?;
        wave.dno.jmax = jmax;
        Self::from_wave(e, cfg, wave)
    }

    fn from_wave(e: &TorusEmbedding, cfg: &QpConfig, wave: WaveConfig) -> Result<Self> {
        let phis = cfg.phi_points(e);
        let slices = phis
            .par_iter()
            .map(|phi| slice_jacobian(&e.slice(phi, wave.jmax()), &wave))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            v: e.velocity().to_vec(),
            phis,
            slices,
        })
    }

    pub fn jmax(&self) -> usize {
        self.slices[0].jmax
    }

    pub fn entry(&self, m: &[i64], c1: usize, j1: i64, c2: usize, j2: i64) -> Complex64 {
        if j1 - j2 != -dot_i(&self.v, m) {
            return ZERO;
        }
        if self.slices.len() == 1 {
            return self.slices[0].entry(c1, j1, c2, j2);
        }
        let mut acc = ZERO;
        for (phi, a) in self.phis.iter().zip(&self.slices) {
            acc += a.entry(c1, j1, c2, j2) * Complex64::from_polar(1.0, -dot_f(phi, m));
        }
        acc / self.slices.len() as f64
    }
}

/// Representative Θ-modes (`−𝚟·ℓ > 0`) carrying the unknowns.
struct ModeSet {
    modes: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
}

impl ModeSet {
    fn new(e: &TorusEmbedding) -> Self {
        let modes: Vec<Vec<i64>> = multi_indices(e.nu(), e.lmax())
            .into_iter()
            .filter(|l| e.wavenumber(l) > 0)
            .collect();
        let index = modes.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        Self { modes, index }
    }

    fn len(&self) -> usize {
        self.modes.len()
    }

    /// Linear weights of `u_i` on the real unknowns of its representative.
    fn tangential_weights(&self, e: &TorusEmbedding, i: usize) -> (usize, [Complex64; 4]) {
        let j = e.velocity()[i];
        let a = (j.unsigned_abs() as f64).powf(0.25);
        let mut ell = vec![0i64; e.nu()];
        ell[i] = -1;
        let (rep, conj) = if j > 0 { (ell, false) } else { (neg(&ell), true) };
        let s = if conj { -1.0 } else { 1.0 };
        let w = [
            Complex64::new(FRAC_1_SQRT_2 / a, 0.0),
            Complex64::new(0.0, s * FRAC_1_SQRT_2 / a),
            Complex64::new(0.0, FRAC_1_SQRT_2 * a),
            Complex64::new(-s * FRAC_1_SQRT_2 * a, 0.0),
        ];
        (self.index[&rep], w)
    }
}

fn pack(e: &TorusEmbedding, ms: &ModeSet) -> DVector<f64> {
    let n = 4 * ms.len();
    let mut x = DVector::zeros(n + e.nu());
    for (m, ell) in ms.modes.iter().enumerate() {
        for c in 0..2 {
            let z = e.coeff(c, ell);
            x[4 * m + 2 * c] = z.re;
            x[4 * m + 2 * c + 1] = z.im;
        }
    }
    for (i, w) in e.omega.iter().enumerate() {
        x[n + i] = *w;
    }
    x
}

fn unpack(x: &DVector<f64>, template: &TorusEmbedding, ms: &ModeSet) -> TorusEmbedding {
    let mut e = TorusEmbedding::zero(template.sites.clone(), template.lmax());
    for (m, ell) in ms.modes.iter().enumerate() {
        for c in 0..2 {
            let z = Complex64::new(x[4 * m + 2 * c], x[4 * m + 2 * c + 1]);
            e.profile.set_real(c, ell, 0, z);
        }
    }
    let n = 4 * ms.len();
    e.omega = (0..e.nu()).map(|i| x[n + i]).collect();
    e
}

/// Stacked residual: `√2 (Re F, Im F)` on representatives, `|u_i|² − ζ_i`,
/// `Im u_i`. Its Euclidean norm counts both conjugate halves of `F`.
fn system_residual(
    e: &TorusEmbedding,
    ms: &ModeSet,
    zeta: &[f64],
    cfg: &QpConfig,
) -> Result<(DVector<f64>, Residual)> {
    let res = residual(e, cfg)?;
    let n = 4 * ms.len();
    let nu = e.nu();
    let mut r = DVector::zeros(n + 2 * nu);
    for (m, ell) in ms.modes.iter().enumerate() {
        for c in 0..2 {
            let f = res.field.get(c, ell, 0);
            r[4 * m + 2 * c] = SQRT_2 * f.re;
            r[4 * m + 2 * c + 1] = SQRT_2 * f.im;
        }
    }
    for i in 0..nu {
        let u = e.tangential_u(i);
        r[n + i] = u.norm_sqr() - zeta[i];
        r[n + nu + i] = u.im;
    }
    Ok((r, res))
}

fn system_jacobian(e: &TorusEmbedding, ms: &ModeSet, cfg: &QpConfig) -> Result<DMatrix<f64>> {
    let hat = JacobianHat::new(e, cfg)?;
    let nu = e.nu();
    let n = 4 * ms.len();
    let mut jac = DMatrix::zeros(n + 2 * nu, n + nu);
    let rows: Vec<Vec<(usize, usize, f64)>> = ms
        .modes
        .par_iter()
        .enumerate()
        .map(|(m, ell)| {
            let j = e.wavenumber(ell);
            let wl = dot_f(&e.omega, ell);
            let mut out = Vec::new();
            for c in 0..2 {
                let (rr, ri) = (4 * m + 2 * c, 4 * m + 2 * c + 1);
                for (m2, ell2) in ms.modes.iter().enumerate() {
                    let j2 = e.wavenumber(ell2);
                    let d: Vec<i64> = ell.iter().zip(ell2).map(|(a, b)| a - b).collect();
                    let s: Vec<i64> = ell.iter().zip(ell2).map(|(a, b)| a + b).collect();
                    for c2 in 0..2 {
                        let mut p = -hat.entry(&d, c, j, c2, j2);
                        if m == m2 && c == c2 {
                            p += I * wl;
                        }
                        let q = -hat.entry(&s, c, j, c2, -j2);
                        let (pq, pmq) = (p + q, p - q);
                        let (ca, cb) = (4 * m2 + 2 * c2, 4 * m2 + 2 * c2 + 1);
                        out.push((rr, ca, SQRT_2 * pq.re));
                        out.push((rr, cb, -SQRT_2 * pmq.im));
                        out.push((ri, ca, SQRT_2 * pq.im));
                        out.push((ri, cb, SQRT_2 * pmq.re));
                    }
                }
                let z = e.coeff(c, ell);
                for i in 0..nu {
                    let l = ell[i] as f64;
                    out.push((rr, n + i, -SQRT_2 * l * z.im));
                    out.push((ri, n + i, SQRT_2 * l * z.re));
                }
            }
            out
        })
        .collect();
    for (r, c, v) in rows.into_iter().flatten() {
        jac[(r, c)] = v;
    }
    for i in 0..nu {
        let (rep, w) = ms.tangential_weights(e, i);
        let u = e.tangential_u(i);
        for (k, wk) in w.iter().enumerate() {
            jac[(n + i, 4 * rep + k)] = 2.0 * (u.conj() * wk).re;
            jac[(n + nu + i, 4 * rep + k)] = wk.im;
        }
    }
    Ok(jac)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveParams {
    /// Prescribed tangential actions.
    pub zeta: Vec<f64>,
    /// Θ-truncations per stage, nondecreasing.
    pub schedule: Vec<usize>,
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Largest accepted initial residual.
    pub basin: f64,
    /// Smallest accepted `σ_min / σ_max` of the Newton matrix.
    pub min_conditioning: f64,
}

impl SolveParams {
    pub fn new(zeta: Vec<f64>, lmax: usize) -> Self {
        Self {
            zeta,
            schedule: vec![lmax],
            damping: 1.0,
            max_iter: 30,
            tol: 1e-10,
            basin: 0.1,
            min_conditioning: 1e-14,
        }
    }

    fn validate(&self, nu: usize) -> Result<()> {
        if self.zeta.len() != nu {
            return Err(Error::InvalidInput("action vector length mismatch".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("schedule must be nonempty and nondecreasing".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub stage: usize,
    pub lmax: usize,
    pub iteration: usize,
    /// Norm of the stacked residual.
    pub residual: f64,
    /// `‖F‖` alone.
    pub residual_f: f64,
    pub residual_sobolev: f64,
    pub step_norm: f64,
    /// Smallest singular value of the Jacobian; absent on the record that met the tolerance.
    pub sigma_min: Option<f64>,
    pub omega: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub embedding: TorusEmbedding,
    pub log: Vec<IterationRecord>,
    pub residual: f64,
    pub residual_sobolev: f64,
    pub iterations: usize,
    /// Estimated convergence order of the final stage.
    pub order: Option<f64>,
}

/// Observed order `log(r_{n+1}/r_n) / log(r_n/r_{n−1})` from the last three
/// residuals above `floor`.
pub fn convergence_order(res: &[f64], floor: f64) -> Option<f64> {
    let above: Vec<f64> = res.iter().copied().take_while(|&r| r > floor).collect();
    if above.len() < 3 {
        return None;
    }
    let k = above.len();
    let (a, b, c) = (above[k - 3], above[k - 2], above[k - 1]);
    Some((c / b).ln() / (b / a).ln())
}

/// Gauss-Newton on the augmented system
/// `{F = 0, |u_i|² = ζ_i, Im u_i = 0}` for the profile and `ω`.
pub fn newton_refine(e0: &TorusEmbedding, params: &SolveParams, cfg: &QpConfig) -> Result<NewtonResult> {
    let nu = e0.nu();
    params.validate(nu)?;
    let mut e = e0.clone();
    let mut log = Vec::new();
    let mut total = 0;
    let mut last = (f64::INFINITY, f64::INFINITY);
    let mut stage_res = Vec::new();
    for (stage, &lmax) in params.schedule.iter().enumerate() {
        e = e.resized(lmax);
        let ms = ModeSet::new(&e);
        stage_res.clear();
        let mut first: Option<f64> = None;
        let mut iter = 0;
        loop {
            let (r, res) = system_residual(&e, &ms, &params.zeta, cfg)?;
            let rn = r.norm();
            stage_res.push(rn);
            let mut rec = IterationRecord {
                stage,
                lmax,
                iteration: iter,
                residual: rn,
                residual_f: res.norm,
                residual_sobolev: res.norm_sobolev,
                step_norm: 0.0,
                sigma_min: None,
                omega: e.omega.clone(),
            };
            last = (rn, res.norm_sobolev);
            let r0 = *first.get_or_insert(rn);
            if stage == 0 && iter == 0 && rn > params.basin {
                return Err(Error::Basin {
                    residual: rn,
                    threshold: params.basin,
                });
            }
            if !rn.is_finite() || rn > 1e3 * r0.max(params.tol) {
                return Err(Error::Basin {
                    residual: rn,
                    threshold: params.basin,
                });
            }
            if rn <= params.tol {
                log.push(rec);
                break;
            }
            if iter >= params.max_iter {
                log.push(rec);
                return Err(Error::NonConvergence {
                    iterations: total,
                    residual: rn,
                });
            }
            let jac = system_jacobian(&e, &ms, cfg)?;
            let (delta, smin) = least_squares(&jac, &r)?;
            let smax = jac.norm();
            rec.sigma_min = Some(smin);
            if smin < params.min_conditioning * smax {
                log.push(rec);
                return Err(Error::IllConditioned { sigma_min: smin });
            }
            rec.step_norm = delta.norm();
            log.push(rec);
            let x = pack(&e, &ms) - delta * params.damping;
            e = unpack(&x, &e, &ms);
            iter += 1;
            total += 1;
        }
    }
    Ok(NewtonResult {
        embedding: e,
        order: convergence_order(&stage_res, 1e-13),
        log,
        residual: last.0,
        residual_sobolev: last.1,
        iterations: total,
    })
}

#[derive(Clone, Debug)]
pub struct ContinuationStep {
    pub eps: f64,
    pub result: NewtonResult,
    /// Intermediate amplitudes inserted by step halving.
    pub inserted: Vec<f64>,
}

/// Solves at each `ε` in `eps_targets` (actions `ε²ζ₀`), starting from the
/// first-order ansatz and then from the previous solution rescaled. A failed
/// step is retried from its midpoint, up to `max_halvings` times.
pub fn continuation(
    sites: &TangentialSet,
    zeta0: &[f64],
    eps_targets: &[f64],
    params: &SolveParams,
    cfg: &QpConfig,
    max_halvings: usize,
) -> Result<Vec<ContinuationStep>> {
    let lmax = *params.schedule.last().ok_or_else(|| Error::InvalidInput("empty schedule".into()))?;
    let mut out = Vec::new();
    let mut prev: Option<(f64, TorusEmbedding)> = None;
    let wbar = sites.linear_frequencies();
    let solve_at = |eps: f64, from: &Option<(f64, TorusEmbedding)>| -> Result<NewtonResult> {
        let zeta: Vec<f64> = zeta0.iter().map(|z| eps * eps * z).collect();
        let start = match from {
            None => first_order_ansatz(sites, &zeta, lmax)?,
            Some((e_prev, emb)) => {
                let r = eps / e_prev;
                let mut s = emb.clone();
                s.profile = emb.profile.scale(r);
                s.omega = emb
                    .omega
                    .iter()
                    .zip(&wbar)
                    .map(|(w, b)| b + (w - b) * r * r)
                    .collect();
                s
            }
        };
        let p = SolveParams {
            zeta,
            ..params.clone()
        };
        newton_refine(&start, &p, cfg)
    };
    for &target in eps_targets {
        let mut inserted = Vec::new();
        let mut goal = target;
        let mut halvings = 0;
        loop {
            match solve_at(goal, &prev) {
                Ok(res) => {
                    prev = Some((goal, res.embedding.clone()));
                    if goal == target {
                        out.push(ContinuationStep {
                            eps: target,
                            result: res,
                            inserted: inserted.clone(),
                        });
                        break;
                    }
                    goal = target;
                }
                Err(err @ (Error::Basin { .. } | Error::NonConvergence { .. })) => {
                    halvings += 1;
                    let Some((e_prev, _)) = &prev else { return Err(err) };
                    if halvings > max_halvings {
                        return Err(err);
                    }
                    goal = 0.5 * (e_prev + goal);
                    inserted.push(goal);
                }
                Err(err) => return Err(err),
            }
        }
    }
    Ok(out)
}

/// Largest difference between `U(ωt, ·)` and the evolution of `U(0, ·)` at
/// `t_final` (zero-mean parts).
pub fn evolve_discrepancy(e: &TorusEmbedding, t_final: f64, dt: f64, cfg: &QpConfig) -> Result<f64> {
    let wave = cfg.wave(e)?;
    let s0 = e.surface_at(0.0, wave.jmax());
    let steps = (t_final / dt).round().max(1.0) as usize;
    let opts = EvolveOptions {
        dt,
        t_final,
        save_every: steps,
        check_every: 0,
        tolerance: f64::INFINITY,
    };
    let traj = evolve(&s0, (0.0, 0.0), &opts, &wave)?;
    let last = traj.snapshots.last().expect("at least the initial snapshot");
    Ok(last.state.max_abs_diff(&e.surface_at(last.t, wave.jmax())))
}

/// `max_t |M(U(ωt)) − M(U(0))|` over the given times.
pub fn momentum_variation(e: &TorusEmbedding, times: &[f64], cfg: &QpConfig) -> Result<f64> {
    let jx = cfg.wave(e)?.jmax();
    let m0 = momentum(&e.surface_at(0.0, jx));
    Ok(times
        .iter()
        .map(|&t| (momentum(&e.surface_at(t, jx)) - m0).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[i64]) -> TangentialSet {
        TangentialSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ansatz_is_right_moving_cosine() {
        let eps = 0.03;
        let e = first_order_ansatz(&s(&[1]), &[eps * eps], 4).unwrap();
        for &(t, x) in &[(0.0, 0.3), (0.7, 1.1), (2.0, -0.4)] {
            let phi = [e.omega[0] * t];
            let (eta, _) = e.eval(&phi, x);
            let expected = 2f64.sqrt() * eps * (e.omega[0] * t - x).cos();
            assert!((eta - expected).abs() < 1e-15);
        }
        assert!((e.actions()[0] - eps * eps).abs() < 1e-17);
        assert!(e.tangential_u(0).im.abs() < 1e-17);
    }

    #[test]
    fn zero_embedding_has_zero_residual() {
        let e = first_order_ansatz(&s(&[1, 2]), &[0.0, 0.0], 3).unwrap();
        let r = residual(&e, &QpConfig::default()).unwrap();
        assert_eq!(r.norm, 0.0);
    }

    #[test]
    fn linear_residual_vanishes_on_ansatz() {
        for sites in [vec![1], vec![1, 2], vec![-1, 3]] {
            let set = s(&sites);
            let zeta: Vec<f64> = sites.iter().map(|_| 1e-3).collect();
            let mut e = first_order_ansatz(&set, &zeta, 3).unwrap();
            e.omega = set.linear_frequencies();
            let r = residual_linear(&e, &QpConfig::default()).unwrap();
            assert!(r.norm < 1e-12, "{sites:?}: {}", r.norm);
        }
    }

    #[test]
    fn shift_equivariance_and_reversal() {
        let e = first_order_ansatz(&s(&[1, 2]), &[1e-3, 2e-3], 2).unwrap();
        let v = [1.0, 2.0];
        let c = 0.37;
        for &(p0, p1, x) in &[(0.1, 0.5, 0.2), (1.0, -2.0, 3.0)] {
            let a = e.eval(&[p0 + v[0] * c, p1 + v[1] * c], x + c);
            let b = e.eval(&[p0, p1], x);
            assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
            let r = e.reversed().eval(&[p0, p1], x);
            let d = e.eval(&[-p0, -p1], -x);
            assert!((r.0 - d.0).abs() < 1e-15 && (r.1 + d.1).abs() < 1e-15);
        }
    }

    #[test]
    fn slices_agree_with_pointwise_eval() {
        let e = first_order_ansatz(&s(&[1, -2]), &[1e-3, 2e-3], 2).unwrap();
        let phi = [0.4, 1.3];
        let sl = e.slice(&phi, e.x_bound());
        for &x in &[0.0, 0.9, 4.0] {
            let (eta, psi) = e.eval(&phi, x);
            assert!((sl.eta.eval(x) - eta).abs() < 1e-15);
            assert!((sl.psi.eval(x) - psi).abs() < 1e-15);
        }
    }

    #[test]
    fn convergence_order_of_quadratic_sequence() {
        let r = [1e-2, 1e-4, 1e-8, 1e-16];
        assert!((convergence_order(&r, 1e-13).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_order(&[1e-2, 1e-14], 1e-13).is_none());
    }

    #[test]
    fn zero_amplitude_needs_no_iterations() {
        let e = first_order_ansatz(&s(&[1]), &[0.0], 8).unwrap();
        let res = newton_refine(&e, &SolveParams::new(vec![0.0], 8), &QpConfig::default()).unwrap();
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn newton_jacobian_matches_finite_differences() {
        let set = s(&[1]);
        let cfg = QpConfig::default();
        let e = first_order_ansatz(&set, &[4e-4], 6).unwrap();
        let ms = ModeSet::new(&e);
        let jac = system_jacobian(&e, &ms, &cfg).unwrap();
        let x0 = pack(&e, &ms);
        let h = 1e-7;
        for k in [0, 1, 2, 3, 5, 9, x0.len() - 1] {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[k] += h;
            xm[k] -= h;
            let rp = system_residual(&unpack(&xp, &e, &ms), &ms, &[4e-4], &cfg).unwrap().0;
            let rm = system_residual(&unpack(&xm, &e, &ms), &ms, &[4e-4], &cfg).unwrap().0;
            let fd = (rp - rm) / (2.0 * h);
            let err = (fd - jac.column(k)).amax();
            assert!(err < 1e-7, "column {k}: {err:e}");
        }
    }

    #[test]
    fn stokes_wave_newton() {
        let eps = 0.02;
        let set = s(&[1]);
        let e = first_order_ansatz(&set, &[eps * eps], 8).unwrap();
        let res = newton_refine(&e, &SolveParams::new(vec![eps * eps], 8), &QpConfig::default()).unwrap();
        assert!(res.residual < 1e-10);
        assert!((res.embedding.actions()[0] - eps * eps).abs() < 1e-14);
        // Stokes: ω = 1 + a²/2 + O(a⁴) for the first-harmonic amplitude a = √2 ε.
        let z = eps * eps;
        assert!((res.embedding.omega[0] - 1.0 - z).abs() < 10.0 * z * z);
    }

    #[test]
    fn two_site_newton() {
        let eps = 0.02;
        let set = s(&[1, 2]);
        let z = vec![eps * eps, eps * eps];
        let e = first_order_ansatz(&set, &z, 4).unwrap();
        let res = newton_refine(&e, &SolveParams::new(z.clone(), 4), &QpConfig::default()).unwrap();
        assert!(res.residual < 1e-10);
        assert!(res.order.unwrap() > 1.6);
        for (a, b) in res.embedding.actions().iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
