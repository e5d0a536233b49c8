//! Fourier representation of real periodic functions on the circle `T = R/2πZ`
//! and on tori `T^ν`.
//!
//! Convention: `f(x) = Σ_j f_j e^{ijx}` with no normalization in the basis, so
//! `∫_T f ḡ dx = 2π Σ_j f_j conj(g_j)`.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Default x-truncation.
pub const DEFAULT_JMAX: usize = 128;
/// Default torus truncation.
pub const DEFAULT_LMAX: usize = 32;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized FFT (`inverse` uses `e^{+i}` kernel).
pub(crate) fn fft_inplace(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        };
        fft.process(buf);
    });
}

/// Smallest power of two `≥ min`, at least 8.
pub fn grid_size(min: usize) -> usize {
    min.max(8).next_power_of_two()
}

#[inline]
fn bin(j: i64, n: usize) -> usize {
    j.rem_euclid(n as i64) as usize
}

/// Fourier coefficients `f_j`, `|j| ≤ jmax`, of a periodic function.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField1D {
    jmax: usize,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl SpectralField1D {
    pub fn zeros(jmax: usize) -> Self {
        Self {
            jmax,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * jmax + 1],
            real: true,
        }
    }

    /// Builds a field from its coefficient vector ordered `j = -jmax..=jmax`.
    ///
    /// With `real` set the coefficients are symmetrized so that
    /// `f_{-j} = conj(f_j)` holds exactly.
    pub fn from_coeffs(coeffs: Vec<Complex64>, real: bool) -> Result<Self> {
        if coeffs.len() % 2 != 1 {
            return Err(Error::InvalidInput(format!(
                "coefficient vector must have odd length, got {}",
                coeffs.len()
            )));
        }
        let jmax = coeffs.len() / 2;
        let mut f = Self { jmax, coeffs, real };
        if real {
            f.symmetrize();
        }
        Ok(f)
    }

    /// Real field from the modes `j ≥ 0`; the conjugate modes are filled in.
    pub fn from_modes(jmax: usize, modes: &[(i64, Complex64)]) -> Self {
        let mut f = Self::zeros(jmax);
        for &(j, c) in modes {
            if j.unsigned_abs() as usize > jmax {
                continue;
            }
            if j == 0 {
                f.coeffs[jmax].re += c.re;
            } else {
                let (j, c) = if j > 0 { (j, c) } else { (-j, c.conj()) };
                f.coeffs[jmax + j as usize] += c;
                f.coeffs[jmax - j as usize] += c.conj();
            }
        }
        f
    }

    /// `amp · cos(kx)`.
    pub fn cos(jmax: usize, k: i64, amp: f64) -> Self {
        if k == 0 {
            return Self::from_modes(jmax, &[(0, Complex64::new(amp, 0.0))]);
        }
        Self::from_modes(jmax, &[(k, Complex64::new(amp / 2.0, 0.0))])
    }

    /// `amp · sin(kx)`.
    pub fn sin(jmax: usize, k: i64, amp: f64) -> Self {
        Self::from_modes(jmax, &[(k, Complex64::new(0.0, -amp / 2.0))])
    }

    pub fn constant(jmax: usize, c: f64) -> Self {
        Self::cos(jmax, 0, c)
    }

    /// Samples a real function on a grid of `grid_size(4 jmax + 4)` points.
    pub fn from_fn(jmax: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = grid_size(4 * jmax + 4);
        let samples: Vec<f64> = (0..n).map(|m| f(2.0 * PI * m as f64 / n as f64)).collect();
        Self::from_grid(&samples, jmax)
    }

    /// Coefficients of the trigonometric interpolant of equispaced real samples
    /// `f(2πm/n)`, truncated to `jmax`. Requires `n ≥ 2 jmax + 1`.
    pub fn from_grid(samples: &[f64], jmax: usize) -> Self {
        let n = samples.len();
        assert!(n > 2 * jmax, "grid of {n} points cannot resolve jmax = {jmax}");
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        fft_inplace(&mut buf, false);
        let scale = 1.0 / n as f64;
        let mut f = Self::zeros(jmax);
        for j in -(jmax as i64)..=(jmax as i64) {
            f.coeffs[(j + jmax as i64) as usize] = buf[bin(j, n)] * scale;
        }
        f.symmetrize();
        f
    }

    pub fn jmax(&self) -> usize {
        self.jmax
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `f_j`, zero outside the truncation.
    #[inline]
    pub fn coeff(&self, j: i64) -> Complex64 {
        if j.unsigned_abs() as usize > self.jmax {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(j + self.jmax as i64) as usize]
        }
    }

    /// Sets `f_j`; for real fields `f_{-j}` is set to the conjugate.
    pub fn set_coeff(&mut self, j: i64, c: Complex64) {
        if j.unsigned_abs() as usize > self.jmax {
            return;
        }
        let jm = self.jmax as i64;
        if self.real {
            if j == 0 {
                self.coeffs[jm as usize] = Complex64::new(c.re, 0.0);
            } else {
                self.coeffs[(j + jm) as usize] = c;
                self.coeffs[(-j + jm) as usize] = c.conj();
            }
        } else {
            self.coeffs[(j + jm) as usize] = c;
        }
    }

    fn symmetrize(&mut self) {
        let jm = self.jmax;
        self.coeffs[jm].im = 0.0;
        for j in 1..=jm {
            let avg = 0.5 * (self.coeffs[jm + j] + self.coeffs[jm - j].conj());
            self.coeffs[jm + j] = avg;
            self.coeffs[jm - j] = avg.conj();
        }
    }

    /// Zero-padded or truncated copy with the new bound.
    pub fn resized(&self, jmax: usize) -> Self {
        let mut out = Self {
            jmax,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * jmax + 1],
            real: self.real,
        };
        let m = jmax.min(self.jmax) as i64;
        for j in -m..=m {
            out.coeffs[(j + jmax as i64) as usize] = self.coeff(j);
        }
        out
    }

    /// x-average `f_0` (real part).
    pub fn mean(&self) -> f64 {
        self.coeffs[self.jmax].re
    }

    pub fn zero_mean(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[self.jmax] = Complex64::new(0.0, 0.0);
        out
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let jmax = self.jmax.max(other.jmax);
        let coeffs = (-(jmax as i64)..=jmax as i64)
            .map(|j| f(self.coeff(j), other.coeff(j)))
            .collect();
        Self {
            jmax,
            coeffs,
            real: self.real && other.real,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            jmax: self.jmax,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            real: self.real,
        }
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b * s)
    }

    /// `∂_x f`.
    pub fn dx(&self) -> Self {
        let jm = self.jmax as i64;
        Self {
            jmax: self.jmax,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * Complex64::new(0.0, (k as i64 - jm) as f64))
                .collect(),
            real: self.real,
        }
    }

    /// Applies a Fourier multiplier.
    pub fn apply(&self, m: &Multiplier) -> Result<Self> {
        multiplier_apply(self, m)
    }

    /// Real samples on `n` equispaced points (imaginary parts are dropped).
    pub fn to_grid(&self, n: usize) -> Vec<f64> {
        self.to_grid_complex(n).into_iter().map(|c| c.re).collect()
    }

    pub fn to_grid_complex(&self, n: usize) -> Vec<Complex64> {
        assert!(n > 2 * self.jmax, "grid of {n} points cannot hold jmax = {}", self.jmax);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for j in -(self.jmax as i64)..=(self.jmax as i64) {
            buf[bin(j, n)] = self.coeff(j);
        }
        fft_inplace(&mut buf, true);
        buf
    }

    /// Pointwise evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        (-(self.jmax as i64)..=self.jmax as i64)
            .map(|j| (self.coeff(j) * Complex64::from_polar(1.0, j as f64 * x)).re)
            .sum()
    }

    /// Product of several fields, exact in the retained band `|j| ≤ jout`.
    ///
    /// The grid is large enough that no mode of the full product aliases onto a
    /// retained mode.
    pub fn product(fields: &[&Self], jout: usize) -> Self {
        let total: usize = fields.iter().map(|f| f.jmax).sum();
        let n = grid_size(total + jout + 2);
        let mut acc = vec![Complex64::new(1.0, 0.0); n];
        for f in fields {
            for (a, v) in acc.iter_mut().zip(f.to_grid_complex(n)) {
                *a *= v;
            }
        }
        fft_inplace(&mut acc, false);
        let scale = 1.0 / n as f64;
        let coeffs = (-(jout as i64)..=jout as i64)
            .map(|j| acc[bin(j, n)] * scale)
            .collect();
        let mut out = Self {
            jmax: jout,
            coeffs,
            real: fields.iter().all(|f| f.real),
        };
        if out.real {
            out.symmetrize();
        }
        out
    }

    /// Dealiased product truncated to the larger of the two bounds.
    pub fn mul(&self, other: &Self) -> Self {
        Self::product(&[self, other], self.jmax.max(other.jmax))
    }

    /// `∫_T f g dx` for real fields, `2π Re Σ_j f_j conj(g_j)`.
    pub fn integral_product(&self, other: &Self) -> f64 {
        let jm = self.jmax.min(other.jmax) as i64;
        2.0 * PI
            * (-jm..=jm)
                .map(|j| (self.coeff(j) * other.coeff(j).conj()).re)
                .sum::<f64>()
    }

    /// `(∫_T |f|² dx)^{1/2}`.
    pub fn norm_l2(&self) -> f64 {
        (2.0 * PI * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    /// `x ↦ f(x + c)`.
    pub fn shift(&self, c: f64) -> Self {
        let jm = self.jmax as i64;
        Self {
            jmax: self.jmax,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * Complex64::from_polar(1.0, (k as i64 - jm) as f64 * c))
                .collect(),
            real: self.real,
        }
    }

    /// `x ↦ f(-x)`.
    pub fn reflect(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        Self {
            jmax: self.jmax,
            coeffs,
            real: self.real,
        }
    }

    /// Largest coefficient of the odd part `f(x) - f(-x)`.
    pub fn odd_part_max(&self) -> f64 {
        self.sub(&self.reflect()).max_abs() / 2.0
    }
}

/// Symbol of a Fourier multiplier `m(D)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Symbol {
    /// `|j|^p`; undefined at `j = 0` when `p < 0`.
    AbsPow(f64),
    /// `sign(j)`, zero at `j = 0`.
    Sign,
    /// Projection onto zero-mean functions.
    ZeroMean,
}

/// Fourier multiplier acting coefficientwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Multiplier {
    pub symbol: Symbol,
}

impl Multiplier {
    /// `|D|`, the Dirichlet-Neumann operator of the flat surface.
    pub fn abs_d() -> Self {
        Self::abs_d_pow(1.0)
    }

    pub fn abs_d_pow(p: f64) -> Self {
        Self {
            symbol: Symbol::AbsPow(p),
        }
    }

    pub fn sign() -> Self {
        Self {
            symbol: Symbol::Sign,
        }
    }

    pub fn zero_mean() -> Self {
        Self {
            symbol: Symbol::ZeroMean,
        }
    }

    /// `None` where the symbol is undefined.
    pub fn symbol(&self, j: i64) -> Option<f64> {
        match self.symbol {
            Symbol::AbsPow(p) => {
                if j == 0 {
                    if p > 0.0 {
                        Some(0.0)
                    } else if p == 0.0 {
                        Some(1.0)
                    } else {
                        None
                    }
                } else {
                    Some((j.unsigned_abs() as f64).powf(p))
                }
            }
            Symbol::Sign => Some(j.signum() as f64),
            Symbol::ZeroMean => Some(if j == 0 { 0.0 } else { 1.0 }),
        }
    }

    pub fn is_even(&self) -> bool {
        !matches!(self.symbol, Symbol::Sign)
    }
}

/// Scales `f_j` by `m(j)`.
///
/// Fails when the symbol is undefined at `j = 0` and `f_0 ≠ 0`.
pub fn multiplier_apply(f: &SpectralField1D, m: &Multiplier) -> Result<SpectralField1D> {
    let jm = f.jmax as i64;
    let mut coeffs = Vec::with_capacity(f.coeffs.len());
    for (k, c) in f.coeffs.iter().enumerate() {
        let j = k as i64 - jm;
        match m.symbol(j) {
            Some(s) => coeffs.push(c * s),
            None if c.norm() == 0.0 => coeffs.push(Complex64::new(0.0, 0.0)),
            None => return Err(Error::MeanComponent),
        }
    }
    Ok(SpectralField1D {
        jmax: f.jmax,
        coeffs,
        real: f.real && m.is_even(),
    })
}

/// All `ℓ ∈ Z^ν` with `|ℓ|_∞ ≤ lmax`, in lexicographic order.
pub fn multi_indices(nu: usize, lmax: usize) -> Vec<Vec<i64>> {
    let side = 2 * lmax + 1;
    let count = side.pow(nu as u32);
    (0..count)
        .map(|mut k| {
            let mut ell = vec![0i64; nu];
            for i in (0..nu).rev() {
                ell[i] = (k % side) as i64 - lmax as i64;
                k /= side;
            }
            ell
        })
        .collect()
}

#[inline]
pub(crate) fn dot_i(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn dot_f(a: &[f64], b: &[i64]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| x * y as f64).sum()
}

/// ν-dimensional unnormalized FFT on an `n^ν` grid stored with axis 0 slowest.
pub(crate) fn fft_nd(buf: &mut [Complex64], n: usize, nu: usize, inverse: bool) {
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..nu {
        let stride = n.pow((nu - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..buf.len()).step_by(block) {
            for off in 0..stride {
                for (k, v) in line.iter_mut().enumerate() {
                    *v = buf[start + off + k * stride];
                }
                fft_inplace(&mut line, inverse);
                for (k, v) in line.iter().enumerate() {
                    buf[start + off + k * stride] = *v;
                }
            }
        }
    }
}

/// Fourier coefficients indexed by `(ℓ, j) ∈ Z^ν × Z`, `|ℓ|_∞ ≤ lmax`,
/// `|j| ≤ jmax`, with one or two components.
///
/// Fields that depend on `Θ ∈ T^ν` only use `jmax = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    nu: usize,
    lmax: usize,
    jmax: usize,
    ncomp: usize,
    coeffs: Vec<Complex64>,
}

impl TorusField {
    pub fn zeros(nu: usize, lmax: usize, jmax: usize, ncomp: usize) -> Self {
        let side = 2 * lmax + 1;
        Self {
            nu,
            lmax,
            jmax,
            ncomp,
            coeffs: vec![Complex64::new(0.0, 0.0); ncomp * side.pow(nu as u32) * (2 * jmax + 1)],
        }
    }

    pub fn nu(&self) -> usize {
        self.nu
    }
    pub fn lmax(&self) -> usize {
        self.lmax
    }
    pub fn jmax(&self) -> usize {
        self.jmax
    }
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    fn index(&self, comp: usize, ell: &[i64], j: i64) -> Option<usize> {
        if comp >= self.ncomp || j.unsigned_abs() as usize > self.jmax {
            return None;
        }
        let side = 2 * self.lmax + 1;
        let mut k = comp;
        for &l in ell {
            if l.unsigned_abs() as usize > self.lmax {
                return None;
            }
            k = k * side + (l + self.lmax as i64) as usize;
        }
        Some(k * (2 * self.jmax + 1) + (j + self.jmax as i64) as usize)
    }

    /// Coefficient of `e^{i(ℓ·Θ + jx)}`, zero outside the truncation.
    pub fn get(&self, comp: usize, ell: &[i64], j: i64) -> Complex64 {
        self.index(comp, ell, j)
            .map(|k| self.coeffs[k])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Sets one coefficient; silently ignored outside the truncation.
    pub fn set(&mut self, comp: usize, ell: &[i64], j: i64, c: Complex64) {
        if let Some(k) = self.index(comp, ell, j) {
            self.coeffs[k] = c;
        }
    }

    /// Sets `(ℓ, j)` and the conjugate mode `(-ℓ, -j)`.
    pub fn set_real(&mut self, comp: usize, ell: &[i64], j: i64, c: Complex64) {
        let neg: Vec<i64> = ell.iter().map(|l| -l).collect();
        if neg == ell && j == 0 {
            self.set(comp, ell, j, Complex64::new(c.re, 0.0));
        } else {
            self.set(comp, ell, j, c);
            self.set(comp, &neg, -j, c.conj());
        }
    }

    /// Iterates over `(comp, ℓ, j, coefficient)`.
    pub fn modes(&self) -> impl Iterator<Item = (usize, Vec<i64>, i64, Complex64)> + '_ {
        let ells = multi_indices(self.nu, self.lmax);
        let nj = 2 * self.jmax + 1;
        let per_comp = ells.len() * nj;
        self.coeffs.iter().enumerate().map(move |(k, &c)| {
            let comp = k / per_comp;
            let r = k % per_comp;
            (comp, ells[r / nj].clone(), (r % nj) as i64 - self.jmax as i64, c)
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `(Σ |c|²)^{1/2}` over all stored coefficients.
    pub fn l2_coeffs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.coeffs.len(), other.coeffs.len(), "shape mismatch");
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.sub(&other.scale(-1.0))
    }

    /// Coefficientwise map `c(comp, ℓ, j) ↦ f(comp, ℓ, j, c)`.
    pub fn map_modes(&self, f: impl Fn(usize, &[i64], i64, Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for (k, (comp, ell, j, c)) in self.modes().enumerate() {
            out.coeffs[k] = f(comp, &ell, j, c);
        }
        out
    }

    /// Samples of a scalar Θ-field (`jmax = 0`) on an `n^ν` grid,
    /// `Θ_m = 2π m / n`, axis 0 slowest.
    pub fn to_grid(&self, comp: usize, n: usize) -> Vec<f64> {
        assert_eq!(self.jmax, 0, "grid transforms are for Θ-fields");
        assert!(n > 2 * self.lmax);
        let mut buf = vec![Complex64::new(0.0, 0.0); n.pow(self.nu as u32)];
        for ell in multi_indices(self.nu, self.lmax) {
            buf[grid_bin(&ell, n)] = self.get(comp, &ell, 0);
        }
        fft_nd(&mut buf, n, self.nu, true);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Inverse of [`TorusField::to_grid`], truncated to `lmax`.
    pub fn from_grid(samples: &[f64], n: usize, nu: usize, lmax: usize) -> Self {
        assert_eq!(samples.len(), n.pow(nu as u32));
        assert!(n > 2 * lmax);
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        fft_nd(&mut buf, n, nu, false);
        let scale = 1.0 / buf.len() as f64;
        let mut out = Self::zeros(nu, lmax, 0, 1);
        for ell in multi_indices(nu, lmax) {
            out.set(0, &ell, 0, buf[grid_bin(&ell, n)] * scale);
        }
        out
    }
}

pub(crate) fn grid_bin(ell: &[i64], n: usize) -> usize {
    ell.iter().fold(0, |acc, &l| acc * n + bin(l, n))
}

/// `ω·∂_φ`: multiplies the `(ℓ, j)` coefficient by `i(ω·ℓ)`.
pub fn torus_directional_derivative(w: &TorusField, omega: &[f64]) -> TorusField {
    assert_eq!(omega.len(), w.nu(), "frequency dimension mismatch");
    w.map_modes(|_, ell, _, c| c * Complex64::new(0.0, dot_f(omega, ell)))
}
