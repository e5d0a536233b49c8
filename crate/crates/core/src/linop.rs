//! Linearized operator at a torus embedding, its diagonalization and the
//! fitted diagonal model `d_j`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dno::dno_apply;
use crate::error::{Error, Result};
use crate::linalg::{eigen, least_squares};
use crate::qpsolver::{JacobianHat, QpConfig, TorusEmbedding};
use crate::spectral::{grid_size, multi_indices, SpectralField1D, TorusField};
use crate::wavesys::{SurfaceState, WaveConfig};

/// `d_j = 𝔪₁ j + (1 + 𝔪₁/₂)√|j| + 𝔪₀ sign j + r_j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagonalModel {
    pub m1: f64,
    pub m_half: f64,
    pub m0: f64,
    /// Remainders `(j, r_j)` sorted by `j`; `r_j = 0` for unlisted sites.
    pub r: Vec<(i64, f64)>,
    /// RMS of the least-squares fit.
    pub fit_residual: f64,
    /// `sup_j |j|^{-1/2} |r_j|`.
    pub r_weighted_sup: f64,
    /// Fit window `[j_min, j_fit]` in `|j|`.
    pub window: (i64, i64),
}

impl DiagonalModel {
    /// `d_j = √|j|`.
    pub fn linear() -> Self {
        Self::with_coefficients(0.0, 0.0, 0.0)
    }

    pub fn with_coefficients(m1: f64, m_half: f64, m0: f64) -> Self {
        Self {
            m1,
            m_half,
            m0,
            r: Vec::new(),
            fit_residual: 0.0,
            r_weighted_sup: 0.0,
            window: (0, 0),
        }
    }

    pub fn remainder(&self, j: i64) -> f64 {
        self.r
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|i| self.r[i].1)
            .unwrap_or(0.0)
    }

    /// `sup_j |r_j|`.
    pub fn r_sup(&self) -> f64 {
        self.r.iter().fold(0.0, |m, &(_, r)| m.max(r.abs()))
    }

    pub fn d(&self, j: i64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let s = (j.unsigned_abs() as f64).sqrt();
        self.m1 * j as f64 + (1.0 + self.m_half) * s + self.m0 * j.signum() as f64 + self.remainder(j)
    }
}

/// Grid fields `(V, B, B·V_x)` of a state truncated at `cfg.jmax()`, projected
/// to `|j| ≤ jout`.
fn vb_fields(
    s: &SurfaceState,
    cfg: &WaveConfig,
    jout: usize,
) -> Result<(SpectralField1D, SpectralField1D, SpectralField1D)> {
    let jm = cfg.jmax();
    let eta = s.eta.resized(jm);
    let psi = s.psi.resized(jm);
    let g_psi = dno_apply(&eta, &psi, &cfg.dno)?;
    let n = grid_size(4 * jm + 2 * jout + 4);
    let ex = eta.dx().to_grid(n);
    let px = psi.dx().to_grid(n);
    let gp = g_psi.to_grid(n);
    let b: Vec<f64> = (0..n)
        .map(|k| (gp[k] + ex[k] * px[k]) / (1.0 + ex[k] * ex[k]))
        .collect();
    let v: Vec<f64> = (0..n).map(|k| px[k] - ex[k] * b[k]).collect();
    let vf = SpectralField1D::from_grid(&v, jout);
    let vx = SpectralField1D::from_grid(&v, (n - 1) / 2).dx().to_grid(n);
    let bvx: Vec<f64> = (0..n).map(|k| b[k] * vx[k]).collect();
    Ok((
        vf,
        SpectralField1D::from_grid(&b, jout),
        SpectralField1D::from_grid(&bvx, jout),
    ))
}

/// `B = (G(η)ψ + η_xψ_x)/(1 + η_x²)` and `V = ψ_x − η_x B`.
pub fn compute_vb(s: &SurfaceState, cfg: &WaveConfig) -> Result<(SpectralField1D, SpectralField1D)> {
    let (v, b, _) = vb_fields(s, cfg, cfg.jmax())?;
    Ok((v, b))
}

/// Matrix of the linearized vector field `dX_H(η, ψ)` on `e^{ijx}`,
/// `|j| ≤ J`, both components; row/column `c(2J+1) + j + J`.
///
/// ```text
/// dX_H(h, k) = ( G(k − Bh) − ∂_x(Vh),  −(g + BV_x)h − V∂_x k + BG(k − Bh) )
/// ```
#[derive(Clone, Debug)]
pub struct SliceJacobian {
    pub jmax: usize,
    pub matrix: DMatrix<Complex64>,
}

impl SliceJacobian {
    pub fn index(&self, comp: usize, j: i64) -> usize {
        comp * (2 * self.jmax + 1) + (j + self.jmax as i64) as usize
    }

    pub fn entry(&self, c1: usize, j1: i64, c2: usize, j2: i64) -> Complex64 {
        let jm = self.jmax as i64;
        if j1.abs() > jm || j2.abs() > jm {
            return Complex64::new(0.0, 0.0);
        }
        self.matrix[(self.index(c1, j1), self.index(c2, j2))]
    }

    /// Applies the matrix to a perturbation.
    pub fn apply(&self, h: &SurfaceState) -> SurfaceState {
        let jm = self.jmax as i64;
        let n = 2 * jm as usize + 1;
        let x = nalgebra::DVector::from_iterator(
            2 * n,
            (-jm..=jm).map(|j| h.eta.coeff(j)).chain((-jm..=jm).map(|j| h.psi.coeff(j))),
        );
        let y = &self.matrix * x;
        let part = |c: usize| {
            SpectralField1D::from_coeffs(y.rows(c * n, n).iter().copied().collect(), true)
                .expect("odd length")
        };
        SurfaceState {
            eta: part(0),
            psi: part(1),
        }
    }
}

/// Galerkin matrix of multiplication by `f` on `|j| ≤ jm`.
fn multiplication(f: &SpectralField1D, jm: usize) -> DMatrix<Complex64> {
    let n = 2 * jm + 1;
    DMatrix::from_fn(n, n, |r, c| f.coeff(r as i64 - c as i64))
}

pub fn slice_jacobian(s: &SurfaceState, cfg: &WaveConfig) -> Result<SliceJacobian> {
    let jm = cfg.jmax();
    let n = 2 * jm + 1;
    let eta = s.eta.resized(jm);
    let (v, b, bvx) = vb_fields(s, cfg, 2 * jm)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut g = DMatrix::<Complex64>::zeros(n, n);
    for c in 0..n {
        let mut coeffs = vec![zero; n];
        coeffs[c] = Complex64::new(1.0, 0.0);
        let e = SpectralField1D::from_coeffs(coeffs, false)?;
        let col = dno_apply(&eta, &e, &cfg.dno)?;
        for r in 0..n {
            g[(r, c)] = col.coeffs()[r];
        }
    }
    let d = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::new(0.0, r as f64 - jm as f64)
        } else {
            zero
        }
    });
    let mv = multiplication(&v, jm);
    let mb = multiplication(&b, jm);
    let mbvx = multiplication(&bvx, jm);
    let id = DMatrix::<Complex64>::identity(n, n);
    let gmb = &g * &mb;
    let a11 = -&gmb - &d * &mv;
    let a21 = -(id * Complex64::new(cfg.gravity, 0.0)) - mbvx - &mb * &gmb;
    let a22 = -&mv * &d + &mb * &g;
    let mut m = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&a11);
    m.view_mut((0, n), (n, n)).copy_from(&g);
    m.view_mut((n, 0), (n, n)).copy_from(&a21);
    m.view_mut((n, n), (n, n)).copy_from(&a22);
    Ok(SliceJacobian { jmax: jm, matrix: m })
}

/// Basis function `e^{iℓ·φ + ijx}` in component `comp` (0 for η, 1 for ψ).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinopMode {
    pub comp: usize,
    pub ell: Vec<i64>,
    pub j: i64,
}

/// Rows and columns of one momentum class `p = 𝚟·ℓ + j`.
#[derive(Clone, Debug)]
pub struct MomentumBlock {
    pub momentum: i64,
    pub modes: Vec<LinopMode>,
    pub matrix: DMatrix<Complex64>,
}

/// `ℒ_ω = ω·∂_φ − dX_H(U)` on `|ℓ|_∞ ≤ lmax`, `0 < |j| ≤ jmax`, stored by
/// momentum blocks. Entries between different momenta vanish identically.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub omega: Vec<f64>,
    pub velocity: Vec<i64>,
    pub lmax: usize,
    pub jmax: usize,
    pub normal_only: bool,
    pub blocks: Vec<MomentumBlock>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eigenvalue {
    pub momentum: i64,
    pub value: Complex64,
}

impl LinearizedOperator {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.modes.len()).sum()
    }

    pub fn block(&self, momentum: i64) -> Option<&MomentumBlock> {
        self.blocks
            .binary_search_by_key(&momentum, |b| b.momentum)
            .ok()
            .map(|i| &self.blocks[i])
    }

    /// Dense matrix in the order of the blocks' modes.
    pub fn dense(&self) -> (Vec<LinopMode>, DMatrix<Complex64>) {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut modes = Vec::with_capacity(n);
        let mut off = 0;
        for b in &self.blocks {
            let k = b.modes.len();
            m.view_mut((off, off), (k, k)).copy_from(&b.matrix);
            modes.extend(b.modes.iter().cloned());
            off += k;
        }
        (modes, m)
    }

    /// All eigenvalues, block by block.
    pub fn eigenvalues(&self) -> Result<Vec<Eigenvalue>> {
        let per_block = self
            .blocks
            .par_iter()
            .map(|b| {
                eigen(&b.matrix).map(|e| {
                    e.values
                        .into_iter()
                        .map(|value| Eigenvalue {
                            momentum: b.momentum,
                            value,
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_block.into_iter().flatten().collect())
    }
}

/// Assembles `ℒ_ω` at the embedding with `|ℓ|_∞ ≤ lmax` and `|j| ≤ jmax`.
/// With `normal_only` the x-modes `±j`, `j ∈ S`, are left out, which removes
/// the tangential directions and their non-semisimple eigenvalues `iω·ℓ`.
pub fn assemble_linearized(
    e: &TorusEmbedding,
    cfg: &QpConfig,
    lmax: usize,
    jmax: usize,
    normal_only: bool,
) -> Result<LinearizedOperator> {
    let smax = e.velocity().iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as usize;
    if jmax < 2 * smax {
        return Err(Error::Truncation(format!(
            "x-truncation {jmax} below twice the largest tangential site {smax}"
        )));
    }
    let hat = JacobianHat::with_jmax(e, cfg, jmax.max(e.x_bound()))?;
    let v = e.velocity();
    let mut classes: BTreeMap<i64, Vec<LinopMode>> = BTreeMap::new();
    for ell in multi_indices(e.nu(), lmax) {
        let vl: i64 = v.iter().zip(&ell).map(|(a, b)| a * b).sum();
        for j in -(jmax as i64)..=jmax as i64 {
            if j == 0 || (normal_only && v.iter().any(|s| s.abs() == j.abs())) {
                continue;
            }
            for comp in 0..2 {
                classes.entry(vl + j).or_default().push(LinopMode {
                    comp,
                    ell: ell.clone(),
                    j,
                });
            }
        }
    }
    let classes: Vec<(i64, Vec<LinopMode>)> = classes.into_iter().collect();
    let blocks = classes
        .into_par_iter()
        .map(|(momentum, modes)| {
            let n = modes.len();
            let matrix = DMatrix::from_fn(n, n, |r, c| {
                let (a, b) = (&modes[r], &modes[c]);
                let m: Vec<i64> = a.ell.iter().zip(&b.ell).map(|(x, y)| x - y).collect();
                let mut z = -hat.entry(&m, a.comp, a.j, b.comp, b.j);
                if r == c {
                    let wl: f64 = e.omega.iter().zip(&a.ell).map(|(w, &l)| w * l as f64).sum();
                    z += Complex64::new(0.0, wl);
                }
                z
            });
            MomentumBlock {
                momentum,
                modes,
                matrix,
            }
        })
        .collect();
    Ok(LinearizedOperator {
        omega: e.omega.clone(),
        velocity: v.to_vec(),
        lmax,
        jmax,
        normal_only,
        blocks,
    })
}

/// Complex coordinates `(u, w)` of the `(η, ψ)` coefficients at wavenumber `j`.
fn uw(eta: Complex64, psi: Complex64, j: i64) -> (Complex64, Complex64) {
    let a = (j.unsigned_abs() as f64).powf(0.25);
    let i = Complex64::new(0.0, 1.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (s * (eta / a + i * a * psi), s * (eta / a - i * a * psi))
}

/// Eigenvalue `i d_j` of the branch dominated by `u` at `(ℓ = 0, j)`, with
/// that branch's mass in `(u, w)` coordinates.
pub fn branch_eigenvalue(lop: &LinearizedOperator, j: i64) -> Result<(Complex64, f64)> {
    let block = lop
        .block(j)
        .ok_or_else(|| Error::Truncation(format!("no momentum block for j = {j}")))?;
    let eig = eigen(&block.matrix)?;
    let mut pos: BTreeMap<(Vec<i64>, i64), [usize; 2]> = BTreeMap::new();
    for (k, m) in block.modes.iter().enumerate() {
        pos.entry((m.ell.clone(), m.j)).or_default()[m.comp] = k;
    }
    let target = (vec![0i64; lop.velocity.len()], j);
    let mut best = (Complex64::new(0.0, 0.0), -1.0);
    for (k, lam) in eig.values.iter().enumerate() {
        let col = eig.vectors.column(k);
        let mut total = 0.0;
        let mut on_target = 0.0;
        for (key, idx) in &pos {
            let (u, w) = uw(col[idx[0]], col[idx[1]], key.1);
            total += u.norm_sqr() + w.norm_sqr();
            if *key == target {
                on_target = u.norm_sqr();
            }
        }
        let mass = on_target / total;
        if mass > best.1 {
            best = (*lam, mass);
        }
    }
    if best.1 <= 0.5 {
        return Err(Error::BranchAmbiguity { j, mass: best.1 });
    }
    Ok(best)
}

/// Branch eigenvalues on `j_min ≤ |j| ≤ j_fit` and a least-squares fit of
/// `d_j − √|j| = 𝔪₁ j + 𝔪₁/₂ √|j| + 𝔪₀ sign j`. The default window is
/// `[max|S| + 3, J/2]`.
pub fn diagonalize_and_fit(lop: &LinearizedOperator, window: Option<(i64, i64)>) -> Result<DiagonalModel> {
    let smax = lop.velocity.iter().map(|v| v.abs()).max().unwrap_or(0);
    let (jmin, jfit) = window.unwrap_or((smax + 3, lop.jmax as i64 / 2));
    if jmin < 1 || jfit < jmin + 2 || jfit > lop.jmax as i64 {
        return Err(Error::Truncation(format!(
            "fit window [{jmin}, {jfit}] does not fit in jmax = {}",
            lop.jmax
        )));
    }
    let js: Vec<i64> = (-jfit..=-jmin).chain(jmin..=jfit).collect();
    let d = js
        .par_iter()
        .map(|&j| branch_eigenvalue(lop, j).map(|(lam, _)| lam.im))
        .collect::<Result<Vec<f64>>>()?;
    let a = DMatrix::from_fn(js.len(), 3, |r, c| {
        let j = js[r];
        match c {
            0 => j as f64,
            1 => (j.abs() as f64).sqrt(),
            _ => j.signum() as f64,
        }
    });
    let y = DVector::from_iterator(js.len(), js.iter().zip(&d).map(|(&j, dj)| dj - (j.abs() as f64).sqrt()));
    let (coef, _) = least_squares(&a, &y)?;
    let rem = &y - &a * &coef;
    let r: Vec<(i64, f64)> = js.iter().copied().zip(rem.iter().copied()).collect();
    let fit_residual = (rem.norm_squared() / js.len() as f64).sqrt();
    let r_weighted_sup = r
        .iter()
        .fold(0.0f64, |m, &(j, x)| m.max(x.abs() / (j.abs() as f64).sqrt()));
    Ok(DiagonalModel {
        m1: coef[0],
        m_half: coef[1],
        m0: coef[2],
        r,
        fit_residual,
        r_weighted_sup,
        window: (jmin, jfit),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransportParams {
    pub gamma: f64,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub struct Straightening {
    pub m1: f64,
    /// Corrector `q` with zero average.
    pub q: TorusField,
    /// `sup_Θ |(ω − Ṽ𝚟)·∂_Θ(Θ + 𝚟q) − (ω − 𝔪₁𝚟)|`.
    pub defect: f64,
    pub iterations: usize,
}

/// Solves `(ω − Ṽ𝚟)·∂_Θ q = Ṽ − 𝔪₁` by the fixed-point iteration
/// `ω·∂_Θ q = Ṽ(1 + 𝚟·∂_Θ q) − 𝔪₁`, with `𝔪₁` the average of the right side.
pub fn straighten_transport(
    vt: &TorusField,
    omega: &[f64],
    v: &[i64],
    p: &TransportParams,
) -> Result<Straightening> {
    let nu = vt.nu();
    if omega.len() != nu || v.len() != nu || vt.jmax() != 0 || vt.ncomp() != 1 {
        return Err(Error::InvalidInput("transport data must be a scalar Θ-field of matching dimension".into()));
    }
    let lmax = vt.lmax();
    for ell in multi_indices(nu, lmax) {
        if ell.iter().all(|&l| l == 0) {
            continue;
        }
        let div: f64 = omega.iter().zip(&ell).map(|(w, &l)| w * l as f64).sum::<f64>().abs();
        let br = (1.0 + ell.iter().map(|&l| (l * l) as f64).sum::<f64>()).sqrt();
        let threshold = 0.5 * p.gamma * br.powf(-p.tau);
        if div < threshold {
            return Err(Error::SmallDivisor {
                ell,
                divisor: div,
                threshold,
            });
        }
    }
    let n = grid_size(3 * lmax + 2);
    let vg = vt.to_grid(0, n);
    let zero = vec![0i64; nu];
    // Ṽ(1 + 𝚟·∂q) on the grid.
    let rhs = |q: &TorusField| -> Vec<f64> {
        let vq = q.map_modes(|_, ell, _, c| {
            c * Complex64::new(0.0, v.iter().zip(ell).map(|(a, b)| (a * b) as f64).sum())
        });
        let g = vq.to_grid(0, n);
        vg.iter().zip(&g).map(|(a, b)| a * (1.0 + b)).collect()
    };
    let mut q = TorusField::zeros(nu, lmax, 0, 1);
    let mut m1 = vt.get(0, &zero, 0).re;
    let mut iterations = 0;
    let defect = |q: &TorusField, m1: f64| -> f64 {
        let wq = q.map_modes(|_, ell, _, c| {
            c * Complex64::new(0.0, omega.iter().zip(ell).map(|(w, &l)| w * l as f64).sum())
        });
        let wg = wq.to_grid(0, n);
        let r = rhs(q);
        let vmax = v.iter().map(|x| x.abs()).max().unwrap_or(0) as f64;
        wg.iter()
            .zip(&r)
            .map(|(a, b)| (a - b + m1).abs())
            .fold(0.0, f64::max)
            * vmax
    };
    let mut d = defect(&q, m1);
    while d > p.tol {
        if iterations >= p.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: d,
            });
        }
        let f = TorusField::from_grid(&rhs(&q), n, nu, lmax);
        m1 = f.get(0, &zero, 0).re;
        q = f.map_modes(|_, ell, _, c| {
            if ell.iter().all(|&l| l == 0) {
                return Complex64::new(0.0, 0.0);
            }
            let wl: f64 = omega.iter().zip(ell).map(|(w, &l)| w * l as f64).sum();
            c / Complex64::new(0.0, wl)
        });
        iterations += 1;
        d = defect(&q, m1);
    }
    Ok(Straightening {
        m1,
        q,
        defect: d,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dno::DnoConfig;
    use crate::wavesys::vector_field;

    fn state(jm: usize, a: f64) -> SurfaceState {
        SurfaceState::new(
            SpectralField1D::cos(jm, 1, a).add(&SpectralField1D::sin(jm, 2, 0.3 * a)),
            SpectralField1D::sin(jm, 1, a).add(&SpectralField1D::cos(jm, 3, 0.2 * a)),
        )
        .unwrap()
    }

    #[test]
    fn vb_flat_and_identity() {
        let cfg = WaveConfig::from(DnoConfig::new(8, 16));
        let (v, b) = compute_vb(&SurfaceState::zeros(16), &cfg).unwrap();
        assert!(v.max_abs() == 0.0 && b.max_abs() == 0.0);
        let psi = SpectralField1D::cos(16, 2, 0.4);
        let s = SurfaceState::new(SpectralField1D::zeros(16), psi.clone()).unwrap();
        let (v, b) = compute_vb(&s, &cfg).unwrap();
        assert!(v.max_abs_diff(&psi.dx()) < 1e-14);
        assert!(b.max_abs_diff(&psi.apply(&crate::spectral::Multiplier::abs_d()).unwrap()) < 1e-14);
        let s = state(16, 0.05);
        let (v, b) = compute_vb(&s, &cfg).unwrap();
        let lhs = v.add(&SpectralField1D::product(&[&s.eta.dx(), &b], 16));
        assert!(lhs.max_abs_diff(&s.psi.dx()) < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let jm = 24;
        let cfg = WaveConfig::from(DnoConfig::new(8, jm));
        let s = state(jm, 0.05);
        let jac = slice_jacobian(&s, &cfg).unwrap();
        let dir = SurfaceState::new(
            SpectralField1D::cos(jm, 2, 1.0).add(&SpectralField1D::sin(jm, 5, 0.5)),
            SpectralField1D::sin(jm, 3, 1.0).add(&SpectralField1D::cos(jm, 1, 0.7)),
        )
        .unwrap();
        let h = 1e-6;
        let fp = vector_field(&s.axpy(h, &dir), &cfg).unwrap().field;
        let fm = vector_field(&s.axpy(-h, &dir), &cfg).unwrap().field;
        let fd = fp.axpy(-1.0, &fm).scale(0.5 / h);
        let lin = jac.apply(&dir);
        let err = fd.eta.zero_mean().max_abs_diff(&lin.eta.zero_mean())
            .max(fd.psi.zero_mean().max_abs_diff(&lin.psi.zero_mean()));
        assert!(err < 1e-8, "jacobian mismatch {err:e}");
    }

    #[test]
    fn flat_jacobian_is_linear_system() {
        let cfg = WaveConfig::from(DnoConfig::new(8, 6));
        let jac = slice_jacobian(&SurfaceState::zeros(6), &cfg).unwrap();
        for j in -6i64..=6 {
            assert!((jac.entry(0, j, 1, j) - Complex64::new(j.abs() as f64, 0.0)).norm() < 1e-15);
            assert!((jac.entry(1, j, 0, j) + Complex64::new(1.0, 0.0)).norm() < 1e-15);
            assert!(jac.entry(0, j, 0, j).norm() < 1e-15);
        }
    }

    fn stokes(eps: f64) -> TorusEmbedding {
        use crate::qpsolver::{first_order_ansatz, newton_refine, SolveParams};
        let set = crate::resonance::TangentialSet::new(vec![1]).unwrap();
        let e = first_order_ansatz(&set, &[eps * eps], 10).unwrap();
        newton_refine(&e, &SolveParams::new(vec![eps * eps], 10), &QpConfig::default())
            .unwrap()
            .embedding
    }

    #[test]
    fn flat_operator_spectrum_and_sparsity() {
        let set = crate::resonance::TangentialSet::new(vec![1, 2]).unwrap();
        let e = TorusEmbedding::zero(set, 2);
        let lop = assemble_linearized(&e, &QpConfig::default(), 2, 8, false).unwrap();
        let mut expected = Vec::new();
        for b in &lop.blocks {
            for m in b.modes.iter().filter(|m| m.comp == 0) {
                let wl: f64 = e.omega.iter().zip(&m.ell).map(|(w, &l)| w * l as f64).sum();
                let s = (m.j.abs() as f64).sqrt();
                expected.push(wl + s);
                expected.push(wl - s);
            }
        }
        let mut got: Vec<f64> = lop.eigenvalues().unwrap().iter().map(|z| {
            assert!(z.value.re.abs() < 1e-10);
            z.value.im
        }).collect();
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        assert_eq!(got.len(), expected.len());
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(matches!(
            assemble_linearized(&e, &QpConfig::default(), 2, 3, false),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn momentum_blocks_at_nonzero_embedding() {
        use crate::qpsolver::first_order_ansatz;
        let set = crate::resonance::TangentialSet::new(vec![1, -2]).unwrap();
        let e = first_order_ansatz(&set, &[1e-3, 1e-3], 2).unwrap();
        let cfg = QpConfig::default();
        let lop = assemble_linearized(&e, &cfg, 1, 6, false).unwrap();
        let hat = JacobianHat::with_jmax(&e, &cfg, 6).unwrap();
        let (modes, m) = lop.dense();
        let mut off_block = 0.0f64;
        for (r, a) in modes.iter().enumerate() {
            for (c, b) in modes.iter().enumerate() {
                let pa: i64 = a.ell[0] - 2 * a.ell[1] + a.j;
                let pb: i64 = b.ell[0] - 2 * b.ell[1] + b.j;
                let d: Vec<i64> = a.ell.iter().zip(&b.ell).map(|(x, y)| x - y).collect();
                if pa != pb {
                    off_block = off_block.max(hat.entry(&d, a.comp, a.j, b.comp, b.j).norm());
                    assert_eq!(m[(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
        assert_eq!(off_block, 0.0);
        // Real operator: the spectrum is closed under λ ↦ conj(λ) up to
        // the reflection of momentum classes.
        let ev = lop.eigenvalues().unwrap();
        for z in &ev {
            let partner = ev
                .iter()
                .map(|w| (w.value - z.value.conj()).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(partner < 1e-8, "{z:?}");
        }
    }

    #[test]
    fn flat_fit_is_trivial() {
        let set = crate::resonance::TangentialSet::new(vec![1]).unwrap();
        let lop = assemble_linearized(&TorusEmbedding::zero(set, 2), &QpConfig::default(), 2, 32, false).unwrap();
        let d = diagonalize_and_fit(&lop, None).unwrap();
        assert!(d.m1.abs() < 1e-12 && d.m_half.abs() < 1e-12 && d.m0.abs() < 1e-12);
        assert!(d.fit_residual < 1e-12);
    }

    #[test]
    fn stokes_transport_coefficient() {
        let eps = 0.02;
        let e = stokes(eps);
        let lop = assemble_linearized(&e, &QpConfig::default(), 6, 48, true).unwrap();
        let d = diagonalize_and_fit(&lop, None).unwrap();
        let max_re = lop
            .eigenvalues()
            .unwrap()
            .iter()
            .map(|z| z.value.re.abs())
            .fold(0.0, f64::max);
        assert!(max_re < 1e-10, "{max_re:e}");
        // Stokes drift in the Θ-frame: 𝔪₁ = 2ζ + O(ζ²).
        assert!((d.m1 - 2.0 * eps * eps).abs() < 1e-2 * eps * eps, "{}", d.m1);
        assert!(d.fit_residual < 1e-10);
    }

    #[test]
    fn transport_constant_and_cosine() {
        let p = TransportParams {
            gamma: 1e-3,
            tau: 3.0,
            tol: 1e-13,
            max_iter: 50,
        };
        let omega = [1.0, 2f64.sqrt()];
        let v = [1, 2];
        let mut c = TorusField::zeros(2, 6, 0, 1);
        c.set(0, &[0, 0], 0, Complex64::new(0.3, 0.0));
        let st = straighten_transport(&c, &omega, &v, &p).unwrap();
        assert_eq!(st.m1, 0.3);
        assert_eq!(st.q.max_abs(), 0.0);
        assert_eq!(st.defect, 0.0);
        for delta in [1e-2, 5e-3] {
            let mut f = TorusField::zeros(2, 8, 0, 1);
            f.set_real(0, &[1, 0], 0, Complex64::new(delta / 2.0, 0.0));
            let st = straighten_transport(&f, &omega, &v, &p).unwrap();
            // Second order: 𝔪₁ = δ² 𝚟₁ / (2ω₁).
            let model = delta * delta * v[0] as f64 / (2.0 * omega[0]);
            assert!((st.m1 - model).abs() < 1e-2 * model, "{} vs {model}", st.m1);
            assert!(st.defect <= p.tol);
        }
    }
}
