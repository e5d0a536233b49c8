//! The gravity water-wave system in Zakharov-Craig-Sulem form
//!
//! ```text
//! ∂_t η = G(η)ψ
//! ∂_t ψ = -gη - ½ψ_x² + ½(η_xψ_x + G(η)ψ)² / (1 + η_x²)
//! ```
//!
//! on the invariant subspace of zero-mean `(η, ψ)`. The x-averages evolve
//! separately (`∂_t η̂₀ = 0`, `∂_t ψ̂₀ = -g η̂₀`) and are carried as scalar side
//! channels by [`evolve`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::dno::{dno_apply, DnoConfig};
use crate::error::{Error, Result};
use crate::spectral::{grid_size, SpectralField1D};

/// Tolerance under which a mean is treated as zero and dropped.
const MEAN_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveConfig {
    pub dno: DnoConfig,
    /// Gravity; `1` everywhere in the acceptance runs.
    pub gravity: f64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            dno: DnoConfig::default(),
            gravity: 1.0,
        }
    }
}

impl From<DnoConfig> for WaveConfig {
    fn from(dno: DnoConfig) -> Self {
        Self { dno, gravity: 1.0 }
    }
}

impl WaveConfig {
    pub fn jmax(&self) -> usize {
        self.dno.jmax
    }
}

/// Zero-mean surface elevation and trace of the velocity potential.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceState {
    pub eta: SpectralField1D,
    pub psi: SpectralField1D,
}

impl SurfaceState {
    /// Validates reality and zero mean; means below `1e-14` are set to zero.
    pub fn new(eta: SpectralField1D, psi: SpectralField1D) -> Result<Self> {
        if !eta.is_real() || !psi.is_real() {
            return Err(Error::InvalidInput("surface fields must be real-valued".into()));
        }
        if eta.mean().abs() > MEAN_TOL {
            return Err(Error::NonZeroMean("eta"));
        }
        if psi.mean().abs() > MEAN_TOL {
            return Err(Error::NonZeroMean("psi"));
        }
        Ok(Self {
            eta: eta.zero_mean(),
            psi: psi.zero_mean(),
        })
    }

    pub fn zeros(jmax: usize) -> Self {
        Self {
            eta: SpectralField1D::zeros(jmax),
            psi: SpectralField1D::zeros(jmax),
        }
    }

    pub fn jmax(&self) -> usize {
        self.eta.jmax().max(self.psi.jmax())
    }

    pub fn resized(&self, jmax: usize) -> Self {
        Self {
            eta: self.eta.resized(jmax),
            psi: self.psi.resized(jmax),
        }
    }

    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            eta: self.eta.axpy(s, &other.eta),
            psi: self.psi.axpy(s, &other.psi),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            eta: self.eta.scale(s),
            psi: self.psi.scale(s),
        }
    }

    /// Largest coefficient modulus over both components.
    pub fn max_abs(&self) -> f64 {
        self.eta.max_abs().max(self.psi.max_abs())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.eta.max_abs_diff(&other.eta).max(self.psi.max_abs_diff(&other.psi))
    }

    /// x-translation `x ↦ x + c`.
    pub fn shift(&self, c: f64) -> Self {
        Self {
            eta: self.eta.shift(c),
            psi: self.psi.shift(c),
        }
    }

    /// The reversibility involution `(η, ψ)(x) ↦ (η(-x), -ψ(-x))`.
    pub fn involution(&self) -> Self {
        Self {
            eta: self.eta.reflect(),
            psi: self.psi.reflect().scale(-1.0),
        }
    }
}

/// Vector field with the x-averages of both right-hand sides.
#[derive(Clone, Debug)]
pub struct Tangent {
    /// Zero-mean part of `(∂_t η, ∂_t ψ)`.
    pub field: SurfaceState,
    /// x-average of `G(η)ψ`; zero up to round-off.
    pub eta_mean_rate: f64,
    /// x-average of the ψ equation for the zero-mean state (the `-gη̂₀` term is
    /// added by the caller); zero up to round-off.
    pub psi_mean_rate: f64,
}

/// `X_H(η, ψ)` with the ψ-mean removed and reported separately.
pub fn vector_field(s: &SurfaceState, cfg: &WaveConfig) -> Result<Tangent> {
    let jm = cfg.jmax();
    let eta = s.eta.resized(jm);
    let psi = s.psi.resized(jm);
    let g_psi = dno_apply(&eta, &psi, &cfg.dno)?;

    let n = grid_size(4 * jm + 4);
    let e = eta.to_grid(n);
    let ex = eta.dx().to_grid(n);
    let px = psi.dx().to_grid(n);
    let gp = g_psi.to_grid(n);
    let rhs: Vec<f64> = (0..n)
        .map(|k| {
            let num = ex[k] * px[k] + gp[k];
            -cfg.gravity * e[k] - 0.5 * px[k] * px[k] + 0.5 * num * num / (1.0 + ex[k] * ex[k])
        })
        .collect();
    let dpsi = SpectralField1D::from_grid(&rhs, jm);

    Ok(Tangent {
        eta_mean_rate: g_psi.mean(),
        psi_mean_rate: dpsi.mean(),
        field: SurfaceState {
            eta: g_psi.zero_mean(),
            psi: dpsi.zero_mean(),
        },
    })
}

/// `H = ½∫ψ G(η)ψ dx + ½ g ∫η² dx`.
pub fn hamiltonian(s: &SurfaceState, cfg: &WaveConfig) -> Result<f64> {
    let g_psi = dno_apply(&s.eta, &s.psi, &cfg.dno)?;
    Ok(0.5 * s.psi.integral_product(&g_psi) + 0.5 * cfg.gravity * s.eta.integral_product(&s.eta))
}

/// `M = ∫η_x ψ dx`.
pub fn momentum(s: &SurfaceState) -> f64 {
    s.eta.dx().integral_product(&s.psi)
}

/// Complex coordinates `u_j = (|j|^{-1/4} η_j + i |j|^{1/4} ψ_j) / √2`, `j ≠ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexState {
    jmax: usize,
    /// Ordered `j = -jmax..=jmax`; the `j = 0` slot is always zero.
    coeffs: Vec<Complex64>,
}

impl ComplexState {
    pub fn jmax(&self) -> usize {
        self.jmax
    }

    pub fn u(&self, j: i64) -> Complex64 {
        if j == 0 || j.unsigned_abs() as usize > self.jmax {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(j + self.jmax as i64) as usize]
        }
    }

    pub fn from_coeffs(jmax: usize, f: impl Fn(i64) -> Complex64) -> Self {
        let coeffs = (-(jmax as i64)..=jmax as i64)
            .map(|j| if j == 0 { Complex64::new(0.0, 0.0) } else { f(j) })
            .collect();
        Self { jmax, coeffs }
    }

    /// `Σ √|j| |u_j|²`.
    pub fn quadratic_energy(&self) -> f64 {
        (1..=self.jmax as i64)
            .flat_map(|j| [j, -j])
            .map(|j| (j.unsigned_abs() as f64).sqrt() * self.u(j).norm_sqr())
            .sum()
    }
}

pub fn to_complex(s: &SurfaceState) -> ComplexState {
    let jm = s.jmax();
    ComplexState::from_coeffs(jm, |j| {
        let a = (j.unsigned_abs() as f64).powf(0.25);
        FRAC_1_SQRT_2 * (s.eta.coeff(j) / a + Complex64::new(0.0, a) * s.psi.coeff(j))
    })
}

pub fn from_complex(u: &ComplexState) -> SurfaceState {
    let jm = u.jmax;
    let mut eta = SpectralField1D::zeros(jm);
    let mut psi = SpectralField1D::zeros(jm);
    for j in 1..=jm as i64 {
        let a = (j as f64).powf(0.25);
        let (up, um) = (u.u(j), u.u(-j).conj());
        eta.set_coeff(j, FRAC_1_SQRT_2 * a * (up + um));
        psi.set_coeff(j, FRAC_1_SQRT_2 / a * (up - um) / Complex64::new(0.0, 1.0));
    }
    SurfaceState { eta, psi }
}

/// Defects of the reversibility and even-to-even identities at one state.
#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    /// `max |X_H(S s) + S X_H(s)|` over coefficients (ψ-mean included).
    pub reversibility: f64,
    /// Largest odd-part coefficient of `X_H(s)` when `s` is x-even.
    pub even_to_even: Option<f64>,
}

pub fn symmetry_check(s: &SurfaceState, cfg: &WaveConfig) -> Result<SymmetryReport> {
    let xs = vector_field(s, cfg)?;
    let sx = xs.field.involution();
    let xss = vector_field(&s.involution(), cfg)?;
    let reversibility = xss
        .field
        .axpy(1.0, &sx)
        .max_abs()
        .max((xss.psi_mean_rate - xs.psi_mean_rate).abs())
        .max((xss.eta_mean_rate + xs.eta_mean_rate).abs());
    let is_even = s.eta.odd_part_max() <= 1e-14 && s.psi.odd_part_max() <= 1e-14;
    let even_to_even = is_even.then(|| {
        xs.field
            .eta
            .odd_part_max()
            .max(xs.field.psi.odd_part_max())
    });
    Ok(SymmetryReport {
        reversibility,
        even_to_even,
    })
}

/// Fixed-step settings for [`evolve`].
#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Store a snapshot every this many steps.
    pub save_every: usize,
    /// Step-doubling error check every this many steps (`0` disables it).
    pub check_every: usize,
    /// Largest accepted step-doubling difference.
    pub tolerance: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 10.0,
            save_every: 100,
            check_every: 500,
            tolerance: 1e-9,
        }
    }
}

/// Stored snapshot of the full state including the mean modes.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub state: SurfaceState,
    pub mean_eta: f64,
    pub mean_psi: f64,
    pub hamiltonian: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    /// `max_t |H(t) - H(0)| / |H(0)|` (absolute when `H(0) = 0`).
    pub hamiltonian_drift: f64,
    /// `max_t |M(t) - M(0)| / |M(0)|` (absolute when `M(0) = 0`).
    pub momentum_drift: f64,
    /// `max_t |η̂₀(t) - η̂₀(0)|`.
    pub mean_eta_drift: f64,
    /// `max_t |ψ̂₀(t) + g η̂₀ t - ψ̂₀(0)|`.
    pub mean_psi_drift: f64,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub report: ConservationReport,
}

struct FullState {
    s: SurfaceState,
    mean_eta: f64,
    mean_psi: f64,
}

fn full_rate(x: &FullState, cfg: &WaveConfig) -> Result<FullState> {
    let t = vector_field(&x.s, cfg)?;
    Ok(FullState {
        s: t.field,
        mean_eta: t.eta_mean_rate,
        mean_psi: t.psi_mean_rate - cfg.gravity * x.mean_eta,
    })
}

fn full_axpy(x: &FullState, h: f64, k: &FullState) -> FullState {
    FullState {
        s: x.s.axpy(h, &k.s),
        mean_eta: x.mean_eta + h * k.mean_eta,
        mean_psi: x.mean_psi + h * k.mean_psi,
    }
}

fn rk4_step(x: &FullState, h: f64, cfg: &WaveConfig) -> Result<FullState> {
    let k1 = full_rate(x, cfg)?;
    let k2 = full_rate(&full_axpy(x, h / 2.0, &k1), cfg)?;
    let k3 = full_rate(&full_axpy(x, h / 2.0, &k2), cfg)?;
    let k4 = full_rate(&full_axpy(x, h, &k3), cfg)?;
    let mut out = full_axpy(x, h / 6.0, &k1);
    out = full_axpy(&out, h / 3.0, &k2);
    out = full_axpy(&out, h / 3.0, &k3);
    Ok(full_axpy(&out, h / 6.0, &k4))
}

/// Classical fourth-order Runge-Kutta integration of the water-wave system
/// with the mean modes `(η̂₀, ψ̂₀)` as side channels.
pub fn evolve(
    s0: &SurfaceState,
    mean0: (f64, f64),
    opts: &EvolveOptions,
    cfg: &WaveConfig,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || opts.t_final < 0.0 {
        return Err(Error::InvalidInput("dt must be positive and t_final nonnegative".into()));
    }
    let steps = (opts.t_final / opts.dt).round() as usize;
    let save_every = opts.save_every.max(1);
    let mut x = FullState {
        s: s0.resized(cfg.jmax()),
        mean_eta: mean0.0,
        mean_psi: mean0.1,
    };
    let snap = |t: f64, x: &FullState| -> Result<Snapshot> {
        Ok(Snapshot {
            t,
            state: x.s.clone(),
            mean_eta: x.mean_eta,
            mean_psi: x.mean_psi,
            hamiltonian: hamiltonian(&x.s, cfg)?,
            momentum: momentum(&x.s),
        })
    };
    let first = snap(0.0, &x)?;
    let (h0, m0) = (first.hamiltonian, first.momentum);
    let rel = |v: f64, r: f64| if r.abs() > 0.0 { v / r.abs() } else { v };
    let mut report = ConservationReport {
        hamiltonian_drift: 0.0,
        momentum_drift: 0.0,
        mean_eta_drift: 0.0,
        mean_psi_drift: 0.0,
        steps,
    };
    let mut snapshots = vec![first];
    for n in 1..=steps {
        let t = n as f64 * opts.dt;
        let next = rk4_step(&x, opts.dt, cfg)?;
        if opts.check_every > 0 && n % opts.check_every == 0 {
            let half = rk4_step(&rk4_step(&x, opts.dt / 2.0, cfg)?, opts.dt / 2.0, cfg)?;
            let est = next.s.max_abs_diff(&half.s);
            if est > opts.tolerance {
                return Err(Error::StepRejected {
                    t,
                    estimate: est,
                    tolerance: opts.tolerance,
                });
            }
        }
        x = next;
        report.mean_eta_drift = report.mean_eta_drift.max((x.mean_eta - mean0.0).abs());
        report.mean_psi_drift = report
            .mean_psi_drift
            .max((x.mean_psi + cfg.gravity * mean0.0 * t - mean0.1).abs());
        if n % save_every == 0 || n == steps {
            let sn = snap(t, &x)?;
            report.hamiltonian_drift = report.hamiltonian_drift.max(rel((sn.hamiltonian - h0).abs(), h0));
            report.momentum_drift = report.momentum_drift.max(rel((sn.momentum - m0).abs(), m0));
            snapshots.push(sn);
        }
    }
    Ok(Trajectory { snapshots, report })
}

impl Trajectory {
    /// CSV with columns `t,H,M,mean_eta,mean_psi,amp_1..amp_modes` where
    /// `amp_j = |η_j|`.
    pub fn write_csv<W: Write>(&self, mut w: W, modes: usize) -> std::io::Result<()> {
        write!(w, "t,H,M,mean_eta,mean_psi")?;
        for j in 1..=modes {
            write!(w, ",amp_{j}")?;
        }
        writeln!(w)?;
        for s in &self.snapshots {
            write!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.hamiltonian, s.momentum, s.mean_eta, s.mean_psi
            )?;
            for j in 1..=modes as i64 {
                write!(w, ",{:.16e}", s.state.eta.coeff(j).norm())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Dominant angular frequency of a sampled complex signal by a zero-padded DFT
/// peak with parabolic refinement, searching `[0, w_max]` in both rotation
/// directions. Returns the signed frequency `w` of `e^{-iwt}`.
pub fn dominant_frequency(samples: &[Complex64], dt: f64, w_max: f64) -> f64 {
    let n = samples.len() as f64;
    let t_total = n * dt;
    let dw = PI / t_total / 8.0;
    let power = |w: f64| -> f64 {
        samples
            .iter()
            .enumerate()
            .map(|(k, &z)| z * Complex64::from_polar(1.0, w * k as f64 * dt))
            .sum::<Complex64>()
            .norm()
    };
    let mut best = (0.0, f64::MIN);
    let mut w = -w_max;
    while w <= w_max {
        let p = power(w);
        if p > best.1 {
            best = (w, p);
        }
        w += dw;
    }
    // golden-section refine around the grid peak
    let (mut a, mut b) = (best.0 - dw, best.0 + dw);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if power(c) > power(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}
