//! Configuration-driven experiments behind the `qpwaves` binary.
//!
//! A config file is TOML with optional top-level `workers` and `seed` and one
//! optional table per experiment (`[twist]`, `[solve-qp]`, ...). Missing
//! tables use defaults; unknown keys are rejected. Each run writes
//! `summary.json`, experiment CSV files and `manifest.json` into the output
//! directory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dno::{dno_apply, DnoConfig};
use crate::error::{Error, Result};
use crate::linop::{assemble_linearized, diagonalize_and_fit, DiagonalModel};
use crate::melnikov::{
    diophantine_check, m1_model, measure_estimate, second_melnikov, zero_melnikov, MelnikovParams,
};
use crate::normalform::{frequency_amplitude, twist_matrix};
use crate::qpsolver::{continuation, QpConfig, SolveParams};
use crate::resonance::{benjamin_feir, enumerate_resonances, is_trivial, TangentialSet};
use crate::spectral::SpectralField1D;
use crate::wavesys::{evolve, EvolveOptions, SurfaceState, WaveConfig};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "QPWAVES_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Evolve,
    DnoTest,
    Resonances,
    BfFamily,
    Twist,
    Melnikov,
    Measure,
    SolveQp,
    LinopSpectrum,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Evolve,
        Experiment::DnoTest,
        Experiment::Resonances,
        Experiment::BfFamily,
        Experiment::Twist,
        Experiment::Melnikov,
        Experiment::Measure,
        Experiment::SolveQp,
        Experiment::LinopSpectrum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Evolve => "evolve",
            Experiment::DnoTest => "dno-test",
            Experiment::Resonances => "resonances",
            Experiment::BfFamily => "bf-family",
            Experiment::Twist => "twist",
            Experiment::Melnikov => "melnikov",
            Experiment::Measure => "measure",
            Experiment::SolveQp => "solve-qp",
            Experiment::LinopSpectrum => "linop-spectrum",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Worker threads; outputs do not depend on it.
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default, rename = "dno-test")]
    pub dno_test: DnoTestConfig,
    #[serde(default)]
    pub resonances: ResonancesConfig,
    #[serde(default, rename = "bf-family")]
    pub bf_family: BfFamilyConfig,
    #[serde(default)]
    pub twist: TwistConfig,
    #[serde(default)]
    pub melnikov: MelnikovConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default, rename = "solve-qp")]
    pub solve_qp: SolveQpConfig,
    #[serde(default, rename = "linop-spectrum")]
    pub linop_spectrum: LinopSpectrumConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    /// Initial state `ε(cos kx, sin kx)`.
    pub eps: f64,
    pub mode: i64,
    pub mean_eta: f64,
    pub mean_psi: f64,
    pub dt: f64,
    pub t_final: f64,
    pub save_every: usize,
    pub check_every: usize,
    pub tolerance: f64,
    pub jmax: usize,
    pub order: usize,
    pub gravity: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            mode: 1,
            mean_eta: 0.0,
            mean_psi: 0.0,
            dt: 1e-3,
            t_final: 10.0,
            save_every: 100,
            check_every: 500,
            tolerance: 1e-9,
            jmax: 32,
            order: 8,
            gravity: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnoTestConfig {
    /// Potentials `e^{ky} cos kx`.
    pub ks: Vec<i64>,
    /// Surfaces `a cos(mx)`.
    pub amplitudes: Vec<f64>,
    pub surface_mode: i64,
    pub order: usize,
    pub jmax: usize,
}

impl Default for DnoTestConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 2],
            amplitudes: vec![0.005, 0.01, 0.02],
            surface_mode: 2,
            order: 8,
            jmax: 256,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonancesConfig {
    pub n: usize,
    pub bound: i64,
}

impl Default for ResonancesConfig {
    fn default() -> Self {
        Self { n: 4, bound: 200 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BfFamilyConfig {
    pub lambda_max: i64,
    pub b_max: i64,
}

impl Default for BfFamilyConfig {
    fn default() -> Self {
        Self {
            lambda_max: 3,
            b_max: 5,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwistConfig {
    pub sites: Vec<i64>,
}

impl Default for TwistConfig {
    fn default() -> Self {
        Self { sites: vec![1, 2] }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelnikovConfig {
    pub sites: Vec<i64>,
    pub eps: f64,
    /// Base actions; the frequency is `ω̄ + ε²𝔸ζ`.
    pub zeta: Vec<f64>,
    /// Defaults: `γ = ε^{5/2}`, `τ = ν + 1`, `η_M = γ³`.
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub eta_m: Option<f64>,
    pub lmax: usize,
    pub jmax: i64,
    pub sample_stride: usize,
}

impl Default for MelnikovConfig {
    fn default() -> Self {
        Self {
            sites: vec![1, 2],
            eps: 0.05,
            zeta: vec![1.0, 1.0],
            gamma: None,
            tau: None,
            eta_m: None,
            lmax: 20,
            jmax: 10_000,
            sample_stride: 10,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureConfig {
    pub sites: Vec<i64>,
    pub eps: Vec<f64>,
    pub samples: usize,
    pub tau: Option<f64>,
    pub lmax: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            sites: vec![1, 2],
            eps: vec![0.1, 0.05, 0.025],
            samples: 10_000,
            tau: None,
            lmax: 40,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveQpConfig {
    pub sites: Vec<i64>,
    /// Base actions; the solve at `ε` prescribes `ε²ζ`.
    pub zeta: Vec<f64>,
    pub eps: Vec<f64>,
    pub schedule: Vec<usize>,
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub basin: f64,
    pub max_halvings: usize,
    pub order: usize,
    pub gravity: f64,
    pub jmax_x: Option<usize>,
    pub phi_grid: Option<usize>,
    pub sobolev_s: f64,
    pub snapshot_times: Vec<f64>,
    pub nx: usize,
}

impl Default for SolveQpConfig {
    fn default() -> Self {
        Self {
            sites: vec![1],
            zeta: vec![1.0],
            eps: vec![0.01, 0.02],
            schedule: vec![8],
            damping: 1.0,
            max_iter: 30,
            tol: 1e-10,
            basin: 0.1,
            max_halvings: 4,
            order: 8,
            gravity: 1.0,
            jmax_x: None,
            phi_grid: None,
            sobolev_s: 4.0,
            snapshot_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            nx: 64,
        }
    }
}

impl SolveQpConfig {
    fn qp(&self) -> QpConfig {
        QpConfig {
            order: self.order,
            gravity: self.gravity,
            jmax_x: self.jmax_x,
            phi_grid: self.phi_grid,
            sobolev_s: self.sobolev_s,
        }
    }

    fn params(&self, lmax: usize) -> SolveParams {
        SolveParams {
            schedule: if self.schedule.is_empty() {
                vec![lmax]
            } else {
                self.schedule.clone()
            },
            damping: self.damping,
            max_iter: self.max_iter,
            tol: self.tol,
            basin: self.basin,
            ..SolveParams::new(self.zeta.clone(), lmax)
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinopSpectrumConfig {
    #[serde(flatten)]
    pub solve: SolveQpConfig,
    /// Θ-truncation of the operator basis.
    pub lmax: usize,
    pub jmax: usize,
    pub normal_only: bool,
    pub window: Option<[i64; 2]>,
}

impl Default for LinopSpectrumConfig {
    fn default() -> Self {
        Self {
            solve: SolveQpConfig {
                eps: vec![0.02],
                schedule: vec![10],
                ..SolveQpConfig::default()
            },
            lmax: 6,
            jmax: 48,
            normal_only: true,
            window: None,
        }
    }
}

/// Summary plus CSV files `(name, contents)`.
pub struct Artifacts {
    pub summary: Value,
    pub csv: Vec<(String, String)>,
}

fn sites(v: &[i64]) -> Result<TangentialSet> {
    TangentialSet::new(v.to_vec())
}

fn csv_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn run_evolve(c: &EvolveConfig) -> Result<Artifacts> {
    let jm = c.jmax;
    if c.mode == 0 || c.mode.unsigned_abs() as usize > jm {
        return Err(Error::InvalidInput("initial mode must satisfy 0 < |k| ≤ jmax".into()));
    }
    let s0 = SurfaceState::new(
        SpectralField1D::cos(jm, c.mode, c.eps),
        SpectralField1D::sin(jm, c.mode, c.eps),
    )?;
    let cfg = WaveConfig {
        dno: DnoConfig::new(c.order, jm),
        gravity: c.gravity,
    };
    let opts = EvolveOptions {
        dt: c.dt,
        t_final: c.t_final,
        save_every: c.save_every,
        check_every: c.check_every,
        tolerance: c.tolerance,
    };
    let traj = evolve(&s0, (c.mean_eta, c.mean_psi), &opts, &cfg)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf, 4)?;
    let last = traj.snapshots.last().expect("initial snapshot");
    Ok(Artifacts {
        summary: json!({
            "report": traj.report,
            "t_final": last.t,
            "hamiltonian": [traj.snapshots[0].hamiltonian, last.hamiltonian],
            "momentum": [traj.snapshots[0].momentum, last.momentum],
        }),
        csv: vec![("trajectory.csv".into(), String::from_utf8(buf).expect("ascii"))],
    })
}

/// `G(η)ψ` for `ψ = e^{kη} cos kx`, the trace of the harmonic `e^{ky} cos kx`:
/// `k e^{kη}(cos kx + η_x sin kx)`.
fn harmonic_pair(k: i64, a: f64, m: i64, jmax: usize) -> (SpectralField1D, SpectralField1D, SpectralField1D) {
    let kf = k as f64;
    let mf = m as f64;
    let eta = SpectralField1D::cos(jmax, m, a);
    let psi = SpectralField1D::from_fn(jmax, |x| (kf * a * (mf * x).cos()).exp() * (kf * x).cos());
    let g = SpectralField1D::from_fn(jmax, |x| {
        let e = a * (mf * x).cos();
        let ex = -a * mf * (mf * x).sin();
        kf * (kf * e).exp() * ((kf * x).cos() + ex * (kf * x).sin())
    });
    (eta, psi, g)
}

fn run_dno_test(c: &DnoTestConfig) -> Result<Artifacts> {
    let cfg = DnoConfig::new(c.order, c.jmax);
    let mut rows = Vec::new();
    let mut csv = String::from("k,amplitude,relative_error\n");
    for &k in &c.ks {
        for &a in &c.amplitudes {
            let (eta, psi, exact) = harmonic_pair(k, a, c.surface_mode, c.jmax);
            let g = dno_apply(&eta, &psi, &cfg)?;
            let err = g.sub(&exact).norm_l2() / exact.norm_l2();
            writeln!(csv, "{k},{},{}", csv_f(a), csv_f(err)).expect("string write");
            rows.push(json!({"k": k, "amplitude": a, "relative_error": err}));
        }
    }
    Ok(Artifacts {
        summary: json!({"order": c.order, "jmax": c.jmax, "surface_mode": c.surface_mode, "cases": rows}),
        csv: vec![("dno_test.csv".into(), csv)],
    })
}

/// `(λ, b)` with `λ ≠ 0`, `b ≥ 1`, whose family member is `t` up to
/// canonical form.
pub fn benjamin_feir_preimage(t: &crate::resonance::ResonanceTuple) -> Option<(i64, i64)> {
    if t.len() != 4 {
        return None;
    }
    let c = t.canonical();
    let top = c.sites.iter().map(|s| s.abs()).max()?;
    let mut b = 1;
    while (b * b + b + 1) * (b * b + b + 1) <= top {
        for lambda in [-1, 1] {
            let l = lambda * top / ((b * b + b + 1) * (b * b + b + 1));
            if l == 0 {
                continue;
            }
            if let Ok(bf) = benjamin_feir(l, b) {
                if bf.canonical() == c {
                    return Some((l, b));
                }
            }
        }
        b += 1;
    }
    None
}

fn run_resonances(c: &ResonancesConfig) -> Result<Artifacts> {
    let found = enumerate_resonances(c.n, c.bound)?;
    let mut csv = String::from("sites,signs,trivial,bf_lambda,bf_b\n");
    let tuples: Vec<Value> = found
        .iter()
        .map(|t| {
            let bf = benjamin_feir_preimage(t);
            let join = |v: Vec<String>| v.join(" ");
            writeln!(
                csv,
                "{},{},{},{},{}",
                join(t.sites.iter().map(|s| s.to_string()).collect()),
                join(t.signs.iter().map(|s| s.to_string()).collect()),
                is_trivial(t),
                bf.map(|x| x.0.to_string()).unwrap_or_default(),
                bf.map(|x| x.1.to_string()).unwrap_or_default()
            )
            .expect("string write");
            json!({
                "sites": t.sites,
                "signs": t.signs,
                "momentum_holds": t.momentum_holds(),
                "frequency_holds": t.frequency_holds(),
                "trivial": is_trivial(t),
                "benjamin_feir": bf,
            })
        })
        .collect();
    Ok(Artifacts {
        summary: json!({"n": c.n, "bound": c.bound, "count": tuples.len(), "tuples": tuples}),
        csv: vec![("resonances.csv".into(), csv)],
    })
}

fn run_bf_family(c: &BfFamilyConfig) -> Result<Artifacts> {
    if c.lambda_max < 1 || c.b_max < 1 {
        return Err(Error::InvalidInput("lambda_max and b_max must be positive".into()));
    }
    let mut out = Vec::new();
    let mut csv = String::from("lambda,b,s1,s2,s3,s4,momentum_holds,frequency_holds,trivial\n");
    for lambda in (-c.lambda_max..=c.lambda_max).filter(|&l| l != 0) {
        for b in 1..=c.b_max {
            let t = benjamin_feir(lambda, b)?;
            let s = &t.sites;
            writeln!(
                csv,
                "{lambda},{b},{},{},{},{},{},{},{}",
                s[0],
                s[1],
                s[2],
                s[3],
                t.momentum_holds(),
                t.frequency_holds(),
                is_trivial(&t)
            )
            .expect("string write");
            out.push(json!({
                "lambda": lambda,
                "b": b,
                "sites": t.sites,
                "signs": t.signs,
                "momentum_holds": t.momentum_holds(),
                "frequency_holds": t.frequency_holds(),
                "trivial": is_trivial(&t),
            }));
        }
    }
    Ok(Artifacts {
        summary: json!({"lambda_max": c.lambda_max, "b_max": c.b_max, "tuples": out}),
        csv: vec![("bf_family.csv".into(), csv)],
    })
}

fn run_twist(c: &TwistConfig) -> Result<Artifacts> {
    let s = sites(&c.sites)?;
    let a = twist_matrix(&s);
    Ok(Artifacts {
        summary: json!({
            "sites": c.sites,
            "twist": a.entries,
            "twist_times_2pi": a.entries.iter().map(|r| r.iter().map(|x| x * 2.0 * PI).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "determinant": a.determinant(),
            "omega_bar": s.linear_frequencies(),
        }),
        csv: Vec::new(),
    })
}

fn melnikov_params(eps: f64, nu: usize, gamma: Option<f64>, tau: Option<f64>, eta_m: Option<f64>, lmax: usize) -> MelnikovParams {
    let mut p = MelnikovParams::defaults(eps, nu);
    if let Some(g) = gamma {
        p.gamma = g;
        p.eta_m = g.powi(3);
    }
    if let Some(t) = tau {
        p.tau = t;
    }
    if let Some(e) = eta_m {
        p.eta_m = e;
    }
    p.lmax = lmax;
    p
}

fn run_melnikov(c: &MelnikovConfig) -> Result<Artifacts> {
    let s = sites(&c.sites)?;
    let nu = s.nu();
    let mut p = melnikov_params(c.eps, nu, c.gamma, c.tau, c.eta_m, c.lmax);
    p.jmax = c.jmax;
    p.validate(nu)?;
    let zeta: Vec<f64> = c.zeta.iter().map(|z| c.eps * c.eps * z).collect();
    let omega = frequency_amplitude(&s, &zeta)?;
    let m1 = m1_model(&s, &zeta);
    let d = DiagonalModel::with_coefficients(m1, 0.0, 0.0);
    let dio = diophantine_check(&omega, p.gamma, p.tau, p.lmax);
    let zero = zero_melnikov(&omega, m1, s.velocity(), p.gamma, p.tau, p.lmax);
    let second = second_melnikov(&omega, &d, s.velocity(), &p, c.sample_stride.max(1))?;
    let mut csv = String::new();
    for i in 0..nu {
        write!(csv, "l{},", i + 1).expect("string write");
    }
    csv.push_str("v_dot_l,radius\n");
    for r in &second.radii {
        for l in &r.ell {
            write!(csv, "{l},").expect("string write");
        }
        let rad = r.radius.map(csv_f).unwrap_or_else(|| "inf".into());
        writeln!(csv, "{},{rad}", r.v_dot_ell).expect("string write");
    }
    Ok(Artifacts {
        summary: json!({
            "sites": c.sites,
            "eps": c.eps,
            "zeta": zeta,
            "omega": omega,
            "m1": m1,
            "params": p,
            "diophantine": dio,
            "zero_order": zero,
            "second_order": second,
        }),
        csv: vec![("radii.csv".into(), csv)],
    })
}

fn run_measure(c: &MeasureConfig, seed: u64) -> Result<Artifacts> {
    let s = sites(&c.sites)?;
    let mut rows = Vec::new();
    let mut csv = String::from("eps,fraction\n");
    for &eps in &c.eps {
        let p = melnikov_params(eps, s.nu(), None, c.tau, None, c.lmax);
        let m = measure_estimate(&s, eps, &p, c.samples, seed)?;
        writeln!(csv, "{},{}", csv_f(eps), csv_f(m.fraction)).expect("string write");
        rows.push(m);
    }
    Ok(Artifacts {
        summary: json!({"sites": c.sites, "samples": c.samples, "seed": seed, "lmax": c.lmax, "estimates": rows}),
        csv: vec![("measure.csv".into(), csv)],
    })
}

fn run_solve_qp(c: &SolveQpConfig) -> Result<Artifacts> {
    let s = sites(&c.sites)?;
    if c.eps.is_empty() {
        return Err(Error::InvalidInput("need at least one amplitude".into()));
    }
    let lmax = c.schedule.last().copied().unwrap_or(8);
    let cfg = c.qp();
    let steps = continuation(&s, &c.zeta, &c.eps, &c.params(lmax), &cfg, c.max_halvings)?;
    let wbar = s.linear_frequencies();
    let solves: Vec<Value> = steps
        .iter()
        .map(|st| {
            let zeta: Vec<f64> = c.zeta.iter().map(|z| st.eps * st.eps * z).collect();
            let e = &st.result.embedding;
            let predicted = frequency_amplitude(&s, &zeta).expect("validated sites");
            json!({
                "eps": st.eps,
                "zeta": zeta,
                "omega": e.omega,
                "omega_bar": wbar,
                "omega_twist": predicted,
                "actions": e.actions(),
                "action_error": e.actions().iter().zip(&zeta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
                "residual": st.result.residual,
                "residual_sobolev": st.result.residual_sobolev,
                "sobolev_s": c.sobolev_s,
                "iterations": st.result.iterations,
                "convergence_order": st.result.order,
                "inserted_amplitudes": st.inserted,
                "history": st.result.log,
            })
        })
        .collect();
    let last = &steps.last().expect("nonempty").result.embedding;
    let mut buf = Vec::new();
    last.write_snapshots_csv(&mut buf, &c.snapshot_times, c.nx)?;
    Ok(Artifacts {
        summary: json!({"sites": c.sites, "solves": solves}),
        csv: vec![("snapshots.csv".into(), String::from_utf8(buf).expect("ascii"))],
    })
}

fn run_linop_spectrum(c: &LinopSpectrumConfig) -> Result<Artifacts> {
    let s = sites(&c.solve.sites)?;
    let lmax = c.solve.schedule.last().copied().unwrap_or(10);
    let cfg = c.solve.qp();
    let steps = continuation(&s, &c.solve.zeta, &c.solve.eps, &c.solve.params(lmax), &cfg, c.solve.max_halvings)?;
    let last = steps.last().ok_or_else(|| Error::InvalidInput("need at least one amplitude".into()))?;
    let e = &last.result.embedding;
    let lop = assemble_linearized(e, &cfg, c.lmax, c.jmax, c.normal_only)?;
    let d = diagonalize_and_fit(&lop, c.window.map(|w| (w[0], w[1])))?;
    let mut ev = lop.eigenvalues()?;
    ev.sort_by(|a, b| {
        (a.momentum, a.value.im, a.value.re)
            .partial_cmp(&(b.momentum, b.value.im, b.value.re))
            .expect("finite eigenvalues")
    });
    let mut csv = String::from("momentum,re,im\n");
    for z in &ev {
        writeln!(csv, "{},{},{}", z.momentum, csv_f(z.value.re), csv_f(z.value.im)).expect("string write");
    }
    let max_re = ev.iter().map(|z| z.value.re.abs()).fold(0.0, f64::max);
    let zeta: Vec<f64> = c.solve.zeta.iter().map(|z| last.eps * last.eps * z).collect();
    let model = m1_model(&s, &zeta);
    Ok(Artifacts {
        summary: json!({
            "sites": c.solve.sites,
            "eps": last.eps,
            "omega": e.omega,
            "residual": last.result.residual,
            "lmax": c.lmax,
            "jmax": c.jmax,
            "normal_only": c.normal_only,
            "dimension": lop.dim(),
            "max_abs_real_part": max_re,
            "diagonal_model": d,
            "m1_model": model,
            "m1_ratio": if model != 0.0 { Value::from(d.m1 / model) } else { Value::Null },
        }),
        csv: vec![("eigenvalues.csv".into(), csv)],
    })
}

pub fn run_experiment(exp: Experiment, cfg: &ExperimentConfig) -> Result<Artifacts> {
    let go = || match exp {
        Experiment::Evolve => run_evolve(&cfg.evolve),
        Experiment::DnoTest => run_dno_test(&cfg.dno_test),
        Experiment::Resonances => run_resonances(&cfg.resonances),
        Experiment::BfFamily => run_bf_family(&cfg.bf_family),
        Experiment::Twist => run_twist(&cfg.twist),
        Experiment::Melnikov => run_melnikov(&cfg.melnikov),
        Experiment::Measure => run_measure(&cfg.measure, cfg.seed),
        Experiment::SolveQp => run_solve_qp(&cfg.solve_qp),
        Experiment::LinopSpectrum => run_linop_spectrum(&cfg.linop_spectrum),
    };
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(go),
        None => go(),
    }
}

/// Exit code for an error: configuration and input problems are 3, I/O is 1,
/// everything else is a numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Truncation(_) | Error::BoundExceeded(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

/// JSON text with every float at 17 significant digits.
pub fn to_json(v: &Value) -> String {
    let mut out = String::new();
    write_json(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_json(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            write!(out, "{x:.16e}").expect("string write");
        }
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_json(x, depth + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_json(x, depth + 1, out);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").expect("string write");
        s
    })
}

fn manifest(exp: Experiment, config_text: &str, code: i32, error: Option<String>, artifacts: &[String], seconds: f64) -> Value {
    json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": 1,
        "experiment": exp.name(),
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "exit_code": code,
        "error": error,
        "artifacts": artifacts,
        "elapsed_seconds": seconds,
    })
}

/// Output directory: `--out`, else `$QPWAVES_OUT_DIR/<experiment>`, else
/// `out/<experiment>`.
pub fn resolve_out_dir(exp: Experiment, out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(exp.name()),
    }
}

/// Runs one experiment from a config file and returns the process exit code.
/// Nothing is written on a configuration error; the manifest is written on
/// success and on numerical failure.
pub fn run(exp: Experiment, config_path: &Path, out: Option<&Path>) -> i32 {
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return EXIT_CONFIG;
        }
    };
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let start = Instant::now();
    let result = run_experiment(exp, &cfg);
    let seconds = start.elapsed().as_secs_f64();
    let code = match &result {
        Ok(_) => EXIT_OK,
        Err(e) => exit_code(e),
    };
    if code == EXIT_CONFIG {
        eprintln!("error: {}", result.err().expect("error result"));
        return code;
    }
    let dir = resolve_out_dir(exp, out);
    let write = || -> std::io::Result<()> {
        fs::create_dir_all(&dir)?;
        let mut names = Vec::new();
        let mut err = None;
        match &result {
            Ok(a) => {
                fs::write(dir.join("summary.json"), to_json(&a.summary))?;
                names.push("summary.json".to_string());
                for (name, body) in &a.csv {
                    fs::write(dir.join(name), body)?;
                    names.push(name.clone());
                }
            }
            Err(e) => err = Some(e.to_string()),
        }
        let m = manifest(exp, &text, code, err, &names, seconds);
        fs::write(dir.join("manifest.json"), to_json(&m))
    };
    if let Err(e) = write() {
        eprintln!("error: writing {}: {e}", dir.display());
        return EXIT_IO;
    }
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_floats_have_17_digits() {
        let v = json!({"a": 0.1, "b": [1, 2.5e-300], "c": "x", "d": null});
        let s = to_json(&v);
        assert!(s.contains("\"a\": 1.0000000000000001e-1"));
        assert!(s.contains("2.5000000000000000e-300"));
        assert!(s.contains("    1,"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(ExperimentConfig::parse("[twist]\nsites = [1, 2]\n").is_ok());
        assert!(matches!(ExperimentConfig::parse("[twist]\nsite = [1]\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("[nope]\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("seed = \"x\"\n"), Err(Error::Config(_))));
        let c = ExperimentConfig::parse("[linop-spectrum]\nsites = [2]\nlmax = 4\n").unwrap();
        assert_eq!(c.linop_spectrum.solve.sites, vec![2]);
        assert_eq!(c.linop_spectrum.lmax, 4);
        assert!(ExperimentConfig::parse("[linop-spectrum]\nbogus = 1\n").is_err());
    }

    #[test]
    fn harmonic_pair_matches_flat_limit() {
        let (eta, psi, g) = harmonic_pair(2, 0.0, 2, 16);
        assert_eq!(eta.max_abs(), 0.0);
        assert!(g.max_abs_diff(&psi.scale(2.0)) < 1e-14);
    }

    #[test]
    fn benjamin_feir_members_are_recognized() {
        for (l, b) in [(1, 1), (-2, 3), (3, 2)] {
            let t = benjamin_feir(l, b).unwrap();
            assert_eq!(benjamin_feir_preimage(&t), Some((l, b)));
        }
        let triv = crate::resonance::ResonanceTuple::new(vec![1, 2, 1, 2], vec![1, 1, -1, -1]).unwrap();
        assert_eq!(benjamin_feir_preimage(&triv), None);
    }
}
