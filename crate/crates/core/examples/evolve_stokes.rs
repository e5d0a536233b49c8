//! Time integration of a small cosine wave; prints conservation drift and
//! the dominant frequency of the first Fourier mode.

use qpwaves::dno::DnoConfig;
use qpwaves::spectral::SpectralField1D;
use qpwaves::wavesys::{dominant_frequency, evolve, to_complex, EvolveOptions, SurfaceState, WaveConfig};

fn main() -> qpwaves::Result<()> {
    let jmax = 16;
    let eps = 0.02;
    let s0 = SurfaceState::new(SpectralField1D::cos(jmax, 1, eps), SpectralField1D::sin(jmax, 1, eps))?;
    let cfg = WaveConfig {
        dno: DnoConfig::new(6, jmax),
        gravity: 1.0,
    };
    let opts = EvolveOptions {
        dt: 2e-3,
        t_final: 20.0,
        save_every: 10,
        check_every: 0,
        tolerance: f64::INFINITY,
    };
    let traj = evolve(&s0, (0.0, 0.0), &opts, &cfg)?;
    let r = &traj.report;
    println!("steps {}  H drift {:.2e}  M drift {:.2e}", r.steps, r.hamiltonian_drift, r.momentum_drift);
    let u1: Vec<_> = traj.snapshots.iter().map(|s| to_complex(&s.state).u(1)).collect();
    let w = dominant_frequency(&u1, opts.dt * opts.save_every as f64, 3.0);
    println!("dominant frequency of u_1: {w:.4} (linear value 1)");
    Ok(())
}
