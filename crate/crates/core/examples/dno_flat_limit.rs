//! Dirichlet-Neumann operator on a cosine surface, compared with the trace
//! of the harmonic function `e^{ky} cos kx`.

use qpwaves::dno::{dno_apply, DnoConfig};
use qpwaves::spectral::SpectralField1D;

fn main() -> qpwaves::Result<()> {
    let jmax = 128;
    let k = 3.0;
    for a in [0.0, 0.01, 0.05] {
        let eta = SpectralField1D::from_fn(jmax, |x| a * (2.0 * x).cos());
        let psi = SpectralField1D::from_fn(jmax, |x| (k * a * (2.0 * x).cos()).exp() * (k * x).cos());
        let exact = SpectralField1D::from_fn(jmax, |x| {
            let e = a * (2.0 * x).cos();
            let ex = -2.0 * a * (2.0 * x).sin();
            k * (k * e).exp() * ((k * x).cos() + ex * (k * x).sin())
        });
        for order in [2, 4, 8] {
            let g = dno_apply(&eta, &psi, &DnoConfig::new(order, jmax))?;
            let err = g.sub(&exact).norm_l2() / exact.norm_l2();
            println!("a = {a:<5} order {order}: relative error {err:.3e}");
        }
    }
    Ok(())
}
