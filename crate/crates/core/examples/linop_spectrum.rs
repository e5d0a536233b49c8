//! Spectrum of the linearized operator at a Stokes wave and the fitted
//! diagonal model `d_j = m1 j + (1 + m½)√|j| + m0 sign j + r_j`.

use qpwaves::linop::{assemble_linearized, diagonalize_and_fit};
use qpwaves::melnikov::m1_model;
use qpwaves::qpsolver::{first_order_ansatz, newton_refine, QpConfig, SolveParams};
use qpwaves::resonance::TangentialSet;

fn main() -> qpwaves::Result<()> {
    let s = TangentialSet::new(vec![1])?;
    let eps = 0.02f64;
    let zeta = vec![eps * eps];
    let cfg = QpConfig::default();
    let e0 = first_order_ansatz(&s, &zeta, 10)?;
    let sol = newton_refine(&e0, &SolveParams::new(zeta.clone(), 10), &cfg)?;
    let lop = assemble_linearized(&sol.embedding, &cfg, 6, 48, true)?;
    let max_re = lop.eigenvalues()?.iter().map(|z| z.value.re.abs()).fold(0.0, f64::max);
    let d = diagonalize_and_fit(&lop, None)?;
    println!("dimension {}, max |Re λ| {:.2e}", lop.dim(), max_re);
    println!("m1 = {:.6e} (model {:.6e}), m½ = {:.3e}, m0 = {:.3e}", d.m1, m1_model(&s, &zeta), d.m_half, d.m0);
    println!("fit residual {:.2e}", d.fit_residual);
    Ok(())
}
