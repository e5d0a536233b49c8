//! Quasi-periodic traveling wave with two tangential sites.

use qpwaves::qpsolver::{first_order_ansatz, newton_refine, QpConfig, SolveParams};
use qpwaves::resonance::TangentialSet;

fn main() -> qpwaves::Result<()> {
    let s = TangentialSet::new(vec![1, 2])?;
    let zeta = vec![4e-4, 4e-4];
    let e0 = first_order_ansatz(&s, &zeta, 4)?;
    let res = newton_refine(&e0, &SolveParams::new(zeta, 4), &QpConfig::default())?;
    for it in &res.log {
        println!("iter {}: residual {:.3e}, σ_min {:?}", it.iteration, it.residual, it.sigma_min);
    }
    println!("ω = {:?}, convergence order {:?}", res.embedding.omega, res.order);
    Ok(())
}
