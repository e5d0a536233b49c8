//! Monte Carlo estimate of the fraction of actions whose frequencies pass
//! the diophantine and zero-order Melnikov checks.

use qpwaves::melnikov::{measure_estimate, MelnikovParams};
use qpwaves::resonance::TangentialSet;

fn main() -> qpwaves::Result<()> {
    let s = TangentialSet::new(vec![1, 2])?;
    for eps in [0.2, 0.1, 0.05] {
        let mut p = MelnikovParams::defaults(eps, s.nu());
        p.lmax = 40;
        let m = measure_estimate(&s, eps, &p, 2000, 1)?;
        println!("ε = {eps}: {} / {} passed ({:.4})", m.passed, m.samples, m.fraction);
    }
    Ok(())
}
