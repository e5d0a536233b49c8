//! Second-order Melnikov scan with reduction radii for S = {1, 2}.

use qpwaves::linop::DiagonalModel;
use qpwaves::melnikov::{m1_model, second_melnikov, MelnikovParams};
use qpwaves::normalform::frequency_amplitude;
use qpwaves::resonance::TangentialSet;

fn main() -> qpwaves::Result<()> {
    let s = TangentialSet::new(vec![1, 2])?;
    let eps = 0.05f64;
    let zeta = [eps * eps, eps * eps];
    let omega = frequency_amplitude(&s, &zeta)?;
    let mut p = MelnikovParams::defaults(eps, s.nu());
    p.lmax = 10;
    p.jmax = 2000;
    let d = DiagonalModel::with_coefficients(m1_model(&s, &zeta), 0.0, 0.0);
    let rep = second_melnikov(&omega, &d, s.velocity(), &p, 10)?;
    println!(
        "checked {} triples, {} violations, {} certified; min ratio {:.3e}",
        rep.checked, rep.violation_count, rep.certified, rep.min_ratio
    );
    let mut finite: Vec<_> = rep.radii.iter().filter_map(|r| r.radius.map(|x| (x, &r.ell))).collect();
    finite.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (rad, ell) in finite.iter().take(6) {
        println!("  ℓ = {ell:?}: R = {rad:.2}");
    }
    Ok(())
}
