//! Twist matrix of a tangential set, and a search for generic sites.

use qpwaves::normalform::{frequency_amplitude, invert_frequency_amplitude, twist_matrix};
use qpwaves::resonance::{generic_sites_search, TangentialSet};

fn main() -> qpwaves::Result<()> {
    let s = TangentialSet::new(vec![1, 2])?;
    let a = twist_matrix(&s);
    println!("twist matrix for S = {{1, 2}}: {:?}", a.entries);
    println!("determinant {:.6e}", a.determinant());

    let zeta = [1e-3, 2e-3];
    let omega = frequency_amplitude(&s, &zeta)?;
    let back = invert_frequency_amplitude(&s, &omega)?;
    println!("ω(ζ) = {omega:?}, recovered ζ = {:?}", back.zeta);

    let (found, cert) = generic_sites_search(3, -6..=6, 10)?;
    println!(
        "generic sites for ν = 3: {:?} after {} candidates, det A = {:.4e}",
        found.sites(),
        cert.candidates_tried,
        cert.twist_determinant
    );
    Ok(())
}
