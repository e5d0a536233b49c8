//! Enumerates 3- and 4-wave resonances and identifies the Benjamin-Feir
//! family among the 4-wave ones.

use qpwaves::resonance::{enumerate_resonances, is_trivial};

fn main() -> qpwaves::Result<()> {
    let three = enumerate_resonances(3, 500)?;
    println!("3-wave resonances with |j| ≤ 500: {}", three.len());
    let four = enumerate_resonances(4, 60)?;
    let nontrivial: Vec<_> = four.iter().filter(|t| !is_trivial(t)).collect();
    println!("4-wave resonances with |j| ≤ 60: {} ({} non-trivial)", four.len(), nontrivial.len());
    for t in nontrivial.iter().take(8) {
        println!("  sites {:?} signs {:?}", t.sites, t.signs);
    }
    Ok(())
}
