//! Newton refinement of a Stokes wave from the first-order ansatz, with a
//! short continuation in amplitude and a snapshot CSV on stdout.

use qpwaves::qpsolver::{continuation, QpConfig, SolveParams};
use qpwaves::resonance::TangentialSet;

fn main() -> qpwaves::Result<()> {
    let s = TangentialSet::new(vec![1])?;
    let lmax = 10;
    let cfg = QpConfig::default();
    let params = SolveParams::new(vec![1.0], lmax);
    let steps = continuation(&s, &[1.0], &[0.01, 0.02, 0.04], &params, &cfg, 4)?;
    for st in &steps {
        let r = &st.result;
        println!(
            "ε = {:.3}: ω = {:.12}, residual {:.2e}, {} iterations",
            st.eps, r.embedding.omega[0], r.residual, r.iterations
        );
    }
    let last = &steps.last().unwrap().result.embedding;
    last.write_snapshots_csv(std::io::stdout().lock(), &[0.0, 1.0], 8)?;
    Ok(())
}
