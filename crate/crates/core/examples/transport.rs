//! Straightening of the transport term `ω·∂φ + Ṽ(φ)(1 + 𝚟·∂q)` for a single
//! cosine coefficient.

use num_complex::Complex64;
use qpwaves::linop::{straighten_transport, TransportParams};
use qpwaves::spectral::TorusField;

fn main() -> qpwaves::Result<()> {
    let omega = [1.0005, 1.4149];
    let v = [1, 2];
    let params = TransportParams {
        gamma: 1e-2,
        tau: 3.0,
        tol: 1e-13,
        max_iter: 50,
    };
    for delta in [1e-3, 1e-2, 5e-2] {
        let mut vt = TorusField::zeros(2, 8, 0, 1);
        vt.set_real(0, &[1, 0], 0, Complex64::new(delta / 2.0, 0.0));
        let st = straighten_transport(&vt, &omega, &v, &params)?;
        let approx = delta * delta * v[0] as f64 / (2.0 * omega[0]);
        println!(
            "δ = {delta}: m1 = {:.6e} (δ²v₁/2ω₁ = {approx:.6e}), defect {:.1e}, {} iterations",
            st.m1, st.defect, st.iterations
        );
    }
    Ok(())
}
