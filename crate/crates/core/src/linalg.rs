//! Dense linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenvalues and unit eigenvectors (columns) of a complex square matrix.
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
}

/// Complex Schur form `A = Q T Q*`, then eigenvectors of `T` by
/// back-substitution.
pub fn eigen(a: &DMatrix<Complex64>) -> Result<Eigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidInput("eigen: matrix not square".into()));
    }
    if n == 0 {
        return Ok(Eigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Consistency("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1e-300);
    let tiny = f64::EPSILON * scale;
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for m in i + 1..=k {
                s += t[(i, m)] * y[(m, k)];
            }
            let mut den = t[(i, i)] - lam;
            if den.norm() < tiny {
                den = Complex64::new(tiny, 0.0);
            }
            y[(i, k)] = -s / den;
        }
    }
    let mut vectors = &q * y;
    for mut c in vectors.column_iter_mut() {
        let nrm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            c /= Complex64::new(nrm, 0.0);
        }
    }
    Ok(Eigen {
        values: (0..n).map(|k| t[(k, k)]).collect(),
        vectors,
    })
}

/// Least-squares solution of `A x = b` with the smallest singular value of `A`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let x = svd
        .solve(b, smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64)
        .map_err(|e| Error::Consistency(format!("SVD solve failed: {e}")))?;
    Ok((x, smin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenpairs_of_nonnormal_matrix() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[c(1.0, 0.5), c(2.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(-1.0, 0.0), c(3.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(2.0, -1.0)],
        );
        let e = eigen(&a).unwrap();
        for k in 0..3 {
            let v = e.vectors.column(k).into_owned();
            let r = &a * &v - &v * e.values[k];
            assert!(r.norm() < 1e-12, "residual {}", r.norm());
        }
        let tr: Complex64 = e.values.iter().sum();
        assert!((tr - c(2.0, -0.5)).norm() < 1e-12);
    }

    #[test]
    fn rotation_eigenvalues() {
        let c = |re: f64| Complex64::new(re, 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0), c(-4.0), c(1.0), c(0.0)]);
        let mut ims: Vec<f64> = eigen(&a).unwrap().values.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 2.0).abs() < 1e-14 && (ims[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_line() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let (x, smin) = least_squares(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!(smin > 0.0);
    }
}
