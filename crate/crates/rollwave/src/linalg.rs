//! Thin wrappers over the dense solvers used throughout.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use num_complex::Complex64;

use crate::error::{Error, Result};

fn to_c64(z: Complex64) -> c64 {
    c64::new(z.re, z.im)
}

fn from_c64(z: c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

/// Solves a real square system given row-major `a`. Returns the solution and
/// the ratio of smallest to largest pivot magnitude as a conditioning hint.
pub fn solve_real(a: &[f64], n: usize, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = u[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 0.0) || !lo.is_finite() {
        return Err(Error::DegenerateJacobian("zero pivot".into()));
    }
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateJacobian("non-finite solution".into()));
    }
    Ok((out, lo / hi))
}

/// Eigenvalues of a dense complex row-major matrix.
pub fn eigenvalues(a: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    let m = Mat::<c64>::from_fn(n, n, |i, j| to_c64(a[i * n + j]));
    let ev = m.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(ev.into_iter().map(from_c64).collect())
}

/// Minimum-norm least-squares solution of a complex `m × n` system, discarding
/// singular values below `rcond` times the largest. Returns the solution and
/// the number of discarded singular values.
pub fn lstsq_min_norm(a: &[Complex64], m: usize, n: usize, b: &[Complex64], rcond: f64) -> Result<(Vec<Complex64>, usize)> {
    let mat = Mat::<c64>::from_fn(m, n, |i, j| to_c64(a[i * n + j]));
    let svd = mat.thin_svd().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let r = s.dim();
    let smax = (0..r).map(|i| s[i].re.abs()).fold(0.0, f64::max);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut dropped = 0;
    for k in 0..r {
        let sk = s[k].re;
        if sk.abs() <= rcond * smax {
            dropped += 1;
            continue;
        }
        let mut proj = Complex64::new(0.0, 0.0);
        for i in 0..m {
            proj += from_c64(u[(i, k)]).conj() * b[i];
        }
        proj /= sk;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += from_c64(v[(j, k)]) * proj;
        }
    }
    Ok((x, dropped))
}

/// Determinant of a small complex matrix by Gaussian elimination with partial pivoting.
pub fn det_small(a: &[Complex64], n: usize) -> Complex64 {
    let mut m = a.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].norm().total_cmp(&m[j * n + col].norm())).expect("nonempty");
        if m[piv * n + col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        for i in col + 1..n {
            let f = m[i * n + col] / p;
            for j in col..n {
                let v = m[col * n + j];
                m[i * n + j] -= f * v;
            }
        }
    }
    det
}

/// Householder-free modified Gram–Schmidt QR of a tall `rows × cols` complex
/// matrix (row-major), in place. Returns the diagonal of R.
pub fn mgs_qr(a: &mut [Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut diag = Vec::with_capacity(cols);
    for j in 0..cols {
        // two passes for orthogonality to working precision
        for _ in 0..2 {
            for k in 0..j {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in 0..rows {
                    dot += a[i * cols + k].conj() * a[i * cols + j];
                }
                for i in 0..rows {
                    let v = a[i * cols + k];
                    a[i * cols + j] -= dot * v;
                }
            }
        }
        let norm = (0..rows).map(|i| a[i * cols + j].norm_sqr()).sum::<f64>().sqrt();
        diag.push(Complex64::new(norm, 0.0));
        if norm > 0.0 {
            for i in 0..rows {
                a[i * cols + j] /= norm;
            }
        }
    }
    diag
}

/// Matrix product of row-major complex matrices.
pub fn matmul(a: &[Complex64], b: &[Complex64], n: usize, k: usize, m: usize) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); n * m];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += ail * b[l * m + j];
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_solve() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let (x, r) = solve_real(&a, 3, &[1.0, 2.0, 3.0]).unwrap();
        for i in 0..3 {
            let s: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((s - [1.0, 2.0, 3.0][i]).abs() < 1e-14);
        }
        assert!(r > 0.1);
        assert!(solve_real(&[1.0, 2.0, 2.0, 4.0], 2, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn eigen_and_det() {
        let c = |r: f64, i: f64| Complex64::new(r, i);
        let a = vec![c(2.0, 0.0), c(1.0, 1.0), c(0.0, 0.0), c(3.0, -1.0)];
        let mut ev = eigenvalues(&a, 2).unwrap();
        ev.sort_by(|x, y| x.re.total_cmp(&y.re));
        assert!((ev[0] - c(2.0, 0.0)).norm() < 1e-13);
        assert!((ev[1] - c(3.0, -1.0)).norm() < 1e-13);
        assert!((det_small(&a, 2) - c(6.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn min_norm_lstsq() {
        let c = |r: f64| Complex64::new(r, 0.0);
        // rank one: x + y = 2 → min norm (1, 1)
        let a = vec![c(1.0), c(1.0), c(2.0), c(2.0)];
        let (x, dropped) = lstsq_min_norm(&a, 2, 2, &[c(2.0), c(4.0)], 1e-12).unwrap();
        assert_eq!(dropped, 1);
        assert!((x[0] - c(1.0)).norm() < 1e-13 && (x[1] - c(1.0)).norm() < 1e-13);
    }

    #[test]
    fn qr_orthonormal() {
        let c = |r: f64, i: f64| Complex64::new(r, i);
        let mut a = vec![c(1.0, 0.0), c(2.0, 1.0), c(0.0, 1.0), c(1.0, 0.0), c(3.0, 0.0), c(0.5, -0.5)];
        let orig = a.clone();
        let d = mgs_qr(&mut a, 3, 2);
        let dot: Complex64 = (0..3).map(|i| a[i * 2].conj() * a[i * 2 + 1]).sum();
        assert!(dot.norm() < 1e-15);
        let n0 = (0..3).map(|i| orig[i * 2].norm_sqr()).sum::<f64>().sqrt();
        assert!((d[0].re - n0).abs() < 1e-14);
    }
}
