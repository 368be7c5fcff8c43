//! Dense kernels shared by the graph ops and by the non-differentiable
//! code paths (exact GP oracle, MICE regressions).

use alloc::vec::Vec;

use super::Mat;
use crate::error::{contract, Error, Result};

/// `c = alpha * op(a) * op(b) + beta * c`, where `op` optionally transposes.
pub(crate) fn gemm(alpha: f64, a: &Mat, ta: bool, b: &Mat, tb: bool, beta: f64, c: &mut Mat) {
    let (m, k) = if ta { (a.cols(), a.rows()) } else { a.shape() };
    let (k2, n) = if tb { (b.cols(), b.rows()) } else { b.shape() };
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!(c.shape(), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c.as_mut_slice() {
            *x *= beta;
        }
        return;
    }
    let (rsa, csa) = if ta {
        (1, a.cols() as isize)
    } else {
        (a.cols() as isize, 1)
    };
    let (rsb, csb) = if tb {
        (1, b.cols() as isize)
    } else {
        (b.cols() as isize, 1)
    };
    let rsc = n as isize;
    // SAFETY: strides describe the row-major buffers of `a`, `b` and `c`,
    // whose lengths were checked against the logical shapes above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_slice().as_ptr(),
            rsa,
            csa,
            b.as_slice().as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_slice().as_mut_ptr(),
            rsc,
            1,
        );
    }
}

pub(crate) fn matmul_t(a: &Mat, ta: bool, b: &Mat, tb: bool) -> Mat {
    let m = if ta { a.cols() } else { a.rows() };
    let n = if tb { b.rows() } else { b.cols() };
    let mut c = Mat::zeros(m, n);
    gemm(1.0, a, ta, b, tb, 0.0, &mut c);
    c
}

/// Lower Cholesky factor together with the diagonal jitter that was needed.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdFactor {
    pub lower: Mat,
    pub jitter_used: f64,
}

struct CholFailure {
    row: usize,
    pivot: f64,
}

fn cholesky_with_shift(a: &Mat, shift: f64) -> core::result::Result<Mat, CholFailure> {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let (head, _) = l.as_slice().split_at(j * n + j);
        let lj = &head[j * n..j * n + j];
        let s = a[(j, j)] + shift - lj.iter().map(|x| x * x).sum::<f64>();
        if !(s > 0.0) || !s.is_finite() {
            return Err(CholFailure { row: j, pivot: s });
        }
        let d = libm::sqrt(s);
        l[(j, j)] = d;
        for i in j + 1..n {
            let dot: f64 = {
                let buf = l.as_slice();
                let li = &buf[i * n..i * n + j];
                let lj = &buf[j * n..j * n + j];
                li.iter().zip(lj).map(|(x, y)| x * y).sum()
            };
            l[(i, j)] = (a[(i, j)] - dot) / d;
        }
    }
    Ok(l)
}

/// Plain Cholesky without jitter; fails on any pivot at or below rounding level.
pub fn cholesky_exact(a: &Mat) -> Result<Mat> {
    if a.rows() != a.cols() {
        return Err(Error::Shape {
            op: "cholesky",
            left: a.shape(),
            right: (a.cols(), a.rows()),
        });
    }
    let diag = a.diagonal();
    let fail = |f: CholFailure| Error::Decomposition {
        size: a.rows(),
        jitter: 0.0,
        row: f.row,
        pivot: f.pivot,
        min_diag: diag.iter().copied().fold(f64::INFINITY, f64::min),
        max_diag: diag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let l = cholesky_with_shift(a, 0.0).map_err(fail)?;
    // pivots at rounding level mean the matrix is numerically singular
    let floor = f64::EPSILON * a.rows() as f64 * diag.iter().copied().fold(0.0, f64::max);
    for j in 0..a.rows() {
        let pivot = l[(j, j)] * l[(j, j)];
        if pivot <= floor {
            return Err(fail(CholFailure { row: j, pivot }));
        }
    }
    Ok(l)
}

/// Relative jitter steps (times the mean diagonal) tried after a plain factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-8, 1e-6, 1e-4];

/// Cholesky with an escalating diagonal jitter. Only the lower triangle of `a` is read.
pub fn safe_cholesky(a: &Mat) -> Result<PsdFactor> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::Shape {
            op: "cholesky",
            left: a.shape(),
            right: (m, n),
        });
    }
    let scale = a
        .as_slice()
        .iter()
        .fold(1.0f64, |acc, x| acc.max(libm::fabs(*x)));
    for i in 0..n {
        for j in 0..i {
            if libm::fabs(a[(i, j)] - a[(j, i)]) > 1e-10 * scale {
                return Err(contract("cholesky input is not symmetric"));
            }
        }
    }
    let mut failure = match cholesky_with_shift(a, 0.0) {
        Ok(lower) => {
            return Ok(PsdFactor {
                lower,
                jitter_used: 0.0,
            })
        }
        Err(f) => f,
    };
    let diag = a.diagonal();
    let mean_diag = if n == 0 {
        1.0
    } else {
        diag.iter().sum::<f64>() / n as f64
    };
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = 0.0;
    for rel in JITTER_LADDER {
        jitter = rel * base;
        match cholesky_with_shift(a, jitter) {
            Ok(lower) => {
                log::debug!("cholesky needed jitter {jitter:e} on {n}x{n} matrix");
                return Ok(PsdFactor {
                    lower,
                    jitter_used: jitter,
                });
            }
            Err(f) => failure = f,
        }
    }
    Err(Error::Decomposition {
        size: n,
        jitter,
        row: failure.row,
        pivot: failure.pivot,
        min_diag: diag.iter().copied().fold(f64::INFINITY, f64::min),
        max_diag: diag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Wide right-hand sides are solved through `L⁻¹` and one gemm.
const WIDE_RHS: usize = 4;

fn wide(l: &Mat, b: &Mat) -> bool {
    l.rows() >= 16 && b.cols() > WIDE_RHS * l.rows()
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &Mat, b: &Mat) -> Mat {
    if wide(l, b) {
        let inv = substitute_lower(l, &Mat::identity(l.rows()));
        return matmul_t(&inv, false, b, false);
    }
    substitute_lower(l, b)
}

fn substitute_lower(l: &Mat, b: &Mat) -> Mat {
    let m = l.rows();
    assert_eq!(b.rows(), m);
    let n = b.cols();
    let mut x = b.clone();
    for i in 0..m {
        let (done, rest) = x.as_mut_slice().split_at_mut(i * n);
        let xi = &mut rest[..n];
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != 0.0 {
                let xk = &done[k * n..(k + 1) * n];
                for (a, b) in xi.iter_mut().zip(xk) {
                    *a -= lik * b;
                }
            }
        }
        let d = l[(i, i)];
        for a in xi.iter_mut() {
            *a /= d;
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Mat, b: &Mat) -> Mat {
    if wide(l, b) {
        let inv = substitute_lower(l, &Mat::identity(l.rows()));
        return matmul_t(&inv, true, b, false);
    }
    let m = l.rows();
    assert_eq!(b.rows(), m);
    let n = b.cols();
    let mut x = b.clone();
    for i in (0..m).rev() {
        let (head, tail) = x.as_mut_slice().split_at_mut((i + 1) * n);
        let xi = &mut head[i * n..];
        for k in i + 1..m {
            let lki = l[(k, i)];
            if lki != 0.0 {
                let xk = &tail[(k - i - 1) * n..(k - i) * n];
                for (a, b) in xi.iter_mut().zip(xk) {
                    *a -= lki * b;
                }
            }
        }
        let d = l[(i, i)];
        for a in xi.iter_mut() {
            *a /= d;
        }
    }
    x
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &Mat, b: &Mat) -> Result<Mat> {
    let f = safe_cholesky(a)?;
    Ok(solve_lower_transpose(&f.lower, &solve_lower(&f.lower, b)))
}

/// Least squares `min ‖X β − y‖` via Householder QR.
///
/// Returns `None` when the design is numerically rank deficient.
pub fn lstsq_qr(x: &Mat, y: &[f64]) -> Option<Vec<f64>> {
    let (n, p) = x.shape();
    assert_eq!(y.len(), n);
    if n < p {
        return None;
    }
    let mut r = x.clone();
    let mut qty = y.to_vec();
    let mut v = alloc::vec![0.0; n];
    for j in 0..p {
        let norm = libm::sqrt((j..n).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>());
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(j, j)] > 0.0 { -norm } else { norm };
        for i in j..n {
            v[i] = r[(i, j)];
        }
        v[j] -= alpha;
        let vnorm2: f64 = (j..n).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j..p {
            let dot: f64 = (j..n).map(|i| v[i] * r[(i, c)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..n {
                r[(i, c)] -= f * v[i];
            }
        }
        let dot: f64 = (j..n).map(|i| v[i] * qty[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..n {
            qty[i] -= f * v[i];
        }
    }
    let max_diag = (0..p).map(|i| libm::fabs(r[(i, i)])).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|i| libm::fabs(r[(i, i)]) <= 1e-10 * max_diag) {
        return None;
    }
    let mut beta = alloc::vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r[(i, k)] * beta[k]).sum();
        beta[i] = (qty[i] - s) / r[(i, i)];
    }
    Some(beta)
}

/// Ridge regression `(XᵀX + λI) β = Xᵀy`.
pub fn ridge(x: &Mat, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let p = x.cols();
    let mut xtx = matmul_t(x, true, x, false);
    for i in 0..p {
        xtx[(i, i)] += lambda;
    }
    let xty = matmul_t(x, true, &Mat::column(y.to_vec()), false);
    Ok(solve_spd(&xtx, &xty)?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor_needs_no_jitter() {
        let f = safe_cholesky(&Mat::identity(4)).unwrap();
        assert_eq!(f.lower, Mat::identity(4));
        assert_eq!(f.jitter_used, 0.0);
    }

    #[test]
    fn diagonal_factor() {
        let a = Mat::from_rows(&[[4.0, 0.0], [0.0, 9.0]]);
        let f = safe_cholesky(&a).unwrap();
        assert_eq!(f.lower, Mat::from_rows(&[[2.0, 0.0], [0.0, 3.0]]));
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        let a = Mat::filled(3, 3, 1.0);
        let f = safe_cholesky(&a).unwrap();
        assert!(f.jitter_used > 0.0);
        let rec = f.lower.matmul(&f.lower.transpose());
        let mut target = a.clone();
        for i in 0..3 {
            target[(i, i)] += f.jitter_used;
        }
        assert!(rec.max_abs_diff(&target) < 1e-10);
    }

    #[test]
    fn negative_definite_is_decomposition_error() {
        let a = Mat::from_rows(&[[-1.0, 0.0], [0.0, -2.0]]);
        assert!(matches!(
            safe_cholesky(&a),
            Err(Error::Decomposition { size: 2, .. })
        ));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let a = Mat::from_rows(&[[2.0, 1.0], [0.0, 2.0]]);
        assert!(matches!(safe_cholesky(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn triangular_solves() {
        let l = Mat::from_rows(&[[2.0, 0.0, 0.0], [1.0, 3.0, 0.0], [-1.0, 0.5, 1.5]]);
        let b = Mat::from_rows(&[[1.0, 2.0], [0.0, -1.0], [4.0, 0.25]]);
        let x = solve_lower(&l, &b);
        assert!(l.matmul(&x).max_abs_diff(&b) < 1e-14);
        let y = solve_lower_transpose(&l, &b);
        assert!(l.transpose().matmul(&y).max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn qr_recovers_exact_coefficients() {
        let x = Mat::from_fn(10, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => ((i * i) % 7) as f64,
        });
        let y: Vec<f64> = (0..10)
            .map(|i| 0.5 + 2.0 * x[(i, 1)] - 3.0 * x[(i, 2)])
            .collect();
        let b = lstsq_qr(&x, &y).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-10);
        assert!((b[1] - 2.0).abs() < 1e-10);
        assert!((b[2] + 3.0).abs() < 1e-10);
    }

    #[test]
    fn qr_flags_collinear_design() {
        let x = Mat::from_fn(6, 2, |i, _| i as f64);
        assert!(lstsq_qr(&x, &[0.0; 6]).is_none());
    }

    #[test]
    fn gemm_transposes() {
        let a = Mat::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let b = Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let ab = matmul_t(&a, false, &b, false);
        assert_eq!(ab, Mat::from_rows(&[[4.0, 5.0], [10.0, 11.0]]));
        let atb_t = matmul_t(&b, true, &a, true);
        assert_eq!(atb_t, ab.transpose());
        let aat = matmul_t(&a, false, &a, true);
        assert_eq!(aat, Mat::from_rows(&[[14.0, 32.0], [32.0, 77.0]]));
    }
}
