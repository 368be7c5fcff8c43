use super::{Axis, Graph, Var};
use crate::error::{Error, Result};

/// `KL[N(r, S) ‖ N(m, K)]` for `M x 1` means and `M x M` covariances.
pub fn gaussian_kl(g: &mut Graph, r: Var, s: Var, m: Var, k: Var) -> Result<Var> {
    let ls = g.cholesky(s)?;
    let lk = g.cholesky(k)?;
    gaussian_kl_chol(g, r, ls, m, lk)
}

/// KL from lower factors `S = Ls Lsᵀ`, `K = Lk Lkᵀ`. `Ls` may carry negative
/// diagonal entries; only its square enters the log-determinant.
pub fn gaussian_kl_chol(g: &mut Graph, r: Var, ls: Var, m: Var, lk: Var) -> Result<Var> {
    let dim = g.shape(lk).0;
    for v in [r, m] {
        if g.shape(v) != (dim, 1) {
            return Err(Error::Shape {
                op: "gaussian_kl",
                left: g.shape(v),
                right: (dim, 1),
            });
        }
    }
    if g.shape(ls) != (dim, dim) {
        return Err(Error::Shape {
            op: "gaussian_kl",
            left: g.shape(ls),
            right: (dim, dim),
        });
    }
    let w = g.solve_tri(lk, ls, false)?;
    let trace = g.sum_squares(w, Axis::Rows);
    let trace = g.sum(trace);
    let diff = g.sub(m, r)?;
    let v = g.solve_tri(lk, diff, false)?;
    let maha = g.sum_squares(v, Axis::Rows);
    let dk = g.diag(lk)?;
    let logdk = g.log(dk);
    let logdet_k = g.sum(logdk);
    let logdet_k = g.scale(logdet_k, 2.0);
    let ds = g.diag(ls)?;
    let ds2 = g.square(ds);
    let logds = g.log(ds2);
    let logdet_s = g.sum(logds);
    let t = g.add(trace, maha)?;
    let t = g.add(t, logdet_k)?;
    let t = g.sub(t, logdet_s)?;
    let t = g.offset(t, -(dim as f64));
    Ok(g.scale(t, 0.5))
}
