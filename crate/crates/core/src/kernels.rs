//! Squared-exponential covariance with one lengthscale per input dimension.

use crate::error::{Error, Result};
use crate::tensorgrad::{Graph, Var};
use crate::Mat;

/// RBF-ARD kernel `σ_f² exp(−½ Σ_d (x_d − x'_d)² / ℓ_d²)`, stored in the log domain.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RbfArdKernel {
    /// `1 x D_in` row of `log ℓ_d`.
    pub log_lengthscales: Mat,
    /// `1 x 1`, `log σ_f²`.
    pub log_amplitude: Mat,
}

/// Graph handles for a bound kernel.
#[derive(Clone, Copy, Debug)]
pub struct KernelVars {
    pub log_lengthscales: Var,
    pub log_amplitude: Var,
}

impl RbfArdKernel {
    /// Unit amplitude and `ℓ = √D_in` for every dimension.
    pub fn new(input_dim: usize) -> Self {
        let ls = libm::log(libm::sqrt(input_dim.max(1) as f64));
        RbfArdKernel {
            log_lengthscales: Mat::filled(1, input_dim, ls),
            log_amplitude: Mat::scalar(0.0),
        }
    }

    pub fn with_params(lengthscales: &[f64], amplitude: f64) -> Self {
        RbfArdKernel {
            log_lengthscales: Mat::row_vector(lengthscales.iter().map(|&l| libm::log(l)).collect()),
            log_amplitude: Mat::scalar(libm::log(amplitude)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.log_lengthscales.cols()
    }

    pub fn amplitude(&self) -> f64 {
        libm::exp(self.log_amplitude.to_scalar())
    }

    pub fn lengthscales(&self) -> alloc::vec::Vec<f64> {
        self.log_lengthscales
            .as_slice()
            .iter()
            .map(|&x| libm::exp(x))
            .collect()
    }

    pub fn bind(&self, g: &mut Graph) -> KernelVars {
        KernelVars {
            log_lengthscales: g.param(self.log_lengthscales.clone()),
            log_amplitude: g.param(self.log_amplitude.clone()),
        }
    }

    pub fn bind_const(&self, g: &mut Graph) -> KernelVars {
        KernelVars {
            log_lengthscales: g.constant(self.log_lengthscales.clone()),
            log_amplitude: g.constant(self.log_amplitude.clone()),
        }
    }

    /// Dense evaluation without a graph.
    pub fn matrix(&self, a: &Mat, b: &Mat) -> Result<Mat> {
        let mut g = Graph::new();
        let kv = self.bind_const(&mut g);
        let (a, b) = (g.constant(a.clone()), g.constant(b.clone()));
        let k = kernel_matrix(&mut g, kv, a, b)?;
        Ok(g.evaluate(k))
    }
}

impl KernelVars {
    /// Divides each input column by its lengthscale.
    pub fn scale_inputs(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (n, d) = g.shape(x);
        let din = g.shape(self.log_lengthscales).1;
        if d != din {
            return Err(Error::Shape {
                op: "kernel input",
                left: (n, d),
                right: (1, din),
            });
        }
        let neg = g.scale(self.log_lengthscales, -1.0);
        let inv = g.exp(neg);
        let inv = g.broadcast(inv, n, d)?;
        g.mul(x, inv)
    }
}

/// `n x m` covariance between the rows of `a` and `b`.
pub fn kernel_matrix(g: &mut Graph, kernel: KernelVars, a: Var, b: Var) -> Result<Var> {
    if g.shape(a).1 != g.shape(b).1 {
        return Err(Error::Shape {
            op: "kernel_matrix",
            left: g.shape(a),
            right: g.shape(b),
        });
    }
    let sa = kernel.scale_inputs(g, a)?;
    let sb = if a == b {
        sa
    } else {
        kernel.scale_inputs(g, b)?
    };
    g.rbf(sa, sb, kernel.log_amplitude)
}

/// Prior variances `k(xᵢ, xᵢ)` as an `n x 1` column; constant `σ_f²` for this stationary kernel.
pub fn kernel_diag(g: &mut Graph, kernel: KernelVars, a: Var) -> Result<Var> {
    let n = g.shape(a).0;
    let amp = g.exp(kernel.log_amplitude);
    g.broadcast(amp, n, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_distance_is_amplitude() {
        let k = RbfArdKernel::with_params(&[0.7, 2.0], 1.0);
        let x = Mat::from_rows(&[[0.3, -1.1]]);
        assert_eq!(k.matrix(&x, &x).unwrap(), Mat::scalar(1.0));
    }

    #[test]
    fn unit_distance() {
        let k = RbfArdKernel::with_params(&[1.0], 1.0);
        let v = k
            .matrix(&Mat::from_rows(&[[0.0]]), &Mat::from_rows(&[[1.0]]))
            .unwrap();
        assert!((v.to_scalar() - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn lengthscale_input_scale_invariance() {
        let a = Mat::from_rows(&[[0.1, 0.4], [1.0, -0.3], [2.0, 0.0]]);
        let b = Mat::from_rows(&[[0.5, 0.5], [-1.0, 0.2]]);
        let k1 = RbfArdKernel::with_params(&[0.8, 1.7], 1.3)
            .matrix(&a, &b)
            .unwrap();
        let k2 = RbfArdKernel::with_params(&[1.6, 3.4], 1.3)
            .matrix(&a.map(|x| 2.0 * x), &b.map(|x| 2.0 * x))
            .unwrap();
        assert!(k1.max_abs_diff(&k2) < 1e-14);
    }

    #[test]
    fn diag_matches_full_matrix() {
        let k = RbfArdKernel::with_params(&[0.5, 1.5, 1.0], 2.5);
        let a = Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.37);
        let mut g = Graph::new();
        let kv = k.bind_const(&mut g);
        let av = g.constant(a.clone());
        let d = kernel_diag(&mut g, kv, av).unwrap();
        assert_eq!(g.value(d), &Mat::column(vec![2.5; 4]));
        let full = k.matrix(&a, &a).unwrap();
        for i in 0..4 {
            assert!((full[(i, i)] - g.value(d)[(i, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn column_mismatch_is_shape_error() {
        let k = RbfArdKernel::new(2);
        assert!(matches!(
            k.matrix(&Mat::zeros(2, 2), &Mat::zeros(2, 3)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn default_initialisation() {
        let k = RbfArdKernel::new(4);
        assert!(k.lengthscales().iter().all(|&l| (l - 2.0).abs() < 1e-15));
        assert_eq!(k.amplitude(), 1.0);
    }
}
