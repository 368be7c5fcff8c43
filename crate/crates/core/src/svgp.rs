//! Sparse variational GP layers (unwhitened `q(u) = N(r, S)` per output,
//! inducing inputs shared across the outputs of a layer).

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{contract, Error, Result};
use crate::imputation::{
    fill_missing, observed_column_means, observed_indicator, GaussianMixture, ImputationResult,
    ImputedCell,
};
use crate::kernels::{kernel_matrix, KernelVars, RbfArdKernel};
use crate::optim::{maximize, OptimConfig, TrainReport, Trainable};
use crate::rng::{seeded, SeededRng};
use crate::tensorgrad::linalg::{self, solve_lower};
use crate::tensorgrad::{Axis, Graph, Var};
use crate::Mat;

/// Floor applied to predictive variances.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Prior mean `m(·)` of a layer.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MeanFunction {
    Zero,
    /// Fixed `D_in x H` linear map, `m(x) = xᵀ W`.
    Linear(Mat),
}

/// One layer of `H` sparse GPs sharing inducing inputs and kernel.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparseGPLayer {
    /// `M x D_in` inducing inputs `Z`.
    pub inducing: Mat,
    /// `M x H` variational means `r_h`.
    pub q_mean: Mat,
    /// `H` factors `L_h` (lower triangle read) with `S_h = L_h L_hᵀ`.
    pub q_scale: Vec<Mat>,
    pub kernel: RbfArdKernel,
    pub mean_fn: MeanFunction,
    /// `1 x H` log likelihood variances, for layers that own observations.
    pub log_noise: Option<Mat>,
    /// Constant added to the diagonal of `K(Z, Z)`.
    pub jitter: f64,
}

/// Parameter handles of a bound layer.
#[derive(Clone, Debug)]
pub struct LayerVars {
    pub inducing: Var,
    pub kernel: KernelVars,
    pub q_mean: Var,
    pub q_scale: Vec<Var>,
    pub log_noise: Option<Var>,
}

/// Quantities that depend on the layer parameters only (not on inputs).
#[derive(Clone, Debug)]
pub struct LayerPrior {
    /// Cholesky factor of `K(Z, Z)`.
    pub lz: Var,
    /// `Lz⁻¹ (r − m(Z))`, `M x H`.
    pub v: Var,
    /// `Lz⁻¹ L_h` per output.
    pub w: Vec<Var>,
    /// `tril(L_h)` per output.
    pub ls: Vec<Var>,
    /// `K⁻¹ (r − m(Z))`, `M x H`.
    pub alpha: Var,
    /// `K⁻¹ − K⁻¹ S_h K⁻¹` per output.
    pub precision: Vec<Var>,
}

/// Per-point Gaussian marginals `q(f(xᵢ))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalGaussians {
    /// `n x H`
    pub mean: Mat,
    /// `n x H`, strictly positive
    pub variance: Mat,
}

impl SparseGPLayer {
    /// Fresh layer with `r = 0`, `S = 1e-2 I` and the default kernel.
    pub fn new(
        inducing: Mat,
        output_dim: usize,
        mean_fn: MeanFunction,
        noise: Option<f64>,
    ) -> Self {
        let m = inducing.rows();
        let din = inducing.cols();
        let scale = Mat::from_fn(m, m, |i, j| if i == j { 0.1 } else { 0.0 });
        SparseGPLayer {
            kernel: RbfArdKernel::new(din),
            q_mean: Mat::zeros(m, output_dim),
            q_scale: (0..output_dim).map(|_| scale.clone()).collect(),
            inducing,
            mean_fn,
            log_noise: noise.map(|s2| Mat::filled(1, output_dim, libm::log(s2))),
            jitter: 1e-6,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.inducing.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.q_mean.cols()
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.rows()
    }

    pub fn noise_variances(&self) -> Option<Vec<f64>> {
        self.log_noise
            .as_ref()
            .map(|m| m.as_slice().iter().map(|&x| libm::exp(x)).collect())
    }

    pub fn param_count(&self) -> usize {
        4 + self.q_scale.len() + usize::from(self.log_noise.is_some())
    }

    pub fn bind(&self, g: &mut Graph) -> LayerVars {
        let vars = self
            .params()
            .into_iter()
            .map(|p| g.param(p.clone()))
            .collect::<Vec<_>>();
        self.vars_from(&vars)
    }

    /// Interprets `vars` (in `params()` order) as this layer's handles.
    pub fn vars_from(&self, vars: &[Var]) -> LayerVars {
        let h = self.q_scale.len();
        LayerVars {
            inducing: vars[0],
            kernel: KernelVars {
                log_lengthscales: vars[1],
                log_amplitude: vars[2],
            },
            q_mean: vars[3],
            q_scale: vars[4..4 + h].to_vec(),
            log_noise: self.log_noise.as_ref().map(|_| vars[4 + h]),
        }
    }

    fn mean_at(&self, g: &mut Graph, x: Var) -> Result<Option<Var>> {
        match &self.mean_fn {
            MeanFunction::Zero => Ok(None),
            MeanFunction::Linear(w) => {
                let w = g.constant(w.clone());
                Ok(Some(g.matmul(x, w)?))
            }
        }
    }

    pub fn prior(&self, g: &mut Graph, lv: &LayerVars) -> Result<LayerPrior> {
        let m = self.num_inducing();
        let kzz = kernel_matrix(g, lv.kernel, lv.inducing, lv.inducing)?;
        let kzz = if self.jitter > 0.0 {
            let j = g.constant(Mat::from_fn(
                m,
                m,
                |i, k| if i == k { self.jitter } else { 0.0 },
            ));
            g.add(kzz, j)?
        } else {
            kzz
        };
        let lz = g.cholesky(kzz)?;
        let eye = g.constant(Mat::identity(m));
        let linv = g.solve_tri(lz, eye, false)?;
        let kinv = g.matmul_t(linv, true, linv, false)?;
        let diff = match self.mean_at(g, lv.inducing)? {
            Some(mz) => g.sub(lv.q_mean, mz)?,
            None => lv.q_mean,
        };
        let v = g.matmul(linv, diff)?;
        let alpha = g.matmul_t(linv, true, v, false)?;
        let mut w = Vec::with_capacity(lv.q_scale.len());
        let mut ls = Vec::with_capacity(lv.q_scale.len());
        let mut precision = Vec::with_capacity(lv.q_scale.len());
        for &s in &lv.q_scale {
            let l = g.tril(s);
            let wh = g.matmul(linv, l)?;
            let c = g.matmul_t(linv, true, wh, false)?;
            let cct = g.matmul_t(c, false, c, true)?;
            precision.push(g.sub(kinv, cct)?);
            w.push(wh);
            ls.push(l);
        }
        Ok(LayerPrior {
            lz,
            v,
            w,
            ls,
            alpha,
            precision,
        })
    }

    /// Predictive means and variances (`n x H` each) at the rows of `x`.
    pub fn marginals(
        &self,
        g: &mut Graph,
        lv: &LayerVars,
        prior: &LayerPrior,
        x: Var,
    ) -> Result<(Var, Var)> {
        let (n, d) = g.shape(x);
        if d != self.input_dim() {
            return Err(Error::Shape {
                op: "layer input",
                left: (n, d),
                right: (n, self.input_dim()),
            });
        }
        let kzx = kernel_matrix(g, lv.kernel, lv.inducing, x)?;
        let mut mean = g.matmul_t(kzx, true, prior.alpha, false)?;
        if let Some(mx) = self.mean_at(g, x)? {
            mean = g.add(mean, mx)?;
        }
        let amp = g.exp(lv.kernel.log_amplitude);
        let kdiag = g.broadcast(amp, 1, n)?;
        let mut cols = Vec::with_capacity(prior.precision.len());
        for &p in &prior.precision {
            let pk = g.matmul(p, kzx)?;
            let quad = g.mul(kzx, pk)?;
            let quad = g.sum_axis(quad, Axis::Rows);
            let var = g.sub(kdiag, quad)?;
            cols.push(g.transpose(var));
        }
        let var = if cols.len() == 1 {
            cols[0]
        } else {
            g.hstack(&cols)?
        };
        let var = g.clamp_min(var, MIN_VARIANCE);
        Ok((mean, var))
    }

    /// `Σ_h KL[q(u_h) ‖ p(u_h)]`.
    pub fn kl(&self, g: &mut Graph, prior: &LayerPrior) -> Result<Var> {
        let m = self.num_inducing() as f64;
        let h = prior.w.len() as f64;
        let mut total = g.sum_squares(prior.v, Axis::Rows);
        total = g.sum(total);
        for (&w, &l) in prior.w.iter().zip(&prior.ls) {
            let tr = g.sum_squares(w, Axis::Rows);
            let tr = g.sum(tr);
            total = g.add(total, tr)?;
            let d = g.diag(l)?;
            let d2 = g.square(d);
            let ld = g.log(d2);
            let ld = g.sum(ld);
            total = g.sub(total, ld)?;
        }
        let dz = g.diag(prior.lz)?;
        let ldz = g.log(dz);
        let ldz = g.sum(ldz);
        let ldz = g.scale(ldz, 2.0 * h);
        total = g.add(total, ldz)?;
        let total = g.offset(total, -m * h);
        Ok(g.scale(total, 0.5))
    }

    /// Standalone evaluation of the predictive marginals.
    pub fn predictive_marginals(&self, x: &Mat) -> Result<MarginalGaussians> {
        let mut g = Graph::new();
        let lv = self.bind(&mut g);
        let prior = self.prior(&mut g, &lv)?;
        let mut mean = Mat::zeros(x.rows(), self.output_dim());
        let mut variance = mean.clone();
        const CHUNK: usize = 1024;
        let mut start = 0;
        while start < x.rows() {
            let end = (start + CHUNK).min(x.rows());
            let rows: Vec<usize> = (start..end).collect();
            let mut sub = g.clone();
            let xv = sub.constant(x.select_rows(&rows));
            let (mu, var) = self.marginals(&mut sub, &lv, &prior, xv)?;
            for (k, i) in rows.into_iter().enumerate() {
                mean.row_mut(i).copy_from_slice(sub.value(mu).row(k));
                variance.row_mut(i).copy_from_slice(sub.value(var).row(k));
            }
            start = end;
        }
        Ok(MarginalGaussians { mean, variance })
    }
}

impl Trainable for SparseGPLayer {
    fn params(&self) -> Vec<&Mat> {
        let mut p = alloc::vec![
            &self.inducing,
            &self.kernel.log_lengthscales,
            &self.kernel.log_amplitude,
            &self.q_mean
        ];
        p.extend(self.q_scale.iter());
        if let Some(n) = &self.log_noise {
            p.push(n);
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p = alloc::vec![
            &mut self.inducing,
            &mut self.kernel.log_lengthscales,
            &mut self.kernel.log_amplitude,
            &mut self.q_mean
        ];
        p.extend(self.q_scale.iter_mut());
        if let Some(n) = &mut self.log_noise {
            p.push(n);
        }
        p
    }
}

/// `Σ mask ⊙ E_{N(f|μ,var)}[log N(y | f, σ²)]`, where the expectation is
/// `log N(y | μ, σ²) − var / (2σ²)`. `noise` is `1 x H` log variances.
pub fn expected_log_lik(
    g: &mut Graph,
    y: Var,
    mean: Var,
    var: Var,
    log_noise: Var,
    mask: Var,
) -> Result<Var> {
    let (n, h) = g.shape(mean);
    let resid = g.sub(y, mean)?;
    let r2 = g.square(resid);
    let t = g.add(r2, var)?;
    let neg = g.scale(log_noise, -1.0);
    let inv = g.exp(neg);
    let inv = g.broadcast(inv, n, h)?;
    let t = g.mul(t, inv)?;
    let ln = g.broadcast(log_noise, n, h)?;
    let t = g.add(t, ln)?;
    let t = g.scale(t, -0.5);
    let t = g.offset(t, -0.5 * libm::log(2.0 * PI));
    let t = g.mul(t, mask)?;
    Ok(g.sum(t))
}

/// Observation data of a batch: targets with `NaN` replaced by 0 and a 0/1 mask.
pub(crate) fn masked_targets(y: &Mat) -> (Mat, Mat) {
    (
        y.map(|v| if v.is_nan() { 0.0 } else { v }),
        observed_indicator(y),
    )
}

/// Masked minibatch ELBO `(N/n) Σ_obs E[log p(y|f)] − Σ_h KL`.
pub fn svgp_elbo(
    g: &mut Graph,
    layer: &SparseGPLayer,
    lv: &LayerVars,
    x_batch: &Mat,
    y_batch: &Mat,
    n_total: usize,
) -> Result<Var> {
    let n = x_batch.rows();
    if n_total < n {
        return Err(contract("n_total is smaller than the batch"));
    }
    if y_batch.shape() != (n, layer.output_dim()) {
        return Err(Error::Shape {
            op: "svgp_elbo targets",
            left: y_batch.shape(),
            right: (n, layer.output_dim()),
        });
    }
    let log_noise = lv
        .log_noise
        .ok_or_else(|| contract("layer has no likelihood noise"))?;
    let prior = layer.prior(g, lv)?;
    let x = g.constant(x_batch.clone());
    let (mean, var) = layer.marginals(g, lv, &prior, x)?;
    let (y, mask) = masked_targets(y_batch);
    let y = g.constant(y);
    let mask = g.constant(mask);
    let ell = expected_log_lik(g, y, mean, var, log_noise, mask)?;
    let ell = g.scale(ell, n_total as f64 / n as f64);
    let kl = layer.kl(g, &prior)?;
    g.sub(ell, kl)
}

/// Exact GP regression predictive mean and variance (dense, `O(n³)`).
pub fn exact_gp_oracle(
    x: &Mat,
    y: &[f64],
    kernel: &RbfArdKernel,
    noise: f64,
    x_test: &Mat,
) -> Result<MarginalGaussians> {
    let l = exact_factor(x, kernel, noise)?;
    let ks = kernel.matrix(x, x_test)?;
    let alpha = linalg::solve_lower_transpose(&l, &solve_lower(&l, &Mat::column(y.to_vec())));
    let mean = linalg::matmul_t(&ks, true, &alpha, false);
    let v = solve_lower(&l, &ks);
    let amp = kernel.amplitude();
    let variance = Mat::from_fn(x_test.rows(), 1, |j, _| {
        amp - (0..v.rows()).map(|i| v[(i, j)] * v[(i, j)]).sum::<f64>()
    });
    Ok(MarginalGaussians { mean, variance })
}

/// `log N(y | 0, K + σ²I)`.
pub fn exact_log_marginal(x: &Mat, y: &[f64], kernel: &RbfArdKernel, noise: f64) -> Result<f64> {
    let l = exact_factor(x, kernel, noise)?;
    let a = solve_lower(&l, &Mat::column(y.to_vec()));
    let n = y.len() as f64;
    let logdet: f64 = l.diagonal().iter().map(|d| libm::log(*d)).sum();
    Ok(-0.5 * a.as_slice().iter().map(|v| v * v).sum::<f64>()
        - logdet
        - 0.5 * n * libm::log(2.0 * PI))
}

fn exact_factor(x: &Mat, kernel: &RbfArdKernel, noise: f64) -> Result<Mat> {
    if x.rows() > 2000 {
        return Err(contract("exact GP oracle is limited to 2000 points"));
    }
    let mut k = kernel.matrix(x, x)?;
    for i in 0..k.rows() {
        k[(i, i)] += noise;
    }
    let f = linalg::cholesky_exact(&k)?;
    Ok(f)
}

/// Inducing inputs: k-means centres of the distinct rows of `x`, or all
/// distinct rows when there are no more than `m` of them.
pub fn init_inducing(x: &Mat, m: usize, rng: &mut SeededRng) -> Mat {
    use rand::seq::SliceRandom;
    use rand::Rng;

    let mut distinct: Vec<usize> = Vec::new();
    {
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.sort_by(|&a, &b| {
            x.row(a)
                .iter()
                .zip(x.row(b))
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        for i in order {
            if distinct.last().is_none_or(|&p| x.row(p) != x.row(i)) {
                distinct.push(i);
            }
        }
    }
    if distinct.len() <= m {
        distinct.shuffle(rng);
        return x.select_rows(&distinct);
    }
    let pts = x.select_rows(&distinct);
    let n = pts.rows();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();

    // k-means++ seeding
    let mut centres: Vec<usize> = alloc::vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = (0..n)
        .map(|i| dist2(pts.row(i), pts.row(centres[0])))
        .collect();
    while centres.len() < m {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &b) in best.iter().enumerate() {
                if t < b {
                    pick = i;
                    break;
                }
                t -= b;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centres.push(next);
        for i in 0..n {
            best[i] = best[i].min(dist2(pts.row(i), pts.row(next)));
        }
    }
    let mut c = pts.select_rows(&centres);
    let d = x.cols();
    let mut assign = alloc::vec![0usize; n];
    for _ in 0..10 {
        let mut changed = false;
        for i in 0..n {
            let (k, _) = (0..m).map(|k| (k, dist2(pts.row(i), c.row(k)))).fold(
                (0, f64::INFINITY),
                |acc, e| if e.1 < acc.1 { e } else { acc },
            );
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
        }
        let mut sums = Mat::zeros(m, d);
        let mut counts = alloc::vec![0usize; m];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, v) in sums.row_mut(assign[i]).iter_mut().zip(pts.row(i)) {
                *s += v;
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                for (cv, s) in c.row_mut(k).iter_mut().zip(sums.row(k)) {
                    *cv = s / counts[k] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    c
}

/// Configuration of the single-layer SVGP imputer.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvgpConfig {
    pub inducing: usize,
    pub optim: OptimConfig,
    pub noise_init: f64,
    pub seed: u64,
}

impl Default for SvgpConfig {
    fn default() -> Self {
        SvgpConfig {
            inducing: 100,
            optim: OptimConfig::default(),
            noise_init: 1e-2,
            seed: 1,
        }
    }
}

/// Trained `D → D` SVGP imputer.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvgpImputer {
    pub layer: SparseGPLayer,
    /// Training column means used for pre-imputation.
    pub column_means: Vec<f64>,
}

pub(crate) fn check_training_data(data: &Mat) -> Result<Vec<f64>> {
    if data.rows() == 0 || data.cols() == 0 {
        return Err(contract("empty dataset"));
    }
    let means = observed_column_means(data);
    if let Some(j) = means.iter().position(|m| m.is_nan()) {
        return Err(contract(alloc::format!(
            "column {j} has no observed values"
        )));
    }
    Ok(means)
}

/// Fits a `D`-output SVGP that maps the mean-imputed attributes to
/// themselves; only observed cells enter the likelihood.
pub fn fit_svgp(data: &Mat, config: &SvgpConfig) -> Result<(SvgpImputer, TrainReport)> {
    let means = check_training_data(data)?;
    let x_hat = fill_missing(data, &means);
    let mut rng = seeded(config.seed);
    let z = init_inducing(&x_hat, config.inducing, &mut rng);
    let mut layer = SparseGPLayer::new(z, data.cols(), MeanFunction::Zero, Some(config.noise_init));
    let n_total = data.rows();
    let report = maximize(
        &mut layer,
        n_total,
        &config.optim,
        &mut rng,
        |layer, g, vars, batch, _| {
            let lv = layer.vars_from(vars);
            svgp_elbo(
                g,
                layer,
                &lv,
                &x_hat.select_rows(batch),
                &data.select_rows(batch),
                n_total,
            )
        },
    )?;
    Ok((
        SvgpImputer {
            layer,
            column_means: means,
        },
        report,
    ))
}

impl SvgpImputer {
    /// Predictive means for missing cells of `data` (pre-imputed with the training means).
    pub fn impute(&self, data: &Mat) -> Result<ImputationResult> {
        if data.cols() != self.column_means.len() {
            return Err(Error::Shape {
                op: "svgp impute",
                left: data.shape(),
                right: (data.rows(), self.column_means.len()),
            });
        }
        let x_hat = fill_missing(data, &self.column_means);
        let rows: Vec<usize> = (0..data.rows())
            .filter(|&i| data.row(i).iter().any(|x| x.is_nan()))
            .collect();
        let marg = self.layer.predictive_marginals(&x_hat.select_rows(&rows))?;
        let noise = self.layer.noise_variances().unwrap_or_default();
        let mut cells = Vec::new();
        for (k, &i) in rows.iter().enumerate() {
            for j in 0..data.cols() {
                if data[(i, j)].is_nan() {
                    let s2 = noise.get(j).copied().unwrap_or(0.0);
                    cells.push(ImputedCell {
                        row: i,
                        col: j,
                        mixture: GaussianMixture::single(
                            marg.mean[(k, j)],
                            marg.variance[(k, j)] + s2,
                        ),
                    });
                }
            }
        }
        Ok(ImputationResult::assemble(data, cells, &self.column_means))
    }
}
