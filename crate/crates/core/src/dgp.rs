//! Doubly-stochastic deep GPs.
//!
//! Hidden layers are sampled with the reparameterisation `f = μ + ε √σ²`
//! (noise held fixed so gradients flow through `μ` and `σ²`); the final layer
//! carries the Gaussian likelihood. Predictions are equally weighted mixtures
//! over `K` propagated samples.

use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::imputation::{fill_missing, GaussianMixture, ImputationResult, ImputedCell};
use crate::optim::{maximize, OptimConfig, TrainReport, Trainable};
use crate::rng::{seeded, standard_normal, SeededRng};
use crate::svgp::{
    check_training_data, expected_log_lik, init_inducing, masked_targets, LayerPrior, LayerVars,
    MeanFunction, SparseGPLayer,
};
use crate::tensorgrad::{Graph, Var};
use crate::Mat;

/// How the final-layer likelihood expectation is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FinalExpectation {
    /// Gaussian expectation under the final-layer marginal (per hidden sample).
    #[default]
    ClosedForm,
    /// Log-likelihood at a reparameterised final-layer draw.
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DgpNetwork {
    pub layers: Vec<SparseGPLayer>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub final_expectation: FinalExpectation,
}

/// Standard-normal draws for one forward pass, `(K n) x H_l` per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNoise {
    pub samples: usize,
    pub eps: Vec<Mat>,
}

/// One reparameterised pass through the network.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    /// Draws `f̂^(l)` of every layer, `n x H_l`.
    pub draws: Vec<Mat>,
    /// The noise that produced them.
    pub noise: Vec<Mat>,
}

/// `K` Gaussian components per point and output.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePrediction {
    /// `K` matrices of shape `n x H`.
    pub means: Vec<Mat>,
    pub variances: Vec<Mat>,
}

impl MixturePrediction {
    pub fn mixture(&self, i: usize, h: usize) -> GaussianMixture {
        GaussianMixture {
            means: self.means.iter().map(|m| m[(i, h)]).collect(),
            variances: self.variances.iter().map(|v| v[(i, h)]).collect(),
        }
    }

    /// Mixture means (the point predictions).
    pub fn mean(&self) -> Mat {
        let k = self.means.len() as f64;
        let mut out = Mat::zeros(self.means[0].rows(), self.means[0].cols());
        for m in &self.means {
            out.axpy(1.0 / k, m);
        }
        out
    }
}

/// `D_in x H` map copying the first `min(D_in, H)` coordinates.
pub fn identity_projection(input_dim: usize, output_dim: usize) -> Mat {
    Mat::from_fn(input_dim, output_dim, |i, j| if i == j { 1.0 } else { 0.0 })
}

impl DgpNetwork {
    /// `depth` layers: hidden widths `hidden`, identity-like mean functions on
    /// hidden layers, zero mean and Gaussian noise on the `output_dim` final layer.
    pub fn new(
        inducing: Mat,
        hidden: usize,
        output_dim: usize,
        depth: usize,
        noise_init: f64,
    ) -> Result<Self> {
        if depth == 0 || hidden == 0 || output_dim == 0 {
            return Err(contract("deep GP needs positive depth and widths"));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut z = inducing;
        for l in 0..depth {
            if l + 1 == depth {
                layers.push(SparseGPLayer::new(
                    z.clone(),
                    output_dim,
                    MeanFunction::Zero,
                    Some(noise_init),
                ));
            } else {
                let w = identity_projection(z.cols(), hidden);
                let next = z.matmul(&w);
                let mut layer = SparseGPLayer::new(z, hidden, MeanFunction::Linear(w), None);
                // Hidden layers start close to their mean function.
                for s in &mut layer.q_scale {
                    *s = s.map(|x| x * 1e-2);
                }
                layers.push(layer);
                z = next;
            }
        }
        Ok(DgpNetwork {
            layers,
            train_samples: 20,
            test_samples: 20,
            final_expectation: FinalExpectation::ClosedForm,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn vars_from(&self, vars: &[Var]) -> Vec<LayerVars> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for layer in &self.layers {
            let n = layer.param_count();
            out.push(layer.vars_from(&vars[at..at + n]));
            at += n;
        }
        out
    }

    pub fn bind(&self, g: &mut Graph) -> Vec<LayerVars> {
        let vars = self.bind_params(g);
        self.vars_from(&vars)
    }

    /// Draws noise for `n` points and `samples` passes. With `include_final`
    /// the last layer also gets a draw.
    pub fn draw_noise(
        &self,
        n: usize,
        samples: usize,
        include_final: bool,
        rng: &mut SeededRng,
    ) -> Result<LayerNoise> {
        if samples == 0 {
            return Err(contract("number of Monte Carlo samples must be at least 1"));
        }
        let sampled = if include_final {
            self.depth()
        } else {
            self.depth() - 1
        };
        let eps = self.layers[..sampled]
            .iter()
            .map(|l| standard_normal(rng, n * samples, l.output_dim()))
            .collect();
        Ok(LayerNoise { samples, eps })
    }
}

impl Trainable for DgpNetwork {
    fn params(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }
}

/// `μ + ε ⊙ √σ²`.
pub fn reparameterize(g: &mut Graph, mean: Var, var: Var, eps: &Mat) -> Result<Var> {
    let sd = g.sqrt(var);
    let e = g.constant(eps.clone());
    let t = g.mul(sd, e)?;
    g.add(mean, t)
}

struct Propagated {
    draws: Vec<Var>,
    final_mean: Var,
    final_var: Var,
}

fn propagate(
    g: &mut Graph,
    net: &DgpNetwork,
    lvs: &[LayerVars],
    priors: &[LayerPrior],
    x: Var,
    noise: &LayerNoise,
) -> Result<Propagated> {
    let last = net.depth() - 1;
    let mut h = x;
    let mut draws = Vec::with_capacity(net.depth());
    for (l, layer) in net.layers.iter().enumerate() {
        let (mean, var) = layer.marginals(g, &lvs[l], &priors[l], h)?;
        if l == last {
            if let Some(eps) = noise.eps.get(l) {
                draws.push(reparameterize(g, mean, var, eps)?);
            }
            return Ok(Propagated {
                draws,
                final_mean: mean,
                final_var: var,
            });
        }
        h = reparameterize(g, mean, var, &noise.eps[l])?;
        draws.push(h);
    }
    unreachable!("network has at least one layer")
}

/// Graph-free sample propagation through a frozen network.
pub fn propagate_sample(net: &DgpNetwork, x: &Mat, rng: &mut SeededRng) -> Result<SamplePath> {
    let noise = net.draw_noise(x.rows(), 1, true, rng)?;
    propagate_with_noise(net, x, &noise)
}

/// Propagation with caller-supplied noise (one pass, a draw for every layer).
pub fn propagate_with_noise(net: &DgpNetwork, x: &Mat, noise: &LayerNoise) -> Result<SamplePath> {
    if x.cols() != net.input_dim() {
        return Err(Error::Shape {
            op: "propagate_sample",
            left: x.shape(),
            right: (x.rows(), net.input_dim()),
        });
    }
    if noise.eps.len() != net.depth() {
        return Err(contract("sample propagation needs noise for every layer"));
    }
    for (e, layer) in noise.eps.iter().zip(&net.layers) {
        if e.shape() != (x.rows(), layer.output_dim()) {
            return Err(Error::Shape {
                op: "propagate noise",
                left: e.shape(),
                right: (x.rows(), layer.output_dim()),
            });
        }
    }
    let mut g = Graph::new();
    let lvs = net.bind(&mut g);
    let priors = priors_of(&mut g, net, &lvs)?;
    let xv = g.constant(x.clone());
    let p = propagate(&mut g, net, &lvs, &priors, xv, noise)?;
    Ok(SamplePath {
        draws: p.draws.iter().map(|&d| g.evaluate(d)).collect(),
        noise: noise.eps.clone(),
    })
}

fn priors_of(g: &mut Graph, net: &DgpNetwork, lvs: &[LayerVars]) -> Result<Vec<LayerPrior>> {
    net.layers
        .iter()
        .zip(lvs)
        .map(|(l, v)| l.prior(g, v))
        .collect()
}

/// Monte Carlo minibatch ELBO with pre-drawn noise (`noise.samples` passes).
pub fn dgp_elbo(
    g: &mut Graph,
    net: &DgpNetwork,
    lvs: &[LayerVars],
    x_batch: &Mat,
    y_batch: &Mat,
    n_total: usize,
    noise: &LayerNoise,
) -> Result<Var> {
    let n = x_batch.rows();
    let k = noise.samples;
    if k == 0 {
        return Err(contract("number of Monte Carlo samples must be at least 1"));
    }
    if n_total < n {
        return Err(contract("n_total is smaller than the batch"));
    }
    if y_batch.shape() != (n, net.output_dim()) {
        return Err(Error::Shape {
            op: "dgp_elbo targets",
            left: y_batch.shape(),
            right: (n, net.output_dim()),
        });
    }
    let priors = priors_of(g, net, lvs)?;
    let x = g.constant(x_batch.tile_rows(k));
    let p = propagate(g, net, lvs, &priors, x, noise)?;
    let (y, mask) = masked_targets(y_batch);
    let y = g.constant(y.tile_rows(k));
    let mask = g.constant(mask.tile_rows(k));
    let log_noise = lvs[net.depth() - 1]
        .log_noise
        .ok_or_else(|| contract("final layer has no likelihood noise"))?;
    let ell = match (net.final_expectation, p.draws.len() == net.depth()) {
        (FinalExpectation::Sampled, true) => {
            let f = p.draws[net.depth() - 1];
            let zero = g.constant(Mat::zeros(n * k, net.output_dim()));
            expected_log_lik(g, y, f, zero, log_noise, mask)?
        }
        (FinalExpectation::Sampled, false) => {
            return Err(contract(
                "sampled final expectation needs noise for the final layer",
            ))
        }
        (FinalExpectation::ClosedForm, _) => {
            expected_log_lik(g, y, p.final_mean, p.final_var, log_noise, mask)?
        }
    };
    let ell = g.scale(ell, n_total as f64 / (n as f64 * k as f64));
    let mut total = ell;
    for (layer, prior) in net.layers.iter().zip(&priors) {
        let kl = layer.kl(g, prior)?;
        total = g.sub(total, kl)?;
    }
    Ok(total)
}

/// Mixture predictions of the final layer; `with_noise` adds the likelihood
/// variance to every component.
pub fn dgp_predict(
    net: &DgpNetwork,
    x: &Mat,
    samples: usize,
    with_noise: bool,
    rng: &mut SeededRng,
) -> Result<MixturePrediction> {
    let noise = net.draw_noise(x.rows(), samples, false, rng)?;
    let mut g = Graph::new();
    let lvs = net.bind(&mut g);
    let priors = priors_of(&mut g, net, &lvs)?;
    let xv = g.constant(x.tile_rows(samples));
    let p = propagate(&mut g, net, &lvs, &priors, xv, &noise)?;
    let mean = g.value(p.final_mean);
    let var = g.value(p.final_var);
    let extra = match (with_noise, net.layers[net.depth() - 1].noise_variances()) {
        (true, Some(s)) => s,
        _ => alloc::vec![0.0; net.output_dim()],
    };
    let n = x.rows();
    let rows = |m: &Mat, k: usize| m.select_rows(&(k * n..(k + 1) * n).collect::<Vec<_>>());
    Ok(MixturePrediction {
        means: (0..samples).map(|k| rows(mean, k)).collect(),
        variances: (0..samples)
            .map(|k| {
                let v = rows(var, k);
                Mat::from_fn(n, v.cols(), |i, j| v[(i, j)] + extra[j])
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DgpConfig {
    pub depth: usize,
    /// Hidden width cap; the width used is `min(D, max_hidden)`.
    pub max_hidden: usize,
    pub inducing: usize,
    pub samples: usize,
    pub optim: OptimConfig,
    pub noise_init: f64,
    pub final_expectation: FinalExpectation,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            depth: 5,
            max_hidden: 30,
            inducing: 100,
            samples: 20,
            optim: OptimConfig::default(),
            noise_init: 1e-2,
            final_expectation: FinalExpectation::ClosedForm,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DgpImputer {
    pub network: DgpNetwork,
    pub column_means: Vec<f64>,
}

/// Trains a `D → … → D` deep GP on mean-imputed inputs with a masked likelihood.
pub fn fit_dgp(data: &Mat, config: &DgpConfig) -> Result<(DgpImputer, TrainReport)> {
    let means = check_training_data(data)?;
    let x_hat = fill_missing(data, &means);
    let mut rng = seeded(config.seed);
    let z = init_inducing(&x_hat, config.inducing, &mut rng);
    let d = data.cols();
    let mut net = DgpNetwork::new(
        z,
        d.min(config.max_hidden),
        d,
        config.depth,
        config.noise_init,
    )?;
    net.train_samples = config.samples;
    net.test_samples = config.samples;
    net.final_expectation = config.final_expectation;
    let n_total = data.rows();
    let sample_final = config.final_expectation == FinalExpectation::Sampled;
    let report = maximize(
        &mut net,
        n_total,
        &config.optim,
        &mut rng,
        |net, g, vars, batch, rng| {
            let lvs = net.vars_from(vars);
            let noise = net.draw_noise(batch.len(), net.train_samples, sample_final, rng)?;
            dgp_elbo(
                g,
                net,
                &lvs,
                &x_hat.select_rows(batch),
                &data.select_rows(batch),
                n_total,
                &noise,
            )
        },
    )?;
    Ok((
        DgpImputer {
            network: net,
            column_means: means,
        },
        report,
    ))
}

impl DgpImputer {
    pub fn impute(&self, data: &Mat, rng: &mut SeededRng) -> Result<ImputationResult> {
        if data.cols() != self.column_means.len() {
            return Err(Error::Shape {
                op: "dgp impute",
                left: data.shape(),
                right: (data.rows(), self.column_means.len()),
            });
        }
        let x_hat = fill_missing(data, &self.column_means);
        let rows: Vec<usize> = (0..data.rows())
            .filter(|&i| data.row(i).iter().any(|x| x.is_nan()))
            .collect();
        let mut cells = Vec::new();
        for chunk in rows.chunks(100) {
            let pred = dgp_predict(
                &self.network,
                &x_hat.select_rows(chunk),
                self.network.test_samples,
                true,
                rng,
            )?;
            for (k, &i) in chunk.iter().enumerate() {
                for j in 0..data.cols() {
                    if data[(i, j)].is_nan() {
                        cells.push(ImputedCell {
                            row: i,
                            col: j,
                            mixture: pred.mixture(k, j),
                        });
                    }
                }
            }
        }
        Ok(ImputationResult::assemble(data, cells, &self.column_means))
    }
}
