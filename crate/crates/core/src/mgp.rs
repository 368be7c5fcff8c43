//! Chained missing-value GPs.
//!
//! One single-output sparse GP per attribute that has missing cells, visited
//! in order of the attributes' standard deviations. Layer `l` predicts its
//! attribute from every other column of the current matrix; its missing cells
//! are then overwritten by reparameterised samples before the next layer runs,
//! so later layers see earlier imputations. An optional target layer reads the
//! fully imputed matrix.

use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::imputation::{
    fill_missing, observed_column_means, GaussianMixture, ImputationResult, ImputedCell,
};
use crate::optim::{maximize, OptimConfig, TrainReport, Trainable};
use crate::rng::{seeded, standard_normal, SeededRng};
use crate::svgp::{
    expected_log_lik, init_inducing, LayerPrior, LayerVars, MeanFunction, SparseGPLayer,
};
use crate::tensorgrad::{Graph, Var};
use crate::Mat;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum OrderDirection {
    /// Lowest standard deviation first.
    #[default]
    Ascending,
    Descending,
}

/// Imputation order over the attributes that contain missing values.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttributeOrdering {
    pub permutation: Vec<usize>,
    /// Standard deviation of every attribute (not just the permuted ones).
    pub stds: Vec<f64>,
}

impl AttributeOrdering {
    /// Sorts the flagged attributes by `stds`, ties by column index.
    pub fn from_stds(
        stds: &[f64],
        missing_bearing: &[bool],
        direction: OrderDirection,
    ) -> Result<Self> {
        if stds.len() != missing_bearing.len() {
            return Err(Error::Shape {
                op: "attribute ordering",
                left: (1, stds.len()),
                right: (1, missing_bearing.len()),
            });
        }
        let mut permutation: Vec<usize> = (0..stds.len()).filter(|&j| missing_bearing[j]).collect();
        permutation.sort_by(|&a, &b| {
            let o = stds[a].total_cmp(&stds[b]);
            let o = match direction {
                OrderDirection::Ascending => o,
                OrderDirection::Descending => o.reverse(),
            };
            o.then(a.cmp(&b))
        });
        Ok(AttributeOrdering {
            permutation,
            stds: stds.to_vec(),
        })
    }
}

/// Population standard deviation of the observed cells of each column.
pub fn observed_column_stds(raw: &Mat) -> Vec<f64> {
    let means = observed_column_means(raw);
    (0..raw.cols())
        .map(|j| {
            let (s, n) = (0..raw.rows())
                .map(|i| raw[(i, j)])
                .filter(|x| !x.is_nan())
                .fold((0.0, 0usize), |(s, n), x| {
                    (s + (x - means[j]) * (x - means[j]), n + 1)
                });
            if n == 0 {
                f64::NAN
            } else {
                libm::sqrt(s / n as f64)
            }
        })
        .collect()
}

/// Orders the columns of `raw` (pre-standardisation, `NaN` = missing) that
/// have at least one missing cell.
pub fn order_missing_attributes(raw: &Mat, direction: OrderDirection) -> AttributeOrdering {
    let missing: Vec<bool> = (0..raw.cols())
        .map(|j| (0..raw.rows()).any(|i| raw[(i, j)].is_nan()))
        .collect();
    AttributeOrdering::from_stds(&observed_column_stds(raw), &missing, direction)
        .expect("lengths agree by construction")
}

/// Column-mean pre-imputation. Returns the completed matrix and the means.
pub fn initial_impute(data: &Mat) -> Result<(Mat, Vec<f64>)> {
    let means = observed_column_means(data);
    if let Some(j) = means.iter().position(|m| m.is_nan()) {
        return Err(contract(alloc::format!(
            "column {j} has no observed values"
        )));
    }
    Ok((fill_missing(data, &means), means))
}

/// The layer that models an optional target variable from all attributes.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetLayer {
    pub layer: SparseGPLayer,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MgpNetwork {
    pub ordering: AttributeOrdering,
    /// `impute_layers[l]` predicts column `ordering.permutation[l]`.
    pub impute_layers: Vec<SparseGPLayer>,
    pub target: Option<TargetLayer>,
    /// Training column means used for pre-imputation.
    pub initial_impute: Vec<f64>,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Every column index except `skip`.
pub fn other_columns(d: usize, skip: usize) -> Vec<usize> {
    (0..d).filter(|&j| j != skip).collect()
}

impl MgpNetwork {
    /// Builds the layers with inducing inputs drawn from the mean-imputed
    /// training matrix `x_hat` restricted to each layer's input columns.
    pub fn new(
        ordering: AttributeOrdering,
        x_hat: &Mat,
        column_means: Vec<f64>,
        with_target: bool,
        inducing: usize,
        noise_init: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let d = x_hat.cols();
        if column_means.len() != d || ordering.stds.len() != d {
            return Err(contract(
                "ordering, means and data disagree on the attribute count",
            ));
        }
        if ordering.permutation.iter().any(|&c| c >= d) {
            return Err(contract("ordering refers to a column outside the data"));
        }
        if d < 2 && !ordering.permutation.is_empty() {
            return Err(contract("chained imputation needs at least two attributes"));
        }
        let impute_layers = ordering
            .permutation
            .iter()
            .map(|&c| {
                let z = init_inducing(&x_hat.select_cols(&other_columns(d, c)), inducing, rng);
                SparseGPLayer::new(z, 1, MeanFunction::Zero, Some(noise_init))
            })
            .collect();
        let target = with_target.then(|| TargetLayer {
            layer: SparseGPLayer::new(
                init_inducing(x_hat, inducing, rng),
                1,
                MeanFunction::Zero,
                Some(noise_init),
            ),
        });
        Ok(MgpNetwork {
            ordering,
            impute_layers,
            target,
            initial_impute: column_means,
            train_samples: 20,
            test_samples: 20,
        })
    }

    pub fn attribute_count(&self) -> usize {
        self.initial_impute.len()
    }

    pub fn layer_for_column(&self, col: usize) -> Option<usize> {
        self.ordering.permutation.iter().position(|&c| c == col)
    }

    pub fn vars_from(&self, vars: &[Var]) -> MgpVars {
        let mut at = 0;
        let mut take = |layer: &SparseGPLayer| {
            let n = layer.param_count();
            let lv = layer.vars_from(&vars[at..at + n]);
            at += n;
            lv
        };
        let impute = self.impute_layers.iter().map(&mut take).collect();
        let target = self.target.as_ref().map(|t| take(&t.layer));
        MgpVars { impute, target }
    }

    pub fn bind(&self, g: &mut Graph) -> MgpVars {
        let vars = self.bind_params(g);
        self.vars_from(&vars)
    }

    /// Noise for `samples` passes over `n` rows, one `(K n) x 1` block per
    /// imputation layer.
    pub fn draw_noise(&self, n: usize, samples: usize, rng: &mut SeededRng) -> Result<ChainNoise> {
        if samples == 0 {
            return Err(contract("number of Monte Carlo samples must be at least 1"));
        }
        Ok(ChainNoise {
            samples,
            eps: self
                .impute_layers
                .iter()
                .map(|_| standard_normal(rng, n * samples, 1))
                .collect(),
        })
    }
}

impl Trainable for MgpNetwork {
    fn params(&self) -> Vec<&Mat> {
        let mut p: Vec<&Mat> = self.impute_layers.iter().flat_map(|l| l.params()).collect();
        if let Some(t) = &self.target {
            p.extend(t.layer.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p: Vec<&mut Mat> = self
            .impute_layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        if let Some(t) = &mut self.target {
            p.extend(t.layer.params_mut());
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct MgpVars {
    pub impute: Vec<LayerVars>,
    pub target: Option<LayerVars>,
}

/// Pre-drawn standard normals for the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainNoise {
    pub samples: usize,
    pub eps: Vec<Mat>,
}

/// Graph handles produced by one chained pass over `K` stacked copies of a batch.
#[derive(Clone, Debug)]
pub struct ChainPass {
    /// `X̃^(0), …, X̃^(D_m)`, each `(K n) x D`.
    pub states: Vec<Var>,
    /// Per imputation layer, marginal mean and variance `(K n) x 1`.
    pub marginals: Vec<(Var, Var)>,
    pub priors: Vec<LayerPrior>,
}

/// Runs the imputation layers in order. `x_hat` is the mean-imputed batch and
/// `missing` its `0/1` missing indicator; both are tiled `noise.samples` times.
pub fn chain_forward(
    g: &mut Graph,
    net: &MgpNetwork,
    vars: &MgpVars,
    x_hat: &Mat,
    missing: &Mat,
    noise: &ChainNoise,
) -> Result<ChainPass> {
    let d = net.attribute_count();
    if x_hat.cols() != d || missing.shape() != x_hat.shape() {
        return Err(Error::Shape {
            op: "chain_forward",
            left: x_hat.shape(),
            right: (x_hat.rows(), d),
        });
    }
    let k = noise.samples;
    let rows = x_hat.rows() * k;
    let tiled = x_hat.tile_rows(k);
    let tiled_missing = missing.tile_rows(k);
    // rows whose input differs between passes (an earlier layer sampled one of their cells)
    let mut varying = alloc::vec![false; x_hat.rows()];
    let mut state = g.constant(tiled.clone());
    let mut states = alloc::vec![state];
    let mut marginals = Vec::with_capacity(net.impute_layers.len());
    let mut priors = Vec::with_capacity(net.impute_layers.len());
    for (l, (layer, lv)) in net.impute_layers.iter().zip(&vars.impute).enumerate() {
        let c = net.ordering.permutation[l];
        let prior = layer.prior(g, lv)?;
        let (gather, expand) = distinct_rows(x_hat.rows(), k, &varying);
        let src = match &gather {
            Some(rows) => g.select_rows(state, rows)?,
            None => state,
        };
        let input = g.select_cols(src, &other_columns(d, c))?;
        let (mut mean, mut var) = layer.marginals(g, lv, &prior, input)?;
        if let Some(e) = &expand {
            mean = g.select_rows(mean, e)?;
            var = g.select_rows(var, e)?;
        }
        marginals.push((mean, var));
        for (i, v) in varying.iter_mut().enumerate() {
            *v |= missing[(i, c)] != 0.0;
        }
        priors.push(prior);

        let miss_col = Mat::from_fn(rows, 1, |i, _| tiled_missing[(i, c)]);
        if miss_col.as_slice().iter().all(|&m| m == 0.0) {
            states.push(state);
            continue;
        }
        let sd = g.sqrt(var);
        let e = g.constant(noise.eps[l].zip_map(&miss_col, |e, m| e * m));
        let draw = g.mul(sd, e)?;
        let mean_part = {
            let m = g.constant(miss_col.clone());
            g.mul(mean, m)?
        };
        let kept = g.constant(Mat::from_fn(rows, 1, |i, _| {
            if tiled_missing[(i, c)] == 0.0 {
                tiled[(i, c)]
            } else {
                0.0
            }
        }));
        let column = g.add(kept, mean_part)?;
        let column = g.add(column, draw)?;
        let mut parts = Vec::with_capacity(3);
        if c > 0 {
            parts.push(g.select_cols(state, &(0..c).collect::<Vec<_>>())?);
        }
        parts.push(column);
        if c + 1 < d {
            parts.push(g.select_cols(state, &(c + 1..d).collect::<Vec<_>>())?);
        }
        state = g.hstack(&parts)?;
        states.push(state);
    }
    Ok(ChainPass {
        states,
        marginals,
        priors,
    })
}

/// Rows of the `K`-fold tiled batch that must be evaluated, and the map
/// back to all `K n` rows. Rows that do not vary are evaluated once.
/// `None` when no reduction is possible.
fn distinct_rows(n: usize, k: usize, varying: &[bool]) -> (Option<Vec<usize>>, Option<Vec<usize>>) {
    if k == 1 || varying.iter().all(|&v| v) {
        return (None, None);
    }
    let mut gather = Vec::new();
    let mut first = alloc::vec![0usize; n];
    for (i, f) in first.iter_mut().enumerate() {
        *f = gather.len();
        gather.push(i);
    }
    let mut expand = Vec::with_capacity(n * k);
    expand.extend(0..n);
    for s in 1..k {
        for i in 0..n {
            if varying[i] {
                expand.push(gather.len());
                gather.push(s * n + i);
            } else {
                expand.push(first[i]);
            }
        }
    }
    (Some(gather), Some(expand))
}

/// Minibatch ELBO: `(N/n)(target term + masked per-layer terms) − Σ KL`,
/// each likelihood term averaged over the `K` passes.
#[allow(clippy::too_many_arguments)]
pub fn mgp_elbo(
    g: &mut Graph,
    net: &MgpNetwork,
    vars: &MgpVars,
    x_hat: &Mat,
    missing: &Mat,
    target: Option<&[f64]>,
    n_total: usize,
    noise: &ChainNoise,
) -> Result<Var> {
    let n = x_hat.rows();
    let k = noise.samples;
    if k == 0 {
        return Err(contract("number of Monte Carlo samples must be at least 1"));
    }
    if n_total < n {
        return Err(contract("n_total is smaller than the batch"));
    }
    let pass = chain_forward(g, net, vars, x_hat, missing, noise)?;
    let tiled = x_hat.tile_rows(k);
    let tiled_missing = missing.tile_rows(k);
    let mut loglik = g.scalar(0.0);
    for (l, &(mean, var)) in pass.marginals.iter().enumerate() {
        let c = net.ordering.permutation[l];
        let y = g.constant(Mat::from_fn(n * k, 1, |i, _| tiled[(i, c)]));
        let observed = g.constant(Mat::from_fn(n * k, 1, |i, _| 1.0 - tiled_missing[(i, c)]));
        let log_noise = vars.impute[l]
            .log_noise
            .expect("imputation layers carry noise");
        let term = expected_log_lik(g, y, mean, var, log_noise, observed)?;
        loglik = g.add(loglik, term)?;
    }
    let mut kl_total = g.scalar(0.0);
    for (layer, prior) in net.impute_layers.iter().zip(&pass.priors) {
        let kl = layer.kl(g, prior)?;
        kl_total = g.add(kl_total, kl)?;
    }
    match (&net.target, &vars.target, target) {
        (Some(t), Some(tv), Some(y)) => {
            if y.len() != n {
                return Err(Error::Shape {
                    op: "mgp_elbo target",
                    left: (y.len(), 1),
                    right: (n, 1),
                });
            }
            let prior = t.layer.prior(g, tv)?;
            let last = *pass.states.last().expect("chain has an initial state");
            let (mean, var) = t.layer.marginals(g, tv, &prior, last)?;
            let yt = Mat::from_fn(n * k, 1, |i, _| y[i % n]);
            let (yv, obs) = crate::svgp::masked_targets(&yt);
            let yv = g.constant(yv);
            let obs = g.constant(obs);
            let log_noise = tv.log_noise.expect("target layer carries noise");
            let term = expected_log_lik(g, yv, mean, var, log_noise, obs)?;
            loglik = g.add(loglik, term)?;
            let kl = t.layer.kl(g, &prior)?;
            kl_total = g.add(kl_total, kl)?;
        }
        (None, _, None) => {}
        (Some(_), _, None) => {
            return Err(contract(
                "network has a target layer but no target values were given",
            ))
        }
        _ => {
            return Err(contract(
                "target values given to a network without a target layer",
            ))
        }
    }
    let loglik = g.scale(loglik, n_total as f64 / (n as f64 * k as f64));
    g.sub(loglik, kl_total)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MgpConfig {
    pub inducing: usize,
    pub samples: usize,
    pub optim: OptimConfig,
    pub noise_init: f64,
    pub direction: OrderDirection,
    pub seed: u64,
}

impl Default for MgpConfig {
    fn default() -> Self {
        MgpConfig {
            inducing: 100,
            samples: 20,
            optim: OptimConfig::default(),
            noise_init: 1e-2,
            direction: OrderDirection::Ascending,
            seed: 1,
        }
    }
}

/// Trains the chain on `data` (standardised, `NaN` = missing) with the given
/// ordering. `target`, when present, adds the final regression layer.
pub fn train_mgp(
    data: &Mat,
    ordering: AttributeOrdering,
    target: Option<&[f64]>,
    config: &MgpConfig,
) -> Result<(MgpNetwork, TrainReport)> {
    if data.rows() == 0 || data.cols() == 0 {
        return Err(contract("empty dataset"));
    }
    let (x_hat, means) = initial_impute(data)?;
    let missing = data.map(|x| if x.is_nan() { 1.0 } else { 0.0 });
    let mut rng = seeded(config.seed);
    let mut net = MgpNetwork::new(
        ordering,
        &x_hat,
        means,
        target.is_some(),
        config.inducing,
        config.noise_init,
        &mut rng,
    )?;
    net.train_samples = config.samples;
    net.test_samples = config.samples;
    let n_total = data.rows();
    let report = maximize(
        &mut net,
        n_total,
        &config.optim,
        &mut rng,
        |net, g, vars, batch, rng| {
            let mv = net.vars_from(vars);
            let noise = net.draw_noise(batch.len(), net.train_samples, rng)?;
            let y: Option<Vec<f64>> = target.map(|t| batch.iter().map(|&i| t[i]).collect());
            mgp_elbo(
                g,
                net,
                &mv,
                &x_hat.select_rows(batch),
                &missing.select_rows(batch),
                y.as_deref(),
                n_total,
                &noise,
            )
        },
    )?;
    Ok((net, report))
}

/// Mixture predictions for every missing cell of `data`. Rows are
/// pre-imputed with the training means; columns without a layer keep that mean.
pub fn impute(
    net: &MgpNetwork,
    data: &Mat,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<ImputationResult> {
    let d = net.attribute_count();
    if data.cols() != d {
        return Err(Error::Shape {
            op: "mgp impute",
            left: data.shape(),
            right: (data.rows(), d),
        });
    }
    let x_hat = fill_missing(data, &net.initial_impute);
    let missing = data.map(|x| if x.is_nan() { 1.0 } else { 0.0 });
    let rows: Vec<usize> = (0..data.rows())
        .filter(|&i| data.row(i).iter().any(|x| x.is_nan()))
        .collect();
    let noise_vars: Vec<f64> = net
        .impute_layers
        .iter()
        .map(|l| l.noise_variances().map_or(0.0, |v| v[0]))
        .collect();
    let mut cells = Vec::new();
    let mut g0 = Graph::new();
    let vars = net.bind(&mut g0);
    for chunk in rows.chunks(100) {
        let noise = net.draw_noise(chunk.len(), samples, rng)?;
        let mut g = g0.clone();
        let xb = x_hat.select_rows(chunk);
        let mb = missing.select_rows(chunk);
        let pass = chain_forward(&mut g, net, &vars, &xb, &mb, &noise)?;
        let n = chunk.len();
        for (r, &i) in chunk.iter().enumerate() {
            for j in 0..d {
                if !data[(i, j)].is_nan() {
                    continue;
                }
                if let Some(l) = net.layer_for_column(j) {
                    let (mean, var) = pass.marginals[l];
                    let (mv, vv) = (g.value(mean), g.value(var));
                    cells.push(ImputedCell {
                        row: i,
                        col: j,
                        mixture: GaussianMixture {
                            means: (0..samples).map(|k| mv[(k * n + r, 0)]).collect(),
                            variances: (0..samples)
                                .map(|k| vv[(k * n + r, 0)] + noise_vars[l])
                                .collect(),
                        },
                    });
                }
            }
        }
    }
    Ok(ImputationResult::assemble(data, cells, &net.initial_impute))
}
