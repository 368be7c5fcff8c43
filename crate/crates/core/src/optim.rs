//! Adam and the shared stochastic-ELBO training loop.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensorgrad::{Graph, Var};
use crate::Mat;

/// Optimisation schedule shared by every GP model.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Record the ELBO estimate every `log_every` iterations (0 disables).
    pub log_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            iterations: 10_000,
            batch_size: 100,
            learning_rate: 0.01,
            log_every: 100,
        }
    }
}

/// A model whose parameters are a fixed, ordered list of matrices.
pub trait Trainable {
    fn params(&self) -> Vec<&Mat>;
    fn params_mut(&mut self) -> Vec<&mut Mat>;

    /// Binds every parameter as a differentiable leaf, in `params()` order.
    fn bind_params(&self, g: &mut Graph) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| g.param(p.clone()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Gradient-ascent step (the objective is maximised).
    pub fn ascend(&mut self, params: &mut [&mut Mat], grads: &[Mat]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads
                .iter()
                .map(|g| Mat::zeros(g.rows(), g.cols()))
                .collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let it = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice().iter_mut()));
            for ((p, &g), (m, v)) in it {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p += self.learning_rate * mhat / (libm::sqrt(vhat) + self.epsilon);
            }
        }
    }
}

/// Epoch-wise shuffled mini-batches over `0..n`.
#[derive(Clone, Debug)]
pub struct MiniBatcher {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl MiniBatcher {
    pub fn new(n: usize, batch: usize) -> Self {
        MiniBatcher {
            order: (0..n).collect(),
            pos: n,
            batch: batch.clamp(1, n.max(1)),
        }
    }

    pub fn next_batch(&mut self, rng: &mut SeededRng) -> Vec<usize> {
        let n = self.order.len();
        if self.batch >= n {
            return self.order.clone();
        }
        if self.pos + self.batch > n {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let b = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        b
    }
}

/// ELBO estimates recorded during training.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub curve: Vec<(usize, f64)>,
    pub final_elbo: f64,
}

/// Runs Adam on a stochastic objective.
///
/// `objective(model, graph, vars, batch, rng)` must return a scalar node
/// built from `vars`, which are the model parameters bound in order.
pub fn maximize<T, F>(
    model: &mut T,
    n_total: usize,
    cfg: &OptimConfig,
    rng: &mut SeededRng,
    mut objective: F,
) -> Result<TrainReport>
where
    T: Trainable,
    F: FnMut(&T, &mut Graph, &[Var], &[usize], &mut SeededRng) -> Result<Var>,
{
    let mut adam = Adam::new(cfg.learning_rate);
    let mut batcher = MiniBatcher::new(n_total, cfg.batch_size);
    let mut report = TrainReport::default();
    let mut last_finite = f64::NAN;
    for it in 0..cfg.iterations {
        let batch = batcher.next_batch(rng);
        let mut g = Graph::new();
        let vars = model.bind_params(&mut g);
        let root = objective(model, &mut g, &vars, &batch, rng)?;
        let elbo = g.value(root).to_scalar();
        if !elbo.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("ELBO estimate {elbo}, last finite value {last_finite}"),
            });
        }
        let grads = g.gradient(root, &vars)?;
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("non-finite gradient for parameter block {bad}, ELBO {elbo}"),
            });
        }
        last_finite = elbo;
        if cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
            report.curve.push((it, elbo));
        }
        let mut params = model.params_mut();
        adam.ascend(&mut params, &grads);
    }
    report.final_elbo = last_finite;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    struct Quadratic {
        x: Mat,
    }

    impl Trainable for Quadratic {
        fn params(&self) -> Vec<&Mat> {
            alloc::vec![&self.x]
        }
        fn params_mut(&mut self) -> Vec<&mut Mat> {
            alloc::vec![&mut self.x]
        }
    }

    #[test]
    fn adam_climbs_concave_objective() {
        let mut q = Quadratic {
            x: Mat::row_vector(alloc::vec![3.0, -2.0]),
        };
        let cfg = OptimConfig {
            iterations: 3000,
            batch_size: 1,
            learning_rate: 0.05,
            log_every: 0,
        };
        let mut rng = seeded(0);
        let rep = maximize(&mut q, 1, &cfg, &mut rng, |_, g, v, _, _| {
            let t = g.offset(v[0], -1.0);
            let s = g.sum_squares(t, crate::tensorgrad::Axis::Rows);
            let s = g.sum(s);
            Ok(g.scale(s, -1.0))
        })
        .unwrap();
        assert!(rep.final_elbo > -1e-6);
        assert!(q.x.max_abs_diff(&Mat::row_vector(alloc::vec![1.0, 1.0])) < 1e-3);
    }

    #[test]
    fn divergence_is_reported() {
        let mut q = Quadratic {
            x: Mat::scalar(-1.0),
        };
        let cfg = OptimConfig {
            iterations: 5,
            ..OptimConfig::default()
        };
        let err = maximize(&mut q, 1, &cfg, &mut seeded(0), |_, g, v, _, _| {
            let l = g.log(v[0]);
            Ok(g.sum(l))
        })
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { iteration: 0, .. }));
    }

    #[test]
    fn minibatches_cover_epoch() {
        let mut b = MiniBatcher::new(10, 5);
        let mut rng = seeded(1);
        let mut seen: Vec<usize> = b.next_batch(&mut rng);
        seen.extend(b.next_batch(&mut rng));
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(
            MiniBatcher::new(3, 100).next_batch(&mut rng),
            alloc::vec![0, 1, 2]
        );
    }
}
