//! Reverse-mode gradients of the three ELBOs against central finite differences.

use mgp_core::dgp::{dgp_elbo, DgpNetwork, FinalExpectation};
use mgp_core::mgp::{mgp_elbo, order_missing_attributes, ChainNoise, MgpNetwork, OrderDirection};
use mgp_core::optim::Trainable;
use mgp_core::rng::{seeded, standard_normal};
use mgp_core::svgp::{init_inducing, svgp_elbo, MeanFunction, SparseGPLayer};
use mgp_core::tensorgrad::{Graph, Var};
use mgp_core::{Mat, Result};
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-3;

fn toy(seed: u64) -> (Mat, Mat) {
    let mut rng = seeded(seed);
    let x = Mat::from_fn(20, 3, |_, _| rng.random_range(-1.5..1.5));
    let mut y = Mat::from_fn(20, 3, |i, j| {
        (x[(i, (j + 1) % 3)] * 1.3).sin() + 0.3 * x[(i, j)]
    });
    for i in 0..20 {
        if i % 4 == 1 {
            y[(i, i % 3)] = f64::NAN;
        }
    }
    (x, y)
}

fn perturb<T: Trainable>(model: &mut T, seed: u64) {
    let mut rng = seeded(seed);
    for p in model.params_mut() {
        for v in p.as_mut_slice() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
}

/// Worst per-block relative error `‖fd − ad‖ / max(‖fd‖, ‖ad‖)`.
fn check<T: Trainable>(model: &mut T, f: impl Fn(&T, &mut Graph, &[Var]) -> Result<Var>) -> f64 {
    let mut g = Graph::new();
    let vars = model.bind_params(&mut g);
    let root = f(model, &mut g, &vars).unwrap();
    let ad = g.gradient(root, &vars).unwrap();
    let eval = |m: &T| {
        let mut g = Graph::new();
        let vars = m.bind_params(&mut g);
        let r = f(m, &mut g, &vars).unwrap();
        g.value(r).to_scalar()
    };
    let mut worst: f64 = 0.0;
    for (b, grad) in ad.iter().enumerate() {
        let mut num = 0.0;
        let mut den: f64 = 0.0;
        for k in 0..grad.len() {
            let orig = model.params()[b].as_slice()[k];
            model.params_mut()[b].as_mut_slice()[k] = orig + H;
            let up = eval(model);
            model.params_mut()[b].as_mut_slice()[k] = orig - H;
            let down = eval(model);
            model.params_mut()[b].as_mut_slice()[k] = orig;
            let fd = (up - down) / (2.0 * H);
            let a = grad.as_slice()[k];
            num += (fd - a) * (fd - a);
            den = den.max(fd * fd).max(a * a);
        }
        if den > 1e-20 {
            worst = worst.max((num / den).sqrt());
        }
    }
    worst
}

#[test]
fn svgp_elbo_gradient() {
    let (x, y) = toy(1);
    let mut rng = seeded(2);
    let z = init_inducing(&x, 5, &mut rng);
    let mut layer = SparseGPLayer::new(z, 3, MeanFunction::Zero, Some(0.1));
    perturb(&mut layer, 3);
    let err = check(&mut layer, |l, g, v| {
        svgp_elbo(g, l, &l.vars_from(v), &x, &y, 40)
    });
    assert!(err <= TOL, "relative error {err}");
}

#[test]
fn dgp_elbo_gradient() {
    let (x, y) = toy(4);
    let mut rng = seeded(5);
    let z = init_inducing(&x, 5, &mut rng);
    for expectation in [FinalExpectation::ClosedForm, FinalExpectation::Sampled] {
        let mut net = DgpNetwork::new(z.clone(), 3, 3, 3, 0.1).unwrap();
        net.final_expectation = expectation;
        // keep Cholesky diagonals well away from zero so log|L_ii| is smooth at step H
        for layer in &mut net.layers {
            for s in &mut layer.q_scale {
                *s = Mat::from_fn(5, 5, |i, j| if i == j { 0.3 } else { 0.0 });
            }
        }
        perturb(&mut net, 6);
        let noise = net
            .draw_noise(20, 2, expectation == FinalExpectation::Sampled, &mut rng)
            .unwrap();
        let err = check(&mut net, |n, g, v| {
            dgp_elbo(g, n, &n.vars_from(v), &x, &y, 20, &noise)
        });
        assert!(err <= TOL, "{expectation:?}: relative error {err}");
    }
}

#[test]
fn mgp_elbo_gradient() {
    let (_, y) = toy(7);
    let ordering = order_missing_attributes(&y, OrderDirection::Ascending);
    assert_eq!(ordering.permutation.len(), 3);
    let (x_hat, means) = mgp_core::mgp::initial_impute(&y).unwrap();
    let missing = y.map(|v| if v.is_nan() { 1.0 } else { 0.0 });
    let mut rng = seeded(8);
    let mut net = MgpNetwork::new(ordering, &x_hat, means, true, 5, 0.1, &mut rng).unwrap();
    perturb(&mut net, 9);
    let noise = ChainNoise {
        samples: 2,
        eps: (0..3).map(|_| standard_normal(&mut rng, 40, 1)).collect(),
    };
    let target: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
    let err = check(&mut net, |n, g, v| {
        mgp_elbo(
            g,
            n,
            &n.vars_from(v),
            &x_hat,
            &missing,
            Some(&target),
            30,
            &noise,
        )
    });
    assert!(err <= TOL, "relative error {err}");
}
