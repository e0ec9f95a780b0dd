//! Finite-difference gradient oracle.

use iaa_core::model::{init_model, loss_and_grad, ModelParams, RawExample};
use iaa_core::ScoreDistribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;

/// Per-parameter relative error, with the denominator floored at 1e-6 so that
/// parameters whose true gradient is zero compare absolutely.
pub fn max_relative_error(p: &ModelParams, ex: &RawExample, r: f64) -> f64 {
    let (_, grad) = loss_and_grad(p, ex, r).unwrap();
    let analytic = grad.flatten();
    let base = p.flatten();
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut x = base.clone();
        x[k] = base[k] + EPS;
        probe.set_flat(&x);
        let up = loss_and_grad(&probe, ex, r).unwrap().0;
        x[k] = base[k] - EPS;
        probe.set_flat(&x);
        let down = loss_and_grad(&probe, ex, r).unwrap().0;
        let numeric = (up - down) / (2.0 * EPS);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (ModelParams, RawExample) {
    let fd = rng.random_range(1..5);
    let td = rng.random_range(1..5);
    let hidden = rng.random_range(1..6);
    let bins = rng.random_range(2..8);
    let mut p = init_model(fd, td, hidden, bins, rng.random()).unwrap();
    // non-zero biases exercise every term
    let mut flat = p.flatten();
    for v in flat.iter_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    p.set_flat(&flat);
    let weights: Vec<f64> = (0..bins).map(|_| rng.random::<f64>() + 0.01).collect();
    let target = if rng.random_bool(0.5) {
        ScoreDistribution::from_weights(&weights).unwrap()
    } else {
        ScoreDistribution::one_hot(bins, rng.random_range(0..bins))
    };
    let ex = RawExample {
        features: (0..fd).map(|_| rng.random_range(-2.0..2.0)).collect(),
        traits: (0..td).map(|_| rng.random_range(0.0..1.0)).collect(),
        target,
    };
    (p, ex)
}
