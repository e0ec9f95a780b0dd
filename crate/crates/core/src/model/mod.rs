//! Trait-conditioned score-distribution predictor.
//!
//! `concat(features, traits) -> affine -> relu -> affine -> softmax`, trained
//! with the CDF-based EMD loss. Gradients are derived by hand.

mod eval;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use eval::{evaluate, evaluate_with, EvalMode, EvalReport};
pub use train::{train, train_from, TrainConfig, TrainOutcome};

use crate::dataset::{GiaaSample, PiaaSample};
use crate::error::{Error, Result};
use crate::rng;
use crate::scale::ScoreDistribution;
use crate::schema::{TraitDistribution, TraitVector};

/// Anything the model can be trained on.
pub trait Example {
    fn features(&self) -> &[f64];
    fn trait_input(&self) -> &[f64];
    fn target(&self) -> &ScoreDistribution;
}

impl Example for GiaaSample {
    fn features(&self) -> &[f64] {
        &self.features
    }
    fn trait_input(&self) -> &[f64] {
        self.trait_dist.values()
    }
    fn target(&self) -> &ScoreDistribution {
        &self.score_dist
    }
}

impl Example for PiaaSample {
    fn features(&self) -> &[f64] {
        &self.features
    }
    fn trait_input(&self) -> &[f64] {
        self.trait_vec.values()
    }
    fn target(&self) -> &ScoreDistribution {
        &self.score_dist
    }
}

impl AsRef<[f64]> for TraitVector {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}

impl AsRef<[f64]> for TraitDistribution {
    fn as_ref(&self) -> &[f64] {
        self.values()
    }
}

/// Two-layer head weights, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub feature_dim: usize,
    pub trait_dim: usize,
    pub hidden: usize,
    pub bins: usize,
    /// `hidden x (feature_dim + trait_dim)`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `bins x hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(feature_dim: usize, trait_dim: usize, hidden: usize, bins: usize) -> Self {
        let input = feature_dim + trait_dim;
        ModelParams {
            feature_dim,
            trait_dim,
            hidden,
            bins,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; bins * hidden],
            b2: vec![0.0; bins],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.feature_dim, self.trait_dim, self.hidden, self.bins)
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim + self.trait_dim
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// All parameters in `w1, b1, w2, b2` order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn check_shapes(&self) -> Result<()> {
        let expect = [
            self.hidden * self.input_dim(),
            self.hidden,
            self.bins * self.hidden,
            self.bins,
        ];
        for (t, e) in self.tensors().iter().zip(expect) {
            if t.len() != e {
                return Err(Error::DimensionMismatch { expected: e, got: t.len() });
            }
        }
        if self.bins < 2 || self.hidden == 0 {
            return Err(Error::InvalidConfig("model needs bins >= 2 and hidden >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.params.check_shapes()?;
        Ok(ck.params)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: self.clone(),
        }
    }
}

const CHECKPOINT_FORMAT: &str = "iaa-model";
const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub params: ModelParams,
}

/// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
pub fn init_model(feature_dim: usize, trait_dim: usize, hidden: usize, bins: usize, seed: u64) -> Result<ModelParams> {
    if feature_dim + trait_dim == 0 || hidden == 0 || bins < 2 {
        return Err(Error::InvalidConfig(
            "model needs a non-empty input, hidden >= 1 and bins >= 2".into(),
        ));
    }
    let mut p = ModelParams::zeros(feature_dim, trait_dim, hidden, bins);
    let mut rng = rng::substream(seed, "init");
    let input = p.input_dim();
    let a1 = (6.0 / (input + hidden) as f64).sqrt();
    p.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
    let a2 = (6.0 / (hidden + bins) as f64).sqrt();
    p.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
    Ok(p)
}

/// Scratch space for one forward/backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    probs: Vec<f64>,
    grad_probs: Vec<f64>,
    grad_logits: Vec<f64>,
    grad_act: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(p: &ModelParams) -> Self {
        Workspace {
            input: vec![0.0; p.input_dim()],
            pre: vec![0.0; p.hidden],
            act: vec![0.0; p.hidden],
            probs: vec![0.0; p.bins],
            grad_probs: vec![0.0; p.bins],
            grad_logits: vec![0.0; p.bins],
            grad_act: vec![0.0; p.hidden],
        }
    }

    pub(crate) fn probs(&self) -> &[f64] {
        &self.probs
    }
}

fn check_inputs(p: &ModelParams, features: &[f64], traits: &[f64]) -> Result<()> {
    if features.len() != p.feature_dim {
        return Err(Error::DimensionMismatch { expected: p.feature_dim, got: features.len() });
    }
    if traits.len() != p.trait_dim {
        return Err(Error::DimensionMismatch { expected: p.trait_dim, got: traits.len() });
    }
    Ok(())
}

pub(crate) fn forward_into(p: &ModelParams, features: &[f64], traits: &[f64], ws: &mut Workspace) {
    let input = p.input_dim();
    ws.input[..p.feature_dim].copy_from_slice(features);
    ws.input[p.feature_dim..].copy_from_slice(traits);
    for h in 0..p.hidden {
        let row = &p.w1[h * input..(h + 1) * input];
        let z = p.b1[h] + row.iter().zip(&ws.input).map(|(w, x)| w * x).sum::<f64>();
        ws.pre[h] = z;
        ws.act[h] = z.max(0.0);
    }
    let mut max = f64::NEG_INFINITY;
    for k in 0..p.bins {
        let row = &p.w2[k * p.hidden..(k + 1) * p.hidden];
        let z = p.b2[k] + row.iter().zip(&ws.act).map(|(w, a)| w * a).sum::<f64>();
        ws.probs[k] = z;
        max = max.max(z);
    }
    let mut total = 0.0;
    for z in ws.probs.iter_mut() {
        *z = (*z - max).exp();
        total += *z;
    }
    ws.probs.iter_mut().for_each(|z| *z /= total);
}

/// Predicted score distribution for one input.
pub fn forward(p: &ModelParams, features: &[f64], traits: impl AsRef<[f64]>) -> Result<ScoreDistribution> {
    let traits = traits.as_ref();
    p.check_shapes()?;
    check_inputs(p, features, traits)?;
    let mut ws = Workspace::new(p);
    forward_into(p, features, traits, &mut ws);
    ScoreDistribution::new(ws.probs)
        .map_err(|e| Error::InvalidDistribution(format!("model output: {e}")))
}

/// Loss of one example; adds its gradient into `grad`.
pub(crate) fn accumulate(
    p: &ModelParams,
    features: &[f64],
    traits: &[f64],
    target: &[f64],
    r: f64,
    ws: &mut Workspace,
    grad: &mut ModelParams,
) -> f64 {
    forward_into(p, features, traits, ws);
    let d = p.bins;

    // dL/dCDF_k, then suffix sums give dL/dp_j
    let mut cp = 0.0;
    let mut ct = 0.0;
    let mut s = 0.0;
    for k in 0..d {
        cp += ws.probs[k];
        ct += target[k];
        let diff = cp - ct;
        ws.grad_probs[k] = diff;
        s += diff.abs().powf(r);
    }
    let mean = s / d as f64;
    let loss = mean.powf(1.0 / r);
    if mean == 0.0 {
        return 0.0;
    }
    let outer = mean.powf(1.0 / r - 1.0) / d as f64;
    for g in ws.grad_probs.iter_mut() {
        let diff = *g;
        *g = if diff == 0.0 {
            0.0
        } else {
            outer * diff.abs().powf(r - 1.0) * diff.signum()
        };
    }
    for k in (0..d - 1).rev() {
        ws.grad_probs[k] += ws.grad_probs[k + 1];
    }

    // softmax
    let dotp: f64 = ws.probs.iter().zip(&ws.grad_probs).map(|(a, b)| a * b).sum();
    for k in 0..d {
        ws.grad_logits[k] = ws.probs[k] * (ws.grad_probs[k] - dotp);
    }

    // output layer
    ws.grad_act.iter_mut().for_each(|g| *g = 0.0);
    for k in 0..d {
        let gz = ws.grad_logits[k];
        grad.b2[k] += gz;
        let row = k * p.hidden..(k + 1) * p.hidden;
        for ((gw, w), (a, ga)) in grad.w2[row.clone()]
            .iter_mut()
            .zip(&p.w2[row])
            .zip(ws.act.iter().zip(ws.grad_act.iter_mut()))
        {
            *gw += gz * a;
            *ga += gz * w;
        }
    }

    // hidden layer
    let input = p.input_dim();
    for h in 0..p.hidden {
        if ws.pre[h] <= 0.0 {
            continue;
        }
        let gh = ws.grad_act[h];
        grad.b1[h] += gh;
        for (gw, x) in grad.w1[h * input..(h + 1) * input].iter_mut().zip(&ws.input) {
            *gw += gh * x;
        }
    }
    loss
}

/// EMD loss of the prediction against `example`'s target, and its gradient.
pub fn loss_and_grad<E: Example + ?Sized>(p: &ModelParams, example: &E, r: f64) -> Result<(f64, ModelParams)> {
    p.check_shapes()?;
    check_inputs(p, example.features(), example.trait_input())?;
    if example.target().bins() != p.bins {
        return Err(Error::DimensionMismatch { expected: p.bins, got: example.target().bins() });
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidConfig(format!("loss exponent must be >= 1, got {r}")));
    }
    let mut ws = Workspace::new(p);
    let mut grad = p.zeros_like();
    let loss = accumulate(
        p,
        example.features(),
        example.trait_input(),
        example.target().mass(),
        r,
        &mut ws,
        &mut grad,
    );
    Ok((loss, grad))
}

/// Free-standing example, handy for tests and FFI callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExample {
    pub features: Vec<f64>,
    pub traits: Vec<f64>,
    pub target: ScoreDistribution,
}

impl Example for RawExample {
    fn features(&self) -> &[f64] {
        &self.features
    }
    fn trait_input(&self) -> &[f64] {
        &self.traits
    }
    fn target(&self) -> &ScoreDistribution {
        &self.target
    }
}
