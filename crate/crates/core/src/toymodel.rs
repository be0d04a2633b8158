//! A minimal max-pooled point classifier with hand-written backpropagation.
//!
//! `logits = W2ᵀ · maxpool_i(relu(W1ᵀ p_i + b1)) + b2`
//!
//! The model is small enough to train on synthetic shapes in seconds and
//! provides exact input gradients for saliency. Max-pool ties route the
//! gradient to the lowest point index.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::mixup::{point_mixup, rs_mix, sage_mix, MixParams, DEFAULT_RSMIX_RADIUS};
use crate::pointcloud::{LabeledCloud, Point3, PointCloud, SoftLabel};
use crate::saliency::gradient_saliency;
use crate::sampling::{sample_beta, split_seed, Rng};
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TinyPointNet {
    hidden: usize,
    classes: usize,
    /// `3 × hidden`, row-major by input coordinate.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `hidden × classes`, row-major by hidden unit.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(m: &TinyPointNet) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Loss with its gradients for one labelled cloud.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub params: Gradients,
    /// `∂loss/∂p_i` for every input point.
    pub inputs: Vec<Point3>,
}

struct Forward {
    logits: Vec<f64>,
    pooled: Vec<f64>,
    /// Point index chosen by the max-pool for each hidden unit.
    winner: Vec<usize>,
    /// Pre-activation of the winner, used for the relu mask.
    winner_pre: Vec<f64>,
}

impl TinyPointNet {
    /// All-zero parameters.
    pub fn zeros(hidden: usize, classes: usize) -> Self {
        Self {
            hidden,
            classes,
            w1: vec![0.0; 3 * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * classes],
            b2: vec![0.0; classes],
        }
    }

    /// Uniform `[-k, k]` initialization with `k = 1/sqrt(fan_in)`.
    pub fn init(hidden: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if hidden == 0 || classes == 0 {
            return Err(Error::invalid("hidden width and class count must be positive"));
        }
        let mut m = Self::zeros(hidden, classes);
        let k1 = 1.0 / 3f64.sqrt();
        let k2 = 1.0 / (hidden as f64).sqrt();
        for w in m.w1.iter_mut().chain(m.b1.iter_mut()) {
            *w = rng.uniform_range(-k1, k1);
        }
        for w in m.w2.iter_mut().chain(m.b2.iter_mut()) {
            *w = rng.uniform_range(-k2, k2);
        }
        Ok(m)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Parameter tensors in the order `w1, b1, w2, b2`.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Zeroes the classification head, making logits independent of the input.
    pub fn zero_head(&mut self) {
        self.w2.fill(0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn forward_cached(&self, cloud: &PointCloud) -> Forward {
        let h = self.hidden;
        let mut pooled = vec![f64::NEG_INFINITY; h];
        let mut winner = vec![0usize; h];
        let mut winner_pre = vec![0.0; h];
        let (wx, rest) = self.w1.split_at(h);
        let (wy, wz) = rest.split_at(h);
        for (i, p) in cloud.points().iter().enumerate() {
            for k in 0..h {
                let pre = wx[k] * p.x + wy[k] * p.y + wz[k] * p.z + self.b1[k];
                let act = pre.max(0.0);
                // strict comparison keeps the lowest index on ties
                if act > pooled[k] {
                    pooled[k] = act;
                    winner[k] = i;
                    winner_pre[k] = pre;
                }
            }
        }
        let mut logits = self.b2.clone();
        for k in 0..h {
            let g = pooled[k];
            if g != 0.0 {
                let row = &self.w2[k * self.classes..(k + 1) * self.classes];
                for (l, w) in logits.iter_mut().zip(row) {
                    *l += w * g;
                }
            }
        }
        Forward {
            logits,
            pooled,
            winner,
            winner_pre,
        }
    }

    pub fn forward(&self, cloud: &PointCloud) -> Vec<f64> {
        self.forward_cached(cloud).logits
    }

    /// Predicted class (lowest index on ties).
    pub fn predict(&self, cloud: &PointCloud) -> usize {
        let logits = self.forward(cloud);
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        best
    }

    fn check_label(&self, label: &SoftLabel) -> Result<()> {
        if label.classes() != self.classes {
            return Err(Error::invalid(format!(
                "label has {} classes, model has {}",
                label.classes(),
                self.classes
            )));
        }
        Ok(())
    }

    /// Cross-entropy of `softmax(logits)` against the soft target.
    pub fn loss(&self, cloud: &PointCloud, label: &SoftLabel) -> Result<f64> {
        self.check_label(label)?;
        Ok(cross_entropy(&self.forward(cloud), label.probs()).0)
    }

    /// Loss and exact reverse-mode gradients for parameters and inputs.
    pub fn loss_and_gradients(&self, cloud: &PointCloud, label: &SoftLabel) -> Result<LossGrad> {
        self.check_label(label)?;
        let fwd = self.forward_cached(cloud);
        let (loss, dlogits) = cross_entropy(&fwd.logits, label.probs());
        let (h, c) = (self.hidden, self.classes);

        let mut grads = Gradients::zeros_like(self);
        grads.b2.copy_from_slice(&dlogits);
        let mut dpooled = vec![0.0; h];
        for k in 0..h {
            let row = &self.w2[k * c..(k + 1) * c];
            let grow = &mut grads.w2[k * c..(k + 1) * c];
            let mut acc = 0.0;
            for j in 0..c {
                grow[j] = fwd.pooled[k] * dlogits[j];
                acc += row[j] * dlogits[j];
            }
            dpooled[k] = acc;
        }

        let mut inputs = vec![Point3::ORIGIN; cloud.len()];
        for k in 0..h {
            if fwd.winner_pre[k] <= 0.0 {
                continue;
            }
            let d = dpooled[k];
            let i = fwd.winner[k];
            let p = cloud.points()[i];
            grads.w1[k] += d * p.x;
            grads.w1[h + k] += d * p.y;
            grads.w1[2 * h + k] += d * p.z;
            grads.b1[k] += d;
            inputs[i] = inputs[i] + Point3::new(self.w1[k], self.w1[h + k], self.w1[2 * h + k]) * d;
        }
        Ok(LossGrad {
            loss,
            params: grads,
            inputs,
        })
    }

    fn sgd_step(&mut self, grads: &Gradients, step: f64) {
        for (param, grad) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            for (w, g) in param.iter_mut().zip(grad) {
                *w -= step * g;
            }
        }
    }
}

/// Returns the loss and `∂loss/∂logits`.
fn cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let mass: f64 = target.iter().sum();
    let loss = target.iter().zip(logits).map(|(y, z)| y * (lse - z)).sum();
    let grad = logits
        .iter()
        .zip(target)
        .map(|(z, y)| (z - lse).exp() * mass - y)
        .collect();
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Augmentation {
    #[default]
    None,
    PointMixup,
    RsMix,
    SageMix,
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Augmentation::None),
            "pointmixup" => Ok(Augmentation::PointMixup),
            "rsmix" => Ok(Augmentation::RsMix),
            "sagemix" => Ok(Augmentation::SageMix),
            _ => Err(Error::invalid(format!("unknown augmentation {s:?}"))),
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Augmentation::None => "none",
            Augmentation::PointMixup => "pointmixup",
            Augmentation::RsMix => "rsmix",
            Augmentation::SageMix => "sagemix",
        })
    }
}

/// When gradient saliency is refreshed during saliency-guided training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SaliencyRefresh {
    /// From the current model before every batch.
    #[default]
    PerBatch,
    /// Once per epoch for the whole training set.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: usize,
    pub augmentation: Augmentation,
    pub mix_params: MixParams,
    pub rsmix_radius: (f64, f64),
    pub saliency_refresh: SaliencyRefresh,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            augmentation: Augmentation::None,
            mix_params: MixParams::default(),
            rsmix_radius: DEFAULT_RSMIX_RADIUS,
            saliency_refresh: SaliencyRefresh::PerBatch,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::invalid("batch size and hidden width must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        self.mix_params.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Mean training loss of each epoch.
    pub train_loss: Vec<f64>,
    /// Test accuracy before training (index 0) and after each epoch.
    pub test_accuracy: Vec<f64>,
}

impl Metrics {
    /// Overall accuracy of the final model.
    pub fn final_accuracy(&self) -> f64 {
        *self.test_accuracy.last().expect("accuracy before training is always recorded")
    }
}

/// Fraction of clouds whose predicted class equals the label's argmax.
pub fn evaluate(model: &TinyPointNet, data: &[LabeledCloud]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .par_iter()
        .filter(|s| model.predict(&s.cloud) == s.label.argmax())
        .count();
    correct as f64 / data.len() as f64
}

fn class_count(data: &[LabeledCloud]) -> Result<usize> {
    let classes = data
        .first()
        .ok_or_else(|| Error::invalid("training set is empty"))?
        .label
        .classes();
    if data.iter().any(|s| s.label.classes() != classes) {
        return Err(Error::invalid("inconsistent class counts in dataset"));
    }
    Ok(classes)
}

fn with_gradient_saliency(model: &TinyPointNet, sample: &LabeledCloud) -> Result<LabeledCloud> {
    let sal = gradient_saliency(model, &sample.cloud, &sample.label)?;
    sample.clone().with_saliency(sal)
}

/// Builds the augmented batch. Pair `j` mixes `batch[j]` with
/// `batch[partner[j]]` using a generator derived from `(batch_seed, j)`, so the
/// result does not depend on how rayon schedules the pairs.
fn augment_batch(
    model: &TinyPointNet,
    batch: &[&LabeledCloud],
    config: &TrainConfig,
    batch_seed: u64,
    partner: &[usize],
) -> Result<Vec<LabeledCloud>> {
    let per_batch_saliency =
        config.augmentation == Augmentation::SageMix && config.saliency_refresh == SaliencyRefresh::PerBatch;
    let prepared: Vec<LabeledCloud> = if per_batch_saliency {
        batch
            .par_iter()
            .map(|s| with_gradient_saliency(model, s))
            .collect::<Result<_>>()?
    } else {
        batch.iter().map(|s| (*s).clone()).collect()
    };
    (0..batch.len())
        .into_par_iter()
        .map(|j| {
            let mut rng = Rng::child(batch_seed, j as u64);
            let a = &prepared[j];
            let b = &prepared[partner[j]];
            let mixed = match config.augmentation {
                Augmentation::None => return Ok(a.clone()),
                Augmentation::PointMixup => {
                    let lambda = sample_beta(config.mix_params.theta, &mut rng)?;
                    point_mixup(a, b, lambda)?
                }
                Augmentation::RsMix => rs_mix(a, b, config.rsmix_radius, &mut rng)?,
                Augmentation::SageMix => sage_mix(a, b, &config.mix_params, &mut rng)?,
            };
            Ok(LabeledCloud::new(mixed.cloud, mixed.label))
        })
        .collect()
}

/// Mini-batch SGD on mean cross-entropy. With an augmentation selected, each
/// batch is paired with a shuffled copy of itself and only the mixed samples
/// are trained on.
pub fn train(train_set: &[LabeledCloud], test_set: &[LabeledCloud], config: &TrainConfig) -> Result<(TinyPointNet, Metrics)> {
    config.validate()?;
    let classes = class_count(train_set)?;
    if !test_set.is_empty() && test_set.iter().any(|s| s.label.classes() != classes) {
        return Err(Error::invalid("test set class count differs from training set"));
    }
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut model = TinyPointNet::init(config.hidden, classes, &mut rng)?;
    let mut metrics = Metrics {
        train_loss: Vec::with_capacity(config.epochs),
        test_accuracy: vec![evaluate(&model, test_set)],
    };

    for epoch in 0..config.epochs {
        let epoch_data: Vec<LabeledCloud>;
        let source: &[LabeledCloud] =
            if config.augmentation == Augmentation::SageMix && config.saliency_refresh == SaliencyRefresh::PerEpoch {
                epoch_data = train_set
                    .par_iter()
                    .map(|s| with_gradient_saliency(&model, s))
                    .collect::<Result<_>>()?;
                &epoch_data
            } else {
                train_set
            };

        let order = rng.permutation(source.len());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledCloud> = chunk.iter().map(|&i| &source[i]).collect();
            let batch_seed = split_seed(rng.next_u64(), epoch as u64);
            let inputs = if config.augmentation == Augmentation::None {
                batch.iter().map(|s| (*s).clone()).collect()
            } else {
                let partner = rng.permutation(batch.len());
                augment_batch(&model, &batch, config, batch_seed, &partner)?
            };

            let results: Vec<LossGrad> = inputs
                .par_iter()
                .map(|s| model.loss_and_gradients(&s.cloud, &s.label))
                .collect::<Result<_>>()?;
            let mut total = Gradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            for r in &results {
                total.add_assign(&r.params);
                batch_loss += r.loss;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite loss in epoch {}",
                    epoch + 1
                )));
            }
            loss_sum += batch_loss;
            model.sgd_step(&total, config.learning_rate / results.len() as f64);
            if !model.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite parameters in epoch {}",
                    epoch + 1
                )));
            }
        }
        metrics.train_loss.push(loss_sum / source.len() as f64);
        metrics.test_accuracy.push(evaluate(&model, test_set));
    }
    Ok((model, metrics))
}
