//! Per-position foreground classifier: a single-output linear map over each
//! descriptor followed by a sigmoid, trained with binary cross entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, FeatureMap, ProbMask};

#[derive(Debug, Clone, PartialEq)]
pub struct PixelHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl PixelHead {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("head needs at least one weight"));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("head parameters must be finite"));
        }
        Ok(Self { weights, bias })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, descriptor: &[f32]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(descriptor)
                .map(|(w, &f)| w * f as f64)
                .sum::<f64>()
    }

    fn check_depth(&self, features: &FeatureMap) -> Result<()> {
        if features.depth() != self.depth() {
            return Err(Error::invalid(format!(
                "feature depth {} does not match head depth {}",
                features.depth(),
                self.depth()
            )));
        }
        Ok(())
    }
}

/// Seeded uniform weights in `[-1/sqrt(d), 1/sqrt(d)]`, zero bias.
pub fn init_head(depth: usize, seed: u64) -> Result<PixelHead> {
    if depth == 0 {
        return Err(Error::invalid("head depth must be at least 1"));
    }
    let bound = 1.0 / (depth as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..depth).map(|_| rng.random_range(-bound..=bound)).collect();
    PixelHead::new(weights, 0.0)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross entropy of one logit against a {0, 1} target without overflow.
pub fn logit_bce(z: f64, target: f64) -> f64 {
    z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
}

pub fn head_forward(head: &PixelHead, features: &FeatureMap) -> Result<ProbMask> {
    head.check_depth(features)?;
    let probs = features.descriptors().map(|d| sigmoid(head.logit(d))).collect();
    ProbMask::new(features.height(), features.width(), probs)
}

/// Mean binary cross entropy between probabilities and a binary target.
pub fn bce_loss(pred: &ProbMask, target: &BinaryMask) -> Result<f64> {
    if pred.height() != target.height() || pred.width() != target.width() {
        return Err(Error::invalid(format!(
            "prediction {}x{} and target {}x{} differ in size",
            pred.height(),
            pred.width(),
            target.height(),
            target.width()
        )));
    }
    let total: f64 = pred
        .values()
        .iter()
        .zip(target.bits())
        .map(|(&p, &y)| {
            if y {
                -p.max(f64::MIN_POSITIVE).ln()
            } else {
                -(-p.min(1.0 - f64::EPSILON)).ln_1p()
            }
        })
        .sum();
    Ok(total / pred.values().len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image_id: String,
    pub features: FeatureMap,
    pub mask: BinaryMask,
}

impl TrainSample {
    pub fn new(image_id: impl Into<String>, features: FeatureMap, mask: BinaryMask) -> Result<Self> {
        let image_id = image_id.into();
        if features.height() != mask.height() || features.width() != mask.width() {
            return Err(Error::invalid(format!(
                "image {image_id}: feature grid {}x{} and mask {}x{} differ",
                features.height(),
                features.width(),
                mask.height(),
                mask.width()
            )));
        }
        Ok(Self {
            image_id,
            features,
            mask,
        })
    }
}

/// Summed logit loss and summed (p - y) moments for one image.
struct ImageStats {
    loss: f64,
    grad_w: Vec<f64>,
    grad_b: f64,
    positions: usize,
}

fn image_stats(head: &PixelHead, sample: &TrainSample, with_grad: bool) -> ImageStats {
    let mut stats = ImageStats {
        loss: 0.0,
        grad_w: if with_grad { vec![0.0; head.depth()] } else { Vec::new() },
        grad_b: 0.0,
        positions: sample.features.positions(),
    };
    for (desc, y) in sample.features.descriptors().zip(sample.mask.as_targets()) {
        let z = head.logit(desc);
        stats.loss += logit_bce(z, y);
        if with_grad {
            let r = sigmoid(z) - y;
            stats.grad_b += r;
            for (g, &f) in stats.grad_w.iter_mut().zip(desc) {
                *g += r * f as f64;
            }
        }
    }
    stats
}

fn check_batch(head: &PixelHead, batch: &[&TrainSample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    batch
        .iter()
        .try_for_each(|s| head.check_depth(&s.features))
}

/// Gradient of the batch mean cross entropy plus `weight_decay/2 * |w|^2`.
/// The last element is the bias gradient, which carries no decay.
pub fn bce_grad(head: &PixelHead, batch: &[&TrainSample], weight_decay: f64) -> Result<Vec<f64>> {
    check_batch(head, batch)?;
    let stats: Vec<ImageStats> = batch.par_iter().map(|s| image_stats(head, s, true)).collect();
    let n: usize = stats.iter().map(|s| s.positions).sum();
    let mut grad = vec![0.0; head.depth() + 1];
    for s in &stats {
        for (g, v) in grad.iter_mut().zip(&s.grad_w) {
            *g += v;
        }
        grad[head.depth()] += s.grad_b;
    }
    for (i, g) in grad.iter_mut().enumerate() {
        *g /= n as f64;
        if i < head.depth() {
            *g += weight_decay * head.weights[i];
        }
    }
    Ok(grad)
}

/// Batch mean cross entropy computed from logits, plus the decay penalty.
pub fn objective(head: &PixelHead, batch: &[&TrainSample], weight_decay: f64) -> Result<f64> {
    check_batch(head, batch)?;
    let stats: Vec<ImageStats> = batch.par_iter().map(|s| image_stats(head, s, false)).collect();
    let n: usize = stats.iter().map(|s| s.positions).sum();
    let loss = stats.iter().map(|s| s.loss).sum::<f64>() / n as f64;
    let penalty = 0.5 * weight_decay * head.weights.iter().map(|w| w * w).sum::<f64>();
    Ok(loss + penalty)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Images per minibatch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epochs between learning-rate decays.
    pub decay_period: usize,
    pub decay_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The large-scale recipe: batch 256, lr 1e-3 with momentum 0.9,
    /// weight decay 1e-4, step decay every 4 of 12 epochs.
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 12,
            decay_period: 4,
            decay_factor: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("train config: {m}")));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        if self.decay_period == 0 {
            return fail("decay_period must be at least 1");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return fail("decay_factor must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_period) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: PixelHead,
    /// Mean per-position loss over the whole training set after each epoch.
    pub loss_trace: Vec<f64>,
}

fn dataset_loss(head: &PixelHead, samples: &[&TrainSample]) -> Result<f64> {
    objective(head, samples, 0.0)
}

/// Minibatch SGD with classical momentum from a seeded initial head.
pub fn train_head(dataset: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome> {
    let depth = dataset
        .first()
        .ok_or_else(|| Error::invalid("training set is empty"))?
        .features
        .depth();
    let init = init_head(depth, config.seed)?;
    train_head_from(init, dataset, config)
}

pub fn train_head_from(
    init: PixelHead,
    dataset: &[TrainSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut samples: Vec<&TrainSample> = dataset.iter().collect();
    samples.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    check_batch(&init, &samples)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut head = init;
    let mut velocity = vec![0.0; head.depth() + 1];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| samples[i]).collect();
            let grad = bce_grad(&head, &batch, config.weight_decay)?;
            for (v, g) in velocity.iter_mut().zip(&grad) {
                *v = config.momentum * *v - lr * g;
            }
            let d = head.depth();
            for (w, v) in head.weights.iter_mut().zip(&velocity[..d]) {
                *w += v;
            }
            head.bias += velocity[d];
        }
        let loss = dataset_loss(&head, &samples)?;
        log::debug!("epoch {} lr {lr:e} loss {loss:.6}", epoch + 1);
        loss_trace.push(loss);
    }
    if head.weights.iter().any(|w| !w.is_finite()) || !head.bias.is_finite() {
        return Err(Error::invalid(
            "training diverged to non-finite parameters; lower the learning rate",
        ));
    }
    Ok(TrainOutcome { head, loss_trace })
}
