use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::NetworkSpec;
use super::layers::softmax_cross_entropy;
use super::model::{images_to_tensor, ModelMetadata, RasterConvention, TrainedModel, NEGATIVE, POSITIVE};
use super::{Mode, Network, Tensor};
use crate::error::{Error, Result};
use crate::topomap::RgbImage;

pub const MAX_EPOCHS_CAP: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Global L2-norm threshold for gradient clipping.
    pub clip_norm: f64,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: MAX_EPOCHS_CAP,
            clip_norm: 1.0,
            patience: 20,
            train_fraction: 0.7,
            validation_fraction: 0.3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.clip_norm > 0.0) {
            return fail(format!("clip threshold {} must be positive", self.clip_norm));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size < 2 {
            return fail("batch size must be at least 2".into());
        }
        if self.max_epochs == 0 || self.max_epochs > MAX_EPOCHS_CAP {
            return fail(format!("max epochs {} outside 1..={MAX_EPOCHS_CAP}", self.max_epochs));
        }
        let fractions_ok = self.train_fraction > 0.0
            && self.validation_fraction > 0.0
            && (self.train_fraction + self.validation_fraction - 1.0).abs() < 1e-9;
        if !fractions_ok {
            return fail(format!(
                "split {}/{} must be positive and sum to 1",
                self.train_fraction, self.validation_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: RgbImage,
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepNorm {
    pub before_clip: f64,
    pub after_clip: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepNorm>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,train_acc,val_acc,train_loss,val_loss")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6}",
                e.epoch, e.train_accuracy, e.validation_accuracy, e.train_loss, e.validation_loss
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Seeded stratified split: each class is shuffled and cut at the training
/// fraction, so both sides keep the class ratio.
pub fn split_indices(labels: &[bool], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = ((idx.len() as f64) * train_fraction).round() as usize;
        let cut = if idx.len() >= 2 { cut.clamp(1, idx.len() - 1) } else { idx.len() };
        train.extend_from_slice(&idx[..cut]);
        val.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn target(positive: bool) -> usize {
    if positive {
        POSITIVE
    } else {
        NEGATIVE
    }
}

/// Mean loss and accuracy (argmax, ties negative) in inference mode.
fn evaluate(net: &Network<f32>, data: &[LabeledImage], idx: &[usize]) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in idx.chunks(64) {
        let imgs: Vec<&RgbImage> = chunk.iter().map(|&i| &data[i].image).collect();
        let targets: Vec<usize> = chunk.iter().map(|&i| target(data[i].positive)).collect();
        let (logits, _) = net.forward(&images_to_tensor(&imgs)?, Mode::Infer)?;
        let (l, _) = softmax_cross_entropy(&logits, &targets)?;
        loss += l as f64 * chunk.len() as f64;
        correct += count_correct(&logits, &targets);
    }
    Ok((loss / idx.len() as f64, correct as f64 / idx.len() as f64))
}

fn count_correct(logits: &Tensor<f32>, targets: &[usize]) -> usize {
    logits
        .data()
        .chunks_exact(2)
        .zip(targets)
        .filter(|(l, &t)| {
            let predicted = if l[POSITIVE] > l[NEGATIVE] { POSITIVE } else { NEGATIVE };
            predicted == t
        })
        .count()
}

/// Global L2 norm of a gradient set, accumulated in f64.
pub fn gradient_norm(grads: &[Tensor<f32>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

/// Momentum SGD state: one velocity tensor per parameter.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    velocity: Vec<Tensor<f32>>,
}

impl Sgd {
    pub fn new(net: &Network<f32>, learning_rate: f64, momentum: f64, clip_norm: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            clip_norm,
            velocity: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// Clips `grads` to the norm threshold, then `v ← μ·v − lr·g`,
    /// `θ ← θ + v`.
    pub fn step(&mut self, net: &mut Network<f32>, grads: &mut [Tensor<f32>]) -> StepNorm {
        let before = gradient_norm(grads);
        if before > self.clip_norm {
            let scale = (self.clip_norm / before) as f32;
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= scale));
        }
        let after = gradient_norm(grads);
        let (mu, lr) = (self.momentum as f32, self.learning_rate as f32);
        for ((p, v), g) in net.params_mut().into_iter().zip(&mut self.velocity).zip(grads.iter()) {
            for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = mu * *vv - lr * gv;
                *pv += *vv;
            }
        }
        StepNorm {
            before_clip: before,
            after_clip: after,
        }
    }
}

/// Trains a fresh network on positive/negative topoplots and returns the
/// best-validation model.
pub fn train(spec: &NetworkSpec, data: &[LabeledImage], cfg: &TrainConfig) -> Result<(TrainedModel, History)> {
    cfg.validate()?;
    spec.validate()?;
    let labels: Vec<bool> = data.iter().map(|d| d.positive).collect();
    let n_pos = labels.iter().filter(|&&p| p).count();
    if n_pos < 2 || data.len() - n_pos < 2 {
        return Err(Error::Data(format!(
            "need at least two examples of each class, got {n_pos} positive and {} negative",
            data.len() - n_pos
        )));
    }
    for (i, d) in data.iter().enumerate() {
        if (d.image.rows, d.image.cols) != (spec.input.rows, spec.input.cols) {
            return Err(Error::Shape(format!(
                "image {i} is {}×{}, network expects {}×{}",
                d.image.rows, d.image.cols, spec.input.rows, spec.input.cols
            )));
        }
    }

    let (train_idx, val_idx) = split_indices(&labels, cfg.train_fraction, cfg.seed);
    let mut net = Network::<f32>::new(spec, cfg.seed)?;
    let mut sgd = Sgd::new(&net, cfg.learning_rate, cfg.momentum, cfg.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut order = train_idx.clone();
    let mut history = History::default();
    let mut best: Option<(f64, Network<f32>)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            // a single-sample batch gives degenerate batchnorm statistics
            if batch.len() < 2 {
                continue;
            }
            let imgs: Vec<&RgbImage> = batch.iter().map(|&i| &data[i].image).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| target(data[i].positive)).collect();
            let (logits, cache) = net.forward(&images_to_tensor(&imgs)?, Mode::Train)?;
            let (loss, mut grads) = net.backward(&logits, &cache, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
            }
            history.steps.push(sgd.step(&mut net, &mut grads));
            net.update_running_stats(&cache);
            loss_sum += loss as f64 * batch.len() as f64;
            correct += count_correct(&logits, &targets);
            seen += batch.len();
        }
        let (val_loss, val_acc) = evaluate(&net, data, &val_idx)?;
        let record = EpochRecord {
            epoch,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            validation_accuracy: val_acc,
            train_loss: loss_sum / seen.max(1) as f64,
            validation_loss: val_loss,
        };
        log::info!(
            "{} epoch {epoch}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            spec.name,
            record.train_loss,
            record.train_accuracy,
            val_loss,
            val_acc
        );
        history.epochs.push(record);
        if best.as_ref().is_none_or(|(l, _)| val_loss < *l) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, network) = best.expect("at least one epoch ran");
    let model = TrainedModel {
        network,
        metadata: ModelMetadata {
            class_name: spec.name.clone(),
            seed: cfg.seed,
            epochs_trained: history.epochs.len(),
            raster: RasterConvention::default(),
        },
    };
    Ok((model, history))
}
