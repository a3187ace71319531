//! Seeded mini-batch SGD with step decay and best-on-validation snapshots.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::augment_image;
use super::loss::{class_weights, weighted_ce_loss, WeightMode};
use super::net::{image_to_tensor, Grads, NetConfig, NetModel};
use super::NeuralError;
use crate::classic::argmax;
use crate::datasetgen::Sample;
use crate::features::load_sample_image;
use crate::image::Image;

/// Samples per work unit. Gradients are summed within a unit and then across
/// units in order, so results do not depend on the thread count.
const CHUNK: usize = 8;
const SHUFFLE_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Only the final linear layer is trained.
    FeatureExtractor,
    FineTune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    WeightedCe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    /// Multiply the learning rate by `lr_gamma` every `lr_step` epochs.
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub batch_size: usize,
    pub reduction: Reduction,
    pub mode: TrainMode,
    pub loss: LossKind,
    pub weight_mode: WeightMode,
    /// 0 gives plain SGD.
    pub momentum: f64,
    pub seed: u64,
    pub input_size: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            base_lr: 1e-3,
            lr_step: 20,
            lr_gamma: 0.1,
            batch_size: 64,
            reduction: Reduction::Sum,
            mode: TrainMode::FineTune,
            loss: LossKind::Ce,
            weight_mode: WeightMode::Proportional,
            momentum: 0.0,
            seed: 0,
            input_size: 224,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.base_lr > 0.0) {
            return bad("base_lr must be > 0");
        }
        if self.lr_step == 0 || !(self.lr_gamma > 0.0) {
            return bad("lr_step must be >= 1 and lr_gamma > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.input_size == 0 {
            return bad("input_size must be >= 1");
        }
        Ok(())
    }

    /// `base_lr · gamma^⌊epoch / step⌋`, epochs counted from 0.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.base_lr * self.lr_gamma.powi((epoch / self.lr_step) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample loss over the epoch's augmented batches.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

/// The best snapshot of a training run plus everything needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNet {
    pub config: TrainConfig,
    pub class_list: Vec<String>,
    pub class_weights: Option<Vec<f64>>,
    pub model: NetModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

fn augment_rng(seed: u64, epoch: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | sample as u64);
    rng
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM | epoch as u64);
    rng
}

struct ChunkResult {
    grads: Grads,
    loss: f64,
    correct: usize,
    finite: bool,
}

/// Predicted class index per preprocessed tensor; ties go to the lowest index.
fn predict_tensors(net: &NetModel, tensors: &[Vec<f32>], size: usize) -> Vec<usize> {
    tensors
        .par_iter()
        .map(|t| {
            let logits: Vec<f64> = net
                .logits(t, size, size)
                .into_iter()
                .map(f64::from)
                .collect();
            argmax(&logits)
        })
        .collect()
}

/// Trains `model` and returns the snapshot with the highest validation
/// accuracy (earliest epoch on ties).
pub fn train_network(
    mut model: NetModel,
    class_list: &[String],
    train: &[LabeledImage],
    val: &[LabeledImage],
    cfg: &TrainConfig,
) -> Result<TrainedNet, NeuralError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(NeuralError::EmptyValidationSet);
    }
    let c = class_list.len();
    if model.arch.n_classes != c {
        return Err(NeuralError::ShapeMismatch(format!(
            "network has {} outputs for {c} classes",
            model.arch.n_classes
        )));
    }
    if let Some(bad) = train.iter().chain(val).find(|s| s.label >= c) {
        return Err(NeuralError::LabelOutOfRange {
            label: bad.label,
            classes: c,
        });
    }
    model.set_backbone_trainable(cfg.mode == TrainMode::FineTune);

    let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let weights = match cfg.loss {
        LossKind::Ce => None,
        LossKind::WeightedCe => Some(class_weights(&labels, c, cfg.weight_mode)?.w),
    };
    let w32: Vec<f32> = match &weights {
        Some(w) => w.iter().map(|&v| v as f32).collect(),
        None => vec![1.0; c],
    };
    let size = cfg.input_size as usize;
    let val_tensors: Vec<Vec<f32>> = val
        .par_iter()
        .map(|s| image_to_tensor(&s.image, cfg.input_size))
        .collect();

    let mut velocity = (cfg.momentum > 0.0).then(|| model.zero_grads());
    let mut best: Option<(NetModel, usize, f64)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng(cfg.seed, epoch));
        let (mut epoch_loss, mut epoch_correct) = (0.0f64, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<ChunkResult> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut r = ChunkResult {
                        grads: model.zero_grads(),
                        loss: 0.0,
                        correct: 0,
                        finite: true,
                    };
                    for &i in chunk {
                        let mut rng = augment_rng(cfg.seed, epoch, i);
                        let (img, _) = augment_image(&train[i].image, cfg.input_size, &mut rng);
                        let x = image_to_tensor(&img, cfg.input_size);
                        let (logits, cache) = model.forward(&x, size, size);
                        let y = train[i].label;
                        let (loss, dlogits) =
                            weighted_ce_loss(&logits, c, &[y], &w32).expect("checked labels");
                        r.finite &= loss.is_finite();
                        r.loss += loss as f64;
                        let l64: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
                        r.correct += usize::from(argmax(&l64) == y);
                        model.backward(&cache, &dlogits, &mut r.grads);
                    }
                    r
                })
                .collect();
            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            for r in &results {
                if !r.finite {
                    return Err(NeuralError::NonFiniteLoss { epoch, batch: b });
                }
                grads.add(&r.grads);
                batch_loss += r.loss;
                epoch_correct += r.correct;
            }
            epoch_loss += batch_loss;
            if cfg.reduction == Reduction::Mean {
                grads.scale(1.0 / batch.len() as f32);
            }
            match &mut velocity {
                Some(v) => {
                    v.scale(cfg.momentum as f32);
                    v.add(&grads);
                    model.apply_step(v, lr as f32);
                }
                None => model.apply_step(&grads, lr as f32),
            }
        }
        let pred = predict_tensors(&model, &val_tensors, size);
        let correct = pred.iter().zip(val).filter(|(p, s)| **p == s.label).count();
        let val_accuracy = correct as f64 / val.len() as f64;
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: epoch_loss / train.len() as f64,
            train_accuracy: epoch_correct as f64 / train.len() as f64,
            val_accuracy,
        };
        log::info!(
            "epoch {epoch}: lr {lr:e} loss {:.4} train acc {:.3} val acc {val_accuracy:.3}",
            entry.train_loss,
            entry.train_accuracy
        );
        log.push(entry);
        if best.as_ref().is_none_or(|b| val_accuracy > b.2) {
            best = Some((model.clone(), epoch, val_accuracy));
        }
    }
    let (model, best_epoch, best_val_accuracy) = best.expect("at least one epoch");
    Ok(TrainedNet {
        config: cfg.clone(),
        class_list: class_list.to_vec(),
        class_weights: weights,
        model,
        log,
        best_epoch,
        best_val_accuracy,
    })
}

/// Class indices by argmax over logits of plainly resized inputs.
pub fn evaluate_network(net: &NetModel, images: &[Image], input_size: u32) -> Vec<usize> {
    let tensors: Vec<Vec<f32>> = images
        .par_iter()
        .map(|i| image_to_tensor(i, input_size))
        .collect();
    predict_tensors(net, &tensors, input_size as usize)
}

/// Raw logits per image, for inspection and cross-checks.
pub fn network_logits(net: &NetModel, images: &[Image], input_size: u32) -> Vec<Vec<f32>> {
    let s = input_size as usize;
    images
        .par_iter()
        .map(|i| net.logits(&image_to_tensor(i, input_size), s, s))
        .collect()
}

/// Loads (and ROI-crops) sample images, mapping labels into `class_list`.
pub fn load_labeled(
    samples: &[Sample],
    class_list: &[String],
) -> Result<Vec<LabeledImage>, NeuralError> {
    samples
        .par_iter()
        .map(|s| {
            let label = class_list
                .iter()
                .position(|c| *c == s.label)
                .ok_or_else(|| NeuralError::UnknownLabel(s.label.clone()))?;
            let image = load_sample_image(s).map_err(|source| NeuralError::ImageLoad {
                sample: s.sample_id.clone(),
                source,
            })?;
            Ok(LabeledImage { image, label })
        })
        .collect()
}

const CHECKPOINT_FORMAT: &str = "weaklabel-cnn-1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    config: TrainConfig,
    arch: NetConfig,
    class_list: Vec<String>,
    class_weights: Option<Vec<f64>>,
    backbone_trainable: bool,
    best_epoch: usize,
    best_val_accuracy: f64,
    log: Vec<EpochLog>,
    /// (name, element count) of each array in `checkpoint.bin`, in order.
    tensors: Vec<(String, usize)>,
}

fn ckpt_err(path: &Path, reason: impl ToString) -> NeuralError {
    NeuralError::Checkpoint {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Writes `checkpoint.json` and `checkpoint.bin` (little-endian f32) to `dir`.
pub fn save_checkpoint(dir: &Path, net: &TrainedNet) -> Result<(), NeuralError> {
    std::fs::create_dir_all(dir).map_err(|e| ckpt_err(dir, e))?;
    let tensors = net.model.tensors();
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        config: net.config.clone(),
        arch: net.model.arch.clone(),
        class_list: net.class_list.clone(),
        class_weights: net.class_weights.clone(),
        backbone_trainable: net.model.backbone_trainable(),
        best_epoch: net.best_epoch,
        best_val_accuracy: net.best_val_accuracy,
        log: net.log.clone(),
        tensors: tensors.iter().map(|(n, t)| (n.clone(), t.len())).collect(),
    };
    let json_path = dir.join("checkpoint.json");
    let json = serde_json::to_string_pretty(&meta).map_err(|e| ckpt_err(&json_path, e))?;
    std::fs::write(&json_path, json + "\n").map_err(|e| ckpt_err(&json_path, e))?;
    let bin_path = dir.join("checkpoint.bin");
    let mut bytes = Vec::new();
    for (_, t) in &tensors {
        for v in *t {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(&bin_path, bytes).map_err(|e| ckpt_err(&bin_path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainedNet, NeuralError> {
    let json_path = dir.join("checkpoint.json");
    let text = std::fs::read_to_string(&json_path).map_err(|e| ckpt_err(&json_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| ckpt_err(&json_path, e))?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(ckpt_err(
            &json_path,
            format!("unsupported format {:?}", meta.format),
        ));
    }
    let bin_path = dir.join("checkpoint.bin");
    let bytes = std::fs::read(&bin_path).map_err(|e| ckpt_err(&bin_path, e))?;
    let mut model = NetModel::new(meta.arch.clone(), 0);
    let expected: Vec<(String, usize)> = model
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    if expected != meta.tensors {
        return Err(ckpt_err(
            &json_path,
            "tensor layout does not match the architecture",
        ));
    }
    let total: usize = expected.iter().map(|(_, n)| n).sum();
    if bytes.len() != total * 4 {
        return Err(ckpt_err(
            &bin_path,
            format!("{} bytes, expected {}", bytes.len(), total * 4),
        ));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    for t in model.tensors_mut() {
        t.iter_mut()
            .for_each(|v| *v = values.next().expect("length checked"));
    }
    model.set_backbone_trainable(meta.backbone_trainable);
    Ok(TrainedNet {
        config: meta.config,
        class_list: meta.class_list,
        class_weights: meta.class_weights,
        model,
        log: meta.log,
        best_epoch: meta.best_epoch,
        best_val_accuracy: meta.best_val_accuracy,
    })
}

/// Training curves as CSV: `epoch,lr,train_loss,val_acc`.
pub fn write_curves<W: Write>(mut w: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch,lr,train_loss,val_acc")?;
    for e in log {
        writeln!(
            w,
            "{},{:e},{},{}",
            e.epoch, e.lr, e.train_loss, e.val_accuracy
        )?;
    }
    Ok(())
}
