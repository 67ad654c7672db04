//! Mini-batch training of gland models and per-fold cross-validation.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, ClassWeightMode, Graph, LossConfig, LrSchedule};
use crate::data::LobeSample;
use crate::error::{Error, Result};
use crate::eval::{ConfusionMatrix, FoldReport, Folds, PredictionRecord};
use crate::labelfuse::{argmax, argmax_gland, fuse_labels, GlandClass, LobeClass, NUM_LOBE_CLASSES};
use crate::model::{fuse_lobe_probs, GlandModel, LobeClassifier, ModelConfig};
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
    pub class_weights: ClassWeightMode,
    pub adam: Adam,
    /// Stop once training-set gland accuracy reaches this value (checked
    /// after every epoch). `None` trains for all epochs.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 2,
            seed: 0,
            schedule: LrSchedule::default(),
            class_weights: ClassWeightMode::default(),
            adam: Adam::default(),
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.schedule.decay_epochs == 0 {
            return Err(Error::Config("decay_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last_accuracy(&self) -> Option<f64> {
        self.epochs.iter().rev().find_map(|e| e.train_accuracy)
    }
}

fn stack(images: impl Iterator<Item = Tensor4<f32>>) -> Result<Tensor4<f32>> {
    let items: Vec<Tensor4<f32>> = images.collect();
    Tensor4::stack(&items.iter().collect::<Vec<_>>())
}

fn lobe_counts(samples: &[&LobeSample]) -> Vec<usize> {
    let mut counts = vec![0; NUM_LOBE_CLASSES];
    for s in samples {
        counts[s.left_label.code()] += 1;
        counts[s.right_label.code()] += 1;
    }
    counts
}

/// One optimisation step of `classifier` on a batch; returns the loss.
fn step(
    classifier: &mut LobeClassifier<f32>,
    images: Tensor4<f32>,
    labels: &[usize],
    loss_cfg: &LossConfig,
    adam: &Adam,
    lr: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.input(images);
    let logits = classifier.logits(&mut g, x)?;
    let loss = g.cce_loss(logits, labels, loss_cfg)?;
    let value = g.value(loss).data()[0] as f64;
    let grads = g.backward(loss)?;
    grads.store_into(classifier.params_mut());
    adam.step_all(classifier.params_mut(), lr);
    Ok(value)
}

/// Trains on lobe labels with weighted cross-entropy. With shared weights
/// each batch holds the left and the right lobes of every patient.
pub fn train(model: &mut GlandModel<f32>, samples: &[&LobeSample], cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let loss_cfg = LossConfig::from_counts(&lobe_counts(samples), cfg.class_weights);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for batch in order.chunks(cfg.batch_size) {
            let items: Vec<&LobeSample> = batch.iter().map(|&i| samples[i]).collect();
            let left = stack(items.iter().map(|s| s.left_image.clone()))?;
            let right = model.prepare_right(&stack(items.iter().map(|s| s.right_image.clone()))?);
            let left_labels: Vec<usize> = items.iter().map(|s| s.left_label.code()).collect();
            let right_labels: Vec<usize> = items.iter().map(|s| s.right_label.code()).collect();
            match model.right.as_mut() {
                None => {
                    let images = Tensor4::stack(&[&left, &right])?;
                    let labels = [left_labels, right_labels].concat();
                    total += step(&mut model.left, images, &labels, &loss_cfg, &cfg.adam, lr)?;
                }
                Some(right_model) => {
                    total += 0.5 * step(&mut model.left, left, &left_labels, &loss_cfg, &cfg.adam, lr)?;
                    total += 0.5 * step(right_model, right, &right_labels, &loss_cfg, &cfg.adam, lr)?;
                }
            }
            steps += 1;
        }
        let mean_loss = total / steps as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Graph(format!("loss diverged at epoch {epoch}")));
        }
        let train_accuracy = match cfg.stop_at_train_accuracy {
            Some(_) => Some(gland_accuracy(&predict(model, samples)?, samples)),
            None => None,
        };
        debug!("epoch {epoch}: lr {lr:.3e} loss {mean_loss:.5} acc {train_accuracy:?}");
        history.epochs.push(EpochStats {
            epoch,
            lr,
            mean_loss,
            train_accuracy,
        });
        if let (Some(target), Some(acc)) = (cfg.stop_at_train_accuracy, train_accuracy) {
            if acc >= target {
                info!("reached training accuracy {acc:.4} after {} epochs", epoch + 1);
                break;
            }
        }
    }
    Ok(history)
}

/// Model output for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub left_probs: Vec<f64>,
    pub right_probs: Vec<f64>,
    pub gland_probs: Vec<f64>,
    pub left: LobeClass,
    pub right: LobeClass,
    pub gland: GlandClass,
}

const EVAL_BATCH: usize = 16;

pub fn predict(model: &GlandModel<f32>, samples: &[&LobeSample]) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let left = stack(chunk.iter().map(|s| s.left_image.clone()))?;
        let right = stack(chunk.iter().map(|s| s.right_image.clone()))?;
        let (pl, pr) = model.forward_lobes(&left, &right)?;
        let q = fuse_lobe_probs(&pl, &pr)?;
        for b in 0..chunk.len() {
            let to64 = |t: &Tensor4<f32>| t.sample(b).iter().map(|&v| v as f64).collect::<Vec<_>>();
            let (lp, rp, gp) = (to64(&pl), to64(&pr), to64(&q));
            out.push(Prediction {
                left: LobeClass::from_code(argmax(&lp)).expect("6 classes"),
                right: LobeClass::from_code(argmax(&rp)).expect("6 classes"),
                gland: argmax_gland(&gp),
                left_probs: lp,
                right_probs: rp,
                gland_probs: gp,
            });
        }
    }
    Ok(out)
}

pub fn gland_accuracy(predictions: &[Prediction], samples: &[&LobeSample]) -> f64 {
    let correct = predictions
        .iter()
        .zip(samples)
        .filter(|(p, s)| p.gland == s.gland_label())
        .count();
    correct as f64 / samples.len().max(1) as f64
}

/// Everything produced for one cross-validation fold.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub report: FoldReport,
    pub predictions: Vec<PredictionRecord>,
    pub model: GlandModel<f32>,
    pub history: TrainHistory,
    /// Held-out gland accuracy of the freshly initialised model.
    pub untrained_accuracy: f64,
}

/// Trains a fresh model (seeded with `train.seed + fold`) on every fold but
/// `fold` and evaluates it on `fold`.
pub fn run_fold(
    samples: &[LobeSample],
    folds: &Folds,
    fold: usize,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<FoldOutcome> {
    let seed = train_cfg.seed.wrapping_add(fold as u64);
    let train_set: Vec<&LobeSample> = folds.train_indices(fold).iter().map(|&i| &samples[i]).collect();
    let test_set: Vec<&LobeSample> = folds.folds[fold].iter().map(|&i| &samples[i]).collect();
    let mut model = GlandModel::build(model_cfg, seed)?;
    let untrained_accuracy = gland_accuracy(&predict(&model, &test_set)?, &test_set);
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let history = train(&mut model, &train_set, &cfg)?;
    let preds = predict(&model, &test_set)?;

    let mut cm = ConfusionMatrix::new(crate::labelfuse::NUM_GLAND_CLASSES);
    let mut records = Vec::with_capacity(test_set.len());
    for (p, s) in preds.iter().zip(&test_set) {
        cm.record(s.gland_label().code(), p.gland.code())?;
        records.push(PredictionRecord {
            fold,
            patient_id: s.patient_id.clone(),
            gender: s.gender,
            age_group: s.age_group,
            true_left: s.left_label,
            true_right: s.right_label,
            pred_left: p.left,
            pred_right: p.right,
            true_gland: fuse_labels(s.left_label, s.right_label),
            pred_gland: p.gland,
        });
    }
    Ok(FoldOutcome {
        report: FoldReport::new(fold, cm),
        predictions: records,
        model,
        history,
        untrained_accuracy,
    })
}
