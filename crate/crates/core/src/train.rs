//! Mini-batch training with cross-entropy and AdamW, plus evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{argmax, EncoderModel, ModelInput};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, GradCheckTarget, Param};
use crate::optim::{AdamWConfig, AdamWState};
use crate::tensor::Tensor;
use crate::text::EncodedText;

/// One model input owned by a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Example {
    Tokens(EncodedText),
    Features { frames: Tensor, mask: Vec<u8> },
}

impl Example {
    pub fn as_input(&self) -> ModelInput<'_> {
        match self {
            Example::Tokens(enc) => enc.into(),
            Example::Features { frames, mask } => ModelInput::Features { frames, mask },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub input: Example,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            max_steps: None,
            seed: 0,
            optimizer: AdamWConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub step_losses: Vec<f64>,
    pub epoch_mean_losses: Vec<f64>,
    pub epoch_eval_accuracy: Vec<f64>,
}

impl TrainingLog {
    pub fn steps(&self) -> usize {
        self.step_losses.len()
    }
}

fn check_labels(model: &EncoderModel, data: &[LabeledExample]) -> Result<()> {
    let classes = model.config().n_classes;
    match data.iter().find(|ex| ex.label >= classes) {
        Some(ex) => Err(Error::LabelOutOfRange {
            label: ex.label,
            classes,
        }),
        None => Ok(()),
    }
}

/// Trains `model` in place. Each epoch visits the data in a fresh seeded
/// permutation; after each epoch accuracy is measured on `eval` (or on the
/// training data when `eval` is `None`).
pub fn train(
    model: &mut EncoderModel,
    data: &[LabeledExample],
    eval: Option<&[LabeledExample]>,
    config: &TrainConfig,
    state: &mut AdamWState,
) -> Result<TrainingLog> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    check_labels(model, data)?;
    let eval = eval.unwrap_or(data);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainingLog::default();
    'epochs: for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|max| log.steps() >= max) {
                break;
            }
            model.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &data[i];
                let logits = model.forward_train(ex.input.as_input())?;
                let (loss, grad) = cross_entropy(&logits, &[ex.label])?;
                batch_loss += loss * scale;
                model.backward(&grad.scale(scale))?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite loss at step {}",
                    log.steps() + 1
                )));
            }
            state.step(&mut model.params_mut())?;
            log.step_losses.push(batch_loss);
            epoch_loss += batch_loss;
            epoch_batches += 1;
        }
        if epoch_batches == 0 {
            break 'epochs;
        }
        log.epoch_mean_losses.push(epoch_loss / epoch_batches as f64);
        log.epoch_eval_accuracy.push(evaluate_accuracy(model, eval)?);
    }
    Ok(log)
}

/// Fraction of examples whose argmax logit (ties to the lowest index) equals
/// the label.
pub fn evaluate_accuracy(model: &EncoderModel, data: &[LabeledExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for ex in data {
        if argmax(&model.logits(ex.input.as_input())?) == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mean cross-entropy of a model over fixed examples, exposed for
/// finite-difference checking of every model parameter.
pub struct EncoderProbe<'a> {
    pub model: &'a mut EncoderModel,
    pub examples: &'a [LabeledExample],
}

impl GradCheckTarget for EncoderProbe<'_> {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.model.params_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        let n = self.examples.len() as f64;
        let mut total = 0.0;
        for ex in self.examples {
            let logits = Tensor::from_vec(
                1,
                self.model.config().n_classes,
                self.model.logits(ex.input.as_input())?,
            )?;
            total += cross_entropy(&logits, &[ex.label])?.0;
        }
        Ok(total / n)
    }

    fn loss_and_grads(&mut self) -> Result<f64> {
        self.model.zero_grad();
        let scale = 1.0 / self.examples.len() as f64;
        let mut total = 0.0;
        for ex in self.examples {
            let logits = self.model.forward_train(ex.input.as_input())?;
            let (loss, grad) = cross_entropy(&logits, &[ex.label])?;
            total += loss * scale;
            self.model.backward(&grad.scale(scale))?;
        }
        Ok(total)
    }
}
