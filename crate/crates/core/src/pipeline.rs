//! End-to-end classifiers: preprocessing for one modality plus an encoder.
//!
//! Time series: serialize → tokenize → token-mode encoder. Audio: normalize →
//! log spectrogram → (batch collation during training) → feature-mode
//! encoder. Clips longer than `max_len` frames keep their first `max_len`
//! frames.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{collate_batch, log_spectrogram, normalize_clip, FeatureSequence, FEATURE_DIM};
use crate::checkpoint::Checkpoint;
use crate::encoder::{init_model, EncoderConfig, EncoderModel, InputMode};
use crate::error::{Error, Result};
use crate::model::{LabelSchema, Modality, ModalityInput};
use crate::optim::AdamWState;
use crate::tensor::Tensor;
use crate::text::{build_vocab, encode, serialize_record, Vocab};
use crate::train::{evaluate_accuracy, train, Example, LabeledExample, TrainConfig, TrainingLog};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl ModelShape {
    pub fn default_for(modality: Modality) -> Self {
        Self {
            layers: 2,
            heads: 4,
            d_model: 32,
            d_ff: 64,
            max_len: match modality {
                Modality::Audio => 128,
                _ => crate::text::DEFAULT_MAX_LEN,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierTraining {
    pub shape: ModelShape,
    pub train: TrainConfig,
    pub min_frequency: usize,
    pub max_vocab: usize,
}

impl ClassifierTraining {
    pub fn default_for(modality: Modality) -> Self {
        Self {
            shape: ModelShape::default_for(modality),
            train: TrainConfig::default(),
            min_frequency: 2,
            max_vocab: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_index: usize,
    pub class_name: String,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub modality: Modality,
    pub labels: LabelSchema,
    pub model: EncoderModel,
    pub vocab: Option<Vocab>,
    /// Accuracy from the most recent labeled evaluation, if any.
    pub eval_accuracy: Option<f64>,
}

/// Default location of the vocabulary next to a checkpoint.
pub fn vocab_path_for(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

fn features_of(input: &ModalityInput) -> Result<FeatureSequence> {
    match input {
        ModalityInput::Audio(clip) => log_spectrogram(&normalize_clip(clip)?),
        other => Err(Error::InvalidInput(format!("expected audio, got {}", other.modality()))),
    }
}

fn truncated(frames: &Tensor, mask: &[u8], max_len: usize) -> Example {
    let t = frames.rows().min(max_len);
    Example::Features {
        frames: frames.slice_rows(0, t),
        mask: mask[..t].to_vec(),
    }
}

fn label_of(input: &ModalityInput) -> Option<usize> {
    match input {
        ModalityInput::TimeSeries(r) => r.label,
        ModalityInput::Audio(c) => c.label,
        ModalityInput::Video(_) => None,
    }
}

impl Classifier {
    fn example(&self, input: &ModalityInput) -> Result<Example> {
        let max_len = self.model.config().max_len;
        match (self.modality, input) {
            (Modality::TimeSeries, ModalityInput::TimeSeries(record)) => {
                let vocab = self
                    .vocab
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("text model without vocab".into()))?;
                Ok(Example::Tokens(encode(&serialize_record(record)?, vocab, max_len)?))
            }
            (Modality::Audio, ModalityInput::Audio(_)) => {
                let seq = features_of(input)?;
                let mask = vec![1u8; seq.frame_count()];
                Ok(truncated(&seq.frames, &mask, max_len))
            }
            (expected, got) => Err(Error::InvalidInput(format!(
                "{expected} classifier cannot take {} input",
                got.modality()
            ))),
        }
    }

    /// Sequence length the model sees for `input` (for MAC accounting).
    pub fn sequence_len(&self, input: &ModalityInput) -> Result<usize> {
        Ok(match self.example(input)? {
            Example::Tokens(enc) => enc.valid_len(),
            Example::Features { frames, .. } => frames.rows(),
        })
    }

    pub fn classify(&self, input: &ModalityInput) -> Result<Prediction> {
        let example = self.example(input)?;
        let (class_index, distribution) = self.model.predict(example.as_input())?;
        Ok(Prediction {
            class_name: self
                .labels
                .class_names()
                .get(class_index)
                .cloned()
                .unwrap_or_else(|| class_index.to_string()),
            class_index,
            distribution,
        })
    }

    pub fn labeled_examples(&self, inputs: &[ModalityInput]) -> Result<Vec<LabeledExample>> {
        inputs
            .iter()
            .map(|input| {
                let label = label_of(input).ok_or_else(|| Error::InvalidInput("unlabeled example".into()))?;
                Ok(LabeledExample {
                    input: self.example(input)?,
                    label,
                })
            })
            .collect()
    }

    pub fn evaluate(&mut self, inputs: &[ModalityInput]) -> Result<f64> {
        let examples = self.labeled_examples(inputs)?;
        let accuracy = evaluate_accuracy(&self.model, &examples)?;
        self.eval_accuracy = Some(accuracy);
        Ok(accuracy)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.model.clone())
            .with_meta("modality", self.modality.as_str())
            .with_meta("labels", self.labels.class_names().join(","));
        if let Some(acc) = self.eval_accuracy {
            ckpt = ckpt.with_meta("eval_accuracy", format!("{acc}"));
        }
        ckpt
    }

    /// Writes the checkpoint and, for text models, the vocabulary beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)?;
        if let Some(vocab) = &self.vocab {
            vocab.save(&vocab_path_for(path))?;
        }
        Ok(())
    }

    /// Loads a checkpoint. Class names come from `labels` when given, else
    /// from the checkpoint metadata.
    pub fn load(path: &Path, vocab_path: Option<&Path>, labels: Option<&LabelSchema>) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let modality: Modality = ckpt
            .meta("modality")
            .ok_or_else(|| Error::InvalidCheckpoint("missing modality metadata".into()))?
            .parse()?;
        let labels = match labels {
            Some(l) => l.clone(),
            None => LabelSchema::classification(ckpt.meta("labels").unwrap_or_default().split(','))?,
        };
        if labels.len() != ckpt.model.config().n_classes {
            return Err(Error::InvalidConfig(format!(
                "label schema has {} classes, checkpoint has {}",
                labels.len(),
                ckpt.model.config().n_classes
            )));
        }
        let vocab = match ckpt.model.config().mode {
            InputMode::Token { vocab_size } => {
                let default = vocab_path_for(path);
                let vocab = Vocab::load(vocab_path.unwrap_or(&default))?;
                if vocab.len() != vocab_size {
                    return Err(Error::InvalidCheckpoint(format!(
                        "vocab has {} tokens, model expects {vocab_size}",
                        vocab.len()
                    )));
                }
                Some(vocab)
            }
            InputMode::Feature { .. } => None,
        };
        let eval_accuracy = ckpt.meta("eval_accuracy").and_then(|a| a.parse().ok());
        Ok(Self {
            modality,
            labels,
            model: ckpt.model,
            vocab,
            eval_accuracy,
        })
    }
}

/// Builds preprocessing state (vocabulary), initializes an encoder and
/// trains it. `eval` defaults to the training inputs.
pub fn train_classifier(
    modality: Modality,
    inputs: &[ModalityInput],
    eval: Option<&[ModalityInput]>,
    labels: &LabelSchema,
    options: &ClassifierTraining,
) -> Result<(Classifier, TrainingLog)> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let shape = options.shape;
    let (mode, vocab) = match modality {
        Modality::TimeSeries => {
            let corpus = inputs
                .iter()
                .map(|i| match i {
                    ModalityInput::TimeSeries(r) => serialize_record(r),
                    other => Err(Error::InvalidInput(format!(
                        "expected time_series, got {}",
                        other.modality()
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            let vocab = build_vocab(&corpus, options.min_frequency, options.max_vocab)?;
            (
                InputMode::Token {
                    vocab_size: vocab.len(),
                },
                Some(vocab),
            )
        }
        Modality::Audio => (
            InputMode::Feature {
                feature_dim: FEATURE_DIM,
            },
            None,
        ),
        Modality::Video => {
            return Err(Error::InvalidInput("video is captioned, not classified".into()));
        }
    };
    let config = EncoderConfig {
        layers: shape.layers,
        heads: shape.heads,
        d_model: shape.d_model,
        d_ff: shape.d_ff,
        max_len: shape.max_len,
        mode,
        n_classes: labels.len(),
        seed: options.train.seed,
    };
    let mut classifier = Classifier {
        modality,
        labels: labels.clone(),
        model: init_model(&config)?,
        vocab,
        eval_accuracy: None,
    };
    let examples = match modality {
        Modality::Audio => collated_examples(inputs, options.train.batch_size, shape.max_len)?,
        _ => classifier.labeled_examples(inputs)?,
    };
    let eval_examples = match eval {
        Some(e) => classifier.labeled_examples(e)?,
        None => classifier.labeled_examples(inputs)?,
    };
    let mut state = AdamWState::new(options.train.optimizer);
    let log = train(
        &mut classifier.model,
        &examples,
        Some(&eval_examples),
        &options.train,
        &mut state,
    )?;
    classifier.eval_accuracy = log.epoch_eval_accuracy.last().copied();
    Ok((classifier, log))
}

/// Audio training rows: spectrograms collated into length-sorted batches,
/// each row padded to its batch maximum with a mask.
fn collated_examples(inputs: &[ModalityInput], batch_size: usize, max_len: usize) -> Result<Vec<LabeledExample>> {
    let items = inputs
        .iter()
        .map(|input| {
            let label = label_of(input).ok_or_else(|| Error::InvalidInput("unlabeled example".into()))?;
            Ok((features_of(input)?, label))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(items.len());
    for batch in collate_batch(&items, batch_size.max(1))? {
        for ((frames, mask), &label) in batch.features.iter().zip(&batch.mask).zip(&batch.labels) {
            out.push(LabeledExample {
                input: truncated(frames, mask, max_len),
                label,
            });
        }
    }
    Ok(out)
}
