//! Late fusion of per-modality class distributions and the rolling-accuracy
//! retraining trigger.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::encoder::argmax;
use crate::error::{Error, Result};
use crate::model::Modality;

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityPosterior {
    pub modality: Modality,
    pub distribution: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPrediction {
    pub distribution: Vec<f64>,
    pub class_index: usize,
}

/// `Σ wₘ·pₘ / Σ wₘ`, predicted class = argmax with ties to the lowest index.
pub fn fuse_late(posteriors: &[ModalityPosterior]) -> Result<FusedPrediction> {
    let first = posteriors.first().ok_or(Error::AllZeroWeights)?;
    let classes = first.distribution.len();
    for p in posteriors {
        if p.distribution.len() != classes {
            return Err(Error::SchemaMismatch(format!(
                "{} distribution has {} classes, expected {classes}",
                p.modality,
                p.distribution.len()
            )));
        }
        if !(p.weight.is_finite() && p.weight >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "{} weight {} is not a non-negative number",
                p.modality, p.weight
            )));
        }
        let sum: f64 = p.distribution.iter().sum();
        if p.distribution.iter().any(|&v| !(v.is_finite() && v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "{} distribution is not a probability vector",
                p.modality
            )));
        }
    }
    let total: f64 = posteriors.iter().map(|p| p.weight).sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    let mut fused = vec![0.0; classes];
    for p in posteriors {
        for (f, v) in fused.iter_mut().zip(&p.distribution) {
            *f += p.weight * v;
        }
    }
    for f in &mut fused {
        *f /= total;
    }
    Ok(FusedPrediction {
        class_index: argmax(&fused),
        distribution: fused,
    })
}

/// Default weights: each modality's last evaluation accuracy, renormalized to
/// sum to 1. Returns `AllZeroWeights` when every accuracy is 0.
pub fn accuracy_weights(accuracies: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = accuracies.iter().map(|a| a.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok(accuracies.iter().map(|a| a.max(0.0) / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEvent {
    pub modalities: Vec<Modality>,
    pub window_accuracy: f64,
}

/// Rolling window of prediction-correctness bits for one modality stream.
#[derive(Debug, Clone)]
pub struct FeedbackState {
    modality: Modality,
    window: VecDeque<bool>,
    capacity: usize,
    threshold: f64,
}

impl FeedbackState {
    pub fn new(modality: Modality, capacity: usize, threshold: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig(
                "feedback window must hold at least one bit".into(),
            ));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {threshold} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            modality,
            window: VecDeque::with_capacity(capacity),
            capacity,
            threshold,
        })
    }

    pub fn with_defaults(modality: Modality) -> Self {
        Self::new(modality, DEFAULT_WINDOW, DEFAULT_THRESHOLD).expect("defaults are valid")
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.capacity
    }

    pub fn accuracy(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.window.iter().filter(|&&b| b).count() as f64 / self.window.len() as f64)
    }

    /// Pushes one bit; emits an event iff the window is full and its mean is
    /// strictly below the threshold.
    pub fn update(&mut self, correct: bool) -> Option<RetrainEvent> {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(correct);
        let accuracy = self.accuracy().expect("just pushed");
        (self.is_full() && accuracy < self.threshold).then(|| RetrainEvent {
            modalities: vec![self.modality],
            window_accuracy: accuracy,
        })
    }

    /// Forgets all bits, e.g. after a retrain was scheduled.
    pub fn reset(&mut self) {
        self.window.clear();
    }
}
