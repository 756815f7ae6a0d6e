//! Differentiable layers with hand-derived backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, and
//! `backward` accumulates parameter gradients (callers zero them between
//! steps) and returns the gradient with respect to the layer input.

mod attention;
mod block;
mod gradcheck;
mod layers;

pub use attention::MultiHeadAttention;
pub use block::{EncoderBlock, FeedForward};
pub use gradcheck::{grad_check, grad_check_layer, GradCheckReport, GradCheckTarget, LayerProbe, LossHead};
pub use layers::{Gelu, LayerNorm, Linear};

use crate::error::{Error, Result};
use crate::tensor::{softmax_in_place, Tensor};

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub trait Layer {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor>;

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

pub(crate) fn missing_cache(layer: &str) -> Error {
    Error::ShapeMismatch(format!("{layer}: backward called before forward"))
}

pub(crate) fn check_grad_shape(layer: &str, expected: (usize, usize), got: &Tensor) -> Result<()> {
    if got.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{layer}: gradient {:?} does not match forward output {:?}",
            got.shape(),
            expected
        )));
    }
    Ok(())
}

/// Mean cross-entropy over rows and its gradient with respect to the logits,
/// `(softmax − one_hot) / rows`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if labels.len() != logits.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label: bad, classes });
    }
    let n = logits.rows() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let top = (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best });
        let max = row[top];
        // ln Σ exp(v − max) = ln(1 + rest), kept accurate when rest is tiny.
        let rest: f64 = (0..row.len()).filter(|&c| c != top).map(|c| (row[c] - max).exp()).sum();
        loss += rest.ln_1p() + (max - row[label]);
        let g = grad.row_mut(r);
        softmax_in_place(g);
        g[label] -= 1.0;
        g.iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_two_class_loss() {
        let logits = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let (loss, _) = cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_loss_is_tiny_but_exact() {
        let logits = Tensor::from_rows(&[vec![10.0, -10.0]]).unwrap();
        let (loss, _) = cross_entropy(&logits, &[0]).unwrap();
        let expected = (-20f64).exp().ln_1p();
        assert!((loss - expected).abs() < 1e-20);
        assert!((loss - 2.061e-9).abs() < 1e-12);
    }

    #[test]
    fn batch_loss_is_mean_of_row_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let logits = Tensor::random_normal(6, 4, 2.0, &mut rng);
        let labels = [0, 3, 1, 1, 2, 0];
        let (loss, grad) = cross_entropy(&logits, &labels).unwrap();
        let oracle: f64 = labels
            .iter()
            .enumerate()
            .map(|(r, &l)| {
                let row = logits.row(r);
                let z: f64 = row.iter().map(|v| v.exp()).sum();
                -(row[l].exp() / z).ln()
            })
            .sum::<f64>()
            / 6.0;
        assert!((loss - oracle).abs() < 1e-12);
        for r in 0..6 {
            assert!(grad.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::zeros(1, 2);
        assert!(matches!(
            cross_entropy(&logits, &[2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}
