use super::{cross_entropy, Layer, Param};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Something whose scalar loss can be evaluated and differentiated with
/// respect to a fixed, ordered set of parameters.
pub trait GradCheckTarget {
    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Loss at the current parameter values, without touching gradients.
    fn loss(&mut self) -> Result<f64>;

    /// Zeroes gradients, runs forward and backward, returns the loss.
    fn loss_and_grads(&mut self) -> Result<f64>;
}

/// Scalar loss attached downstream of a layer under test.
#[derive(Debug, Clone)]
pub enum LossHead {
    /// `Σ w ⊙ y`; all-ones weights give the plain sum.
    Weighted(Tensor),
    /// Mean cross-entropy treating the output rows as logits.
    CrossEntropy(Vec<usize>),
}

impl LossHead {
    fn evaluate(&self, output: &Tensor) -> Result<(f64, Tensor)> {
        match self {
            LossHead::Weighted(w) => {
                if w.shape() != output.shape() {
                    return Err(Error::ShapeMismatch("loss weights vs layer output".into()));
                }
                let loss = w.data().iter().zip(output.data()).map(|(a, b)| a * b).sum();
                Ok((loss, w.clone()))
            }
            LossHead::CrossEntropy(labels) => cross_entropy(output, labels),
        }
    }
}

/// Wraps a layer with a fixed input (itself checked as a parameter) and a
/// downstream loss.
pub struct LayerProbe<'a, L: Layer> {
    pub layer: &'a mut L,
    pub input: Param,
    pub head: LossHead,
}

impl<'a, L: Layer> LayerProbe<'a, L> {
    pub fn new(layer: &'a mut L, input: Tensor, head: LossHead) -> Self {
        Self {
            layer,
            input: Param::new("input", input),
            head,
        }
    }
}

impl<L: Layer> GradCheckTarget for LayerProbe<'_, L> {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.layer.params_mut();
        out.push(&mut self.input);
        out
    }

    fn loss(&mut self) -> Result<f64> {
        let out = self.layer.forward(&self.input.value)?;
        Ok(self.head.evaluate(&out)?.0)
    }

    fn loss_and_grads(&mut self) -> Result<f64> {
        self.layer.zero_grad();
        self.input.zero_grad();
        let out = self.layer.forward(&self.input.value)?;
        let (loss, grad) = self.head.evaluate(&out)?;
        let dx = self.layer.backward(&grad)?;
        self.input.grad.add_assign(&dx)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares analytic gradients with central finite differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every scalar parameter. The relative error
/// uses the denominator `max(|a|, |b|, 1e-8)`.
pub fn grad_check<T: GradCheckTarget + ?Sized>(target: &mut T, h: f64) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidInput(format!("step {h} outside [1e-7, 1e-3]")));
    }
    target.loss_and_grads()?;
    let analytic: Vec<(String, Vec<f64>)> = target
        .params_mut()
        .into_iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = target.params_mut()[pi].value.data()[i];
            target.params_mut()[pi].value.data_mut()[i] = original + h;
            let plus = target.loss()?;
            target.params_mut()[pi].value.data_mut()[i] = original - h;
            let minus = target.loss()?;
            target.params_mut()[pi].value.data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel;
                report.worst_param = format!("{name}[{i}]");
            }
        }
    }
    // Leave caches and gradients consistent with the unperturbed parameters.
    target.loss_and_grads()?;
    Ok(report)
}

/// Convenience wrapper: checks `layer` on `input` with the given loss head.
pub fn grad_check_layer<L: Layer>(layer: &mut L, input: &Tensor, head: LossHead, h: f64) -> Result<GradCheckReport> {
    let mut probe = LayerProbe::new(layer, input.clone(), head);
    grad_check(&mut probe, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{EncoderBlock, FeedForward, Gelu, LayerNorm, Linear, MultiHeadAttention};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn weighted(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> LossHead {
        LossHead::Weighted(Tensor::random_normal(rows, cols, 1.0, rng))
    }

    fn randomize(params: Vec<&mut Param>, rng: &mut ChaCha8Rng, std: f64) {
        for p in params {
            let (r, c) = p.value.shape();
            let noise = Tensor::random_normal(r, c, std, rng);
            p.value.add_assign(&noise).unwrap();
        }
    }

    #[test]
    fn linear_layer() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layer = Linear::new("lin", 6, 3, 0.5, &mut rng);
            randomize(layer.params_mut(), &mut rng, 0.3);
            let x = Tensor::random_normal(4, 6, 1.0, &mut rng);
            let head = weighted(4, 3, &mut rng);
            let report = grad_check_layer(&mut layer, &x, head, H).unwrap();
            assert!(report.passes(TOL), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn layer_norm_layer() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layer = LayerNorm::new("ln", 5);
            randomize(layer.params_mut(), &mut rng, 0.5);
            let x = Tensor::random_normal(3, 5, 1.0, &mut rng);
            let head = weighted(3, 5, &mut rng);
            let report = grad_check_layer(&mut layer, &x, head, H).unwrap();
            assert!(report.passes(TOL), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn gelu_layer() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layer = Gelu::new();
            let x = Tensor::random_normal(3, 4, 1.5, &mut rng);
            let head = weighted(3, 4, &mut rng);
            let report = grad_check_layer(&mut layer, &x, head, H).unwrap();
            assert!(report.passes(TOL), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn attention_layer_with_mask() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layer = MultiHeadAttention::new("attn", 8, 2, 0.4, &mut rng).unwrap();
            randomize(layer.params_mut(), &mut rng, 0.1);
            layer.set_mask(Some(vec![true, true, false, true, false]));
            let x = Tensor::random_normal(5, 8, 1.0, &mut rng);
            let head = weighted(5, 8, &mut rng);
            let report = grad_check_layer(&mut layer, &x, head, H).unwrap();
            assert!(report.passes(TOL), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn feed_forward_and_block() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ffn = FeedForward::new("ffn", 6, 12, 0.4, &mut rng);
            randomize(ffn.params_mut(), &mut rng, 0.1);
            let x = Tensor::random_normal(3, 6, 1.0, &mut rng);
            let head = weighted(3, 6, &mut rng);
            let report = grad_check_layer(&mut ffn, &x, head, H).unwrap();
            assert!(report.passes(TOL), "ffn seed {seed}: {report:?}");

            let mut block = EncoderBlock::new("blk", 8, 2, 16, 0.4, &mut rng).unwrap();
            randomize(block.params_mut(), &mut rng, 0.1);
            block.set_mask(Some(vec![true, true, true, false]));
            let x = Tensor::random_normal(4, 8, 1.0, &mut rng);
            let head = weighted(4, 8, &mut rng);
            let report = grad_check_layer(&mut block, &x, head, H).unwrap();
            assert!(report.passes(TOL), "block seed {seed}: {report:?}");
        }
    }

    #[test]
    fn cross_entropy_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut layer = Linear::new("head", 5, 3, 0.5, &mut rng);
        let x = Tensor::random_normal(4, 5, 1.0, &mut rng);
        let report = grad_check_layer(&mut layer, &x, LossHead::CrossEntropy(vec![0, 2, 1, 2]), H).unwrap();
        assert!(report.passes(TOL), "{report:?}");
    }

    #[test]
    fn rejects_out_of_range_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = Linear::new("lin", 2, 2, 0.5, &mut rng);
        let x = Tensor::zeros(1, 2);
        assert!(grad_check_layer(&mut layer, &x, LossHead::CrossEntropy(vec![0]), 1e-2).is_err());
    }

    #[test]
    fn detects_a_broken_gradient() {
        struct Broken(Linear);
        impl Layer for Broken {
            fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
                self.0.forward(input)
            }
            fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
                let dx = self.0.backward(grad_output)?;
                self.0.weight.grad.data_mut()[0] += 1.0;
                Ok(dx)
            }
            fn params(&self) -> Vec<&Param> {
                self.0.params()
            }
            fn params_mut(&mut self) -> Vec<&mut Param> {
                self.0.params_mut()
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Broken(Linear::new("lin", 3, 2, 0.5, &mut rng));
        let x = Tensor::random_normal(2, 3, 1.0, &mut rng);
        let report = grad_check_layer(&mut layer, &x, weighted(2, 2, &mut rng), H).unwrap();
        assert!(!report.passes(TOL));
        assert_eq!(report.worst_param, "lin.weight[0]");
    }
}
