use rand::Rng;

use super::{check_grad_shape, missing_cache, Layer, Param};
use crate::error::{Error, Result};
use crate::tensor::{gelu, gelu_derivative, matmul, matmul_at, matmul_bt, Tensor, LAYER_NORM_EPS};

/// Affine map `y = x·W + b`, `W` of shape (in, out); the bias is optional.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Option<Param>,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(name: &str, fan_in: usize, fan_out: usize, std: f64, rng: &mut R) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                Tensor::random_normal(fan_in, fan_out, std, rng),
            ),
            bias: Some(Param::new(format!("{name}.bias"), Tensor::zeros(1, fan_out))),
            input: None,
        }
    }

    pub fn without_bias<R: Rng + ?Sized>(name: &str, fan_in: usize, fan_out: usize, std: f64, rng: &mut R) -> Self {
        Self {
            bias: None,
            ..Self::new(name, fan_in, fan_out, std, rng)
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.cols()
    }

    /// Forward pass without caching, for read-only inference.
    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let mut out = matmul(input, &self.weight.value)?;
        if let Some(bias) = &self.bias {
            out.add_row_vector(bias.value.data())?;
        }
        Ok(out)
    }
}

impl Layer for Linear {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = self.apply(input)?;
        self.input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or_else(|| missing_cache("linear"))?;
        check_grad_shape("linear", (input.rows(), self.fan_out()), grad_output)?;
        self.weight.grad.add_assign(&matmul_at(input, grad_output)?)?;
        if let Some(bias) = &mut self.bias {
            bias.grad.add_assign(&grad_output.sum_rows())?;
        }
        matmul_bt(grad_output, &self.weight.value)
    }

    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(&self.bias).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(&mut self.bias).collect()
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub eps: f64,
    cache: Option<NormCache>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::filled(1, dim, 1.0)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(1, dim)),
            eps: LAYER_NORM_EPS,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        crate::tensor::layer_norm(input, self.gamma.value.data(), self.beta.value.data(), self.eps)
    }
}

impl Layer for LayerNorm {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let dim = self.dim();
        if input.cols() != dim {
            return Err(Error::ShapeMismatch(format!(
                "layer_norm over {dim} features got {} columns",
                input.cols()
            )));
        }
        let mut normalized = input.clone();
        let mut inv_std = Vec::with_capacity(input.rows());
        for r in 0..input.rows() {
            let row = normalized.row_mut(r);
            let mean = row.iter().sum::<f64>() / dim as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / dim as f64;
            let inv = 1.0 / (var + self.eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        let mut out = normalized.clone();
        for r in 0..out.rows() {
            for ((v, g), b) in out
                .row_mut(r)
                .iter_mut()
                .zip(self.gamma.value.data())
                .zip(self.beta.value.data())
            {
                *v = *v * g + b;
            }
        }
        self.cache = Some(NormCache { normalized, inv_std });
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("layer_norm"))?;
        let xhat = &cache.normalized;
        check_grad_shape("layer_norm", xhat.shape(), grad_output)?;
        let dim = self.dim() as f64;
        let gamma = self.gamma.value.data();
        let mut grad_input = Tensor::zeros(xhat.rows(), xhat.cols());
        for r in 0..xhat.rows() {
            let dy = grad_output.row(r);
            let xr = xhat.row(r);
            for (c, (&g, &x)) in dy.iter().zip(xr).enumerate() {
                self.gamma.grad[(0, c)] += g * x;
                self.beta.grad[(0, c)] += g;
            }
            let dxhat: Vec<f64> = dy.iter().zip(gamma).map(|(g, w)| g * w).collect();
            let sum: f64 = dxhat.iter().sum();
            let dot: f64 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum();
            let inv = cache.inv_std[r];
            for ((o, d), x) in grad_input.row_mut(r).iter_mut().zip(&dxhat).zip(xr) {
                *o = inv / dim * (dim * d - sum - x * dot);
            }
        }
        Ok(grad_input)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Element-wise GELU (tanh approximation). No parameters.
#[derive(Debug, Clone, Default)]
pub struct Gelu {
    input: Option<Tensor>,
}

impl Gelu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Gelu {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.input = Some(input.clone());
        Ok(input.map(gelu))
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or_else(|| missing_cache("gelu"))?;
        check_grad_shape("gelu", input.shape(), grad_output)?;
        let mut out = grad_output.clone();
        for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
            *g *= gelu_derivative(x);
        }
        Ok(out)
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}
