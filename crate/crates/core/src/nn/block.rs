use rand::Rng;

use super::{Gelu, Layer, LayerNorm, Linear, MultiHeadAttention, Param};
use crate::error::Result;
use crate::tensor::{gelu, Tensor};

/// Position-wise `Linear → GELU → Linear`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub expand: Linear,
    pub activation: Gelu,
    pub contract: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(name: &str, d_model: usize, d_ff: usize, std: f64, rng: &mut R) -> Self {
        Self {
            expand: Linear::new(&format!("{name}.expand"), d_model, d_ff, std, rng),
            activation: Gelu::new(),
            contract: Linear::new(&format!("{name}.contract"), d_ff, d_model, std, rng),
        }
    }

    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let hidden = self.expand.apply(input)?.map(gelu);
        self.contract.apply(&hidden)
    }
}

impl Layer for FeedForward {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let h = self.expand.forward(input)?;
        let h = self.activation.forward(&h)?;
        self.contract.forward(&h)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let g = self.contract.backward(grad_output)?;
        let g = self.activation.backward(&g)?;
        self.expand.backward(&g)
    }

    fn params(&self) -> Vec<&Param> {
        let mut out = self.expand.params();
        out.extend(self.contract.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.expand.params_mut();
        out.extend(self.contract.params_mut());
        out
    }
}

/// Pre-norm transformer block:
/// `h = x + attn(ln1(x))`, `y = h + ffn(ln2(h))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub attn_norm: LayerNorm,
    pub attention: MultiHeadAttention,
    pub ffn_norm: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderBlock {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        d_model: usize,
        heads: usize,
        d_ff: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            attn_norm: LayerNorm::new(&format!("{name}.attn_norm"), d_model),
            attention: MultiHeadAttention::new(&format!("{name}.attention"), d_model, heads, std, rng)?,
            ffn_norm: LayerNorm::new(&format!("{name}.ffn_norm"), d_model),
            ffn: FeedForward::new(&format!("{name}.ffn"), d_model, d_ff, std, rng),
        })
    }

    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) {
        self.attention.set_mask(mask);
    }

    pub fn apply(&self, input: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
        let mut h = input.clone();
        h.add_assign(&self.attention.apply(&self.attn_norm.apply(input)?, mask)?)?;
        let mut out = h.clone();
        out.add_assign(&self.ffn.apply(&self.ffn_norm.apply(&h)?)?)?;
        Ok(out)
    }
}

impl Layer for EncoderBlock {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let a = self.attn_norm.forward(input)?;
        let mut h = self.attention.forward(&a)?;
        h.add_assign(input)?;
        let f = self.ffn_norm.forward(&h)?;
        let mut out = self.ffn.forward(&f)?;
        out.add_assign(&h)?;
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mut dh = self.ffn_norm.backward(&self.ffn.backward(grad_output)?)?;
        dh.add_assign(grad_output)?;
        let mut dx = self.attn_norm.backward(&self.attention.backward(&dh)?)?;
        dx.add_assign(&dh)?;
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        let mut out = self.attn_norm.params();
        out.extend(self.attention.params());
        out.extend(self.ffn_norm.params());
        out.extend(self.ffn.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.attn_norm.params_mut();
        out.extend(self.attention.params_mut());
        out.extend(self.ffn_norm.params_mut());
        out.extend(self.ffn.params_mut());
        out
    }
}
