use rand::Rng;

use super::{check_grad_shape, missing_cache, Layer, Linear, Param};
use crate::error::{Error, Result};
use crate::tensor::{apply_key_mask, matmul, matmul_at, matmul_bt, softmax_rows, Tensor};

#[derive(Debug, Clone)]
struct AttentionCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Attention weights per head, each (S, S).
    weights: Vec<Tensor>,
}

/// Multi-head self-attention with a key padding mask. Keys carry no bias
/// (it would cancel in the softmax).
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    heads: usize,
    mask: Option<Vec<bool>>,
    cache: Option<AttentionCache>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(name: &str, d_model: usize, heads: usize, std: f64, rng: &mut R) -> Result<Self> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::new(&format!("{name}.query"), d_model, d_model, std, rng),
            key: Linear::without_bias(&format!("{name}.key"), d_model, d_model, std, rng),
            value: Linear::new(&format!("{name}.value"), d_model, d_model, std, rng),
            output: Linear::new(&format!("{name}.output"), d_model, d_model, std, rng),
            heads,
            mask: None,
            cache: None,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Sets the key mask used by subsequent forward calls; `None` attends to
    /// every position.
    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) {
        self.mask = mask;
    }

    pub fn apply(&self, input: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
        let q = self.query.apply(input)?;
        let k = self.key.apply(input)?;
        let v = self.value.apply(input)?;
        let (context, _) = self.attend(&q, &k, &v, mask)?;
        self.output.apply(&context)
    }

    fn attend(&self, q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&[bool]>) -> Result<(Tensor, Vec<Tensor>)> {
        let seq = q.rows();
        if let Some(m) = mask {
            if m.len() != seq {
                return Err(Error::ShapeMismatch(format!(
                    "mask of {} for sequence of {seq}",
                    m.len()
                )));
            }
        }
        let d = q.cols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut context = Tensor::zeros(seq, d);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = q.slice_cols(lo, hi);
            let kh = k.slice_cols(lo, hi);
            let vh = v.slice_cols(lo, hi);
            let mut scores = matmul_bt(&qh, &kh)?.scale(scale);
            if let Some(m) = mask {
                apply_key_mask(&mut scores, m);
            }
            let p = softmax_rows(&scores);
            context.set_cols(lo, &matmul(&p, &vh)?);
            weights.push(p);
        }
        Ok((context, weights))
    }
}

impl Layer for MultiHeadAttention {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let q = self.query.forward(input)?;
        let k = self.key.forward(input)?;
        let v = self.value.forward(input)?;
        let (context, weights) = self.attend(&q, &k, &v, self.mask.as_deref())?;
        let out = self.output.forward(&context)?;
        self.cache = Some(AttentionCache { q, k, v, weights });
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("attention"))?;
        check_grad_shape("attention", cache.q.shape(), grad_output)?;
        let d_context = self.output.backward(grad_output)?;
        let d = cache.q.cols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let seq = cache.q.rows();
        let mut dq = Tensor::zeros(seq, d);
        let mut dk = Tensor::zeros(seq, d);
        let mut dv = Tensor::zeros(seq, d);
        for (h, p) in cache.weights.iter().enumerate() {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = cache.q.slice_cols(lo, hi);
            let kh = cache.k.slice_cols(lo, hi);
            let vh = cache.v.slice_cols(lo, hi);
            let doh = d_context.slice_cols(lo, hi);
            let dp = matmul_bt(&doh, &vh)?;
            dv.set_cols(lo, &matmul_at(p, &doh)?);
            // softmax Jacobian: dS = P ⊙ (dP − rowsum(dP ⊙ P))
            let mut ds = Tensor::zeros(seq, seq);
            for r in 0..seq {
                let pr = p.row(r);
                let dpr = dp.row(r);
                let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
                for ((o, &pv), &dpv) in ds.row_mut(r).iter_mut().zip(pr).zip(dpr) {
                    *o = pv * (dpv - dot) * scale;
                }
            }
            dq.set_cols(lo, &matmul(&ds, &kh)?);
            dk.set_cols(lo, &matmul_at(&ds, &qh)?);
        }
        let mut dx = self.query.backward(&dq)?;
        dx.add_assign(&self.key.backward(&dk)?)?;
        dx.add_assign(&self.value.backward(&dv)?)?;
        self.cache = Some(cache);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        [&self.query, &self.key, &self.value, &self.output]
            .into_iter()
            .flat_map(|l| l.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.query.params_mut();
        out.extend(self.key.params_mut());
        out.extend(self.value.params_mut());
        out.extend(self.output.params_mut());
        out
    }
}
