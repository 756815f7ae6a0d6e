//! Transformer encoder classifier shared by the text and audio paths.
//!
//! Token mode embeds vocabulary ids; feature mode projects 257-bin spectrogram
//! frames. Both add a learned position embedding, run `L` pre-norm blocks with
//! a key padding mask, apply a final layer norm (when `L > 0`) and classify
//! from the position-0 state.
//!
//! Positions after the last unmasked one can never influence an unmasked
//! position, so both inference and training stop there.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{EncoderBlock, Layer, LayerNorm, Linear, Param};
use crate::tensor::{softmax_in_place, Tensor};
use crate::text::EncodedText;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Token { vocab_size: usize },
    Feature { feature_dim: usize },
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::Token { .. } => "token_input",
            InputMode::Feature { .. } => "feature_input",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub mode: InputMode,
    pub n_classes: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn token(vocab_size: usize, max_len: usize, n_classes: usize) -> Self {
        Self {
            layers: 2,
            heads: 4,
            d_model: 32,
            d_ff: 64,
            max_len,
            mode: InputMode::Token { vocab_size },
            n_classes,
            seed: 0,
        }
    }

    pub fn feature(feature_dim: usize, max_len: usize, n_classes: usize) -> Self {
        Self {
            mode: InputMode::Feature { feature_dim },
            ..Self::token(0, max_len, n_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if self.d_ff == 0 {
            return fail("d_ff must be positive".into());
        }
        if self.max_len < 4 {
            return fail(format!("max_len {} must be at least 4", self.max_len));
        }
        if self.n_classes < 2 {
            return fail(format!("n_classes {} must be at least 2", self.n_classes));
        }
        match self.mode {
            InputMode::Token { vocab_size: 0 } => fail("vocab_size must be positive".into()),
            InputMode::Feature { feature_dim: 0 } => fail("feature_dim must be positive".into()),
            _ => Ok(()),
        }
    }

    /// Closed-form number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let (d, f, c) = (self.d_model, self.d_ff, self.n_classes);
        let embed = match self.mode {
            InputMode::Token { vocab_size } => vocab_size * d,
            InputMode::Feature { feature_dim } => feature_dim * d + d,
        };
        let block = (4 * d * d + 3 * d) + (d * f + f) + (f * d + d) + 4 * d;
        let final_norm = if self.layers > 0 { 2 * d } else { 0 };
        embed + self.max_len * d + self.layers * block + final_norm + d * c + c
    }

    pub fn count_macs(&self, seq_len: usize) -> u64 {
        count_macs(self.layers, self.d_model, self.d_ff, self.n_classes, seq_len)
    }
}

/// Multiply-accumulates in the linear maps and attention products of the
/// blocks plus the classifier head:
/// `L·(4·S·d² + 2·S²·d + 2·S·d·d_ff) + d·C`.
pub fn count_macs(layers: usize, d_model: usize, d_ff: usize, n_classes: usize, seq_len: usize) -> u64 {
    let (l, d, f, c, s) = (
        layers as u64,
        d_model as u64,
        d_ff as u64,
        n_classes as u64,
        seq_len as u64,
    );
    l * (4 * s * d * d + 2 * s * s * d + 2 * s * d * f) + d * c
}

/// One sequence presented to the encoder. Mask entries are 1 for real
/// positions and 0 for padding.
#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a> {
    Tokens { ids: &'a [usize], mask: &'a [u8] },
    Features { frames: &'a Tensor, mask: &'a [u8] },
}

impl<'a> From<&'a EncodedText> for ModelInput<'a> {
    fn from(enc: &'a EncodedText) -> Self {
        ModelInput::Tokens {
            ids: &enc.ids,
            mask: &enc.mask,
        }
    }
}

impl ModelInput<'_> {
    fn mask(&self) -> &[u8] {
        match self {
            ModelInput::Tokens { mask, .. } | ModelInput::Features { mask, .. } => mask,
        }
    }

    /// Number of leading positions that can affect the position-0 output.
    fn effective_len(&self) -> usize {
        self.mask().iter().rposition(|&m| m != 0).map_or(1, |i| i + 1)
    }
}

#[derive(Debug, Clone)]
enum Embedding {
    Token(Param),
    Feature(Linear),
}

#[derive(Debug, Clone)]
struct Cache {
    ids: Option<Vec<usize>>,
    seq_len: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderModel {
    config: EncoderConfig,
    embedding: Embedding,
    position: Param,
    blocks: Vec<EncoderBlock>,
    final_norm: Option<LayerNorm>,
    head: Linear,
    cache: Option<Cache>,
}

/// Weights ~ Normal(0, 0.02), biases and layer-norm beta 0, gamma 1; the
/// draw order is fixed, so a config and seed determine every bit.
pub fn init_model(config: &EncoderConfig) -> Result<EncoderModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.d_model;
    let embedding = match config.mode {
        InputMode::Token { vocab_size } => Embedding::Token(Param::new(
            "embedding.token",
            Tensor::random_normal(vocab_size, d, INIT_STD, &mut rng),
        )),
        InputMode::Feature { feature_dim } => {
            Embedding::Feature(Linear::new("embedding.input_proj", feature_dim, d, INIT_STD, &mut rng))
        }
    };
    let position = Param::new(
        "embedding.position",
        Tensor::random_normal(config.max_len, d, INIT_STD, &mut rng),
    );
    let blocks = (0..config.layers)
        .map(|i| EncoderBlock::new(&format!("block{i}"), d, config.heads, config.d_ff, INIT_STD, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let final_norm = (config.layers > 0).then(|| LayerNorm::new("final_norm", d));
    let head = Linear::new("head", d, config.n_classes, INIT_STD, &mut rng);
    Ok(EncoderModel {
        config: *config,
        embedding,
        position,
        blocks,
        final_norm,
        head,
        cache: None,
    })
}

impl EncoderModel {
    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Parameters in checkpoint order: embedding, position, blocks, final
    /// norm, head.
    pub fn params(&self) -> Vec<&Param> {
        let mut out = match &self.embedding {
            Embedding::Token(p) => vec![p],
            Embedding::Feature(l) => l.params(),
        };
        out.push(&self.position);
        for b in &self.blocks {
            out.extend(b.params());
        }
        if let Some(n) = &self.final_norm {
            out.extend(n.params());
        }
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = match &mut self.embedding {
            Embedding::Token(p) => vec![p],
            Embedding::Feature(l) => l.params_mut(),
        };
        out.push(&mut self.position);
        for b in &mut self.blocks {
            out.extend(b.params_mut());
        }
        if let Some(n) = &mut self.final_norm {
            out.extend(n.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.is_finite())
    }

    fn check_input(&self, input: &ModelInput<'_>) -> Result<()> {
        let max_len = self.config.max_len;
        match (input, self.config.mode) {
            (ModelInput::Tokens { ids, mask }, InputMode::Token { vocab_size }) => {
                if ids.len() != max_len || mask.len() != max_len {
                    return Err(Error::ShapeMismatch(format!(
                        "token input of length {}/{} for max_len {max_len}",
                        ids.len(),
                        mask.len()
                    )));
                }
                if let Some(&bad) = ids.iter().find(|&&id| id >= vocab_size) {
                    return Err(Error::UnknownId(bad));
                }
            }
            (ModelInput::Features { frames, mask }, InputMode::Feature { feature_dim }) => {
                if frames.cols() != feature_dim || frames.rows() > max_len || mask.len() != frames.rows() {
                    return Err(Error::ShapeMismatch(format!(
                        "feature input {}x{} with mask {} for {feature_dim} bins, max_len {max_len}",
                        frames.rows(),
                        frames.cols(),
                        mask.len()
                    )));
                }
            }
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "input kind does not match {} model",
                    self.config.mode.name()
                )))
            }
        }
        Ok(())
    }

    fn key_mask(input: &ModelInput<'_>, seq_len: usize) -> Vec<bool> {
        input.mask()[..seq_len].iter().map(|&m| m != 0).collect()
    }

    fn embed(&self, input: &ModelInput<'_>, seq_len: usize) -> Result<Tensor> {
        let d = self.config.d_model;
        let mut x = match (&self.embedding, input) {
            (Embedding::Token(table), ModelInput::Tokens { ids, .. }) => {
                let mut x = Tensor::zeros(seq_len, d);
                for (i, &id) in ids[..seq_len].iter().enumerate() {
                    x.row_mut(i).copy_from_slice(table.value.row(id));
                }
                x
            }
            (Embedding::Feature(proj), ModelInput::Features { frames, .. }) => {
                proj.apply(&frames.slice_rows(0, seq_len))?
            }
            _ => unreachable!("checked by check_input"),
        };
        x.add_assign(&self.position.value.slice_rows(0, seq_len))?;
        Ok(x)
    }

    /// Class logits for one sequence, without touching cached state.
    pub fn logits(&self, input: ModelInput<'_>) -> Result<Vec<f64>> {
        self.check_input(&input)?;
        let seq_len = input.effective_len();
        let mask = Self::key_mask(&input, seq_len);
        let mut x = self.embed(&input, seq_len)?;
        for block in &self.blocks {
            x = block.apply(&x, Some(&mask))?;
        }
        if let Some(norm) = &self.final_norm {
            x = norm.apply(&x)?;
        }
        Ok(self.head.apply(&x.slice_rows(0, 1))?.into_data())
    }

    /// Class index (ties to the lowest index) and softmax distribution.
    pub fn predict(&self, input: ModelInput<'_>) -> Result<(usize, Vec<f64>)> {
        let mut dist = self.logits(input)?;
        let class = argmax(&dist);
        softmax_in_place(&mut dist);
        Ok((class, dist))
    }

    /// Training forward pass: returns 1×C logits and caches activations for
    /// [`EncoderModel::backward`].
    pub fn forward_train(&mut self, input: ModelInput<'_>) -> Result<Tensor> {
        self.check_input(&input)?;
        let seq_len = input.effective_len();
        let mask = Self::key_mask(&input, seq_len);
        let (mut x, ids) = match input {
            ModelInput::Tokens { ids, .. } => (self.embed(&input, seq_len)?, Some(ids[..seq_len].to_vec())),
            ModelInput::Features { frames, .. } => {
                let Embedding::Feature(proj) = &mut self.embedding else {
                    unreachable!("checked by check_input")
                };
                let mut x = proj.forward(&frames.slice_rows(0, seq_len))?;
                x.add_assign(&self.position.value.slice_rows(0, seq_len))?;
                (x, None)
            }
        };
        for block in &mut self.blocks {
            block.set_mask(Some(mask.clone()));
            x = block.forward(&x)?;
        }
        if let Some(norm) = &mut self.final_norm {
            x = norm.forward(&x)?;
        }
        let logits = self.head.forward(&x.slice_rows(0, 1))?;
        self.cache = Some(Cache { ids, seq_len });
        Ok(logits)
    }

    /// Accumulates parameter gradients for the last [`forward_train`] given
    /// the gradient of the loss with respect to its logits.
    ///
    /// [`forward_train`]: EncoderModel::forward_train
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::ShapeMismatch("encoder: backward called before forward".into()))?;
        let d_cls = self.head.backward(grad_logits)?;
        let mut dx = Tensor::zeros(cache.seq_len, self.config.d_model);
        dx.row_mut(0).copy_from_slice(d_cls.row(0));
        if let Some(norm) = &mut self.final_norm {
            dx = norm.backward(&dx)?;
        }
        for block in self.blocks.iter_mut().rev() {
            dx = block.backward(&dx)?;
        }
        for i in 0..cache.seq_len {
            for (g, v) in self.position.grad.row_mut(i).iter_mut().zip(dx.row(i)) {
                *g += v;
            }
        }
        match (&mut self.embedding, cache.ids) {
            (Embedding::Token(table), Some(ids)) => {
                for (i, id) in ids.into_iter().enumerate() {
                    for (g, v) in table.grad.row_mut(id).iter_mut().zip(dx.row(i)) {
                        *g += v;
                    }
                }
            }
            (Embedding::Feature(proj), None) => {
                proj.backward(&dx)?;
            }
            _ => unreachable!("cache matches embedding kind"),
        }
        Ok(())
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashMap;

    fn tiny(layers: usize, seed: u64) -> EncoderConfig {
        EncoderConfig {
            layers,
            heads: 2,
            d_model: 8,
            d_ff: 12,
            max_len: 6,
            mode: InputMode::Token { vocab_size: 10 },
            n_classes: 3,
            seed,
        }
    }

    #[test]
    fn head_only_parameter_count() {
        let cfg = EncoderConfig {
            layers: 0,
            heads: 1,
            d_model: 8,
            d_ff: 16,
            max_len: 4,
            mode: InputMode::Token { vocab_size: 10 },
            n_classes: 3,
            seed: 1,
        };
        let model = init_model(&cfg).unwrap();
        assert_eq!(model.param_count(), 139);
        assert_eq!(cfg.param_count(), 139);
    }

    #[test]
    fn parameter_count_matches_formula_on_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let heads = rng.random_range(1..4);
            let cfg = EncoderConfig {
                layers: rng.random_range(0..4),
                heads,
                d_model: heads * rng.random_range(1..5),
                d_ff: rng.random_range(1..20),
                max_len: rng.random_range(4..12),
                mode: if rng.random_bool(0.5) {
                    InputMode::Token {
                        vocab_size: rng.random_range(5..40),
                    }
                } else {
                    InputMode::Feature { feature_dim: 257 }
                },
                n_classes: rng.random_range(2..6),
                seed: rng.random(),
            };
            let model = init_model(&cfg).unwrap();
            assert_eq!(model.param_count(), cfg.param_count(), "{cfg:?}");
        }
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let a = init_model(&tiny(2, 9)).unwrap();
        let b = init_model(&tiny(2, 9)).unwrap();
        for (p, q) in a.params().iter().zip(b.params()) {
            assert_eq!(p.value.data(), q.value.data());
        }
        let c = init_model(&tiny(2, 10)).unwrap();
        assert_ne!(a.params()[0].value.data(), c.params()[0].value.data());
        let bad = EncoderConfig {
            d_model: 10,
            heads: 4,
            ..tiny(1, 0)
        };
        assert!(matches!(init_model(&bad), Err(Error::InvalidConfig(_))));
        let gammas: Vec<_> = a.params().into_iter().filter(|p| p.name.ends_with("gamma")).collect();
        assert!(gammas.iter().all(|p| p.value.data().iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn logits_have_class_count_and_match_training_path() {
        let mut model = init_model(&tiny(2, 3)).unwrap();
        let ids = [2, 5, 7, 3, 0, 0];
        let mask = [1, 1, 1, 1, 0, 0];
        let input = ModelInput::Tokens { ids: &ids, mask: &mask };
        let logits = model.logits(input).unwrap();
        assert_eq!(logits.len(), 3);
        assert_eq!(model.forward_train(input).unwrap().data(), logits.as_slice());
        let wrong = [2, 5, 3];
        assert!(matches!(
            model.logits(ModelInput::Tokens {
                ids: &wrong,
                mask: &[1, 1, 1]
            }),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn padded_positions_do_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..5 {
            let model = init_model(&tiny(2, seed)).unwrap();
            let mask = [1, 1, 1, 0, 0, 0];
            let base = [2, 4, 3, 0, 0, 0];
            let reference = model
                .logits(ModelInput::Tokens {
                    ids: &base,
                    mask: &mask,
                })
                .unwrap();
            let mut noisy = base;
            for id in &mut noisy[3..] {
                *id = rng.random_range(0..10);
            }
            let other = model
                .logits(ModelInput::Tokens {
                    ids: &noisy,
                    mask: &mask,
                })
                .unwrap();
            for (a, b) in reference.iter().zip(&other) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let cfg = EncoderConfig {
            mode: InputMode::Feature { feature_dim: 5 },
            ..tiny(1, 4)
        };
        let model = init_model(&cfg).unwrap();
        let mut frames = Tensor::random_normal(5, 5, 1.0, &mut rng);
        let mask = [1, 1, 0, 0, 0];
        let reference = model
            .logits(ModelInput::Features {
                frames: &frames,
                mask: &mask,
            })
            .unwrap();
        for v in frames.row_mut(4) {
            *v = 100.0;
        }
        let other = model
            .logits(ModelInput::Features {
                frames: &frames,
                mask: &mask,
            })
            .unwrap();
        assert_eq!(reference, other);
    }

    /// Step-by-step loop implementation over all `max_len` positions with an
    /// explicit −∞ key mask.
    fn naive_logits(model: &EncoderModel, ids: &[usize], mask: &[u8]) -> Vec<f64> {
        let cfg = model.config();
        let p: HashMap<String, &Tensor> = model.params().into_iter().map(|p| (p.name.clone(), &p.value)).collect();
        let (s, d) = (ids.len(), cfg.d_model);
        let dk = d / cfg.heads;
        let lin = |x: &Vec<Vec<f64>>, name: &str| -> Vec<Vec<f64>> {
            let w = p[&format!("{name}.weight")];
            let b = p.get(&format!("{name}.bias"));
            x.iter()
                .map(|row| {
                    (0..w.cols())
                        .map(|j| b.map_or(0.0, |b| b[(0, j)]) + (0..w.rows()).map(|k| row[k] * w[(k, j)]).sum::<f64>())
                        .collect()
                })
                .collect()
        };
        let norm = |x: &Vec<Vec<f64>>, name: &str| -> Vec<Vec<f64>> {
            let g = p[&format!("{name}.gamma")];
            let b = p[&format!("{name}.beta")];
            x.iter()
                .map(|row| {
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                    (0..d)
                        .map(|j| (row[j] - mean) / (var + 1e-5).sqrt() * g[(0, j)] + b[(0, j)])
                        .collect()
                })
                .collect()
        };
        let mut x: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                (0..d)
                    .map(|j| p["embedding.token"][(ids[i], j)] + p["embedding.position"][(i, j)])
                    .collect()
            })
            .collect();
        for l in 0..cfg.layers {
            let a = norm(&x, &format!("block{l}.attn_norm"));
            let q = lin(&a, &format!("block{l}.attention.query"));
            let k = lin(&a, &format!("block{l}.attention.key"));
            let v = lin(&a, &format!("block{l}.attention.value"));
            let mut ctx = vec![vec![0.0; d]; s];
            for h in 0..cfg.heads {
                for i in 0..s {
                    let scores: Vec<f64> = (0..s)
                        .map(|j| {
                            if mask[j] == 0 {
                                f64::NEG_INFINITY
                            } else {
                                (0..dk).map(|c| q[i][h * dk + c] * k[j][h * dk + c]).sum::<f64>() / (dk as f64).sqrt()
                            }
                        })
                        .collect();
                    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|sc| (sc - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for c in 0..dk {
                        ctx[i][h * dk + c] = (0..s).map(|j| e[j] / z * v[j][h * dk + c]).sum();
                    }
                }
            }
            let o = lin(&ctx, &format!("block{l}.attention.output"));
            let hmid: Vec<Vec<f64>> = (0..s).map(|i| (0..d).map(|j| x[i][j] + o[i][j]).collect()).collect();
            let f = norm(&hmid, &format!("block{l}.ffn_norm"));
            let e = lin(&f, &format!("block{l}.ffn.expand"));
            let g: Vec<Vec<f64>> = e
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&u| 0.5 * u * (1.0 + (0.7978845608 * (u + 0.044715 * u * u * u)).tanh()))
                        .collect()
                })
                .collect();
            let c = lin(&g, &format!("block{l}.ffn.contract"));
            x = (0..s).map(|i| (0..d).map(|j| hmid[i][j] + c[i][j]).collect()).collect();
        }
        if cfg.layers > 0 {
            x = norm(&x, "final_norm");
        }
        lin(&vec![x[0].clone()], "head").remove(0)
    }

    #[test]
    fn matches_naive_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for layers in 0..3 {
            let mut model = init_model(&tiny(layers, layers as u64)).unwrap();
            // Larger weights make the comparison sensitive to every term.
            for p in model.params_mut() {
                for v in p.value.data_mut() {
                    *v += rng.random_range(-0.3..0.3);
                }
            }
            let ids = [2, 4, 9, 1, 3, 0];
            let mask = [1, 1, 1, 1, 1, 0];
            let fast = model.logits(ModelInput::Tokens { ids: &ids, mask: &mask }).unwrap();
            let naive = naive_logits(&model, &ids, &mask);
            for (a, b) in fast.iter().zip(&naive) {
                assert!((a - b).abs() < 1e-10, "{fast:?} vs {naive:?}");
            }
        }
    }

    #[test]
    fn backward_needs_forward() {
        let mut model = init_model(&tiny(1, 0)).unwrap();
        assert!(model.backward(&Tensor::zeros(1, 3)).is_err());
    }

    #[test]
    fn mac_count_fixture() {
        assert_eq!(count_macs(2, 64, 256, 3, 128), 16_777_408);
        assert_eq!(count_macs(0, 64, 256, 3, 128), 64 * 3);
        assert_eq!(tiny(0, 0).count_macs(6), 8 * 3);
    }

    proptest! {
        #[test]
        fn mac_count_is_monotone(l in 0usize..6, d in 1usize..128, f in 1usize..512, c in 2usize..10, s in 1usize..256) {
            let base = count_macs(l, d, f, c, s);
            prop_assert!(count_macs(l + 1, d, f, c, s) >= base);
            prop_assert!(count_macs(l, d + 1, f, c, s) >= base);
            prop_assert!(count_macs(l, d, f + 1, c, s) >= base);
            prop_assert!(count_macs(l, d, f, c, s + 1) >= base);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }
}
