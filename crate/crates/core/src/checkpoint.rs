//! Model checkpoint files.
//!
//! Layout: the line `ITSM1`, then `key=value` config lines, then optional
//! `meta.<key>=<value>` lines, then an empty line, then every parameter as
//! little-endian f64 in [`EncoderModel::params`] order (embedding, position,
//! per block: attention norm, Q, K, V, O, FFN norm, FFN expand, FFN
//! contract, then final norm and head; each weight before its bias).

use std::path::Path;

use crate::encoder::{init_model, EncoderConfig, EncoderModel, InputMode};
use crate::error::{Error, Result};

pub const MAGIC: &str = "ITSM1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: EncoderModel,
    /// Free-form metadata (modality, class names), kept in file order.
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(model: EncoderModel) -> Self {
        Self {
            model,
            metadata: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.push((key.to_string(), value.into()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.model.config();
        let mut header = format!("{MAGIC}\nmode={}\n", c.mode.name());
        match c.mode {
            InputMode::Token { vocab_size } => header.push_str(&format!("vocab_size={vocab_size}\n")),
            InputMode::Feature { feature_dim } => header.push_str(&format!("feature_dim={feature_dim}\n")),
        }
        header.push_str(&format!(
            "layers={}\nheads={}\nd_model={}\nd_ff={}\nmax_len={}\nn_classes={}\nseed={}\nparam_count={}\n",
            c.layers,
            c.heads,
            c.d_model,
            c.d_ff,
            c.max_len,
            c.n_classes,
            c.seed,
            c.param_count()
        ));
        for (k, v) in &self.metadata {
            header.push_str(&format!("meta.{k}={v}\n"));
        }
        header.push('\n');
        let mut out = header.into_bytes();
        for p in self.model.params() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidCheckpoint(msg.to_string());
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| bad("missing header terminator"))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8"))?;
        let body = &bytes[split + 2..];
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing ITSM1 magic"));
        }
        let mut fields = std::collections::HashMap::new();
        let mut metadata = Vec::new();
        for line in lines {
            let (k, v) = line.split_once('=').ok_or_else(|| bad("header line without `=`"))?;
            match k.strip_prefix("meta.") {
                Some(meta) => metadata.push((meta.to_string(), v.to_string())),
                None => {
                    fields.insert(k.to_string(), v.to_string());
                }
            }
        }
        let num = |key: &str| -> Result<u64> {
            fields
                .get(key)
                .ok_or_else(|| Error::InvalidCheckpoint(format!("missing `{key}`")))?
                .parse()
                .map_err(|_| Error::InvalidCheckpoint(format!("`{key}` is not an integer")))
        };
        let mode = match fields.get("mode").map(String::as_str) {
            Some("token_input") => InputMode::Token {
                vocab_size: num("vocab_size")? as usize,
            },
            Some("feature_input") => InputMode::Feature {
                feature_dim: num("feature_dim")? as usize,
            },
            _ => return Err(bad("unknown or missing mode")),
        };
        let config = EncoderConfig {
            layers: num("layers")? as usize,
            heads: num("heads")? as usize,
            d_model: num("d_model")? as usize,
            d_ff: num("d_ff")? as usize,
            max_len: num("max_len")? as usize,
            mode,
            n_classes: num("n_classes")? as usize,
            seed: num("seed")?,
        };
        config.validate()?;
        let count = config.param_count();
        if num("param_count")? as usize != count {
            return Err(bad("param_count does not match the config"));
        }
        if body.len() != count * 8 {
            return Err(Error::InvalidCheckpoint(format!(
                "expected {} parameter bytes, found {}",
                count * 8,
                body.len()
            )));
        }
        let mut model = init_model(&config)?;
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for p in model.params_mut() {
            for slot in p.value.data_mut() {
                *slot = values.next().expect("length checked");
            }
        }
        if !model.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(Self { model, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
