//! Tabular-record serialization and a trained word/sub-word tokenizer.
//!
//! Records render as `name is value [SEP] name is value ...`. The tokenizer
//! splits on whitespace and matches each unit greedily against the vocabulary,
//! longest prefix first, with `##`-prefixed continuation pieces; a unit that
//! cannot be fully covered becomes `[UNK]`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FieldValue, SensorRecord};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
pub const CONTINUATION: &str = "##";
pub const DEFAULT_MAX_LEN: usize = 64;

/// Renders a validated record as a single line of text.
pub fn serialize_record(record: &SensorRecord) -> Result<String> {
    if record.schema.is_empty() {
        return Err(Error::EmptySchema);
    }
    if record.values.len() != record.schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} values for {} fields",
            record.values.len(),
            record.schema.len()
        )));
    }
    let parts: Vec<String> = record
        .schema
        .iter()
        .zip(&record.values)
        .map(|(field, value)| {
            let rendered = match value {
                FieldValue::Numeric(v) => format_numeric(*v),
                FieldValue::Categorical(s) => s.clone(),
            };
            format!("{} is {}", field.name.to_lowercase(), rendered)
        })
        .collect();
    Ok(parts.join(" [SEP] "))
}

/// Up to 6 significant digits, shortest form, `%g`-style exponent outside
/// `[1e-5, 1e6)`.
pub fn format_numeric(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Token inventory with reserved ids 0..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(special) {
                return Err(Error::InvalidInput(format!("vocab line {} must be {special}", i + 1)));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidInput(format!("invalid token on line {}", id + 1)));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number (from 0) is the id.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Splits a word into its first character and `##`-prefixed single-character
/// continuation pieces.
fn char_pieces(word: &str) -> impl Iterator<Item = String> + '_ {
    word.chars().enumerate().map(|(i, c)| {
        if i == 0 {
            c.to_string()
        } else {
            format!("{CONTINUATION}{c}")
        }
    })
}

/// Builds a vocabulary from a corpus.
///
/// Whole words with count >= `min_frequency` are kept. Words below the cutoff
/// contribute their character pieces (first character plus `##` continuation
/// pieces), which are kept under the same cutoff. Survivors are ordered by
/// descending count, then lexicographically, and the vocabulary (specials
/// included) is truncated to `max_size`.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], min_frequency: usize, max_size: usize) -> Result<Vocab> {
    if max_size <= SPECIAL_TOKENS.len() {
        return Err(Error::InvalidInput(format!("max_size {max_size} must exceed 4")));
    }
    let min_frequency = min_frequency.max(1);
    let mut words: HashMap<&str, usize> = HashMap::new();
    for text in corpus {
        for w in text.as_ref().split_whitespace() {
            if !SPECIAL_TOKENS.contains(&w) {
                *words.entry(w).or_default() += 1;
            }
        }
    }
    if words.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut counts: HashMap<String, usize> = HashMap::new();
    for (&word, &count) in &words {
        if count >= min_frequency {
            *counts.entry(word.to_string()).or_default() += count;
        }
    }
    let mut pieces: HashMap<String, usize> = HashMap::new();
    for (&word, &count) in &words {
        if count < min_frequency {
            for piece in char_pieces(word) {
                *pieces.entry(piece).or_default() += count;
            }
        }
    }
    for (piece, count) in pieces {
        if count >= min_frequency {
            *counts.entry(piece).or_default() += count;
        }
    }

    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - SPECIAL_TOKENS.len());

    let tokens = SPECIAL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(t, _)| t))
        .collect();
    Vocab::from_tokens(tokens)
}

/// Fixed-length id sequence with attention mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedText {
    pub ids: Vec<usize>,
    pub mask: Vec<u8>,
}

impl EncodedText {
    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Greedy longest-match segmentation of one whitespace unit.
fn segment(unit: &str, vocab: &Vocab, out: &mut Vec<usize>) {
    if unit == SPECIAL_TOKENS[SEP] {
        out.push(SEP);
        return;
    }
    if SPECIAL_TOKENS.contains(&unit) {
        out.push(UNK);
        return;
    }
    let bounds: Vec<usize> = unit
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(unit.len()))
        .collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    while start + 1 < bounds.len() {
        let mut found = None;
        for end in (start + 1..bounds.len()).rev() {
            let sub = &unit[bounds[start]..bounds[end]];
            let id = if start == 0 {
                vocab.id(sub)
            } else {
                vocab.id(&format!("{CONTINUATION}{sub}"))
            };
            if let Some(id) = id.filter(|&id| id >= SPECIAL_TOKENS.len()) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => {
                out.push(UNK);
                return;
            }
        }
    }
    out.extend(pieces);
}

/// Tokenizes `text` into exactly `max_len` ids: `[CLS] body [SEP] [PAD]...`,
/// with the body truncated to `max_len - 2` ids. A literal `[SEP]` unit in
/// the text (the record field separator) maps to the `[SEP]` id.
pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> Result<EncodedText> {
    if max_len < 4 {
        return Err(Error::InvalidInput(format!("max_len {max_len} must be at least 4")));
    }
    let mut body = Vec::new();
    for unit in text.split_whitespace() {
        segment(unit, vocab, &mut body);
        if body.len() >= max_len - 2 {
            break;
        }
    }
    body.truncate(max_len - 2);

    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(body);
    ids.push(SEP);
    let valid = ids.len();
    ids.resize(max_len, PAD);
    let mut mask = vec![1u8; valid];
    mask.resize(max_len, 0);
    Ok(EncodedText { ids, mask })
}

/// Inverse of [`encode`] up to `[UNK]` loss: drops `[CLS]`, the closing
/// `[SEP]` and padding, re-joins `##` pieces, and writes `[UNK]` and inner
/// `[SEP]` literally.
pub fn decode(encoded: &EncodedText, vocab: &Vocab) -> Result<String> {
    let valid: Vec<usize> = encoded
        .ids
        .iter()
        .zip(&encoded.mask)
        .filter(|(_, &m)| m == 1)
        .map(|(&id, _)| id)
        .collect();
    let mut body = valid.as_slice();
    if body.first() == Some(&CLS) {
        body = &body[1..];
    }
    if body.last() == Some(&SEP) {
        body = &body[..body.len() - 1];
    }
    let mut words: Vec<String> = Vec::new();
    for &id in body {
        let tok = vocab.token(id).ok_or(Error::UnknownId(id))?;
        match id {
            PAD | CLS => continue,
            UNK | SEP => words.push(tok.to_string()),
            _ => match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !words.is_empty() => words.last_mut().expect("non-empty").push_str(rest),
                Some(rest) => words.push(rest.to_string()),
                None => words.push(tok.to_string()),
            },
        }
    }
    Ok(words.join(" "))
}
