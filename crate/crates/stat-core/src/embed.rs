//! Frozen token-embedding provider. Training never touches the table; the
//! trainable part of the text/symbol path is the shared alignment projection
//! that lives with the model.

use crate::error::{Result, StatError};
use crate::hashutil::fnv1a;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const OOV_BUCKETS: usize = 1024;
/// Token budget for the prompt pool; symbol pools are not capped.
pub const MAX_TEXT_TOKENS: usize = 128;

const OOV_SALT: u64 = 0x5EED_00C0_FFEE_0B0E;

/// Every fixed word of the prompt template, used to seed the vocabulary.
const TEMPLATE_WORDS: &str = "[Task Specification] Dataset: Task: Forecast the next steps \
using the past steps. [Dynamic Statistics] Input statistics: min value = , max value = , \
median value = , overall trend is upward downward, recent momentum is upward downward, \
periodicity is approximately steps, volatility descriptor alpha = ( high moderate low ).";

/// Prompt-mode tokenization: lowercase, alphanumeric runs are tokens,
/// punctuation characters are single-character tokens.
pub fn tokenize_text(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        let ch = ch.to_ascii_lowercase();
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Symbol-mode tokenization: one token per character, case preserved
/// (symbols are case-sensitive), separators included.
pub fn tokenize_symbols(s: &str) -> Vec<String> {
    s.chars().map(|c| c.to_string()).collect()
}

#[derive(Clone, Serialize, Deserialize)]
pub struct Provider {
    vocab: BTreeMap<String, usize>,
    matrix: Tensor, // V x d_emb
    oov: Tensor,    // OOV_BUCKETS x d_emb
    pub d_emb: usize,
}

fn random_table(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-0.1..0.1)).collect();
    Tensor::new(&[rows, cols], data).expect("table shape")
}

impl Provider {
    /// Deterministic random table over a vocabulary built from the template
    /// words, the dataset descriptions, and single characters covering the
    /// symbolic alphabet's common range.
    pub fn seeded(descriptions: &[String], d_emb: usize, seed: u64) -> Provider {
        let mut set: BTreeSet<String> = BTreeSet::new();
        for tok in tokenize_text(TEMPLATE_WORDS) {
            set.insert(tok);
        }
        for d in descriptions {
            for tok in tokenize_text(d) {
                set.insert(tok);
            }
        }
        for c in ('a'..='z').chain('A'..='Z').chain('0'..='9') {
            set.insert(c.to_string());
        }
        for c in [',', '.', '=', '(', ')', '-', '%', '|'] {
            set.insert(c.to_string());
        }
        let vocab: BTreeMap<String, usize> =
            set.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
        let matrix = random_table(vocab.len(), d_emb, seed);
        let oov = random_table(OOV_BUCKETS, d_emb, seed ^ OOV_SALT);
        Provider {
            vocab,
            matrix,
            oov,
            d_emb,
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied()
    }

    fn row(&self, token: &str) -> &[f64] {
        match self.vocab.get(token) {
            Some(&i) => {
                let d = self.d_emb;
                &self.matrix.data()[i * d..(i + 1) * d]
            }
            None => {
                let b = (fnv1a(token.as_bytes()) % OOV_BUCKETS as u64) as usize;
                let d = self.d_emb;
                &self.oov.data()[b * d..(b + 1) * d]
            }
        }
    }

    /// Stack rows for a token list; empty input gives a 0 x d_emb matrix.
    pub fn embed(&self, tokens: &[String]) -> Tensor {
        let mut data = Vec::with_capacity(tokens.len() * self.d_emb);
        for t in tokens {
            data.extend_from_slice(self.row(t));
        }
        Tensor::new(&[tokens.len(), self.d_emb], data).expect("stacked rows")
    }

    /// Tokenize prompt text, truncate to the token budget, embed.
    pub fn embed_text(&self, text: &str) -> Tensor {
        let mut tokens = tokenize_text(text);
        tokens.truncate(MAX_TEXT_TOKENS);
        self.embed(&tokens)
    }

    pub fn embed_symbols(&self, symbols: &str) -> Tensor {
        self.embed(&tokenize_symbols(symbols))
    }

    /// Bit-level digest of the frozen table, for the frozen-contract checks.
    pub fn table_hash(&self) -> u64 {
        let mut h = crate::hashutil::Fnv1a::new();
        h.write_f64s(self.matrix.data());
        h.write_f64s(self.oov.data());
        h.finish()
    }

    /// Header "V D_emb", then one line per token: token then the row values.
    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut out = format!("{} {}\n", self.vocab.len(), self.d_emb);
        for (token, &i) in &self.vocab {
            out.push_str(token);
            let d = self.d_emb;
            for v in &self.matrix.data()[i * d..(i + 1) * d] {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| StatError::io(path, e))
    }

    /// Load an exported table. OOV rows are regenerated from the seed so a
    /// loaded provider is deterministic end to end.
    pub fn from_file(path: &Path, oov_seed: u64) -> Result<Provider> {
        let text = std::fs::read_to_string(path).map_err(|e| StatError::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| StatError::Load("empty embedding file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(StatError::Load(format!(
                "embedding header must be 'V D_emb', got {header:?}"
            )));
        }
        let v: usize = parts[0]
            .parse()
            .map_err(|e| StatError::Load(format!("bad vocab count: {e}")))?;
        let d_emb: usize = parts[1]
            .parse()
            .map_err(|e| StatError::Load(format!("bad embedding dim: {e}")))?;
        let mut vocab = BTreeMap::new();
        let mut data = vec![0.0; v * d_emb];
        let mut n = 0usize;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            if n >= v {
                return Err(StatError::Load(format!(
                    "embedding file has more than {v} rows"
                )));
            }
            let mut toks = line.split_whitespace();
            let token = toks
                .next()
                .ok_or_else(|| StatError::Load("blank embedding row".into()))?;
            for j in 0..d_emb {
                let field = toks.next().ok_or_else(|| {
                    StatError::Load(format!("row for {token:?} has fewer than {d_emb} values"))
                })?;
                data[n * d_emb + j] = field
                    .parse()
                    .map_err(|e| StatError::Load(format!("row for {token:?}: {e}")))?;
            }
            if toks.next().is_some() {
                return Err(StatError::Load(format!(
                    "row for {token:?} has more than {d_emb} values"
                )));
            }
            if vocab.insert(token.to_string(), n).is_some() {
                return Err(StatError::Load(format!("duplicate token {token:?}")));
            }
            n += 1;
        }
        if n != v {
            return Err(StatError::Load(format!(
                "embedding file declares {v} rows but has {n}"
            )));
        }
        Ok(Provider {
            vocab,
            matrix: Tensor::new(&[v, d_emb], data)?,
            oov: random_table(OOV_BUCKETS, d_emb, oov_seed ^ OOV_SALT),
            d_emb,
        })
    }
}
