//! Per-batch side inputs: prompt embeddings, symbolic-scale embeddings, and
//! volatility descriptors, padded into rectangular pools.

use crate::data::Windows;
use crate::embed::Provider;
use crate::error::Result;
use crate::prompt::{render_prompt, volatility_descriptor};
use crate::symbolic::{compress, digitize, symbolize, validate_tolerances, zscore, Codebook, Piece};
use crate::tensor::Tensor;

pub const SCALES: usize = 3;
pub const CHANNEL_SEPARATOR: char = '|';

/// Fit one codebook per (scale, channel) from the training windows. Pieces
/// come from individually z-scored windows; a deterministic stride keeps
/// the piece pool bounded on large splits.
pub fn fit_codebooks(
    train: &Windows,
    tols: &[f64; SCALES],
    max_windows: usize,
) -> Result<[Vec<Codebook>; SCALES]> {
    validate_tolerances(tols)?;
    let n = train.len();
    assert!(n > 0, "cannot fit codebooks on an empty split");
    let step = (n / max_windows.max(1)).max(1);
    let picks: Vec<usize> = (0..n).step_by(step).take(max_windows).collect();
    let c = train.channels();
    let l = train.lookback;

    let mut books: [Vec<Codebook>; SCALES] = Default::default();
    for (si, &tol) in tols.iter().enumerate() {
        for ch in 0..c {
            let mut pieces: Vec<Piece> = Vec::new();
            for &w in &picks {
                let x = train.x(w);
                let series: Vec<f64> = (0..l).map(|t| x.data()[t * c + ch]).collect();
                pieces.extend(compress(&zscore(&series), tol)?);
            }
            books[si].push(digitize(&pieces, tol, 1.0)?);
        }
    }
    Ok(books)
}

/// One channel-separated symbol string for a window at one scale.
pub fn window_symbols(x: &Tensor, scale_books: &[Codebook]) -> Result<String> {
    let (l, c) = (x.shape()[0], x.shape()[1]);
    let mut out = String::new();
    for ch in 0..c {
        if ch > 0 {
            out.push(CHANNEL_SEPARATOR);
        }
        let series: Vec<f64> = (0..l).map(|t| x.data()[t * c + ch]).collect();
        out.push_str(&symbolize(&series, &scale_books[ch])?.symbols);
    }
    Ok(out)
}

pub struct BatchFeatures {
    /// Padded prompt-token embeddings, B x Lt x D_emb.
    pub text: Tensor,
    pub text_valid: Vec<usize>,
    /// Per scale: padded symbol-token embeddings with their valid counts.
    pub sym: [(Tensor, Vec<usize>); SCALES],
    pub alphas: Vec<f64>,
    pub prompts: Vec<String>,
}

fn pad_pool(mats: &[Tensor], d_emb: usize) -> (Tensor, Vec<usize>) {
    let b = mats.len();
    let lens: Vec<usize> = mats.iter().map(|m| m.shape()[0]).collect();
    let lmax = lens.iter().copied().max().unwrap_or(0).max(1);
    let mut data = vec![0.0; b * lmax * d_emb];
    for (s, m) in mats.iter().enumerate() {
        let rows = m.shape()[0] * d_emb;
        data[s * lmax * d_emb..s * lmax * d_emb + rows].copy_from_slice(m.data());
    }
    (
        Tensor::new(&[b, lmax, d_emb], data).expect("padded pool"),
        lens,
    )
}

fn empty_pool(b: usize, d_emb: usize) -> (Tensor, Vec<usize>) {
    (Tensor::zeros(&[b, 1, d_emb]), vec![0; b])
}

pub struct Featurizer<'a> {
    pub provider: &'a Provider,
    pub codebooks: &'a [Vec<Codebook>; SCALES],
    pub description: String,
    pub horizon: usize,
}

impl Featurizer<'_> {
    /// Build side inputs for a batch x: B x L x C. Skipping a modality
    /// leaves an empty, fully masked pool in its slot.
    pub fn features(&self, x: &Tensor, need_text: bool, need_sym: bool) -> Result<BatchFeatures> {
        let (b, l, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let d_emb = self.provider.d_emb;
        let mut alphas = Vec::with_capacity(b);
        let mut prompts = Vec::with_capacity(b);
        let mut text_mats = Vec::with_capacity(b);
        let mut sym_mats: [Vec<Tensor>; SCALES] = Default::default();

        for s in 0..b {
            let window = x.narrow(0, s, 1)?.reshape(&[l, c])?;
            if need_text {
                let doc = render_prompt(&window, &self.description, self.horizon)?;
                alphas.push(doc.alpha);
                text_mats.push(self.provider.embed_text(&doc.text));
                prompts.push(doc.text);
            } else {
                alphas.push(volatility_descriptor(&window)?);
            }
            if need_sym {
                for (si, books) in self.codebooks.iter().enumerate() {
                    let symbols = window_symbols(&window, books)?;
                    sym_mats[si].push(self.provider.embed_symbols(&symbols));
                }
            }
        }

        let text = if need_text {
            pad_pool(&text_mats, d_emb)
        } else {
            empty_pool(b, d_emb)
        };
        let sym = if need_sym {
            sym_mats.map(|mats| pad_pool(&mats, d_emb))
        } else {
            [empty_pool(b, d_emb), empty_pool(b, d_emb), empty_pool(b, d_emb)]
        };
        Ok(BatchFeatures {
            text: text.0,
            text_valid: text.1,
            sym,
            alphas,
            prompts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_dataset, Registry};
    use std::path::Path;

    fn small_windows() -> crate::data::LoadedDataset {
        let reg = Registry::builtin();
        load_dataset(reg.get("synthetic").unwrap(), Path::new("/"), 32, 8).unwrap()
    }

    #[test]
    fn codebooks_cover_scales_and_channels() {
        let ds = small_windows();
        let books = fit_codebooks(&ds.train, &[0.01, 0.1, 0.5], 24).unwrap();
        for scale in &books {
            assert_eq!(scale.len(), ds.train.channels());
            for b in scale {
                assert!(!b.is_empty());
            }
        }
        // deterministic refits
        let again = fit_codebooks(&ds.train, &[0.01, 0.1, 0.5], 24).unwrap();
        assert_eq!(books[0][0].to_text(), again[0][0].to_text());
    }

    #[test]
    fn tolerances_must_increase() {
        let ds = small_windows();
        assert!(fit_codebooks(&ds.train, &[0.1, 0.1, 0.5], 8).is_err());
    }

    #[test]
    fn symbol_strings_separate_channels() {
        let ds = small_windows();
        let books = fit_codebooks(&ds.train, &[0.01, 0.1, 0.5], 16).unwrap();
        let x = ds.train.x(0);
        let s = window_symbols(&x, &books[1]).unwrap();
        let seps = s.chars().filter(|&c| c == CHANNEL_SEPARATOR).count();
        assert_eq!(seps, ds.train.channels() - 1);
        assert!(s.len() > seps);
    }

    #[test]
    fn features_have_consistent_shapes_and_masks() {
        let ds = small_windows();
        let books = fit_codebooks(&ds.train, &[0.01, 0.1, 0.5], 16).unwrap();
        let provider = crate::embed::Provider::seeded(&["test set".into()], 8, 1);
        let f = Featurizer {
            provider: &provider,
            codebooks: &books,
            description: "test set".into(),
            horizon: 8,
        };
        let (x, _) = ds.train.gather(&[0, 1, 2]);
        let feats = f.features(&x, true, true).unwrap();
        assert_eq!(feats.alphas.len(), 3);
        assert_eq!(feats.text.shape()[0], 3);
        assert_eq!(feats.text.shape()[2], 8);
        for (pool, valid) in &feats.sym {
            assert_eq!(pool.shape()[0], 3);
            assert_eq!(valid.len(), 3);
            for (i, &v) in valid.iter().enumerate() {
                assert!(v >= 1, "sample {i} has an empty symbol pool");
                assert!(v <= pool.shape()[1]);
            }
        }
        assert_eq!(feats.prompts.len(), 3);
        assert!(feats.prompts[0].contains("Forecast the next 8 steps"));

        // skipping modalities produces masked placeholders
        let bare = f.features(&x, false, false).unwrap();
        assert_eq!(bare.text_valid, vec![0, 0, 0]);
        assert_eq!(bare.sym[2].1, vec![0, 0, 0]);
        assert_eq!(bare.alphas.len(), 3);
        for (a, b) in bare.alphas.iter().zip(&feats.alphas) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
