//! Patch pipeline: overlapping patches are embedded with positions, enriched
//! by local (memory-bank) and global (self-attention) correlation, and read
//! out as both a forecast and a per-channel cross-modal query.

use super::bank::MemoryBank;
use super::ModelConfig;
use crate::error::{Result, StatError};
use crate::nn::{Graph, LayerNorm, Linear, Mlp, MultiHeadAttention, ParamId, ParamStore};
use crate::tensor::{Tensor, Tid};
use rand_chacha::ChaCha8Rng;

/// B x L x C -> B x N x (P*C), overlapping windows of P rows flattened.
pub fn patchify(x: &Tensor, patch_len: usize, stride: usize) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(StatError::Contract(format!(
            "patchify wants B x L x C, got {:?}",
            x.shape()
        )));
    }
    let (b, l, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if patch_len == 0 || stride == 0 || l < patch_len {
        return Err(StatError::Config(format!(
            "lookback {l} cannot hold patches of {patch_len} (stride {stride})"
        )));
    }
    let n = (l - patch_len) / stride + 1;
    let mut out = Vec::with_capacity(b * n * patch_len * c);
    for s in 0..b {
        let sample = &x.data()[s * l * c..(s + 1) * l * c];
        for p in 0..n {
            let start = p * stride * c;
            out.extend_from_slice(&sample[start..start + patch_len * c]);
        }
    }
    Tensor::new(&[b, n, patch_len * c], out)
}

pub struct TemporalOut {
    pub yhat: Tid,  // B x T x C
    pub query: Tid, // B x C x D
    pub f_temp: Tid, // B x N x D
    /// Per batch item, the mean patch embedding (detached) — what the bank
    /// will enqueue after the step.
    pub pooled: Vec<Vec<f64>>,
}

pub struct TemporalLearner {
    pub patch_proj: Linear,
    pub pos: ParamId,
    pub local_mlp: Mlp,
    pub self_attn: MultiHeadAttention,
    pub head: Linear,
    pub q_proj: Linear,
    pub q_norm: LayerNorm,
    pub chan_emb: ParamId,
    pub n_patches: usize,
    patch_len: usize,
    stride: usize,
    top_k: usize,
    horizon: usize,
    channels: usize,
    d_model: usize,
}

impl TemporalLearner {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let n = cfg.n_patches()?;
        let d = cfg.d_model;
        let patch_proj = Linear::new(store, "temporal.patch_proj", cfg.patch_len * cfg.channels, d, rng)?;
        let pos = store.add(
            "temporal.pos",
            crate::nn::uniform_init(rng, &[n, d], 0.02),
            true,
        )?;
        let local_mlp = Mlp::new(store, "temporal.local_mlp", d, rng)?;
        let self_attn = MultiHeadAttention::new(store, "temporal.self_attn", d, cfg.heads, rng)?;
        let head = Linear::new(store, "temporal.head", n * d, cfg.horizon * cfg.channels, rng)?;
        let q_proj = Linear::new(store, "temporal.q_proj", d, d, rng)?;
        let q_norm = LayerNorm::new(store, "temporal.q_norm", d)?;
        let chan_emb = store.add(
            "temporal.chan_emb",
            crate::nn::uniform_init(rng, &[cfg.channels, d], 0.02),
            true,
        )?;
        Ok(TemporalLearner {
            patch_proj,
            pos,
            local_mlp,
            self_attn,
            head,
            q_proj,
            q_norm,
            chan_emb,
            n_patches: n,
            patch_len: cfg.patch_len,
            stride: cfg.stride,
            top_k: cfg.top_k,
            horizon: cfg.horizon,
            channels: cfg.channels,
            d_model: d,
        })
    }

    /// Linear projection plus the learned positional table.
    pub fn embed_patches(&self, g: &mut Graph, store: &ParamStore, patches: &Tensor) -> Result<Tid> {
        let n = patches.shape()[1];
        if n > self.n_patches {
            return Err(StatError::Config(format!(
                "{n} patches exceed the positional table of {}",
                self.n_patches
            )));
        }
        let pid = g.constant(patches.clone());
        let proj = self.patch_proj.forward(g, store, pid)?;
        let pos = g.param(store, self.pos);
        let pos = if n < self.n_patches {
            g.tape.narrow(pos, 0, 0, n)?
        } else {
            pos
        };
        g.tape.add(proj, pos)
    }

    /// Residual top-k retrieval refinement; the cold bank passes X_emb through.
    pub fn local_correlation(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x_emb: Tid,
        bank: &MemoryBank,
    ) -> Result<Tid> {
        if bank.fill() == 0 {
            return Ok(x_emb);
        }
        let retrieved = bank.retrieve(g.tape.value(x_emb), self.top_k);
        let rid = g.constant(retrieved);
        let refined = self.local_mlp.forward(g, store, rid)?;
        g.tape.add(x_emb, refined)
    }

    /// Self-attention across patches pooled to one vector per sample.
    pub fn global_correlation(&self, g: &mut Graph, store: &ParamStore, x_emb: Tid) -> Result<Tid> {
        let attended = self.self_attn.forward(g, store, x_emb, x_emb, x_emb, None)?;
        g.tape.mean_axis(attended, 1)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: &Tensor,
        bank: &MemoryBank,
    ) -> Result<TemporalOut> {
        let b = x.shape()[0];
        let patches = patchify(x, self.patch_len, self.stride)?;
        let x_emb = self.embed_patches(g, store, &patches)?;

        // Bank candidates come from the raw embeddings, pre-refinement.
        let emb_val = g.tape.value(x_emb);
        let n = emb_val.shape()[1];
        let d = self.d_model;
        let mut pooled = Vec::with_capacity(b);
        for s in 0..b {
            let mut mean = vec![0.0; d];
            for p in 0..n {
                let row = &emb_val.data()[(s * n + p) * d..(s * n + p + 1) * d];
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= n as f64;
            }
            pooled.push(mean);
        }

        let local = self.local_correlation(g, store, x_emb, bank)?;
        let global = self.global_correlation(g, store, x_emb)?;
        let global_row = g.tape.reshape(global, &[b, 1, self.d_model])?;
        let f_temp = g.tape.add(local, global_row)?;

        let flat = g.tape.reshape(f_temp, &[b, self.n_patches * self.d_model])?;
        let yhat = self.head.forward(g, store, flat)?;
        let yhat = g.tape.reshape(yhat, &[b, self.horizon, self.channels])?;

        let pooled_f = g.tape.mean_axis(f_temp, 1)?;
        let q = self.q_proj.forward(g, store, pooled_f)?;
        let q = self.q_norm.forward(g, store, q)?;
        let q = g.tape.reshape(q, &[b, 1, self.d_model])?;
        let ce = g.param(store, self.chan_emb);
        let query = g.tape.add(q, ce)?;

        Ok(TemporalOut {
            yhat,
            query,
            f_temp,
            pooled,
        })
    }
}
