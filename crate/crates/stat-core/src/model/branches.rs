//! Cross-modal branches: a per-channel query attends into a token pool
//! (prompt text, or one symbolic scale) and a small head turns the attended
//! representation into a forecast.

use crate::error::Result;
use crate::nn::{Graph, LayerNorm, Linear, MultiHeadAttention, ParamId, ParamStore};
use crate::tensor::{Tensor, Tid};
use rand_chacha::ChaCha8Rng;

/// Cross-attention followed by GELU(LayerNorm(Linear(.))) mapped to the
/// horizon, one row per channel; output comes back as B x T x C.
pub struct RetrievalBranch {
    pub attn: MultiHeadAttention,
    pub head: Linear,
    pub norm: LayerNorm,
    horizon: usize,
}

impl RetrievalBranch {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        horizon: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(RetrievalBranch {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), d_model, heads, rng)?,
            head: Linear::new(store, &format!("{name}.head"), d_model, horizon, rng)?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), horizon)?,
            horizon,
        })
    }

    /// q: B x C x D, pool: B x Lk x D; `mask` additive on padded keys.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        q: Tid,
        pool: Tid,
        mask: Option<&Tensor>,
    ) -> Result<Tid> {
        let o = self.attn.forward(g, store, q, pool, pool, mask)?; // B x C x D
        let h = self.head.forward(g, store, o)?; // B x C x T
        let h = self.norm.forward(g, store, h)?;
        let h = g.tape.gelu(h);
        g.tape.swap_axes(h, 1, 2) // B x T x C
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Three independent scale branches blended by a learned softmax mixer.
pub struct SymbolicLearner {
    pub scales: [RetrievalBranch; 3],
    pub omega: ParamId,
}

pub struct SymbolicOut {
    pub mixed: Tid,
    pub per_scale: [Tid; 3],
}

impl SymbolicLearner {
    pub fn new(
        store: &mut ParamStore,
        d_model: usize,
        heads: usize,
        horizon: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let make = |store: &mut ParamStore, tag: &str, rng: &mut ChaCha8Rng| {
            RetrievalBranch::new(store, &format!("symbolic.{tag}"), d_model, heads, horizon, rng)
        };
        let fine = make(store, "fine", rng)?;
        let mid = make(store, "mid", rng)?;
        let coarse = make(store, "coarse", rng)?;
        let omega = store.add("symbolic.omega", Tensor::zeros(&[3]), true)?;
        Ok(SymbolicLearner {
            scales: [fine, mid, coarse],
            omega,
        })
    }

    /// `pools[s]` is that scale's aligned token pool with its padding mask.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        q: Tid,
        pools: &[(Tid, Option<Tensor>); 3],
    ) -> Result<SymbolicOut> {
        let mut outs = Vec::with_capacity(3);
        for (branch, (pool, mask)) in self.scales.iter().zip(pools) {
            outs.push(branch.forward(g, store, q, *pool, mask.as_ref())?);
        }
        let per_scale: [Tid; 3] = [outs[0], outs[1], outs[2]];
        let om = g.param(store, self.omega);
        let mix = g.tape.softmax_last(om); // [3]
        let mut acc: Option<Tid> = None;
        for (i, &y) in per_scale.iter().enumerate() {
            let w = g.tape.narrow(mix, 0, i, 1)?; // [1]
            let scaled = g.tape.mul(y, w)?;
            acc = Some(match acc {
                None => scaled,
                Some(a) => g.tape.add(a, scaled)?,
            });
        }
        Ok(SymbolicOut {
            mixed: acc.expect("three scales"),
            per_scale,
        })
    }
}
