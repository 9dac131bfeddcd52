//! Parameter storage and the handful of layers the model graph needs.

mod adam;

pub use adam::Adam;

use crate::error::{Result, StatError};
use crate::hashutil::Fnv1a;
use crate::tensor::{Tape, Tensor, Tid};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
    pub(crate) grad: Tensor,
    pub(crate) m: Tensor,
    pub(crate) v: Tensor,
}

#[derive(Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(StatError::Contract(format!("duplicate parameter name {name}")));
        }
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name: name.to_string(),
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
            trainable,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn set_value(&mut self, id: ParamId, t: Tensor) {
        debug_assert_eq!(self.params[id.0].value.shape(), t.shape());
        self.params[id.0].value = t;
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    pub fn add_grad(&mut self, id: ParamId, delta: &Tensor) {
        let g = &mut self.params[id.0].grad;
        debug_assert_eq!(g.shape(), delta.shape());
        for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
            *a += b;
        }
    }

    /// Pull gradients off a finished backward sweep into the store.
    pub fn accumulate(&mut self, bindings: &[(ParamId, Tid)], tape: &Tape, grads: &crate::tensor::Grads) {
        for &(pid, tid) in bindings {
            if !self.params[pid.0].trainable {
                continue;
            }
            if let Some(g) = grads.get(tid) {
                self.add_grad(pid, g);
            }
        }
        let _ = tape;
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snap: &[Tensor]) {
        assert_eq!(snap.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snap) {
            p.value = s.clone();
        }
    }

    /// Order-sensitive digest of every parameter value (names + bits).
    pub fn value_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        for p in &self.params {
            h.write(p.name.as_bytes());
            h.write_f64s(p.value.data());
        }
        h.finish()
    }

    pub fn param_hash(&self, id: ParamId) -> u64 {
        let mut h = Fnv1a::new();
        h.write_f64s(self.params[id.0].value.data());
        h.finish()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}

/// One forward pass: a fresh tape plus the param->node bindings made on it.
/// Binding is cached per param, so shared parameters are literally the same
/// tape node wherever they are used.
pub struct Graph {
    pub tape: Tape,
    bound: BTreeMap<ParamId, Tid>,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            tape: Tape::new(),
            bound: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Tid {
        if let Some(&tid) = self.bound.get(&id) {
            return tid;
        }
        let tid = self.tape.leaf(store.value(id).clone());
        self.bound.insert(id, tid);
        tid
    }

    pub fn constant(&mut self, t: Tensor) -> Tid {
        self.tape.leaf(t)
    }

    pub fn bindings(&self) -> Vec<(ParamId, Tid)> {
        self.bound.iter().map(|(&p, &t)| (p, t)).collect()
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

pub fn uniform_init(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape, data).expect("shape/data agree")
}

#[derive(Clone, Copy, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let scale = 1.0 / (d_in as f64).sqrt();
        let w = store.add(&format!("{name}.w"), uniform_init(rng, &[d_in, d_out], scale), true)?;
        let b = store.add(&format!("{name}.b"), Tensor::zeros(&[d_out]), true)?;
        Ok(Linear { w, b, d_in, d_out })
    }

    /// x: (..., d_in) -> (..., d_out)
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Tid) -> Result<Tid> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let wx = g.tape.matmul(x, w)?;
        g.tape.add(wx, b)
    }
}

#[derive(Clone, Copy, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

pub const LAYERNORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gain = store.add(&format!("{name}.gain"), Tensor::full(&[dim], 1.0), true)?;
        let bias = store.add(&format!("{name}.bias"), Tensor::zeros(&[dim]), true)?;
        Ok(LayerNorm { gain, bias, dim })
    }

    /// Normalize over the last axis, then affine.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Tid) -> Result<Tid> {
        let last = g.tape.value(x).rank() - 1;
        let mu = g.tape.mean_keepdim(x, last)?;
        let centered = g.tape.sub(x, mu)?;
        let sq = g.tape.mul(centered, centered)?;
        let var = g.tape.mean_keepdim(sq, last)?;
        let var_eps = g.tape.add_scalar(var, LAYERNORM_EPS);
        let std = g.tape.sqrt(var_eps);
        let normed = g.tape.div(centered, std)?;
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        let scaled = g.tape.mul(normed, gain)?;
        g.tape.add(scaled, bias)
    }
}

#[derive(Clone, Copy, Serialize, Deserialize)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    /// Two layers, hidden twice the model width, GELU between.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let fc1 = Linear::new(store, &format!("{name}.fc1"), d_model, 2 * d_model, rng)?;
        let fc2 = Linear::new(store, &format!("{name}.fc2"), 2 * d_model, d_model, rng)?;
        Ok(Mlp { fc1, fc2 })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Tid) -> Result<Tid> {
        let h = self.fc1.forward(g, store, x)?;
        let h = g.tape.gelu(h);
        self.fc2.forward(g, store, h)
    }
}

#[derive(Clone, Copy, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub d_model: usize,
}

pub const MASK_NEG: f64 = -1e30;

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(StatError::Config(format!(
                "model dim {d_model} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(store, &format!("{name}.wq"), d_model, d_model, rng)?,
            wk: Linear::new(store, &format!("{name}.wk"), d_model, d_model, rng)?,
            wv: Linear::new(store, &format!("{name}.wv"), d_model, d_model, rng)?,
            wo: Linear::new(store, &format!("{name}.wo"), d_model, d_model, rng)?,
            heads,
            d_model,
        })
    }

    /// Scaled dot-product attention. q: BxLqxD, k/v: BxLkxD.
    /// `mask` is an additive constant, shape Bx1x1xLk, 0 on valid keys and
    /// MASK_NEG on padding.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        q: Tid,
        k: Tid,
        v: Tid,
        mask: Option<&Tensor>,
    ) -> Result<Tid> {
        let (b, lq) = {
            let s = g.tape.value(q).shape();
            (s[0], s[1])
        };
        let lk = g.tape.value(k).shape()[1];
        let h = self.heads;
        let dh = self.d_model / h;

        let split = |g: &mut Graph, store: &ParamStore, lin: &Linear, x: Tid, l: usize| -> Result<Tid> {
            let proj = lin.forward(g, store, x)?;
            let r = g.tape.reshape(proj, &[b, l, h, dh])?;
            g.tape.swap_axes(r, 1, 2) // B x H x L x Dh
        };
        let qh = split(g, store, &self.wq, q, lq)?;
        let kh = split(g, store, &self.wk, k, lk)?;
        let vh = split(g, store, &self.wv, v, lk)?;

        let kt = g.tape.swap_axes(kh, 2, 3)?; // B x H x Dh x Lk
        let scores = g.tape.matmul(qh, kt)?; // B x H x Lq x Lk
        let scores = g.tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let scores = match mask {
            Some(m) => {
                let mc = g.constant(m.clone());
                g.tape.add(scores, mc)?
            }
            None => scores,
        };
        let attn = g.tape.softmax_last(scores);
        let ctx = g.tape.matmul(attn, vh)?; // B x H x Lq x Dh
        let ctx = g.tape.swap_axes(ctx, 1, 2)?;
        let ctx = g.tape.reshape(ctx, &[b, lq, self.d_model])?;
        self.wo.forward(g, store, ctx)
    }
}

/// Build the additive key-padding mask for a batch of pools with `valid[i]`
/// real rows out of `padded` total.
pub fn key_padding_mask(valid: &[usize], padded: usize) -> Tensor {
    let b = valid.len();
    let mut m = Tensor::zeros(&[b, 1, 1, padded]);
    for (i, &n) in valid.iter().enumerate() {
        for j in n..padded {
            m.data_mut()[i * padded + j] = MASK_NEG;
        }
    }
    m
}
