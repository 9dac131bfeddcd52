//! Volatility-aware routing: expert logits projected from the query are
//! sharpened by a temperature tied to the window's volatility, then the
//! expert forecasts are blended per step and channel.

use crate::error::{Result, StatError};
use crate::nn::{Graph, Linear, ParamStore};
use crate::special::sigmoid;
use crate::tensor::{Tensor, Tid};
use rand_chacha::ChaCha8Rng;

/// Routing temperature: strictly increasing in the volatility descriptor
/// and bounded in (0, eta).
pub fn lambda_of(eta: f64, alpha: f64) -> f64 {
    eta * sigmoid(alpha)
}

pub struct VatRouter {
    pub z_proj: Linear,
    /// Constant routing bias, never trained; the leading expert (temporal)
    /// starts favored.
    pub bias: Tensor,
    pub eta: f64,
    pub experts: usize,
    horizon: usize,
}

impl VatRouter {
    pub fn new(
        store: &mut ParamStore,
        d_model: usize,
        horizon: usize,
        experts: usize,
        eta: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if experts == 0 {
            return Err(StatError::Config("router needs at least one expert".into()));
        }
        if eta <= 0.0 {
            return Err(StatError::Config(format!(
                "router temperature scale must be positive, got {eta}"
            )));
        }
        let mut bias = vec![0.0; experts];
        bias[0] = 1.0;
        Ok(VatRouter {
            z_proj: Linear::new(store, "router.z_proj", d_model, horizon * experts, rng)?,
            bias: Tensor::new(&[experts], bias)?,
            eta,
            experts,
            horizon,
        })
    }

    /// q: B x C x D, one alpha per sample -> weights B x T x C x E.
    pub fn route(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        q: Tid,
        alphas: &[f64],
        fixed_unit_temperature: bool,
    ) -> Result<Tid> {
        let (b, c) = {
            let s = g.tape.value(q).shape();
            (s[0], s[1])
        };
        if alphas.len() != b {
            return Err(StatError::Contract(format!(
                "{} alphas for a batch of {b}",
                alphas.len()
            )));
        }
        let z = self.z_proj.forward(g, store, q)?; // B x C x (T*E)
        let z = g.tape.reshape(z, &[b, c, self.horizon, self.experts])?;
        let z = g.tape.swap_axes(z, 1, 2)?; // B x T x C x E
        let bias = g.constant(self.bias.clone());
        let zb = g.tape.add(z, bias)?;
        let lam: Vec<f64> = if fixed_unit_temperature {
            vec![1.0; b]
        } else {
            alphas.iter().map(|&a| lambda_of(self.eta, a)).collect()
        };
        let lam = g.constant(Tensor::new(&[b, 1, 1, 1], lam)?);
        let logits = g.tape.mul(zb, lam)?;
        Ok(g.tape.softmax_last(logits))
    }

    /// Convex per-element blend of the expert forecasts (each B x T x C).
    pub fn fuse(&self, g: &mut Graph, weights: Tid, preds: &[Tid]) -> Result<Tid> {
        if preds.len() != self.experts {
            return Err(StatError::Contract(format!(
                "{} predictions for {} experts",
                preds.len(),
                self.experts
            )));
        }
        let shape = g.tape.value(preds[0]).shape().to_vec();
        let mut cols = Vec::with_capacity(preds.len());
        for &p in preds {
            if g.tape.value(p).shape() != shape {
                return Err(StatError::Contract(
                    "expert forecasts must share a shape".into(),
                ));
            }
            let with_axis = [shape.as_slice(), &[1]].concat();
            cols.push(g.tape.reshape(p, &with_axis)?);
        }
        let stacked = g.tape.concat(&cols, 3)?; // B x T x C x E
        let weighted = g.tape.mul(stacked, weights)?;
        g.tape.sum_axis(weighted, 3)
    }
}
