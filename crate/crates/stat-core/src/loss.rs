//! Training loss: plain MSE anchored by four auxiliary shape terms, each
//! weighted by a learnable uncertainty.
//!
//! total = L_mse + Σ_i  exp(-2 log σ_i)/2 · L_aux_i + log σ_i
//!
//! The σ_i live as log-parameters so they stay positive by construction and
//! the weight exp(-2 log σ) never NaNs for finite inputs. The four aux terms
//! are, in order: a low-rank L1 trend distance, and patchwise mean / std /
//! correlation mismatches.

use crate::error::{Result, StatError};
use crate::tensor::{truncated_svd, Tape, Tensor, Tid};

pub const AUX_TERMS: usize = 4;
pub const AUX_NAMES: [&str; AUX_TERMS] = ["svd", "mean", "var", "corr"];

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AdfConfig {
    pub svd_rank: usize,
    pub patch_len: usize,
}

impl Default for AdfConfig {
    fn default() -> Self {
        AdfConfig {
            svd_rank: 4,
            patch_len: 24,
        }
    }
}

fn batch_shape(tape: &Tape, yhat: Tid, y: &Tensor) -> Result<(usize, usize, usize)> {
    let hs = tape.value(yhat).shape().to_vec();
    if hs.len() != 3 || hs != y.shape() {
        return Err(StatError::Contract(format!(
            "loss wants matching B x T x C tensors, got {:?} vs {:?}",
            hs,
            y.shape()
        )));
    }
    Ok((hs[0], hs[1], hs[2]))
}

/// Elementwise mean squared error against a constant target.
pub fn mse_loss(tape: &mut Tape, yhat: Tid, y: &Tensor) -> Result<Tid> {
    batch_shape(tape, yhat, y)?;
    let yid = tape.leaf(y.clone());
    let d = tape.sub(yhat, yid)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean_all(sq))
}

/// L1 distance after projecting the error of each sample onto the rank-k
/// right-singular subspace of its target. The subspace is computed from the
/// constant target, so gradients flow through the prediction only.
pub fn l1_svd_loss(tape: &mut Tape, yhat: Tid, y: &Tensor, k: usize) -> Result<Tid> {
    let (b, t, c) = batch_shape(tape, yhat, y)?;
    let mut total: Option<Tid> = None;
    for s in 0..b {
        let yb = y.narrow(0, s, 1)?.reshape(&[t, c])?;
        let proj = truncated_svd(&yb, k.min(c))?.projector();
        let pid = tape.leaf(proj);
        let ybid = tape.leaf(yb);
        let hb = tape.narrow(yhat, 0, s, 1)?;
        let hb = tape.reshape(hb, &[t, c])?;
        let diff = tape.sub(hb, ybid)?;
        let low = tape.matmul(diff, pid)?;
        let a = tape.abs(low);
        let m = tape.mean_all(a);
        total = Some(match total {
            None => m,
            Some(acc) => tape.add(acc, m)?,
        });
    }
    Ok(tape.scale(total.expect("batch is non-empty"), 1.0 / b as f64))
}

/// Patchwise (mean, std, correlation) mismatch terms. Patches tile the time
/// axis without overlap; a final shorter patch is kept. Pearson r uses
/// epsilon-guarded norms, so a constant patch yields r = 0 and contributes
/// a full unit to the correlation term.
pub fn patch_stat_losses(
    tape: &mut Tape,
    yhat: Tid,
    y: &Tensor,
    patch_len: usize,
) -> Result<[Tid; 3]> {
    if patch_len == 0 {
        return Err(StatError::Contract("patch_len must be positive".into()));
    }
    let (_b, t, _c) = batch_shape(tape, yhat, y)?;
    let yid = tape.leaf(y.clone());
    let mut terms: [Option<Tid>; 3] = [None, None, None];
    let mut patches = 0usize;
    let mut start = 0usize;
    while start < t {
        let len = patch_len.min(t - start);
        let hp = tape.narrow(yhat, 1, start, len)?;
        let yp = tape.narrow(yid, 1, start, len)?;

        let hm = tape.mean_axis(hp, 1)?;
        let ym = tape.mean_axis(yp, 1)?;
        let dm = tape.sub(hm, ym)?;
        let dm2 = tape.mul(dm, dm)?;
        let mean_term = tape.mean_all(dm2);

        let center = |tape: &mut Tape, p: Tid| -> Result<(Tid, Tid)> {
            let mk = tape.mean_keepdim(p, 1)?;
            let cent = tape.sub(p, mk)?;
            let c2 = tape.mul(cent, cent)?;
            let s2 = tape.sum_axis(c2, 1)?;
            Ok((cent, s2))
        };
        let (hc, hs2) = center(tape, hp)?;
        let (yc, ys2) = center(tape, yp)?;

        let std_of = |tape: &mut Tape, s2: Tid| -> Tid {
            let var = tape.scale(s2, 1.0 / len as f64);
            let var = tape.add_scalar(var, 1e-12);
            tape.sqrt(var)
        };
        let hstd = std_of(tape, hs2);
        let ystd = std_of(tape, ys2);
        let ds = tape.sub(hstd, ystd)?;
        let ds2 = tape.mul(ds, ds)?;
        let var_term = tape.mean_all(ds2);

        let prod = tape.mul(hc, yc)?;
        let num = tape.sum_axis(prod, 1)?;
        let norm_of = |tape: &mut Tape, s2: Tid| -> Tid {
            let g = tape.add_scalar(s2, 1e-12);
            tape.sqrt(g)
        };
        let hn = norm_of(tape, hs2);
        let yn = norm_of(tape, ys2);
        let nn = tape.mul(hn, yn)?;
        let den = tape.add_scalar(nn, 1e-8);
        let r = tape.div(num, den)?;
        let neg_r = tape.neg(r);
        let one_minus = tape.add_scalar(neg_r, 1.0);
        let corr_term = tape.mean_all(one_minus);

        for (slot, term) in terms.iter_mut().zip([mean_term, var_term, corr_term]) {
            *slot = Some(match *slot {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        patches += 1;
        start += len;
    }
    let inv = 1.0 / patches as f64;
    Ok(terms.map(|t| tape.scale(t.expect("at least one patch"), inv)))
}

pub struct AdfBreakdown {
    pub total: Tid,
    pub mse: Tid,
    pub aux: [Tid; AUX_TERMS],
}

/// Full training loss. `log_sigma` are the four on-tape uncertainty
/// parameters, in [`AUX_NAMES`] order.
pub fn adf_loss(
    tape: &mut Tape,
    yhat: Tid,
    y: &Tensor,
    log_sigma: [Tid; AUX_TERMS],
    cfg: &AdfConfig,
) -> Result<AdfBreakdown> {
    let mse = mse_loss(tape, yhat, y)?;
    let svd = l1_svd_loss(tape, yhat, y, cfg.svd_rank)?;
    let [pm, pv, pc] = patch_stat_losses(tape, yhat, y, cfg.patch_len)?;
    let aux = [svd, pm, pv, pc];
    let mut total = mse;
    for (ls, term) in log_sigma.into_iter().zip(aux) {
        let w = tape.scale(ls, -2.0);
        let w = tape.exp(w);
        let w = tape.scale(w, 0.5);
        let weighted = tape.mul(w, term)?;
        total = tape.add(total, weighted)?;
        total = tape.add(total, ls)?;
    }
    Ok(AdfBreakdown { total, mse, aux })
}
