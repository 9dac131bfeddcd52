//! The full tri-modal forecaster: a temporal learner that both predicts and
//! queries, retrieval branches over prompt and symbol pools, a
//! volatility-tempered router, and uncertainty-weighted loss heads.

pub mod bank;
pub mod branches;
pub mod features;
pub mod fusion;
pub mod temporal;

pub use bank::MemoryBank;
pub use branches::{RetrievalBranch, SymbolicLearner, SymbolicOut};
pub use features::{fit_codebooks, window_symbols, BatchFeatures, Featurizer, SCALES};
pub use fusion::{lambda_of, VatRouter};
pub use temporal::{patchify, TemporalLearner, TemporalOut};

use crate::error::{Result, StatError};
use crate::loss::{adf_loss, mse_loss, AdfConfig, AUX_NAMES, AUX_TERMS};
use crate::nn::{key_padding_mask, Graph, Linear, ParamId, ParamStore};
use crate::tensor::{Tensor, Tid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub channels: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub d_model: usize,
    pub heads: usize,
    pub top_k: usize,
    pub bank_capacity: usize,
    pub d_emb: usize,
    pub eta: f64,
    pub adf: AdfConfig,
}

impl ModelConfig {
    pub fn n_patches(&self) -> Result<usize> {
        if self.patch_len == 0 || self.stride == 0 {
            return Err(StatError::Config(
                "patch length and stride must be positive".into(),
            ));
        }
        if self.stride > self.patch_len {
            return Err(StatError::Config(format!(
                "stride {} would skip samples between patches of length {}",
                self.stride, self.patch_len
            )));
        }
        if self.lookback < self.patch_len {
            return Err(StatError::Config(format!(
                "lookback {} shorter than patch length {}",
                self.lookback, self.patch_len
            )));
        }
        Ok((self.lookback - self.patch_len) / self.stride + 1)
    }

    pub fn validate(&self) -> Result<()> {
        self.n_patches()?;
        if self.horizon == 0 || self.channels == 0 || self.d_model == 0 || self.d_emb == 0 {
            return Err(StatError::Config(
                "horizon, channels, and widths must be positive".into(),
            ));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(StatError::Config(format!(
                "width {} not divisible into {} heads",
                self.d_model, self.heads
            )));
        }
        if self.top_k == 0 || self.bank_capacity == 0 {
            return Err(StatError::Config(
                "memory bank needs positive capacity and retrieval depth".into(),
            ));
        }
        if self.eta <= 0.0 {
            return Err(StatError::Config(format!(
                "temperature scale must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Which components to disable for an ablation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_trl: bool,
    pub no_srl: bool,
    pub no_vat: bool,
    pub no_adf: bool,
}

impl Ablation {
    pub fn parse(list: &str) -> Result<Ablation> {
        let mut a = Ablation::default();
        for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "no_trl" => a.no_trl = true,
                "no_srl" => a.no_srl = true,
                "no_vat" => a.no_vat = true,
                "no_adf" => a.no_adf = true,
                other => {
                    return Err(StatError::Config(format!(
                        "unknown ablation '{other}' (expected no_trl, no_srl, no_vat, no_adf)"
                    )))
                }
            }
        }
        Ok(a)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_trl {
            parts.push("no_trl");
        }
        if self.no_srl {
            parts.push("no_srl");
        }
        if self.no_vat {
            parts.push("no_vat");
        }
        if self.no_adf {
            parts.push("no_adf");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }

    pub fn expert_count(&self) -> usize {
        1 + usize::from(!self.no_trl) + usize::from(!self.no_srl)
    }
}

pub struct ForwardOut {
    /// Fused forecast, B x T x C.
    pub prediction: Tid,
    /// Router weights, B x T x C x E.
    pub weights: Tid,
    /// Per-expert forecasts in router column order.
    pub expert_preds: Vec<Tid>,
    pub query: Tid,
    /// Mean patch embeddings, one row per sample; feed to [`StatModel::update_bank`].
    pub pooled: Vec<Vec<f64>>,
}

pub struct LossOut {
    pub total: Tid,
    pub mse: Tid,
    pub aux: Option<[Tid; AUX_TERMS]>,
}

pub struct StatModel {
    pub cfg: ModelConfig,
    pub ablation: Ablation,
    pub store: ParamStore,
    pub bank: MemoryBank,
    pub temporal: TemporalLearner,
    /// One projection shared by every retrieval pool.
    pub align: Option<Linear>,
    pub textual: Option<RetrievalBranch>,
    pub symbolic: Option<SymbolicLearner>,
    pub router: VatRouter,
    pub log_sigma: [ParamId; AUX_TERMS],
}

impl StatModel {
    pub fn new(cfg: ModelConfig, ablation: Ablation, seed: u64) -> Result<StatModel> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();

        let temporal = TemporalLearner::new(&mut store, &cfg, &mut rng)?;
        let use_text = !ablation.no_trl;
        let use_sym = !ablation.no_srl;
        let align = if use_text || use_sym {
            Some(Linear::new(
                &mut store, "align", cfg.d_emb, cfg.d_model, &mut rng,
            )?)
        } else {
            None
        };
        let textual = if use_text {
            Some(RetrievalBranch::new(
                &mut store,
                "textual",
                cfg.d_model,
                cfg.heads,
                cfg.horizon,
                &mut rng,
            )?)
        } else {
            None
        };
        let symbolic = if use_sym {
            Some(SymbolicLearner::new(
                &mut store,
                cfg.d_model,
                cfg.heads,
                cfg.horizon,
                &mut rng,
            )?)
        } else {
            None
        };
        let router = VatRouter::new(
            &mut store,
            cfg.d_model,
            cfg.horizon,
            ablation.expert_count(),
            cfg.eta,
            &mut rng,
        )?;
        // Registered regardless of the loss mode so checkpoints stay uniform;
        // without the auxiliary terms they simply never receive gradient.
        let mut log_sigma = Vec::with_capacity(AUX_TERMS);
        for name in AUX_NAMES {
            log_sigma.push(store.add(
                &format!("adf.log_sigma.{name}"),
                Tensor::zeros(&[1]),
                true,
            )?);
        }
        let log_sigma: [ParamId; AUX_TERMS] = log_sigma.try_into().expect("four loss terms");
        let bank = MemoryBank::new(cfg.bank_capacity, cfg.d_model);
        Ok(StatModel {
            cfg,
            ablation,
            store,
            bank,
            temporal,
            align,
            textual,
            symbolic,
            router,
            log_sigma,
        })
    }

    /// Router column labels, in prediction order.
    pub fn expert_labels(&self) -> Vec<&'static str> {
        let mut labels = vec!["temporal"];
        if self.textual.is_some() {
            labels.push("textual");
        }
        if self.symbolic.is_some() {
            labels.push("symbolic");
        }
        labels
    }

    fn aligned_pool(
        &self,
        g: &mut Graph,
        raw: &Tensor,
        valid: &[usize],
    ) -> Result<(Tid, Tensor)> {
        let align = self.align.as_ref().expect("branch without projection");
        let tokens = g.constant(raw.clone());
        let pool = align.forward(g, &self.store, tokens)?;
        let mask = key_padding_mask(valid, raw.shape()[1]);
        Ok((pool, mask))
    }

    /// x: B x L x C plus the batch's side features.
    pub fn forward(&self, g: &mut Graph, x: &Tensor, feats: &BatchFeatures) -> Result<ForwardOut> {
        let tout = self.temporal.forward(g, &self.store, x, &self.bank)?;
        let mut expert_preds = vec![tout.yhat];

        if let Some(textual) = &self.textual {
            let (pool, mask) = self.aligned_pool(g, &feats.text, &feats.text_valid)?;
            expert_preds.push(textual.forward(g, &self.store, tout.query, pool, Some(&mask))?);
        }
        if let Some(symbolic) = &self.symbolic {
            let mut pools = Vec::with_capacity(SCALES);
            for (raw, valid) in &feats.sym {
                let (pool, mask) = self.aligned_pool(g, raw, valid)?;
                pools.push((pool, Some(mask)));
            }
            let pools: [(Tid, Option<Tensor>); SCALES] =
                pools.try_into().expect("three symbol scales");
            let sout = symbolic.forward(g, &self.store, tout.query, &pools)?;
            expert_preds.push(sout.mixed);
        }

        let weights = self.router.route(
            g,
            &self.store,
            tout.query,
            &feats.alphas,
            self.ablation.no_vat,
        )?;
        let prediction = self.router.fuse(g, weights, &expert_preds)?;
        Ok(ForwardOut {
            prediction,
            weights,
            expert_preds,
            query: tout.query,
            pooled: tout.pooled,
        })
    }

    /// Queue this step's pooled embeddings; training only, after the update.
    pub fn update_bank(&mut self, pooled: Vec<Vec<f64>>) {
        for row in pooled {
            self.bank.enqueue(row);
        }
    }

    pub fn loss(&self, g: &mut Graph, yhat: Tid, y: &Tensor) -> Result<LossOut> {
        if self.ablation.no_adf {
            let mse = mse_loss(&mut g.tape, yhat, y)?;
            return Ok(LossOut {
                total: mse,
                mse,
                aux: None,
            });
        }
        let mut ls = [yhat; AUX_TERMS];
        for (slot, &id) in ls.iter_mut().zip(&self.log_sigma) {
            *slot = g.param(&self.store, id);
        }
        let bd = adf_loss(&mut g.tape, yhat, y, ls, &self.cfg.adf)?;
        Ok(LossOut {
            total: bd.total,
            mse: bd.mse,
            aux: Some(bd.aux),
        })
    }
}
