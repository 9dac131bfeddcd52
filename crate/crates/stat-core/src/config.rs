//! Flat key=value run configuration.
//!
//! Lines are `key = value` (spaces optional); `#` starts a comment. Unknown
//! keys are rejected so typos fail loudly instead of silently using defaults.

use crate::error::{Result, StatError};
use crate::hashutil::Fnv1a;
use crate::loss::AdfConfig;
use crate::model::{Ablation, ModelConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub lookback: usize,
    pub horizon: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub eta: f64,
    pub tolerances: [f64; 3],
    pub d_model: usize,
    pub heads: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub top_k: usize,
    pub bank_capacity: usize,
    pub d_emb: usize,
    pub svd_rank: usize,
    pub aux_patch_len: usize,
    /// Windows sampled (evenly strided) when fitting codebooks.
    pub codebook_fit_cap: usize,
    /// Training-prefix fraction; 1.0 trains on the whole split.
    pub few_shot: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "synthetic".into(),
            lookback: 96,
            horizon: 96,
            batch_size: 32,
            lr: 1e-3,
            max_epochs: 10,
            patience: 3,
            seed: 0,
            ablation: Ablation::default(),
            eta: 2.0,
            tolerances: [0.01, 0.1, 0.5],
            d_model: 128,
            heads: 4,
            patch_len: 16,
            stride: 8,
            top_k: 4,
            bank_capacity: 64,
            d_emb: 32,
            svd_rank: 4,
            aux_patch_len: 24,
            codebook_fit_cap: 256,
            few_shot: 1.0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(StatError::Config(format!(
                    "line {}: expected key=value, got '{line}'",
                    ln + 1
                )));
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|e| StatError::Config(format!("line {}: {e}", ln + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| StatError::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| StatError::Config(format!("bad value '{value}' for {key}")))
        }
        match key {
            "dataset" => self.dataset = value.to_string(),
            "lookback" => self.lookback = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "ablation" => self.ablation = Ablation::parse(value)?,
            "vat.eta" => self.eta = num(key, value)?,
            "tolerances" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|t| num("tolerances", t.trim()))
                    .collect::<Result<_>>()?;
                self.tolerances = parts.try_into().map_err(|_| {
                    StatError::Config("tolerances needs exactly three values".into())
                })?;
            }
            "d_model" => self.d_model = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "patch_len" => self.patch_len = num(key, value)?,
            "stride" => self.stride = num(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "bank_capacity" => self.bank_capacity = num(key, value)?,
            "d_emb" => self.d_emb = num(key, value)?,
            "adf.svd_rank" => self.svd_rank = num(key, value)?,
            "adf.patch_len" => self.aux_patch_len = num(key, value)?,
            "codebook_fit_cap" => self.codebook_fit_cap = num(key, value)?,
            "few_shot" => self.few_shot = num(key, value)?,
            other => return Err(StatError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(StatError::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(StatError::Config(format!("bad learning rate {}", self.lr)));
        }
        if !(self.few_shot > 0.0 && self.few_shot <= 1.0) {
            return Err(StatError::Config(format!(
                "few_shot must lie in (0, 1], got {}",
                self.few_shot
            )));
        }
        if self.codebook_fit_cap == 0 {
            return Err(StatError::Config("codebook_fit_cap must be positive".into()));
        }
        crate::symbolic::validate_tolerances(&self.tolerances)?;
        self.model(self.channels_hint())?.validate()
    }

    /// Placeholder channel count for validation before data is loaded.
    fn channels_hint(&self) -> usize {
        1
    }

    /// Geometry for a dataset with `channels` channels.
    pub fn model(&self, channels: usize) -> Result<ModelConfig> {
        Ok(ModelConfig {
            lookback: self.lookback,
            horizon: self.horizon,
            channels,
            patch_len: self.patch_len,
            stride: self.stride,
            d_model: self.d_model,
            heads: self.heads,
            top_k: self.top_k,
            bank_capacity: self.bank_capacity,
            d_emb: self.d_emb,
            eta: self.eta,
            adf: AdfConfig {
                svd_rank: self.svd_rank,
                patch_len: self.aux_patch_len,
            },
        })
    }

    /// Canonical listing, one key per line; also what the hash covers.
    pub fn canonical(&self) -> String {
        format!(
            "ablation={}\nadf.patch_len={}\nadf.svd_rank={}\nbank_capacity={}\nbatch_size={}\ncodebook_fit_cap={}\nd_emb={}\nd_model={}\ndataset={}\nfew_shot={}\nheads={}\nhorizon={}\nlookback={}\nlr={}\nmax_epochs={}\npatch_len={}\npatience={}\nseed={}\nstride={}\ntolerances={},{},{}\ntop_k={}\nvat.eta={}\n",
            self.ablation.label(),
            self.aux_patch_len,
            self.svd_rank,
            self.bank_capacity,
            self.batch_size,
            self.codebook_fit_cap,
            self.d_emb,
            self.d_model,
            self.dataset,
            self.few_shot,
            self.heads,
            self.horizon,
            self.lookback,
            self.lr,
            self.max_epochs,
            self.patch_len,
            self.patience,
            self.seed,
            self.stride,
            self.tolerances[0],
            self.tolerances[1],
            self.tolerances[2],
            self.top_k,
            self.eta,
        )
    }

    pub fn hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(self.canonical().as_bytes());
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.eta, 2.0);
        assert_eq!(cfg.max_epochs, 10);
        assert_eq!(cfg.patience, 3);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.tolerances, [0.01, 0.1, 0.5]);
    }

    #[test]
    fn keys_override_and_comments_are_ignored() {
        let text = "
# experiment
dataset = ETTh1
lookback = 48   # window
horizon=24
vat.eta = 1.5
ablation = no_vat,no_adf
tolerances = 0.02, 0.2, 0.4
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.dataset, "ETTh1");
        assert_eq!(cfg.lookback, 48);
        assert_eq!(cfg.horizon, 24);
        assert_eq!(cfg.eta, 1.5);
        assert!(cfg.ablation.no_vat && cfg.ablation.no_adf);
        assert_eq!(cfg.tolerances, [0.02, 0.2, 0.4]);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(RunConfig::parse("mystery = 1").is_err());
        assert!(RunConfig::parse("lookback").is_err());
        assert!(RunConfig::parse("lookback = soon").is_err());
        assert!(RunConfig::parse("few_shot = 0").is_err());
        assert!(RunConfig::parse("tolerances = 0.5, 0.1, 0.01").is_err());
        assert!(RunConfig::parse("stride = 40").is_err());
    }

    #[test]
    fn hash_tracks_content_not_formatting() {
        let a = RunConfig::parse("lookback = 48\nhorizon = 24").unwrap();
        let b = RunConfig::parse("# note\nhorizon=24\nlookback=48").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::parse("lookback = 48\nhorizon = 48").unwrap();
        assert_ne!(a.hash(), c.hash());
        assert!(a.canonical().contains("vat.eta=2\n"));
    }
}
