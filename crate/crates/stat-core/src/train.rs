//! Experiment orchestration: deterministic training with early stopping,
//! evaluation over splits, the ablation grid, and zero-shot transfer.

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{batch_indices, load_dataset, LoadedDataset, Registry, Windows};
use crate::embed::Provider;
use crate::error::{Result, StatError};
use crate::metrics::{evaluate_batch, MetricAccumulator, MetricRow};
use crate::model::{fit_codebooks, BatchFeatures, Featurizer, StatModel, SCALES};
use crate::nn::{Adam, Graph};
use crate::symbolic::Codebook;
use crate::tensor::Tensor;
use std::path::Path;

pub const TABLE6_HORIZONS: [usize; 4] = [96, 192, 336, 720];

/// One line of the training log. `epoch` is 0-based; the learning rate for
/// epoch e is the configured rate halved e times.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_total: f64,
    pub val_total: f64,
    pub val_mse: f64,
}

pub struct TrainedRun {
    pub ckpt: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Validation (total loss, mse) of the untrained model.
    pub initial_val: (f64, f64),
    /// Epoch whose weights the checkpoint carries; None means initialization.
    pub best_epoch: Option<usize>,
    pub diverged: bool,
}

/// Everything a run needs in one place: data, frozen side assets, model.
pub struct Experiment {
    pub run: RunConfig,
    pub ds: LoadedDataset,
    /// Training windows after any few-shot reduction.
    pub train_split: Windows,
    pub provider: Provider,
    pub codebooks: [Vec<Codebook>; SCALES],
    pub model: StatModel,
}

impl Experiment {
    pub fn prepare(run: &RunConfig, data_dir: &Path) -> Result<Experiment> {
        run.validate()?;
        let registry = Registry::for_data_dir(data_dir)?;
        let spec = registry.get(&run.dataset)?;
        let ds = load_dataset(spec, data_dir, run.lookback, run.horizon)?;
        let train_split = ds.train.few_shot_prefix(run.few_shot)?;
        // Symbol statistics come from the data the model is allowed to see.
        let codebooks = fit_codebooks(&train_split, &run.tolerances, run.codebook_fit_cap)?;
        let provider = Provider::seeded(&[ds.description.clone()], run.d_emb, run.seed);
        let model = StatModel::new(
            run.model(ds.train.channels())?,
            run.ablation,
            run.seed,
        )?;
        Ok(Experiment {
            run: run.clone(),
            ds,
            train_split,
            provider,
            codebooks,
            model,
        })
    }
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn featurize(
    model: &StatModel,
    f: &Featurizer,
    x: &Tensor,
) -> Result<BatchFeatures> {
    f.features(x, model.textual.is_some(), model.symbolic.is_some())
}

/// Mean (total loss, mse) over a split, without touching any state.
fn split_losses(
    model: &StatModel,
    f: &Featurizer,
    split: &Windows,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut mse = 0.0;
    let mut count = 0usize;
    for idx in batch_indices(split.len(), batch_size, None) {
        let (x, y) = split.gather(&idx);
        let feats = featurize(model, f, &x)?;
        let mut g = Graph::new();
        let out = model.forward(&mut g, &x, &feats)?;
        let loss = model.loss(&mut g, out.prediction, &y)?;
        total += g.tape.value(loss.total).data()[0] * idx.len() as f64;
        mse += g.tape.value(loss.mse).data()[0] * idx.len() as f64;
        count += idx.len();
    }
    Ok((total / count as f64, mse / count as f64))
}

/// Forecast metrics over a split with the model exactly as given (the memory
/// bank stays frozen).
pub fn evaluate_split(
    model: &StatModel,
    provider: &Provider,
    codebooks: &[Vec<Codebook>; SCALES],
    description: &str,
    split: &Windows,
    batch_size: usize,
) -> Result<MetricRow> {
    let f = Featurizer {
        provider,
        codebooks,
        description: description.to_string(),
        horizon: split.horizon,
    };
    let mut acc = MetricAccumulator::default();
    for idx in batch_indices(split.len(), batch_size, None) {
        let (x, y) = split.gather(&idx);
        let feats = featurize(model, &f, &x)?;
        let mut g = Graph::new();
        let out = model.forward(&mut g, &x, &feats)?;
        acc.add(evaluate_batch(g.tape.value(out.prediction), &y)?, idx.len());
    }
    Ok(acc.finish())
}

/// MSE of the carry-last-value baseline over a split.
pub fn persistence_mse(split: &Windows) -> f64 {
    let c = split.channels();
    let (l, t) = (split.lookback, split.horizon);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..split.len() {
        let x = split.x(i);
        let y = split.y(i);
        let last = &x.data()[(l - 1) * c..l * c];
        for step in 0..t {
            for ch in 0..c {
                let e = y.data()[step * c + ch] - last[ch];
                sum += e * e;
            }
        }
        count += t * c;
    }
    sum / count as f64
}

pub fn train(run: &RunConfig, data_dir: &Path) -> Result<TrainedRun> {
    let mut exp = Experiment::prepare(run, data_dir)?;
    let f = Featurizer {
        provider: &exp.provider,
        codebooks: &exp.codebooks,
        description: exp.ds.description.clone(),
        horizon: run.horizon,
    };

    let initial_val = split_losses(&exp.model, &f, &exp.ds.val, run.batch_size)?;
    let mut best_val = initial_val.0;
    let mut best_state: Option<(Vec<Tensor>, crate::model::MemoryBank, usize)> = None;
    let mut log = Vec::new();
    let mut diverged = false;
    let mut stale = 0usize;
    let mut adam = Adam::new(run.lr);

    'epochs: for epoch in 0..run.max_epochs {
        adam.lr = run.lr * 0.5f64.powi(epoch as i32);
        exp.model.bank.reset();
        let epoch_start = exp.model.store.snapshot();

        let mut train_total = 0.0;
        let mut seen = 0usize;
        let batches = batch_indices(
            exp.train_split.len(),
            run.batch_size,
            Some(shuffle_seed(run.seed, epoch)),
        );
        for idx in batches {
            let (x, y) = exp.train_split.gather(&idx);
            let feats = featurize(&exp.model, &f, &x)?;
            let mut g = Graph::new();
            let out = exp.model.forward(&mut g, &x, &feats)?;
            let loss = exp.model.loss(&mut g, out.prediction, &y)?;
            let total_v = g.tape.value(loss.total).data()[0];
            if !total_v.is_finite() {
                // The weights that produced this loss are still usable;
                // drop the poisoned step and stop here.
                diverged = true;
                break 'epochs;
            }
            let grads = g.tape.backward(loss.total)?;
            let bindings = g.bindings();
            exp.model.store.zero_grads();
            exp.model.store.accumulate(&bindings, &g.tape, &grads);
            adam.step(&mut exp.model.store);
            exp.model.update_bank(out.pooled);
            train_total += total_v * idx.len() as f64;
            seen += idx.len();
        }
        if !exp.model.store.all_finite() {
            exp.model.store.restore(&epoch_start);
            diverged = true;
            break;
        }

        let (val_total, val_mse) = split_losses(&exp.model, &f, &exp.ds.val, run.batch_size)?;
        log.push(EpochLog {
            epoch,
            lr: adam.lr,
            train_total: train_total / seen as f64,
            val_total,
            val_mse,
        });
        if !val_total.is_finite() {
            exp.model.store.restore(&epoch_start);
            diverged = true;
            break;
        }

        if val_total < best_val {
            best_val = val_total;
            best_state = Some((
                exp.model.store.snapshot(),
                exp.model.bank.clone(),
                epoch,
            ));
            stale = 0;
        } else {
            stale += 1;
            if stale >= run.patience {
                break;
            }
        }
    }

    let best_epoch = match best_state {
        Some((snap, bank, epoch)) => {
            exp.model.store.restore(&snap);
            exp.model.bank = bank;
            Some(epoch)
        }
        // No epoch beat the untrained model: keep (or fall back to)
        // the initialization, which every later epoch was measured against.
        None => {
            exp.model = StatModel::new(
                run.model(exp.ds.train.channels())?,
                run.ablation,
                run.seed,
            )?;
            None
        }
    };

    let ckpt = Checkpoint::capture(
        &exp.model,
        run,
        &exp.provider,
        &exp.codebooks,
        &exp.ds.description,
    );
    Ok(TrainedRun {
        ckpt,
        log,
        initial_val,
        best_epoch,
        diverged,
    })
}

/// Evaluate a checkpoint on a named dataset's test split using the
/// checkpoint's own codebooks and provider.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, dataset: &str, data_dir: &Path) -> Result<MetricRow> {
    let model = ckpt.restore()?;
    let registry = Registry::for_data_dir(data_dir)?;
    let spec = registry.get(dataset)?;
    let ds = load_dataset(spec, data_dir, ckpt.run.lookback, ckpt.run.horizon)?;
    if ds.train.channels() != ckpt.channels {
        return Err(StatError::Input(format!(
            "dataset '{dataset}' has {} channels but the checkpoint expects {}; \
             cross-domain evaluation goes through zero-shot",
            ds.train.channels(),
            ckpt.channels
        )));
    }
    evaluate_split(
        &model,
        &ckpt.provider,
        &ckpt.codebooks,
        &ds.description,
        &ds.test,
        ckpt.run.batch_size,
    )
}

pub struct ZeroShotReport {
    pub source: String,
    pub target: String,
    pub row: MetricRow,
}

/// Transfer a trained checkpoint to another dataset: weights stay frozen,
/// only the symbol statistics are refit, on the target's training split.
pub fn run_zero_shot(ckpt: &Checkpoint, target: &str, data_dir: &Path) -> Result<ZeroShotReport> {
    let model = ckpt.restore()?;
    let registry = Registry::for_data_dir(data_dir)?;
    let spec = registry.get(target)?;
    let ds = load_dataset(spec, data_dir, ckpt.run.lookback, ckpt.run.horizon)?;
    if ds.train.channels() != ckpt.channels {
        return Err(StatError::Input(format!(
            "cannot transfer: source has {} channels, target '{target}' has {}",
            ckpt.channels,
            ds.train.channels()
        )));
    }
    // Mirror the source regime, including any few-shot restriction, so a
    // self-transfer reproduces plain evaluation bit for bit.
    let train_split = ds.train.few_shot_prefix(ckpt.run.few_shot)?;
    let books = fit_codebooks(&train_split, &ckpt.run.tolerances, ckpt.run.codebook_fit_cap)?;

    let before = model.store.value_hash();
    let row = evaluate_split(
        &model,
        &ckpt.provider,
        &books,
        &ds.description,
        &ds.test,
        ckpt.run.batch_size,
    )?;
    if model.store.value_hash() != before {
        return Err(StatError::Contract(
            "zero-shot evaluation mutated model weights".into(),
        ));
    }
    Ok(ZeroShotReport {
        source: ckpt.run.dataset.clone(),
        target: target.to_string(),
        row,
    })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AblationCell {
    pub mse: f64,
    pub dtw: f64,
}

pub struct AblationReport {
    pub horizons: Vec<usize>,
    /// Variant labels, full first.
    pub variants: Vec<String>,
    /// cells[variant][horizon]
    pub cells: Vec<Vec<AblationCell>>,
}

pub fn percent_degradation(full: f64, variant: f64) -> f64 {
    (variant - full) / full * 100.0
}

impl AblationReport {
    pub fn average(&self, variant: usize) -> AblationCell {
        let row = &self.cells[variant];
        let n = row.len() as f64;
        AblationCell {
            mse: row.iter().map(|c| c.mse).sum::<f64>() / n,
            dtw: row.iter().map(|c| c.dtw).sum::<f64>() / n,
        }
    }

    /// Percent degradation of a variant's averages against the full model.
    pub fn degradation(&self, variant: usize) -> (f64, f64) {
        let full = self.average(0);
        let v = self.average(variant);
        (
            percent_degradation(full.mse, v.mse),
            percent_degradation(full.dtw, v.dtw),
        )
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (metric, pick) in [
            ("MSE", (|c: &AblationCell| c.mse) as fn(&AblationCell) -> f64),
            ("DTW", |c: &AblationCell| c.dtw),
        ] {
            out.push_str(&format!("{metric:>8}"));
            for v in &self.variants {
                out.push_str(&format!(" {v:>12}"));
            }
            out.push('\n');
            for (hi, h) in self.horizons.iter().enumerate() {
                out.push_str(&format!("{h:>8}"));
                for cells in &self.cells {
                    out.push_str(&format!(" {:>12.4}", pick(&cells[hi])));
                }
                out.push('\n');
            }
            out.push_str(&format!("{:>8}", "Avg"));
            for v in 0..self.variants.len() {
                out.push_str(&format!(" {:>12.4}", pick(&self.average(v))));
            }
            out.push('\n');
            out.push_str(&format!("{:>8}", "%Deg"));
            for v in 0..self.variants.len() {
                if v == 0 {
                    out.push_str(&format!(" {:>12}", "-"));
                } else {
                    let d = self.degradation(v);
                    let d = if metric == "MSE" { d.0 } else { d.1 };
                    out.push_str(&format!(" {d:>12.2}"));
                }
            }
            out.push_str("\n\n");
        }
        out
    }
}

pub const ABLATION_VARIANTS: [&str; 5] = ["", "no_trl", "no_srl", "no_vat", "no_adf"];

/// Train and test every ablation variant at each horizon.
pub fn run_ablation(
    base: &RunConfig,
    data_dir: &Path,
    horizons: &[usize],
) -> Result<AblationReport> {
    let mut variants = Vec::new();
    let mut cells = Vec::new();
    for spec in ABLATION_VARIANTS {
        let ablation = crate::model::Ablation::parse(spec)?;
        variants.push(ablation.label());
        let mut row = Vec::new();
        for &t in horizons {
            let mut run = base.clone();
            run.ablation = ablation;
            run.horizon = t;
            let trained = train(&run, data_dir)?;
            let exp_model = trained.ckpt.restore()?;
            let registry = Registry::for_data_dir(data_dir)?;
            let ds = load_dataset(registry.get(&run.dataset)?, data_dir, run.lookback, t)?;
            let m = evaluate_split(
                &exp_model,
                &trained.ckpt.provider,
                &trained.ckpt.codebooks,
                &ds.description,
                &ds.test,
                run.batch_size,
            )?;
            row.push(AblationCell {
                mse: m.mse,
                dtw: m.dtw,
            });
        }
        cells.push(row);
    }
    Ok(AblationReport {
        horizons: horizons.to_vec(),
        variants,
        cells,
    })
}
