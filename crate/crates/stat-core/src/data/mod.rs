//! Dataset loading, the split-and-normalize protocol, and window/batch
//! plumbing.
//!
//! Two window-counting conventions coexist here on purpose. The benchmark
//! literature reports split sizes that, for most datasets, count every
//! position where a lookback fits (`slice - L + 1`) even though positions
//! near the end have no room for the horizon; Exchange is reported with the
//! horizon included (`slice - L - T + 1`). We reproduce those numbers as
//! *reported* counts per dataset, but the windows actually used for training
//! and evaluation are always the strict kind — both the lookback and the
//! horizon must fit inside the split — so no sample ever reads across a
//! split boundary.

pub mod synthetic;

use crate::error::{Result, StatError};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const DATA_DIR_ENV: &str = "STAT_DATA_DIR";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    EttHour,
    EttMinute,
    Ratio,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMode {
    /// Reported count ignores the horizon: slice - L + 1.
    Lax,
    /// Reported count requires the horizon: slice - L - T + 1.
    Strict,
}

#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub name: String,
    /// CSV file under the data directory; None for generated datasets.
    pub csv_file: Option<String>,
    pub split_mode: SplitMode,
    pub count_mode: CountMode,
    pub expected_channels: Option<usize>,
    pub description: String,
}

#[derive(Debug)]
pub struct RawTable {
    pub values: Vec<f64>, // rows x channels, row-major
    pub rows: usize,
    pub channels: usize,
    pub timestamps: Vec<String>,
}

impl RawTable {
    pub fn get(&self, row: usize, ch: usize) -> f64 {
        self.values[row * self.channels + ch]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose train-split std was zero (std forced to 1).
    pub degenerate: Vec<bool>,
}

impl NormStats {
    fn fit(raw: &RawTable, train_rows: std::ops::Range<usize>) -> NormStats {
        let c = raw.channels;
        let n = train_rows.len() as f64;
        let mut mean = vec![0.0; c];
        for r in train_rows.clone() {
            for ch in 0..c {
                mean[ch] += raw.get(r, ch);
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; c];
        for r in train_rows {
            for ch in 0..c {
                let d = raw.get(r, ch) - mean[ch];
                std[ch] += d * d;
            }
        }
        let mut degenerate = vec![false; c];
        for (ch, s) in std.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
                degenerate[ch] = true;
            }
        }
        NormStats {
            mean,
            std,
            degenerate,
        }
    }
}

/// Train-statistic-normalized values shared by all windows of a dataset.
pub struct NormalizedTable {
    pub values: Vec<f64>,
    pub rows: usize,
    pub channels: usize,
    pub stats: NormStats,
}

/// A set of strict windows over one split: every origin has room for both
/// the lookback and the horizon inside the split.
#[derive(Clone)]
pub struct Windows {
    data: Arc<NormalizedTable>,
    pub origins: Vec<usize>,
    pub lookback: usize,
    pub horizon: usize,
}

impl Windows {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.data.channels
    }

    pub fn stats(&self) -> &NormStats {
        &self.data.stats
    }

    /// Lookback block, L x C.
    pub fn x(&self, i: usize) -> Tensor {
        self.block(self.origins[i], self.lookback)
    }

    /// Horizon block, T x C.
    pub fn y(&self, i: usize) -> Tensor {
        self.block(self.origins[i] + self.lookback, self.horizon)
    }

    fn block(&self, start: usize, len: usize) -> Tensor {
        let c = self.data.channels;
        let slice = &self.data.values[start * c..(start + len) * c];
        Tensor::new(&[len, c], slice.to_vec()).expect("block shape")
    }

    /// Stack chosen windows into (B x L x C, B x T x C).
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let c = self.data.channels;
        let (l, t) = (self.lookback, self.horizon);
        let mut xs = Vec::with_capacity(idx.len() * l * c);
        let mut ys = Vec::with_capacity(idx.len() * t * c);
        for &i in idx {
            let o = self.origins[i];
            xs.extend_from_slice(&self.data.values[o * c..(o + l) * c]);
            ys.extend_from_slice(&self.data.values[(o + l) * c..(o + l + t) * c]);
        }
        (
            Tensor::new(&[idx.len(), l, c], xs).expect("batch x"),
            Tensor::new(&[idx.len(), t, c], ys).expect("batch y"),
        )
    }

    /// Temporal prefix: the first ceil(fraction * n) windows.
    pub fn few_shot_prefix(&self, fraction: f64) -> Result<Windows> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(StatError::Config(format!(
                "few-shot fraction must be in (0, 1], got {fraction}"
            )));
        }
        let n = self.origins.len();
        let keep = ((fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
        let keep = keep.min(n);
        Ok(Windows {
            data: Arc::clone(&self.data),
            origins: self.origins[..keep].to_vec(),
            lookback: self.lookback,
            horizon: self.horizon,
        })
    }
}

pub struct LoadedDataset {
    pub name: String,
    pub description: String,
    pub train: Windows,
    pub val: Windows,
    pub test: Windows,
    /// Split sizes under the dataset's reporting convention.
    pub reported: [usize; 3],
}

/// Row ranges [start, end) for train/val/test. Val and test start a lookback
/// early so their first windows can see history, per the community protocol.
pub fn split_slices(rows: usize, mode: SplitMode, l: usize) -> Result<[(usize, usize); 3]> {
    let fixed = |b1: usize, b2: usize, b3: usize| -> Result<[(usize, usize); 3]> {
        if rows < b3 {
            return Err(StatError::Load(format!(
                "dataset needs at least {b3} rows for this protocol, found {rows}"
            )));
        }
        Ok([(0, b1), (b1 - l, b2), (b2 - l, b3)])
    };
    match mode {
        SplitMode::EttHour => fixed(8640, 11520, 14400),
        SplitMode::EttMinute => fixed(34560, 46080, 57600),
        SplitMode::Ratio => {
            let tr = (rows as f64 * 0.7) as usize;
            let te = (rows as f64 * 0.2) as usize;
            let va = rows - tr - te;
            if tr <= l {
                return Err(StatError::Load(format!(
                    "train split of {tr} rows cannot hold a lookback of {l}"
                )));
            }
            Ok([(0, tr), (tr - l, tr + va), (rows - te - l, rows)])
        }
    }
}

pub fn reported_count(slice_len: usize, mode: CountMode, l: usize, t: usize) -> usize {
    let need = match mode {
        CountMode::Lax => l,
        CountMode::Strict => l + t,
    };
    if slice_len >= need {
        slice_len - need + 1
    } else {
        0
    }
}

/// Reported split sizes for a dataset with `rows` rows, without loading it.
pub fn reported_counts_for_rows(
    rows: usize,
    split: SplitMode,
    count: CountMode,
    l: usize,
    t: usize,
) -> Result<[usize; 3]> {
    let slices = split_slices(rows, split, l)?;
    Ok([
        reported_count(slices[0].1 - slices[0].0, count, l, t),
        reported_count(slices[1].1 - slices[1].0, count, l, t),
        reported_count(slices[2].1 - slices[2].0, count, l, t),
    ])
}

fn strict_origins(start: usize, end: usize, l: usize, t: usize) -> Vec<usize> {
    if end - start < l + t {
        return Vec::new();
    }
    (start..=end - l - t).collect()
}

/// CSV with a header row, a leading timestamp column, and numeric cells.
pub fn load_csv(path: &Path, expected_channels: Option<usize>) -> Result<RawTable> {
    let text = std::fs::read_to_string(path).map_err(|e| StatError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| StatError::Load(format!("{}: empty file", path.display())))?;
    let channels = header.split(',').count().saturating_sub(1);
    if channels == 0 {
        return Err(StatError::Load(format!(
            "{}: header must have a timestamp column plus data columns",
            path.display()
        )));
    }
    if let Some(c) = expected_channels {
        if channels != c {
            return Err(StatError::Load(format!(
                "{}: expected {c} channels, header has {channels}",
                path.display()
            )));
        }
    }
    let mut values = Vec::new();
    let mut timestamps = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let ts = fields.next().unwrap_or("");
        timestamps.push(ts.to_string());
        let mut got = 0usize;
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|e| {
                StatError::Load(format!(
                    "{} line {}: bad value {:?}: {e}",
                    path.display(),
                    i + 1,
                    field
                ))
            })?;
            if !v.is_finite() {
                return Err(StatError::Load(format!(
                    "{} line {}: non-finite value",
                    path.display(),
                    i + 1
                )));
            }
            values.push(v);
            got += 1;
        }
        if got != channels {
            return Err(StatError::Load(format!(
                "{} line {}: expected {channels} values, got {got}",
                path.display(),
                i + 1
            )));
        }
    }
    let rows = timestamps.len();
    Ok(RawTable {
        values,
        rows,
        channels,
        timestamps,
    })
}

fn build_windows(raw: &RawTable, spec: &DatasetSpec, l: usize, t: usize) -> Result<LoadedDataset> {
    let slices = split_slices(raw.rows, spec.split_mode, l)?;
    let stats = NormStats::fit(raw, slices[0].0..slices[0].1);
    let mut values = Vec::with_capacity(raw.values.len());
    for r in 0..raw.rows {
        for ch in 0..raw.channels {
            values.push((raw.get(r, ch) - stats.mean[ch]) / stats.std[ch]);
        }
    }
    let table = Arc::new(NormalizedTable {
        values,
        rows: raw.rows,
        channels: raw.channels,
        stats,
    });
    let make = |(start, end): (usize, usize)| Windows {
        data: Arc::clone(&table),
        origins: strict_origins(start, end, l, t),
        lookback: l,
        horizon: t,
    };
    let train = make(slices[0]);
    let val = make(slices[1]);
    let test = make(slices[2]);
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(StatError::Load(format!(
            "{}: a split is too short for lookback {l} + horizon {t}",
            spec.name
        )));
    }
    let reported = [
        reported_count(slices[0].1 - slices[0].0, spec.count_mode, l, t),
        reported_count(slices[1].1 - slices[1].0, spec.count_mode, l, t),
        reported_count(slices[2].1 - slices[2].0, spec.count_mode, l, t),
    ];
    Ok(LoadedDataset {
        name: spec.name.clone(),
        description: spec.description.clone(),
        train,
        val,
        test,
        reported,
    })
}

/// Load a dataset: generated ones are synthesized, the rest read CSV from
/// the data directory. ETT protocols use only their fixed row prefix.
pub fn load_dataset(spec: &DatasetSpec, data_dir: &Path, l: usize, t: usize) -> Result<LoadedDataset> {
    let mut raw = match &spec.csv_file {
        None => synthetic::generate(&spec.name).ok_or_else(|| {
            StatError::Load(format!("no generator for dataset {:?}", spec.name))
        })?,
        Some(file) => load_csv(&data_dir.join(file), spec.expected_channels)?,
    };
    let needed = match spec.split_mode {
        SplitMode::EttHour => Some(14400),
        SplitMode::EttMinute => Some(57600),
        SplitMode::Ratio => None,
    };
    if let Some(n) = needed {
        if raw.rows < n {
            return Err(StatError::Load(format!(
                "{}: protocol needs {n} rows, file has {}",
                spec.name, raw.rows
            )));
        }
        raw.values.truncate(n * raw.channels);
        raw.timestamps.truncate(n);
        raw.rows = n;
    }
    build_windows(&raw, spec, l, t)
}

/// Deterministic batch index lists; the final partial batch is kept.
pub fn batch_indices(n: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
    }
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

pub struct Registry {
    specs: BTreeMap<String, DatasetSpec>,
}

fn builtin(name: &str, file: Option<&str>, split: SplitMode, count: CountMode, ch: Option<usize>, desc: &str) -> DatasetSpec {
    DatasetSpec {
        name: name.into(),
        csv_file: file.map(Into::into),
        split_mode: split,
        count_mode: count,
        expected_channels: ch,
        description: desc.into(),
    }
}

impl Registry {
    pub fn builtin() -> Registry {
        use CountMode::*;
        use SplitMode::*;
        let specs = [
            builtin("ETTh1", Some("ETTh1.csv"), EttHour, Lax, Some(7),
                "hourly electricity transformer readings with oil temperature and six load channels"),
            builtin("ETTh2", Some("ETTh2.csv"), EttHour, Lax, Some(7),
                "hourly electricity transformer readings from a second station"),
            builtin("ETTm1", Some("ETTm1.csv"), EttMinute, Lax, Some(7),
                "15-minute electricity transformer readings with oil temperature and six load channels"),
            builtin("ETTm2", Some("ETTm2.csv"), EttMinute, Lax, Some(7),
                "15-minute electricity transformer readings from a second station"),
            builtin("Weather", Some("weather.csv"), Ratio, Lax, Some(21),
                "10-minute meteorological measurements across 21 weather indicators"),
            builtin("Electricity", Some("electricity.csv"), Ratio, Lax, Some(321),
                "hourly electricity consumption of 321 clients"),
            builtin("Traffic", Some("traffic.csv"), Ratio, Lax, Some(862),
                "hourly road occupancy rates from 862 San Francisco freeway sensors"),
            builtin("Exchange", Some("exchange_rate.csv"), Ratio, Strict, Some(8),
                "daily exchange rates of eight currencies"),
            builtin("synthetic", None, Ratio, Strict, Some(synthetic::CHANNELS),
                "synthetic regime-switching seasonal series with three channels"),
            builtin("synthetic2", None, Ratio, Strict, Some(synthetic::CHANNELS),
                "a second synthetic seasonal series drawn from shifted regimes"),
            builtin("synthetic_long", None, Ratio, Strict, Some(synthetic::CHANNELS),
                "an extended synthetic seasonal series long enough for 720-step horizons"),
        ];
        Registry {
            specs: specs.into_iter().map(|s| (s.name.clone(), s)).collect(),
        }
    }

    /// Built-ins plus any overrides from `registry.csv` in the data dir.
    pub fn for_data_dir(dir: &Path) -> Result<Registry> {
        let mut reg = Registry::builtin();
        let path = dir.join("registry.csv");
        if path.exists() {
            reg.load_overrides(&path)?;
        }
        Ok(reg)
    }

    /// One record per line: name,csv_file,split_mode,description.
    pub fn load_overrides(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| StatError::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.splitn(4, ',').collect();
            if parts.len() != 4 {
                return Err(StatError::Load(format!(
                    "{} line {}: need name,csv_file,split_mode,description",
                    path.display(),
                    i + 1
                )));
            }
            let split_mode = match parts[2].trim() {
                "ett_hour" => SplitMode::EttHour,
                "ett_minute" => SplitMode::EttMinute,
                "ratio_70_10_20" | "ratio" => SplitMode::Ratio,
                other => {
                    return Err(StatError::Load(format!(
                        "{} line {}: unknown split mode {other:?}",
                        path.display(),
                        i + 1
                    )))
                }
            };
            let name = parts[0].trim().to_string();
            self.specs.insert(
                name.clone(),
                DatasetSpec {
                    name,
                    csv_file: Some(parts[1].trim().to_string()),
                    split_mode,
                    count_mode: CountMode::Strict,
                    expected_channels: None,
                    description: parts[3].trim().to_string(),
                },
            );
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&DatasetSpec> {
        self.specs.get(name).ok_or_else(|| {
            StatError::Config(format!(
                "unknown dataset {name:?}; known: {:?}",
                self.specs.keys().collect::<Vec<_>>()
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(|s| s.as_str())
    }
}

pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_counts_match_the_published_table() {
        use CountMode::*;
        use SplitMode::*;
        // (rows, split, count, expected) for L=96, T=96
        let cases = [
            (14400, EttHour, Lax, [8545, 2881, 2881]),
            (57600, EttMinute, Lax, [34465, 11521, 11521]),
            (52696, Ratio, Lax, [36792, 5271, 10540]),  // Weather
            (26304, Ratio, Lax, [18317, 2633, 5261]),   // Electricity
            (17544, Ratio, Lax, [12185, 1757, 3509]),   // Traffic
            (7588, Ratio, Strict, [5120, 665, 1422]),   // Exchange
        ];
        for (rows, split, count, expect) in cases {
            let got = reported_counts_for_rows(rows, split, count, 96, 96).unwrap();
            assert_eq!(got, expect, "rows={rows}");
        }
    }

    #[test]
    fn reported_counts_vary_with_horizon_only_in_strict_mode() {
        let lax = reported_counts_for_rows(7588, SplitMode::Ratio, CountMode::Lax, 96, 192).unwrap();
        let lax2 = reported_counts_for_rows(7588, SplitMode::Ratio, CountMode::Lax, 96, 96).unwrap();
        assert_eq!(lax, lax2);
        let s1 = reported_counts_for_rows(7588, SplitMode::Ratio, CountMode::Strict, 96, 96).unwrap();
        let s2 = reported_counts_for_rows(7588, SplitMode::Ratio, CountMode::Strict, 96, 192).unwrap();
        assert_eq!(s1[0] - s2[0], 96);
    }

    #[test]
    fn synthetic_dataset_loads_with_declared_counts() {
        let reg = Registry::builtin();
        let spec = reg.get("synthetic").unwrap();
        let ds = load_dataset(spec, Path::new("/nonexistent"), 96, 96).unwrap();
        // n=2000: train 1400 rows, val 200, test 400; strict counting
        assert_eq!(ds.reported, [1209, 105, 305]);
        assert_eq!(ds.train.len(), 1209);
        assert_eq!(ds.val.len(), 105);
        assert_eq!(ds.test.len(), 305);
        assert_eq!(ds.train.channels(), synthetic::CHANNELS);
    }

    #[test]
    fn long_synthetic_supports_the_720_horizon() {
        let reg = Registry::builtin();
        let spec = reg.get("synthetic_long").unwrap();
        let ds = load_dataset(spec, Path::new("/nonexistent"), 96, 720).unwrap();
        // n=7600: train 5320 rows, val 760, test 1520; strict counting
        assert_eq!(ds.reported, [4505, 41, 801]);
        assert_eq!(ds.train.len(), 4505);
        assert_eq!(ds.val.len(), 41);
        assert_eq!(ds.test.len(), 801);
    }

    #[test]
    fn windows_never_straddle_split_boundaries() {
        let reg = Registry::builtin();
        let spec = reg.get("synthetic").unwrap();
        let ds = load_dataset(spec, Path::new("/nonexistent"), 96, 96).unwrap();
        let slices = split_slices(2000, SplitMode::Ratio, 96).unwrap();
        for (w, (start, end)) in [(&ds.train, slices[0]), (&ds.val, slices[1]), (&ds.test, slices[2])] {
            let first = *w.origins.first().unwrap();
            let last = *w.origins.last().unwrap();
            assert!(first >= start);
            assert!(last + 96 + 96 <= end, "window leaks past {end}");
        }
    }

    #[test]
    fn denormalizing_windows_recovers_raw_values() {
        let reg = Registry::builtin();
        let spec = reg.get("synthetic").unwrap();
        let ds = load_dataset(spec, Path::new("/nonexistent"), 96, 96).unwrap();
        let raw = synthetic::generate("synthetic").unwrap();
        let stats = ds.train.stats().clone();
        for &i in &[0usize, 7, 100] {
            let x = ds.train.x(i);
            let o = ds.train.origins[i];
            for t in 0..96 {
                for ch in 0..raw.channels {
                    let denorm = x.data()[t * raw.channels + ch] * stats.std[ch] + stats.mean[ch];
                    assert!((denorm - raw.get(o + t, ch)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn gather_stacks_windows_in_order() {
        let reg = Registry::builtin();
        let spec = reg.get("synthetic").unwrap();
        let ds = load_dataset(spec, Path::new("/nonexistent"), 8, 4).unwrap();
        let (x, y) = ds.train.gather(&[3, 0]);
        assert_eq!(x.shape(), &[2, 8, synthetic::CHANNELS]);
        assert_eq!(y.shape(), &[2, 4, synthetic::CHANNELS]);
        assert_eq!(x.narrow(0, 0, 1).unwrap().data(), ds.train.x(3).data());
        assert_eq!(y.narrow(0, 1, 1).unwrap().data(), ds.train.y(0).data());
    }

    #[test]
    fn constant_channel_is_guarded_and_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("const.csv");
        let mut csv = String::from("date,a,b\n");
        for i in 0..200 {
            csv.push_str(&format!("t{i},{},5.0\n", (i as f64 * 0.7).sin()));
        }
        std::fs::write(&path, csv).unwrap();
        let spec = DatasetSpec {
            name: "const".into(),
            csv_file: Some("const.csv".into()),
            split_mode: SplitMode::Ratio,
            count_mode: CountMode::Strict,
            expected_channels: None,
            description: "test".into(),
        };
        let ds = load_dataset(&spec, dir.path(), 8, 4).unwrap();
        let stats = ds.train.stats();
        assert!(!stats.degenerate[0]);
        assert!(stats.degenerate[1]);
        assert_eq!(stats.std[1], 1.0);
    }

    #[test]
    fn csv_errors_are_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "date,a\nt0,1.0\nt1,abc\n").unwrap();
        let err = load_csv(&bad, None).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("abc"), "{err}");

        let missing = load_csv(&dir.path().join("nope.csv"), None);
        assert!(missing.is_err());

        let narrow = dir.path().join("narrow.csv");
        std::fs::write(&narrow, "date,a\nt0,1.0\n").unwrap();
        assert!(load_csv(&narrow, Some(7)).is_err());

        let nan = dir.path().join("nan.csv");
        std::fs::write(&nan, "date,a\nt0,NaN\n").unwrap();
        assert!(load_csv(&nan, None).is_err());

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "date,a,b\nt0,1.0\n").unwrap();
        assert!(load_csv(&ragged, None).is_err());
    }

    #[test]
    fn ett_protocol_on_a_generated_file_matches_published_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ETTh1.csv");
        let mut csv = String::from("date,c1,c2,c3,c4,c5,c6,c7\n");
        for i in 0..14400 {
            let base = (i as f64 * 0.01).sin();
            csv.push_str(&format!(
                "t{i},{base},{},{},{},{},{},{}\n",
                base + 1.0,
                base * 2.0,
                base - 0.5,
                (i as f64 * 0.03).cos(),
                i as f64 * 1e-4,
                -base
            ));
        }
        std::fs::write(&path, csv).unwrap();
        let reg = Registry::builtin();
        let ds = load_dataset(reg.get("ETTh1").unwrap(), dir.path(), 96, 96).unwrap();
        assert_eq!(ds.reported, [8545, 2881, 2881]);
        // strict sampled counts exclude horizon room
        assert_eq!(ds.train.len(), 8640 - 192 + 1);
    }

    #[test]
    fn ett_too_short_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ETTh1.csv");
        let mut csv = String::from("date,c1,c2,c3,c4,c5,c6,c7\n");
        for i in 0..100 {
            csv.push_str(&format!("t{i},1,2,3,4,5,6,7\n"));
        }
        std::fs::write(&path, csv).unwrap();
        let reg = Registry::builtin();
        let err = load_dataset(reg.get("ETTh1").unwrap(), dir.path(), 96, 96);
        assert!(err.is_err());
    }

    #[test]
    fn few_shot_takes_the_temporal_prefix() {
        let reg = Registry::builtin();
        let ds = load_dataset(reg.get("synthetic").unwrap(), Path::new("/"), 8, 4).unwrap();
        let n = ds.train.len();
        let sub = ds.train.few_shot_prefix(0.1).unwrap();
        assert_eq!(sub.len(), (n as f64 * 0.1).ceil() as usize);
        assert_eq!(sub.origins[..], ds.train.origins[..sub.len()]);
        let all = ds.train.few_shot_prefix(1.0).unwrap();
        assert_eq!(all.len(), n);
        assert!(ds.train.few_shot_prefix(0.0).is_err());
        assert!(ds.train.few_shot_prefix(1.5).is_err());
    }

    #[test]
    fn few_shot_ceiling_cases() {
        let reg = Registry::builtin();
        let ds = load_dataset(reg.get("synthetic").unwrap(), Path::new("/"), 8, 4).unwrap();
        // fraction tuned to give exactly ceil(0.1 * 7) on a 7-window subset
        let seven = Windows {
            data: Arc::clone(&ds.train.data),
            origins: ds.train.origins[..7].to_vec(),
            lookback: 8,
            horizon: 4,
        };
        assert_eq!(seven.few_shot_prefix(0.1).unwrap().len(), 1);
        let hundred = Windows {
            data: Arc::clone(&ds.train.data),
            origins: ds.train.origins[..100].to_vec(),
            lookback: 8,
            horizon: 4,
        };
        assert_eq!(hundred.few_shot_prefix(0.1).unwrap().len(), 10);
    }

    #[test]
    fn batches_are_deterministic_and_keep_the_remainder() {
        let b = batch_indices(70, 32, None);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 32, 6]);
        let flat: Vec<usize> = b.concat();
        assert_eq!(flat, (0..70).collect::<Vec<_>>());

        let s1 = batch_indices(70, 32, Some(9));
        let s2 = batch_indices(70, 32, Some(9));
        assert_eq!(s1, s2);
        let s3 = batch_indices(70, 32, Some(10));
        assert_ne!(s1, s3);
        let mut sorted: Vec<usize> = s1.concat();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..70).collect::<Vec<_>>());
    }

    #[test]
    fn registry_overrides_and_unknowns() {
        let dir = tempfile::tempdir().unwrap();
        let reg_path = dir.path().join("registry.csv");
        std::fs::write(
            &reg_path,
            "# custom sets\nmyset,my.csv,ratio_70_10_20,a custom feed, with a comma\n",
        )
        .unwrap();
        let reg = Registry::for_data_dir(dir.path()).unwrap();
        let spec = reg.get("myset").unwrap();
        assert_eq!(spec.csv_file.as_deref(), Some("my.csv"));
        assert_eq!(spec.split_mode, SplitMode::Ratio);
        assert_eq!(spec.description, "a custom feed, with a comma");
        assert!(reg.get("nope").is_err());

        std::fs::write(&reg_path, "x,y.csv,bogus_mode,desc\n").unwrap();
        assert!(Registry::for_data_dir(dir.path()).is_err());
    }
}
