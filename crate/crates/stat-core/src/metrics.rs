//! Evaluation metrics: MSE/MAE plus warping-based DTW and TDI.
//!
//! DTW cost alone is well defined, but the *path* is not: many warps can tie.
//! TDI depends on the chosen path, so we make it deterministic with a fixed
//! tie rule — walk forward from (0,0) using suffix costs, preferring a
//! diagonal step, then a vertical step (advance the truth index), then a
//! horizontal one, whenever several steps stay optimal. On [0,1,2] vs [0,2]
//! this picks (0,0),(1,1),(2,1).

use crate::error::{Result, StatError};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct DtwResult {
    pub cost: f64,
    /// (truth index m, prediction index n) pairs from (0,0) to the corner.
    pub path: Vec<(usize, usize)>,
}

fn sq(a: f64, b: f64) -> f64 {
    (a - b) * (a - b)
}

/// Dynamic-time-warping cost and the tie-broken optimal path.
pub fn dtw(y: &[f64], yhat: &[f64]) -> Result<DtwResult> {
    if y.is_empty() || yhat.is_empty() {
        return Err(StatError::Contract(
            "dtw requires non-empty sequences".into(),
        ));
    }
    let (rows, cols) = (y.len(), yhat.len());
    // Suffix costs: s[i][j] = cost of the best path from (i,j) to the corner.
    let mut s = vec![f64::INFINITY; rows * cols];
    let at = |i: usize, j: usize| i * cols + j;
    for i in (0..rows).rev() {
        for j in (0..cols).rev() {
            let d = sq(y[i], yhat[j]);
            let best = if i + 1 == rows && j + 1 == cols {
                0.0
            } else {
                let mut b = f64::INFINITY;
                if i + 1 < rows && j + 1 < cols {
                    b = b.min(s[at(i + 1, j + 1)]);
                }
                if i + 1 < rows {
                    b = b.min(s[at(i + 1, j)]);
                }
                if j + 1 < cols {
                    b = b.min(s[at(i, j + 1)]);
                }
                b
            };
            s[at(i, j)] = d + best;
        }
    }
    // Forward walk: at each cell take the most preferred successor among
    // those achieving the minimum suffix cost. Comparing against the
    // recomputed successor minimum keeps the equalities bit-exact.
    let mut path = vec![(0usize, 0usize)];
    let (mut i, mut j) = (0usize, 0usize);
    while i + 1 < rows || j + 1 < cols {
        let mut best = f64::INFINITY;
        if i + 1 < rows && j + 1 < cols {
            best = best.min(s[at(i + 1, j + 1)]);
        }
        if i + 1 < rows {
            best = best.min(s[at(i + 1, j)]);
        }
        if j + 1 < cols {
            best = best.min(s[at(i, j + 1)]);
        }
        if i + 1 < rows && j + 1 < cols && s[at(i + 1, j + 1)] == best {
            i += 1;
            j += 1;
        } else if i + 1 < rows && s[at(i + 1, j)] == best {
            i += 1;
        } else {
            j += 1;
        }
        path.push((i, j));
    }
    Ok(DtwResult {
        cost: s[0],
        path,
    })
}

/// Temporal distortion: mean squared index offset along the warping path,
/// normalized by the squared ground-truth length.
pub fn tdi(path: &[(usize, usize)], truth_len: usize) -> f64 {
    let t2 = (truth_len * truth_len) as f64;
    path.iter()
        .map(|&(m, n)| {
            let d = m as f64 - n as f64;
            d * d
        })
        .sum::<f64>()
        / t2
}

/// Elementwise mean squared and mean absolute error.
pub fn mse_mae(yhat: &Tensor, y: &Tensor) -> Result<(f64, f64)> {
    if yhat.shape() != y.shape() {
        return Err(StatError::Contract(format!(
            "metric shapes differ: {:?} vs {:?}",
            yhat.shape(),
            y.shape()
        )));
    }
    let n = y.data().len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    for (a, b) in yhat.data().iter().zip(y.data()) {
        let d = a - b;
        se += d * d;
        ae += d.abs();
    }
    Ok((se / n, ae / n))
}

fn channel(t: &Tensor, ch: usize) -> Vec<f64> {
    let steps = t.shape()[0];
    let c = t.shape()[1];
    (0..steps).map(|i| t.data()[i * c + ch]).collect()
}

/// DTW and TDI for one forecast: per channel, then averaged.
pub fn dtw_tdi_sample(yhat: &Tensor, y: &Tensor) -> Result<(f64, f64)> {
    if yhat.rank() != 2 || y.rank() != 2 || yhat.shape() != y.shape() {
        return Err(StatError::Contract(format!(
            "dtw_tdi_sample wants matching T x C tensors, got {:?} vs {:?}",
            yhat.shape(),
            y.shape()
        )));
    }
    let c = y.shape()[1];
    let t = y.shape()[0];
    let mut cost = 0.0;
    let mut dist = 0.0;
    for ch in 0..c {
        let r = dtw(&channel(y, ch), &channel(yhat, ch))?;
        cost += r.cost;
        dist += tdi(&r.path, t);
    }
    Ok((cost / c as f64, dist / c as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricRow {
    pub mse: f64,
    pub mae: f64,
    pub dtw: f64,
    pub tdi: f64,
}

/// Metrics over a batch of forecasts (B x T x C): MSE/MAE elementwise over
/// everything, DTW/TDI per sample then averaged.
pub fn evaluate_batch(yhat: &Tensor, y: &Tensor) -> Result<MetricRow> {
    if yhat.rank() != 3 || yhat.shape() != y.shape() {
        return Err(StatError::Contract(format!(
            "evaluate_batch wants matching B x T x C tensors, got {:?} vs {:?}",
            yhat.shape(),
            y.shape()
        )));
    }
    let (mse, mae) = mse_mae(yhat, y)?;
    let b = y.shape()[0];
    let mut cost = 0.0;
    let mut dist = 0.0;
    for s in 0..b {
        let (c, d) = dtw_tdi_sample(&yhat.narrow(0, s, 1)?.reshape(&y.shape()[1..])?,
                                    &y.narrow(0, s, 1)?.reshape(&y.shape()[1..])?)?;
        cost += c;
        dist += d;
    }
    Ok(MetricRow {
        mse,
        mae,
        dtw: cost / b as f64,
        tdi: dist / b as f64,
    })
}

/// Accumulates batch metrics weighted by batch size.
#[derive(Default)]
pub struct MetricAccumulator {
    sums: MetricRow,
    samples: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, row: MetricRow, batch: usize) {
        let w = batch as f64;
        self.sums.mse += row.mse * w;
        self.sums.mae += row.mae * w;
        self.sums.dtw += row.dtw * w;
        self.sums.tdi += row.tdi * w;
        self.samples += batch;
    }

    pub fn finish(&self) -> MetricRow {
        let w = self.samples.max(1) as f64;
        MetricRow {
            mse: self.sums.mse / w,
            mae: self.sums.mae / w,
            dtw: self.sums.dtw / w,
            tdi: self.sums.tdi / w,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every monotone warping path for an a x b grid.
    fn all_paths(a: usize, b: usize) -> Vec<Vec<(usize, usize)>> {
        let mut done = Vec::new();
        let mut stack = vec![vec![(0usize, 0usize)]];
        while let Some(p) = stack.pop() {
            let &(i, j) = p.last().unwrap();
            if i == a - 1 && j == b - 1 {
                done.push(p);
                continue;
            }
            for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < a && nj < b {
                    let mut q = p.clone();
                    q.push((ni, nj));
                    stack.push(q);
                }
            }
        }
        done
    }

    fn path_cost(p: &[(usize, usize)], y: &[f64], yh: &[f64]) -> f64 {
        p.iter().map(|&(i, j)| sq(y[i], yh[j])).sum()
    }

    /// Rank of a step for the tie rule: diagonal < vertical < horizontal.
    fn step_ranks(p: &[(usize, usize)]) -> Vec<u8> {
        p.windows(2)
            .map(|w| match (w[1].0 - w[0].0, w[1].1 - w[0].1) {
                (1, 1) => 0,
                (1, 0) => 1,
                (0, 1) => 2,
                _ => unreachable!(),
            })
            .collect()
    }

    /// Oracle: minimum cost over every path, and the minimal-cost path that
    /// is lexicographically first under the step preference.
    fn oracle(y: &[f64], yh: &[f64]) -> (f64, Vec<(usize, usize)>) {
        let paths = all_paths(y.len(), yh.len());
        let best = paths
            .iter()
            .map(|p| path_cost(p, y, yh))
            .fold(f64::INFINITY, f64::min);
        let chosen = paths
            .into_iter()
            .filter(|p| path_cost(p, y, yh) == best)
            .min_by_key(|p| step_ranks(p))
            .unwrap();
        (best, chosen)
    }

    fn seqs(len: usize, grid: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|s| {
                    grid.iter().map(move |&v| {
                        let mut t = s.clone();
                        t.push(v);
                        t
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn identical_sequences_cost_zero_on_the_diagonal() {
        let r = dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(tdi(&r.path, 3), 0.0);
    }

    #[test]
    fn worked_example_cost_path_and_tdi() {
        let r = dtw(&[0.0, 1.0, 2.0], &[0.0, 2.0]).unwrap();
        assert_eq!(r.cost, 1.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 1)]);
        assert!((tdi(&r.path, 3) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(dtw(&[], &[1.0]).is_err());
        assert!(dtw(&[1.0], &[]).is_err());
    }

    #[test]
    fn cost_is_symmetric_in_its_arguments() {
        let a = [0.0, 1.5, 0.5, 2.0, 1.0];
        let b = [1.0, 0.0, 2.0];
        let r1 = dtw(&a, &b).unwrap();
        let r2 = dtw(&b, &a).unwrap();
        assert!((r1.cost - r2.cost).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_small_grids_match_the_oracle() {
        // Lengths to 4 over {0,1,2}, lengths to 6 over {0,1}: checked
        // exhaustively against full path enumeration, including the tie rule.
        let mut cases = 0usize;
        let mut run = |grid: &[f64], max_len: usize| {
            let mut pool = Vec::new();
            for l in 1..=max_len {
                pool.extend(seqs(l, grid));
            }
            for y in &pool {
                for yh in &pool {
                    let got = dtw(y, yh).unwrap();
                    let (min_cost, best_path) = oracle(y, yh);
                    assert!(
                        (got.cost - min_cost).abs() < 1e-12,
                        "cost mismatch for {y:?} vs {yh:?}"
                    );
                    assert_eq!(got.path, best_path, "path mismatch for {y:?} vs {yh:?}");
                    cases += 1;
                }
            }
        };
        run(&[0.0, 1.0, 2.0], 4);
        run(&[0.0, 1.0], 6);
        assert!(cases > 25_000, "expected broad coverage, got {cases}");
    }

    #[test]
    fn mse_mae_match_a_plain_loop() {
        let yh = Tensor::new(&[2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let y = Tensor::new(&[2, 3], vec![0.0, 1.0, 0.5, 2.5, -0.5, 1.0]).unwrap();
        let (mse, mae) = mse_mae(&yh, &y).unwrap();
        let mut se = 0.0;
        let mut ae = 0.0;
        for k in 0..6 {
            let d = yh.data()[k] - y.data()[k];
            se += d * d;
            ae += d.abs();
        }
        assert!((mse - se / 6.0).abs() < 1e-15);
        assert!((mae - ae / 6.0).abs() < 1e-15);
        assert!(mse_mae(&yh, &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn perfect_forecast_scores_zero_everywhere() {
        let y = Tensor::new(&[2, 4, 2], (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let row = evaluate_batch(&y, &y).unwrap();
        assert_eq!(row, MetricRow { mse: 0.0, mae: 0.0, dtw: 0.0, tdi: 0.0 });
    }

    #[test]
    fn batch_metrics_match_a_per_sample_loop() {
        let vals: Vec<f64> = (0..24).map(|i| ((i * 7 % 11) as f64) * 0.3 - 1.0).collect();
        let tval: Vec<f64> = (0..24).map(|i| ((i * 5 % 13) as f64) * 0.2 - 1.0).collect();
        let yh = Tensor::new(&[3, 4, 2], vals).unwrap();
        let y = Tensor::new(&[3, 4, 2], tval).unwrap();
        let row = evaluate_batch(&yh, &y).unwrap();

        let mut cost = 0.0;
        let mut dist = 0.0;
        for s in 0..3 {
            let ys = y.narrow(0, s, 1).unwrap().reshape(&[4, 2]).unwrap();
            let hs = yh.narrow(0, s, 1).unwrap().reshape(&[4, 2]).unwrap();
            for ch in 0..2 {
                let r = dtw(&channel(&ys, ch), &channel(&hs, ch)).unwrap();
                cost += r.cost / 2.0;
                dist += tdi(&r.path, 4) / 2.0;
            }
        }
        assert!((row.dtw - cost / 3.0).abs() < 1e-12);
        assert!((row.tdi - dist / 3.0).abs() < 1e-12);
    }

    #[test]
    fn accumulator_weights_by_batch_size() {
        let mut acc = MetricAccumulator::default();
        acc.add(MetricRow { mse: 1.0, mae: 1.0, dtw: 1.0, tdi: 1.0 }, 3);
        acc.add(MetricRow { mse: 5.0, mae: 5.0, dtw: 5.0, tdi: 5.0 }, 1);
        let row = acc.finish();
        assert!((row.mse - 2.0).abs() < 1e-12);
        assert!((row.dtw - 2.0).abs() < 1e-12);
    }
}
