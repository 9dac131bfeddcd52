//! Window statistics and the one-line textual prompt rendered from them.

use crate::error::{Result, StatError};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct PromptStats {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub trend_up: bool,
    pub momentum_up: bool,
    pub period: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct PromptDoc {
    pub text: String,
    pub alpha: f64,
    pub stats: PromptStats,
}

fn channel_std(window: &Tensor, c: usize) -> f64 {
    let (l, cc) = (window.shape()[0], window.shape()[1]);
    let n = l as f64;
    let mut mean = 0.0;
    for t in 0..l {
        mean += window.data()[t * cc + c];
    }
    mean /= n;
    let mut var = 0.0;
    for t in 0..l {
        let d = window.data()[t * cc + c] - mean;
        var += d * d;
    }
    (var / n).sqrt()
}

/// Volatility descriptor: mean over channels of the within-window standard
/// deviation. The window is expected in train-statistic-normalized units, so
/// values near 1 mean "as volatile as the training data overall".
pub fn volatility_descriptor(window: &Tensor) -> Result<f64> {
    if window.rank() != 2 || window.shape()[0] < 2 {
        return Err(StatError::Input(format!(
            "volatility needs an LxC window with L >= 2, got {:?}",
            window.shape()
        )));
    }
    let c = window.shape()[1];
    let sum: f64 = (0..c).map(|ch| channel_std(window, ch)).sum();
    Ok(sum / c as f64)
}

pub fn alpha_label(alpha: f64) -> &'static str {
    if alpha > 1.2 {
        "high"
    } else if alpha < 0.8 {
        "low"
    } else {
        "moderate"
    }
}

fn channel_mean_series(window: &Tensor) -> Vec<f64> {
    let (l, c) = (window.shape()[0], window.shape()[1]);
    (0..l)
        .map(|t| window.data()[t * c..(t + 1) * c].iter().sum::<f64>() / c as f64)
        .collect()
}

fn ols_slope(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let tbar = (n - 1.0) / 2.0;
    let sbar = s.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, &v) in s.iter().enumerate() {
        let dt = t as f64 - tbar;
        num += dt * (v - sbar);
        den += dt * dt;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Quarter-mean difference: mean of the last L/4 points minus the first L/4.
fn momentum(s: &[f64]) -> f64 {
    let q = (s.len() / 4).max(1);
    let head: f64 = s[..q].iter().sum::<f64>() / q as f64;
    let tail: f64 = s[s.len() - q..].iter().sum::<f64>() / q as f64;
    tail - head
}

/// Autocorrelation argmax over lags 2..=L/2; ties resolve to the lowest lag.
/// Each lag's sum is normalized by its overlap length so long lags are not
/// penalized for having fewer product terms.
fn dominant_period(s: &[f64]) -> usize {
    let l = s.len();
    let mean = s.iter().sum::<f64>() / l as f64;
    let denom: f64 = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / l as f64;
    let mut best_lag = 2;
    let mut best = f64::NEG_INFINITY;
    for lag in 2..=l / 2 {
        let overlap = (l - lag) as f64;
        let r = if denom == 0.0 {
            0.0
        } else {
            (0..l - lag)
                .map(|t| (s[t] - mean) * (s[t + lag] - mean))
                .sum::<f64>()
                / overlap
                / denom
        };
        if r > best + 1e-12 {
            best = r;
            best_lag = lag;
        }
    }
    best_lag
}

pub fn window_stats(window: &Tensor) -> Result<PromptStats> {
    let alpha = volatility_descriptor(window)?;
    let mut sorted: Vec<f64> = window.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let s = channel_mean_series(window);
    Ok(PromptStats {
        min: sorted[0],
        max: sorted[n - 1],
        median,
        trend_up: ols_slope(&s) >= 0.0,
        momentum_up: momentum(&s) >= 0.0,
        period: dominant_period(&s),
        alpha,
    })
}

fn direction(up: bool) -> &'static str {
    if up {
        "upward"
    } else {
        "downward"
    }
}

/// Render the one-line prompt for a window. `description` introduces the
/// dataset; `horizon` is the forecast length T.
pub fn render_prompt(window: &Tensor, description: &str, horizon: usize) -> Result<PromptDoc> {
    let stats = window_stats(window)?;
    let lookback = window.shape()[0];
    let text = format!(
        "[Task Specification] Dataset: {} Task: Forecast the next {} steps using the past {} steps. \
[Dynamic Statistics] Input statistics: min value = {:.3}, max value = {:.3}, median value = {:.3}, \
overall trend is {}, recent momentum is {}, periodicity is approximately {} steps, \
volatility descriptor alpha = {:.3} ({}).",
        description,
        horizon,
        lookback,
        stats.min,
        stats.max,
        stats.median,
        direction(stats.trend_up),
        direction(stats.momentum_up),
        stats.period,
        stats.alpha,
        alpha_label(stats.alpha),
    );
    Ok(PromptDoc {
        text,
        alpha: stats.alpha,
        stats,
    })
}
