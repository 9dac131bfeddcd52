//! Run artifacts: metrics CSV, run manifest, per-window prediction dumps,
//! and a small SVG plot of forecasts with their routing weights.

use crate::config::RunConfig;
use crate::data::Windows;
use crate::embed::Provider;
use crate::error::{Result, StatError};
use crate::metrics::MetricRow;
use crate::model::{Featurizer, StatModel, SCALES};
use crate::nn::Graph;
use crate::symbolic::Codebook;
use std::fmt::Write as _;
use std::path::Path;

pub fn metrics_csv(rows: &[(String, usize, MetricRow)]) -> String {
    let mut out = String::from("dataset,horizon,mse,mae,dtw,tdi\n");
    for (name, horizon, m) in rows {
        let _ = writeln!(
            out,
            "{name},{horizon},{},{},{},{}",
            m.mse, m.mae, m.dtw, m.tdi
        );
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[(String, usize, MetricRow)]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| StatError::io(path, e))
}

pub fn manifest_json(
    run: &RunConfig,
    best_epoch: Option<usize>,
    diverged: bool,
) -> String {
    let v = serde_json::json!({
        "seed": run.seed,
        "config_hash": format!("{:016x}", run.hash()),
        "dataset": run.dataset,
        "ablation": run.ablation.label(),
        "horizon": run.horizon,
        "best_epoch": best_epoch,
        "diverged": diverged,
    });
    serde_json::to_string_pretty(&v).expect("manifest is plain data")
}

pub fn write_manifest(
    path: &Path,
    run: &RunConfig,
    best_epoch: Option<usize>,
    diverged: bool,
) -> Result<()> {
    std::fs::write(path, manifest_json(run, best_epoch, diverged))
        .map_err(|e| StatError::io(path, e))
}

pub fn training_log_csv(log: &[crate::train::EpochLog]) -> String {
    let mut out = String::from("epoch,lr,train_total,val_total,val_mse\n");
    for e in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch, e.lr, e.train_total, e.val_total, e.val_mse
        );
    }
    out
}

/// Forecasts plus routing weights for the first `max_windows` windows of a
/// split, one row per (window, step, channel).
pub struct PredictionDump {
    pub csv: String,
    /// truth[t], forecast[t] for channel 0 of the first window.
    pub truth_trace: Vec<f64>,
    pub forecast_trace: Vec<f64>,
    /// weight_traces[expert][t] for channel 0 of the first window.
    pub weight_traces: Vec<Vec<f64>>,
    pub expert_labels: Vec<&'static str>,
}

pub fn dump_predictions(
    model: &StatModel,
    provider: &Provider,
    codebooks: &[Vec<Codebook>; SCALES],
    description: &str,
    split: &Windows,
    batch_size: usize,
    max_windows: Option<usize>,
) -> Result<PredictionDump> {
    let take = max_windows.unwrap_or(split.len()).min(split.len());
    let c = split.channels();
    let t = split.horizon;
    let labels = model.expert_labels();
    let f = Featurizer {
        provider,
        codebooks,
        description: description.to_string(),
        horizon: t,
    };

    let mut csv = String::from("origin,step,channel,y,yhat,w_temp,w_txt,w_sym\n");
    let mut truth_trace = Vec::new();
    let mut forecast_trace = Vec::new();
    let mut weight_traces = vec![Vec::new(); labels.len()];

    let all: Vec<usize> = (0..take).collect();
    for idx in all.chunks(batch_size) {
        let (x, y) = split.gather(idx);
        let feats = f.features(&x, model.textual.is_some(), model.symbolic.is_some())?;
        let mut g = Graph::new();
        let out = model.forward(&mut g, &x, &feats)?;
        let pred = g.tape.value(out.prediction).clone();
        let w = g.tape.value(out.weights).clone();
        let e = labels.len();
        for (bi, &wi) in idx.iter().enumerate() {
            let origin = split.origins[wi];
            for step in 0..t {
                for ch in 0..c {
                    let yv = y.data()[(bi * t + step) * c + ch];
                    let pv = pred.data()[(bi * t + step) * c + ch];
                    let wrow = &w.data()[((bi * t + step) * c + ch) * e..((bi * t + step) * c + ch + 1) * e];
                    let mut by_label = [0.0f64; 3];
                    for (l, &wv) in labels.iter().zip(wrow) {
                        match *l {
                            "temporal" => by_label[0] = wv,
                            "textual" => by_label[1] = wv,
                            "symbolic" => by_label[2] = wv,
                            _ => unreachable!(),
                        }
                    }
                    let _ = writeln!(
                        csv,
                        "{origin},{step},{ch},{yv},{pv},{},{},{}",
                        by_label[0], by_label[1], by_label[2]
                    );
                    if wi == 0 && ch == 0 {
                        truth_trace.push(yv);
                        forecast_trace.push(pv);
                        for (ei, trace) in weight_traces.iter_mut().enumerate() {
                            trace.push(wrow[ei]);
                        }
                    }
                }
            }
        }
    }
    Ok(PredictionDump {
        csv,
        truth_trace,
        forecast_trace,
        weight_traces,
        expert_labels: labels,
    })
}

pub fn write_predictions_csv(path: &Path, dump: &PredictionDump) -> Result<()> {
    std::fs::write(path, &dump.csv).map_err(|e| StatError::io(path, e))
}

fn polyline(points: &[(f64, f64)], color: &str, width: f64) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>",
        coords.join(" ")
    )
}

fn scale_to_panel(series: &[f64], lo: f64, hi: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<(f64, f64)> {
    let n = series.len().max(2) as f64;
    let span = if (hi - lo).abs() < 1e-12 { 1.0 } else { hi - lo };
    series
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = x0 + (x1 - x0) * i as f64 / (n - 1.0);
            let y = y1 - (y1 - y0) * (v - lo) / span;
            (x, y)
        })
        .collect()
}

/// Two stacked panels: the forecast against the truth, and the per-expert
/// routing weights across the horizon.
pub fn plot_svg(dump: &PredictionDump) -> String {
    const W: f64 = 820.0;
    const H: f64 = 460.0;
    let lo = dump
        .truth_trace
        .iter()
        .chain(&dump.forecast_trace)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = dump
        .truth_trace
        .iter()
        .chain(&dump.forecast_trace)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut body = String::new();
    body.push_str(&polyline(
        &scale_to_panel(&dump.truth_trace, lo, hi, 40.0, W - 20.0, 20.0, 220.0),
        "#1f6feb",
        1.5,
    ));
    body.push_str(&polyline(
        &scale_to_panel(&dump.forecast_trace, lo, hi, 40.0, W - 20.0, 20.0, 220.0),
        "#d29922",
        1.5,
    ));
    let palette = ["#2da44e", "#cf222e", "#8250df"];
    for (i, trace) in dump.weight_traces.iter().enumerate() {
        body.push_str(&polyline(
            &scale_to_panel(trace, 0.0, 1.0, 40.0, W - 20.0, 260.0, H - 20.0),
            palette[i % palette.len()],
            1.2,
        ));
        body.push_str(&format!(
            "<text x=\"{}\" y=\"252\" font-size=\"11\" fill=\"{}\">{}</text>",
            45.0 + 90.0 * i as f64,
            palette[i % palette.len()],
            dump.expert_labels[i]
        ));
    }
    body.push_str("<text x=\"45\" y=\"16\" font-size=\"11\">forecast (gold) vs truth (blue), channel 0</text>");
    body.push_str(&format!(
        "<rect x=\"40\" y=\"260\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\" stroke-width=\"0.5\"/>",
        W - 60.0,
        H - 280.0
    ));
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">{body}</svg>\n"
    )
}

pub fn write_plot_svg(path: &Path, dump: &PredictionDump) -> Result<()> {
    std::fs::write(path, plot_svg(dump)).map_err(|e| StatError::io(path, e))
}
