use clap::{Args, Parser, Subcommand};
use stat_core::checkpoint::Checkpoint;
use stat_core::config::RunConfig;
use stat_core::data::data_dir;
use stat_core::report;
use stat_core::train::{
    evaluate_checkpoint, run_ablation, run_zero_shot, train, Experiment, TABLE6_HORIZONS,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "stat", version, about = "Tri-modal time-series forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint and reports.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Evaluate a trained checkpoint on a different dataset without updates.
    ZeroShot(ZeroShotArgs),
    /// Run a predefined experiment suite.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated component removals: no_trl,no_srl,no_vat,no_adf.
    #[arg(long)]
    ablation: Option<String>,
    /// Train on only this leading fraction of the training windows.
    #[arg(long, value_name = "FRACTION")]
    few_shot: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the checkpoint and reports.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: String,
}

#[derive(Args)]
struct ZeroShotArgs {
    /// Checkpoint trained on the source dataset.
    #[arg(long)]
    source: PathBuf,
    /// Target dataset name.
    #[arg(long)]
    target: String,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite name; `table6` runs the ablation grid over all horizons.
    #[arg(long)]
    suite: String,
    /// Base configuration; defaults to the built-in synthetic setup.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_train(args: TrainArgs) -> stat_core::Result<()> {
    let mut run = RunConfig::from_file(&args.config)?;
    if let Some(spec) = &args.ablation {
        run.ablation = stat_core::model::Ablation::parse(spec)?;
    }
    if let Some(f) = args.few_shot {
        run.few_shot = f;
    }
    if let Some(s) = args.seed {
        run.seed = s;
    }
    run.validate()?;

    let dir = data_dir();
    let out = train(&run, &dir)?;
    let tag = format!("{}_{}_{}", run.dataset, run.ablation.label(), run.seed);
    let run_dir = args.out.join(tag);
    std::fs::create_dir_all(&run_dir).map_err(|e| stat_core::StatError::io(&run_dir, e))?;

    out.ckpt.save(&run_dir.join("checkpoint.json"))?;
    std::fs::write(run_dir.join("training_log.csv"), report::training_log_csv(&out.log))
        .map_err(|e| stat_core::StatError::io(run_dir.join("training_log.csv"), e))?;
    report::write_manifest(
        &run_dir.join("manifest.json"),
        &run,
        out.best_epoch,
        out.diverged,
    )?;

    let model = out.ckpt.restore()?;
    let exp = Experiment::prepare(&run, &dir)?;
    let test = stat_core::train::evaluate_split(
        &model,
        &out.ckpt.provider,
        &out.ckpt.codebooks,
        &exp.ds.description,
        &exp.ds.test,
        run.batch_size,
    )?;
    report::write_metrics_csv(
        &run_dir.join("metrics.csv"),
        &[(run.dataset.clone(), run.horizon, test)],
    )?;
    let dump = report::dump_predictions(
        &model,
        &out.ckpt.provider,
        &out.ckpt.codebooks,
        &exp.ds.description,
        &exp.ds.test,
        run.batch_size,
        Some(8),
    )?;
    report::write_predictions_csv(&run_dir.join("predictions.csv"), &dump)?;
    report::write_plot_svg(&run_dir.join("forecast.svg"), &dump)?;

    if out.diverged {
        eprintln!("warning: training diverged; checkpoint holds the last finite state");
    }
    println!(
        "trained {} ({}) seed {} -> {}",
        run.dataset,
        run.ablation.label(),
        run.seed,
        run_dir.display()
    );
    println!(
        "test mse {:.6} mae {:.6} dtw {:.6} tdi {:.6}",
        test.mse, test.mae, test.dtw, test.tdi
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> stat_core::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let row = evaluate_checkpoint(&ckpt, &args.dataset, &data_dir())?;
    println!("dataset,horizon,mse,mae,dtw,tdi");
    println!(
        "{},{},{},{},{},{}",
        args.dataset, ckpt.run.horizon, row.mse, row.mae, row.dtw, row.tdi
    );
    Ok(())
}

fn cmd_zero_shot(args: ZeroShotArgs) -> stat_core::Result<()> {
    let ckpt = Checkpoint::load(&args.source)?;
    let zs = run_zero_shot(&ckpt, &args.target, &data_dir())?;
    println!("source,target,mse,mae,dtw,tdi");
    println!(
        "{},{},{},{},{},{}",
        zs.source, zs.target, zs.row.mse, zs.row.mae, zs.row.dtw, zs.row.tdi
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> stat_core::Result<()> {
    if args.suite != "table6" {
        return Err(stat_core::StatError::Config(format!(
            "unknown suite '{}' (available: table6)",
            args.suite
        )));
    }
    let run = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let report = run_ablation(&run, &data_dir(), &TABLE6_HORIZONS)?;
    print!("{}", report.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::ZeroShot(a) => cmd_zero_shot(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
