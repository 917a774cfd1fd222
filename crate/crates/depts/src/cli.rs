//! Command-line interface.
//!
//! Pipelines communicate only through files — CSV datasets, coefficient
//! documents, checkpoints, manifests — with no hidden state, so every
//! command is idempotent given identical inputs and seeds. Outputs are
//! written atomically. Exit codes: 0 success, 1 usage, 2 data error, 3
//! numerical failure.

use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{csv_bytes, load_csv, split, Series};
use crate::error::{Error, Result};
use crate::eval::{
    ensemble_rows, evaluate_rows, forecast_csv_bytes, model_forecast_rows, parse_forecast_csv,
    rolling_anchors, verify_rows_against, ForecastRow,
};
use crate::fsio::{read_bytes, write_atomic};
use crate::manifest::{load_manifest, ExperimentManifest};
use crate::network::network_forward;
use crate::periodicity::{
    coefficients_doc_bytes, init_periods, load_coefficients_doc, CoefficientsDoc, PeriodMask,
    PeriodicCoefficients, SeriesPeriodicity, COEFFICIENTS_VERSION,
};
use crate::synth::{gen_dataset, Compose, SynthSpec};
use crate::train::{train, TrainedModel, TrainingConfig};

#[derive(Parser)]
#[command(name = "depts", version, about = "Forecasting for periodic time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark series as long-format CSV.
    Synth(SynthArgs),
    /// Detect periods in a dataset and write a coefficients document.
    InitPeriods(InitPeriodsArgs),
    /// Train every ensemble member of a manifest.
    Train(TrainArgs),
    /// Forecast the test region with a manifest's trained ensemble.
    Forecast(ForecastArgs),
    /// Score a forecast file against its dataset.
    Eval(EvalArgs),
    /// Dump one member's forecasts with per-layer decomposition columns.
    Decompose(DecomposeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Composition kind: linear, quadratic, or cubic.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Series length; split 80% / 2% / 18%.
    #[arg(long, default_value_t = 5000)]
    length: usize,
    /// Local noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma_l: f64,
    /// Periodic noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma_p: f64,
}

#[derive(Args)]
struct InitPeriodsArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Number of spectral candidates to consider.
    #[arg(long, default_value_t = 128)]
    k: usize,
    /// Maximum number of atoms to select.
    #[arg(long, default_value_t = 8)]
    j: usize,
    /// Output coefficients document path.
    #[arg(long)]
    out: PathBuf,
    /// End of the training region; defaults to 80% of the data span.
    #[arg(long)]
    train_end: Option<i64>,
    /// End of the validation region; defaults to 2% of the span past
    /// train_end.
    #[arg(long)]
    val_end: Option<i64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Replaces the manifest's [training] table with this TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the training seed (explicit member seeds still win).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ForecastArgs {
    /// Experiment manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV path; defaults to forecast.csv under the manifest out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Forecast CSV to score; defaults to forecast.csv under out_dir.
    #[arg(long)]
    forecast: Option<PathBuf>,
    /// Report path; defaults to report.json under out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Experiment manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Ensemble member index to decompose.
    #[arg(long, default_value_t = 0)]
    member: usize,
    /// Output CSV path; defaults to decompose-member-N.csv under out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses arguments, runs the command, and maps failures to exit codes.
pub fn entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("depts: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::InitPeriods(args) => cmd_init_periods(args),
        Command::Train(args) => cmd_train(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Decompose(args) => cmd_decompose(args),
    }
}

fn parse_kind(s: &str) -> Result<Compose> {
    match s {
        "linear" => Ok(Compose::Linear),
        "quadratic" => Ok(Compose::Quadratic),
        "cubic" => Ok(Compose::Cubic),
        other => Err(Error::Usage(format!(
            "unknown composition kind '{other}' (expected linear, quadratic, or cubic)"
        ))),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        compose: parse_kind(&args.kind)?,
        seed: args.seed,
        length: args.length,
        sigma_l: args.sigma_l,
        sigma_p: args.sigma_p,
        ..Default::default()
    };
    let (series, split_spec) = gen_dataset(&spec)?;
    write_atomic(&args.out, &csv_bytes(std::slice::from_ref(&series)))?;
    println!(
        "wrote {} points of '{}' (train/val/test ends {} / {} / {}) to {}",
        series.len(),
        series.id,
        split_spec.train_end,
        split_spec.val_end,
        split_spec.test_end,
        args.out.display()
    );
    Ok(())
}

fn cmd_init_periods(args: InitPeriodsArgs) -> Result<()> {
    let data = load_csv(&args.data)?;
    let t0 = data.iter().map(|s| s.t0).min().expect("load_csv yields at least one series");
    let end = data.iter().map(|s| s.end()).max().expect("load_csv yields at least one series");
    let span = end - t0;
    let train_end = args.train_end.unwrap_or(t0 + span * 4 / 5);
    let val_end = args.val_end.unwrap_or(train_end + (span / 50).max(1));
    let spec = crate::data::SplitSpec { train_end, val_end, test_end: end };

    let started = Instant::now();
    let mut series = Vec::with_capacity(data.len());
    for s in &data {
        let (train_region, val, _) = split(s, &spec)?;
        let val = val.ok_or_else(|| {
            Error::Data(format!("series '{}' has no validation region for period selection", s.id))
        })?;
        let (coeffs, mask, report) = init_periods(&train_region, &val, args.k, args.j)?;
        println!(
            "series '{}': {} of {} candidate atoms selected in {:.2}s",
            s.id,
            mask.enabled_count(),
            coeffs.atoms.len(),
            report.wall_time_secs
        );
        series.push(SeriesPeriodicity::from_parts(&s.id, &coeffs, &mask));
    }
    let doc = CoefficientsDoc { version: COEFFICIENTS_VERSION, series };
    write_atomic(&args.out, &coefficients_doc_bytes(&doc)?)?;
    println!(
        "wrote coefficients for {} series to {} in {:.2}s",
        doc.series.len(),
        args.out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Per-series periodicity in dataset order: loaded from the manifest's
/// coefficients document, or computed and written under out_dir.
fn phi_for(
    manifest: &ExperimentManifest,
    data: &[Series],
) -> Result<Vec<(PeriodicCoefficients, PeriodMask)>> {
    if let Some(path) = &manifest.coefficients {
        let doc = load_coefficients_doc(path)?;
        data.iter()
            .map(|s| {
                doc.series
                    .iter()
                    .find(|p| p.series_id == s.id)
                    .map(SeriesPeriodicity::into_parts)
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "coefficients document {} has no entry for series '{}'",
                            path.display(),
                            s.id
                        ))
                    })
            })
            .collect()
    } else {
        let mut pairs = Vec::with_capacity(data.len());
        let mut records = Vec::with_capacity(data.len());
        for s in data {
            let (train_region, val, _) = split(s, &manifest.split)?;
            let val = val.ok_or_else(|| {
                Error::Data(format!(
                    "series '{}' has no validation region for period selection",
                    s.id
                ))
            })?;
            let (coeffs, mask, _) =
                init_periods(&train_region, &val, manifest.init.k, manifest.init.j)?;
            records.push(SeriesPeriodicity::from_parts(&s.id, &coeffs, &mask));
            pairs.push((coeffs, mask));
        }
        let doc = CoefficientsDoc { version: COEFFICIENTS_VERSION, series: records };
        let path = manifest.derived_coefficients_path();
        write_atomic(&path, &coefficients_doc_bytes(&doc)?)?;
        println!("wrote derived coefficients to {}", path.display());
        Ok(pairs)
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut manifest = load_manifest(&args.manifest)?;
    if let Some(path) = &args.config {
        let text = String::from_utf8(read_bytes(path)?)
            .map_err(|e| Error::Data(format!("training config is not valid utf-8: {e}")))?;
        let config: TrainingConfig = toml::from_str(&text)
            .map_err(|e| Error::Data(format!("malformed training config: {e}")))?;
        config.validate()?;
        manifest.training = config;
    }
    if let Some(seed) = args.seed {
        manifest.training.seed = seed;
    }

    let data = load_csv(&manifest.dataset)?;
    let phi = phi_for(&manifest, &data)?;
    let members = manifest.effective_members();

    let results: Result<Vec<_>> = members
        .par_iter()
        .enumerate()
        .map(|(i, member)| {
            let config = manifest.member_config(member);
            let (model, _) = train(&data, &manifest.split, &phi, &config)?;
            let path = manifest.checkpoint_path(i);
            save_checkpoint(&path, &model)?;
            Ok((i, member.lookback_multiplier, member.seed, model.final_loss, path))
        })
        .collect();
    for (i, multiplier, seed, final_loss, path) in results? {
        let loss = final_loss.map_or_else(|| "-".into(), |l| format!("{l:.6}"));
        println!(
            "member {i} (lookback {multiplier}x, seed {seed}): final loss {loss} -> {}",
            path.display()
        );
    }
    Ok(())
}

fn load_members(manifest: &ExperimentManifest) -> Result<Vec<TrainedModel>> {
    (0..manifest.effective_members().len())
        .map(|i| load_checkpoint(&manifest.checkpoint_path(i)))
        .collect()
}

fn cmd_forecast(args: ForecastArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let data = load_csv(&manifest.dataset)?;
    let models = load_members(&manifest)?;
    let (start, end) = (manifest.split.val_end, manifest.split.test_end);
    let member_rows: Result<Vec<Vec<ForecastRow>>> =
        models.par_iter().map(|model| model_forecast_rows(model, &data, start, end)).collect();
    let rows = ensemble_rows(&member_rows?)?;
    let out = args.out.unwrap_or_else(|| manifest.out_dir.join("forecast.csv"));
    write_atomic(&out, &forecast_csv_bytes(&rows)?)?;
    println!(
        "wrote {} forecast rows over [{start}, {end}) from {} member(s) to {}",
        rows.len(),
        models.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let forecast_path = args.forecast.unwrap_or_else(|| manifest.out_dir.join("forecast.csv"));
    let rows = parse_forecast_csv(read_bytes(&forecast_path)?.as_slice())?;
    let data = load_csv(&manifest.dataset)?;
    verify_rows_against(&rows, &data)?;
    let report =
        evaluate_rows(&rows, manifest.training.horizon, Some(manifest.effective_members().len()))?;
    let out = args.out.unwrap_or_else(|| manifest.out_dir.join("report.json"));
    let mut bytes = serde_json::to_vec_pretty(&report)
        .map_err(|e| Error::Data(format!("cannot encode report: {e}")))?;
    bytes.push(b'\n');
    write_atomic(&out, &bytes)?;
    print!("{}", report.render_table());
    println!("wrote report to {}", out.display());
    Ok(())
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let members = manifest.effective_members();
    if args.member >= members.len() {
        return Err(Error::Usage(format!(
            "member {} out of range: the manifest defines {} member(s)",
            args.member,
            members.len()
        )));
    }
    let model = load_checkpoint(&manifest.checkpoint_path(args.member))?;
    let data = load_csv(&manifest.dataset)?;
    let (start, end) = (manifest.split.val_end, manifest.split.test_end);
    let (l, h) = (model.params.lookback, model.params.horizon);
    let flags = model.config.variant.flags();

    let mut header: Vec<String> =
        ["series_id", "t", "actual", "forecast", "local_part", "periodic_part", "z"]
            .map(String::from)
            .to_vec();
    for i in 0..model.params.layers.len() {
        header.push(format!("layer{i}_local"));
        header.push(format!("layer{i}_periodic"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let record_err = |e: csv::Error| Error::Data(format!("cannot encode decomposition: {e}"));
    w.write_record(&header).map_err(record_err)?;

    let mut rows = 0usize;
    for series in &data {
        let index =
            model.series_ids.iter().position(|id| *id == series.id).ok_or_else(|| {
                Error::Data(format!("series '{}' is not in the model", series.id))
            })?;
        let (coeffs, mask) = model.periodicity[index].into_parts();
        for (anchor, emit) in rolling_anchors(start, end, h) {
            let lookback = series.window(anchor - l as i64, anchor)?;
            let times: Vec<i64> = (anchor - l as i64..anchor + h as i64).collect();
            let z = coeffs.evaluate(&mask, &times)?;
            let decomp = network_forward(&model.params, index, lookback, &z, &flags)?;
            let actual = series.window(anchor, anchor + emit as i64)?;
            for j in 0..emit {
                let mut record = vec![
                    series.id.clone(),
                    (anchor + j as i64).to_string(),
                    fmt(actual[j]),
                    fmt(decomp.forecast[j]),
                    fmt(decomp.local_part[j]),
                    fmt(decomp.periodic_part[j]),
                    fmt(z[l + j]),
                ];
                for layer in &decomp.layers {
                    record.push(fmt(layer.u_fore[j]));
                    record.push(fmt(layer.v_fore[j]));
                }
                w.write_record(&record).map_err(record_err)?;
                rows += 1;
            }
        }
    }
    let bytes =
        w.into_inner().map_err(|e| Error::Data(format!("cannot encode decomposition: {e}")))?;
    let out = args
        .out
        .unwrap_or_else(|| manifest.out_dir.join(format!("decompose-member-{}.csv", args.member)));
    write_atomic(&out, &bytes)?;
    println!("wrote {rows} decomposition rows to {}", out.display());
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parsing_accepts_the_three_compositions() {
        assert_eq!(parse_kind("linear").unwrap(), Compose::Linear);
        assert_eq!(parse_kind("quadratic").unwrap(), Compose::Quadratic);
        assert_eq!(parse_kind("cubic").unwrap(), Compose::Cubic);
        assert_eq!(parse_kind("exp").unwrap_err().exit_code(), 1);
    }

    #[test]
    fn unknown_arguments_exit_with_usage_code() {
        assert_eq!(entry(["depts", "frobnicate"]), 1);
        assert_eq!(entry(["depts", "synth", "--bogus"]), 1);
        assert_eq!(entry(["depts"]), 1);
    }

    #[test]
    fn help_and_version_exit_cleanly() {
        assert_eq!(entry(["depts", "--help"]), 0);
        assert_eq!(entry(["depts", "--version"]), 0);
        assert_eq!(entry(["depts", "synth", "--help"]), 0);
    }
}
