//! Argument definitions and dispatch for the `twocultures` binary.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::artifacts::{ArtifactWriter, Cell, RunInfo};
use crate::data::{load_csv, parse_columns, OutputDefault};
use crate::experiments::{run_experiment, Experiment, ExperimentSpec, MartheOptions};
use crate::modeling::{cv_table, diagnose, fit_model, write_predictions, FitOptions, ModelFile, ModelKind};

#[derive(Debug, Parser)]
#[command(name = "twocultures", version, about = "Dimension reduction plus probabilistic heads: experiments and model tooling")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = "output")]
    pub output_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a CSV file and save it as JSON.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Cross-validate the component count of a model kind.
    Cv(CvArgs),
    /// Run a registered experiment.
    Run(RunArgs),
    /// Shrinkage factors and a single-index direction for a univariate response.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct Columns {
    /// Input columns, comma-separated (default: every non-output column).
    #[arg(long)]
    pub inputs: Option<String>,
    /// Output columns, comma-separated.
    #[arg(long)]
    pub outputs: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[command(flatten)]
    pub columns: Columns,
    /// PLS components (or output basis size for pca-gp).
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    /// Bottleneck width for dl-gp.
    #[arg(long, default_value_t = 2)]
    pub reduced_dim: usize,
    /// Training epochs for network-based kinds.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.json")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Saved model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub columns: Columns,
    #[arg(long, default_value = "predictions.csv")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "pls")]
    pub model: ModelKind,
    #[command(flatten)]
    pub columns: Columns,
    #[arg(long, default_value_t = 10)]
    pub max_components: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Data file (required by marthe).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Seed of the train/test split (default: --seed).
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Fit on the log of a positive target.
    #[arg(long)]
    pub log_target: bool,
    /// Target column for marthe.
    #[arg(long)]
    pub target: Option<String>,
    /// Input columns for marthe, comma-separated.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "set", value_parser = parse_override)]
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub columns: Columns,
    /// Ridge penalty on the covariance scale.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2)]
    pub pcr: usize,
    #[arg(long, default_value_t = 2)]
    pub pls: usize,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Runs one parsed command; the returned text goes to stdout.
pub fn execute(cli: Cli) -> Result<String> {
    let seed = cli.seed;
    let dir = cli.output_dir;
    match cli.command {
        Command::Fit(a) => {
            let data = load_csv(&a.data, &parse_columns(a.columns.inputs.as_deref()), &parse_columns(a.columns.outputs.as_deref()), OutputDefault::LastColumn)?;
            let opts = FitOptions {
                components: a.components,
                reduced_dim: a.reduced_dim,
                epochs: a.epochs,
                ..FitOptions::new(a.model, seed)
            };
            let fitted = fit_model(&data.x, &data.y, &opts).with_context(|| format!("fitting {}", a.model.name()))?;
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(&a.out);
            ModelFile::new(a.model, &fitted, &data).save(&path, &RunInfo::new("fit", seed))?;
            Ok(format!("fitted {} on {}\nsaved {}\n", a.model.name(), data.summary(), path.display()))
        }
        Command::Predict(a) => {
            let (file, fitted) = ModelFile::load(&a.model)?;
            let inputs = a.columns.inputs.as_deref().map_or_else(|| file.input_names.clone(), |s| parse_columns(Some(s)));
            let table = crate::data::Table::read(&a.data)?;
            let outputs: Vec<String> = match a.columns.outputs.as_deref() {
                Some(s) => parse_columns(Some(s)),
                None => file.output_names.iter().filter(|n| table.columns.contains(n)).cloned().collect(),
            };
            let data = crate::data::split(&table, &inputs, &outputs, OutputDefault::None)?;
            let pred = fitted.predict(&data.x)?;
            let mut w = ArtifactWriter::new(&dir, RunInfo::new("predict", seed))?;
            let truth = (data.y.ncols() == pred.mean.ncols()).then_some(&data.y);
            write_predictions(&mut w, &a.out, &file.output_names, truth, &pred)?;
            Ok(format!("predicted {} rows\nsaved {}\n", pred.mean.nrows(), w.path(&a.out).display()))
        }
        Command::Cv(a) => {
            let data = load_csv(&a.data, &parse_columns(a.columns.inputs.as_deref()), &parse_columns(a.columns.outputs.as_deref()), OutputDefault::LastColumn)?;
            let base = FitOptions::new(a.model, seed);
            let (best, rows) = cv_table(&data.x, &data.y, &base, a.max_components, a.folds)?;
            let mut w = ArtifactWriter::new(&dir, RunInfo::new("cv", seed))?;
            w.write_csv(
                "cv.csv",
                &["setting", "mean_rmse"],
                rows.iter().map(|r| vec![Cell::from(r.setting), r.rmse.into()]),
            )?;
            let mut text = String::from("setting  mean held-out RMSE\n");
            for r in &rows {
                text.push_str(&format!("{:>7}  {:.6}{}\n", r.setting, r.rmse, if r.setting == best { "  <- best" } else { "" }));
            }
            Ok(text)
        }
        Command::Run(a) => {
            let spec = ExperimentSpec {
                experiment: a.experiment,
                seed,
                overrides: a.overrides.into_iter().collect::<BTreeMap<_, _>>(),
                output_dir: dir,
                marthe: MartheOptions {
                    data: a.data,
                    split_seed: a.split_seed,
                    train_frac: a.train_frac,
                    log_target: a.log_target,
                    target: a.target,
                    inputs: parse_columns(a.inputs.as_deref()),
                },
            };
            let report = run_experiment(&spec)?;
            let mut text = format!("experiment {} (seed {})\n{}", report.experiment, report.seed, report.text);
            for m in &report.models {
                text.push_str(&format!("{}: RMSE {:.6}, MAPE {:.6} (train {}, test {})\n", m.name, m.rmse, m.mape, m.n_train, m.n_test));
            }
            for f in &report.files {
                text.push_str(&format!("wrote {}\n", f.display()));
            }
            Ok(text)
        }
        Command::Diagnose(a) => {
            let data = load_csv(&a.data, &parse_columns(a.columns.inputs.as_deref()), &parse_columns(a.columns.outputs.as_deref()), OutputDefault::LastColumn)?;
            let mut w = ArtifactWriter::new(&dir, RunInfo::new("diagnose", seed))?;
            let d = diagnose(&mut w, &data, a.lambda, a.pcr, a.pls)?;
            let mut text = format!("{}\n", data.summary());
            if d.expanded_directions.is_empty() {
                text.push_str("no PLS shrinkage factor exceeds 1\n");
            } else {
                text.push_str(&format!("PLS expands directions {:?} (factor > 1)\n", d.expanded_directions));
            }
            match (&d.index_p_value, &d.index_error) {
                (Some(p), _) => text.push_str(&format!("single-index direction estimated (slope p-value {p:.3e})\n")),
                (_, Some(e)) => text.push_str(&format!("single-index direction unavailable: {e}\n")),
                _ => {}
            }
            Ok(text)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| anyhow!("{e}"))?;
    execute(cli)
}
