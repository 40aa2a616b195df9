//! The experiment registry behind `twocultures run`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use twocultures_core::brillinger::{identify_linear_system, recover_nonlinear_system, simulate_linear_system, NonlinearSystemConfig};
use twocultures_core::gp::GpConfig;
use twocultures_core::nnet::{donut_classifier_fixed, donut_logit, fit_bottleneck, Activation, BottleneckConfig, TrainConfig};
use twocultures_core::numerics::region_count;
use twocultures_core::pipeline::{fit_dl_gp, fit_pls_gp, fit_plain_gp, metrics, CompositeModel, DlGpConfig, PredictiveDistribution};
use twocultures_core::random::{normal_matrix, normal_vector, seeded, select_rows, substream, train_test_split};
use twocultures_core::shrinkage::{diagnostic_table, fit_pcr, fit_ridge, StandardizedProblem};
use twocultures_core::stats::{r_squared, spearman};
use twocultures_core::synthetic::{donut, ridge_abs, DonutConfig};
use twocultures_core::{fit_pls, Matrix, Vector};

use crate::artifacts::{ArtifactWriter, Cell, RunInfo};
use crate::data::{self, Dataset, OutputDefault, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    LinearSystem,
    NonlinearAbs,
    RidgeBottleneck,
    Donut,
    ShrinkageDemo,
    Marthe,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::LinearSystem,
        Experiment::NonlinearAbs,
        Experiment::RidgeBottleneck,
        Experiment::Donut,
        Experiment::ShrinkageDemo,
        Experiment::Marthe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::LinearSystem => "linear-system",
            Experiment::NonlinearAbs => "nonlinear-abs",
            Experiment::RidgeBottleneck => "ridge-bottleneck",
            Experiment::Donut => "donut",
            Experiment::ShrinkageDemo => "shrinkage-demo",
            Experiment::Marthe => "marthe",
        }
    }
}

/// Options of the table-driven comparison.
#[derive(Debug, Clone, Default)]
pub struct MartheOptions {
    pub data: Option<PathBuf>,
    /// Defaults to the run seed.
    pub split_seed: Option<u64>,
    pub train_frac: Option<f64>,
    pub log_target: bool,
    pub target: Option<String>,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub seed: u64,
    /// `key=value` parameter overrides; unknown keys are rejected.
    pub overrides: BTreeMap<String, String>,
    pub output_dir: PathBuf,
    pub marthe: MartheOptions,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            experiment,
            seed,
            overrides: BTreeMap::new(),
            output_dir: output_dir.into(),
            marthe: MartheOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub name: String,
    pub rmse: f64,
    pub mape: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub models: Vec<ModelMetrics>,
    /// Experiment-specific scalar results.
    pub summary: BTreeMap<String, f64>,
    #[serde(skip)]
    pub text: String,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub fn model(&self, name: &str) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.name == name)
    }
}

/// Typed access to `key=value` overrides that remembers which keys were used.
pub struct Overrides {
    map: BTreeMap<String, String>,
}

impl Overrides {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Self { map }
    }

    pub fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| anyhow::anyhow!("override {key}={v}: {e}")),
        }
    }

    fn finish(self, experiment: &str) -> Result<()> {
        if !self.map.is_empty() {
            let keys: Vec<_> = self.map.keys().cloned().collect();
            bail!("unknown override(s) for {experiment}: {}", keys.join(", "));
        }
        Ok(())
    }
}

struct Outcome {
    models: Vec<ModelMetrics>,
    summary: BTreeMap<String, f64>,
    text: String,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let name = spec.experiment.name();
    if spec.experiment == Experiment::Marthe && spec.marthe.data.is_none() {
        bail!("experiment {name}: {MARTHE_SCHEMA_HELP}");
    }
    let mut writer = ArtifactWriter::new(&spec.output_dir, RunInfo::new(name, spec.seed))?;
    let mut ov = Overrides::new(spec.overrides.clone());
    let outcome = match spec.experiment {
        Experiment::LinearSystem => linear_system(spec.seed, &mut ov, &mut writer),
        Experiment::NonlinearAbs => nonlinear_abs(spec.seed, &mut ov, &mut writer),
        Experiment::RidgeBottleneck => ridge_bottleneck(spec.seed, &mut ov, &mut writer),
        Experiment::Donut => donut_experiment(spec.seed, &mut ov, &mut writer),
        Experiment::ShrinkageDemo => shrinkage_demo(spec.seed, &mut ov, &mut writer),
        Experiment::Marthe => marthe(spec, &mut ov, &mut writer),
    }
    .with_context(|| format!("experiment {name}"))?;
    ov.finish(name)?;
    let mut report = ExperimentReport {
        experiment: name.into(),
        seed: spec.seed,
        models: outcome.models,
        summary: outcome.summary,
        text: outcome.text,
        files: Vec::new(),
    };
    writer.write_json("metrics.json", "metrics", &report)?;
    report.files = writer.written().to_vec();
    Ok(report)
}

fn model_metrics(name: &str, y_true: &Matrix, y_pred: &Matrix, n_train: usize) -> Result<ModelMetrics> {
    let m = metrics(y_true, y_pred)?;
    Ok(ModelMetrics {
        name: name.into(),
        rmse: m.rmse,
        mape: m.mape,
        n_train,
        n_test: y_true.nrows(),
    })
}

fn column(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn rows_range(m: &Matrix, start: usize, len: usize) -> Matrix {
    m.rows(start, len).into_owned()
}

fn linear_system(seed: u64, ov: &mut Overrides, w: &mut ArtifactWriter) -> Result<Outcome> {
    let n: usize = ov.get("n", 1000)?;
    let noise_sd: f64 = ov.get("noise_sd", 0.1)?;
    let rounds: usize = ov.get("rounds", 3)?;
    let mut residual_rows = Vec::new();
    let mut weight_rows = Vec::new();
    let mut summary = BTreeMap::new();
    let mut text = String::from("system     round  residual variance  captured\n");
    for (label, sd) in [("noiseless", 0.0), ("noisy", noise_sd)] {
        let (x, y) = simulate_linear_system(n, sd, seed)?;
        let id = identify_linear_system(&x, &y, rounds)?;
        residual_rows.push(vec![label.into(), 0usize.into(), id.initial_variance.into(), 0.0.into()]);
        for r in &id.rounds {
            let captured = 1.0 - r.residual_variance / id.initial_variance;
            residual_rows.push(vec![label.into(), r.round.into(), r.residual_variance.into(), captured.into()]);
            let mut row: Vec<Cell> = vec![label.into(), r.round.into()];
            row.extend(r.x_weights.iter().map(|&v| Cell::Num(v)));
            weight_rows.push(row);
            writeln!(text, "{label:<10} {:>5}  {:>17.3e}  {:>8.4}", r.round, r.residual_variance, captured)?;
        }
        let after_two = id.rounds.get(1).or(id.rounds.last()).map_or(id.initial_variance, |r| r.residual_variance);
        summary.insert(format!("{label}_residual_after_2"), after_two);
        summary.insert(format!("{label}_captured_after_2"), 1.0 - after_two / id.initial_variance);
        summary.insert(format!("{label}_rounds"), id.rounds.len() as f64);
    }
    summary.insert("noise_variance".into(), noise_sd * noise_sd);
    w.write_csv("residual_energy.csv", &["system", "round", "residual_variance", "captured_fraction"], residual_rows)?;
    w.write_csv("x_weights.csv", &["system", "round", "w1", "w2", "w3"], weight_rows)?;

    let (x, y) = simulate_linear_system(n, noise_sd, seed)?;
    let n_train = n * 4 / 5;
    let (xtr, ytr) = (rows_range(&x, 0, n_train), rows_range(&y, 0, n_train));
    let (xte, yte) = (rows_range(&x, n_train, n - n_train), rows_range(&y, n_train, n - n_train));
    let pred = fit_pls(&xtr, &ytr, 2)?.predict(&xte)?;
    let models = vec![model_metrics("pls-2", &yte, &pred, n_train)?];
    Ok(Outcome { models, summary, text })
}

fn nonlinear_abs(seed: u64, ov: &mut Overrides, w: &mut ArtifactWriter) -> Result<Outcome> {
    let d = NonlinearSystemConfig::default();
    let config = NonlinearSystemConfig {
        n: ov.get("n", d.n)?,
        p: ov.get("p", d.p)?,
        offset: ov.get("offset", d.offset)?,
        signal_norm: ov.get("signal_norm", d.signal_norm)?,
        noise_sd: ov.get("noise_sd", d.noise_sd)?,
        max_pls_components: ov.get("max_pls_components", d.max_pls_components)?,
        folds: ov.get("folds", d.folds)?,
    };
    let n_test: usize = ov.get("n_test", 500)?;
    let rec = recover_nonlinear_system(&config, seed)?;
    let truth = rec.p_true.normalize();
    let sign = truth.dot(&rec.model.beta_dir).signum();
    w.write_csv(
        "link_curve.csv",
        &["index", "y", "link"],
        rec.link_curve.iter().map(|r| vec![r[0].into(), r[1].into(), r[2].into()]),
    )?;
    w.write_csv(
        "directions.csv",
        &["coordinate", "true_direction", "estimated_direction"],
        (0..config.p).map(|j| vec![(j + 1).into(), (sign * truth[j]).into(), rec.model.beta_dir[j].into()]),
    )?;

    let x_test = normal_matrix(&mut substream(seed, 11), n_test, config.p);
    let noise = normal_vector(&mut substream(seed, 12), n_test) * config.noise_sd;
    let y_test = (&x_test * &rec.p_true).map(|v| (config.offset + v).abs()) + noise;
    let pred = rec.model.predict(&x_test)?;
    let models = vec![model_metrics("single-index", &column(&y_test), &column(&pred), config.n)?];

    let mut summary = BTreeMap::new();
    summary.insert("cosine".into(), rec.cosine);
    summary.insert("pls_ols_cosine".into(), rec.pls_ols_cosine);
    summary.insert("pls_components".into(), rec.pls_components as f64);
    summary.insert("k_scale".into(), rec.model.k_scale);
    summary.insert("slope_p_value".into(), rec.model.p_value);
    let text = format!(
        "|cos(estimated, true)| = {:.4}\n|cos(PLS, OLS)| = {:.4} with {} PLS components\n",
        rec.cosine, rec.pls_ols_cosine, rec.pls_components
    );
    Ok(Outcome { models, summary, text })
}

/// Settings of the ridge-function bottleneck experiment.
#[derive(Debug, Clone)]
pub struct RidgeSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub p: usize,
    pub noise_var: f64,
    pub network: BottleneckConfig,
    pub train: TrainConfig,
}

impl RidgeSettings {
    pub fn new(seed: u64) -> Self {
        Self {
            n_train: 2000,
            n_test: 1000,
            p: 100,
            noise_var: 0.01,
            network: BottleneckConfig {
                encoder: vec![64],
                bottleneck: 1,
                decoder: vec![64],
                encoder_activation: Activation::Identity,
                bias_free_encoder: true,
                restarts: 4,
                validation_frac: 0.2,
            },
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: 200,
                batch_size: 32,
                seed,
                ..TrainConfig::default()
            },
        }
    }
}

fn ridge_bottleneck(seed: u64, ov: &mut Overrides, w: &mut ArtifactWriter) -> Result<Outcome> {
    let mut s = RidgeSettings::new(seed);
    s.n_train = ov.get("n_train", s.n_train)?;
    s.n_test = ov.get("n_test", s.n_test)?;
    s.p = ov.get("p", s.p)?;
    s.train.epochs = ov.get("epochs", s.train.epochs)?;
    s.network.restarts = ov.get("restarts", s.network.restarts)?;
    let (data, u) = ridge_abs(s.n_train + s.n_test, s.p, s.noise_var, seed);
    let (xtr, ytr) = (rows_range(&data.x, 0, s.n_train), rows_range(&data.y, 0, s.n_train));
    let (xte, yte) = (rows_range(&data.x, s.n_train, s.n_test), rows_range(&data.y, s.n_train, s.n_test));
    let fit = fit_bottleneck(&xtr, &ytr.column(0).into_owned(), &s.network, &s.train)?;
    let pred = fit.predict(&xte)?;
    let phi = fit.features(&xte)?;
    let index = &xte * &u;
    let r2 = r_squared(yte.as_slice(), pred.as_slice());
    let rho = spearman(phi.as_slice(), index.as_slice())?;
    w.write_csv(
        "bottleneck_test.csv",
        &["index", "feature", "y", "prediction"],
        (0..s.n_test).map(|i| vec![index[i].into(), phi[(i, 0)].into(), yte[(i, 0)].into(), pred[(i, 0)].into()]),
    )?;
    w.write_csv(
        "training_trace.csv",
        &["epoch", "train_loss", "holdout_loss"],
        fit.trace.iter().map(|e| vec![e.epoch.into(), e.train_loss.into(), e.holdout_loss.into()]),
    )?;
    let models = vec![model_metrics("bottleneck-1", &yte, &pred, s.n_train)?];
    let mut summary = BTreeMap::new();
    summary.insert("r_squared".into(), r2);
    summary.insert("abs_spearman".into(), rho.abs());
    let text = format!("test R^2 = {r2:.4}\n|Spearman(feature, true index)| = {:.4}\n", rho.abs());
    Ok(Outcome { models, summary, text })
}

/// Points on the square `max(|x1|, |x2|) = 1.5` where the fixed classifier's logit vanishes.
pub fn donut_boundary(count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|k| {
            let t = 4.0 * k as f64 / count as f64;
            let side = t.floor() as usize;
            let s = -1.5 + 3.0 * t.fract();
            match side {
                0 => [s, -1.5],
                1 => [1.5, s],
                2 => [-s, 1.5],
                _ => [-1.5, -s],
            }
        })
        .collect()
}

fn donut_experiment(seed: u64, ov: &mut Overrides, w: &mut ArtifactWriter) -> Result<Outcome> {
    let d = DonutConfig::default();
    let config = DonutConfig {
        per_class: ov.get("per_class", d.per_class)?,
        inner: ov.get("inner", d.inner)?,
        outer_lo: ov.get("outer_lo", d.outer_lo)?,
        outer_hi: ov.get("outer_hi", d.outer_hi)?,
    };
    let (x, labels) = donut(&config, seed)?;
    let n = x.nrows();
    let mut prob = Matrix::zeros(n, 1);
    let mut correct = 0;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let p = donut_classifier_fixed(&[x[(i, 0)], x[(i, 1)]])?;
        prob[(i, 0)] = p;
        let class = usize::from(p > 0.5);
        correct += usize::from(class == usize::from(labels[i]));
        rows.push(vec![x[(i, 0)].into(), x[(i, 1)].into(), usize::from(labels[i]).into(), p.into(), class.into()]);
    }
    let accuracy = correct as f64 / n as f64;
    w.write_csv("donut_points.csv", &["x1", "x2", "label", "probability", "predicted"], rows)?;
    let boundary = donut_boundary(100);
    let worst = boundary.iter().map(|&b| donut_logit(b).abs()).fold(0.0, f64::max);
    w.write_csv("donut_boundary.csv", &["x1", "x2", "logit"], boundary.iter().map(|b| vec![b[0].into(), b[1].into(), donut_logit(*b).into()]))?;
    let truth = Matrix::from_fn(n, 1, |i, _| f64::from(labels[i]));
    let models = vec![model_metrics("fixed-relu", &truth, &prob, 0)?];
    let mut summary = BTreeMap::new();
    summary.insert("accuracy".into(), accuracy);
    summary.insert("boundary_max_abs_logit".into(), worst);
    summary.insert("regions".into(), region_count(4, 2) as f64);
    let text = format!("accuracy = {accuracy:.4}\nmax |logit| on 100 boundary points = {worst:.3e}\n");
    Ok(Outcome { models, summary, text })
}

fn shrinkage_demo(seed: u64, ov: &mut Overrides, w: &mut ArtifactWriter) -> Result<Outcome> {
    let n: usize = ov.get("n", 200)?;
    let p: usize = ov.get("p", 6)?;
    let lambda: f64 = ov.get("lambda", 0.5)?;
    let pcr: usize = ov.get("pcr", 3)?;
    let pls: usize = ov.get("pls", 1)?;
    let mut rng = seeded(seed);
    let mix = normal_matrix(&mut rng, p, p);
    let x = normal_matrix(&mut rng, n, p) * mix;
    let b = normal_matrix(&mut rng, p, 1);
    let y = &x * b + normal_matrix(&mut substream(seed, 1), n, 1);
    let n_train = n * 3 / 4;
    let (xtr, ytr) = (rows_range(&x, 0, n_train), rows_range(&y, 0, n_train));
    let (xte, yte) = (rows_range(&x, n_train, n - n_train), rows_range(&y, n_train, n - n_train));
    let ytr_v = ytr.column(0).into_owned();

    let rows = diagnostic_table(&xtr, &ytr_v, lambda, pcr, pls)?;
    w.write_csv(
        "shrinkage.csv",
        &["direction", "eigenvalue", "ols_coordinate", "f_ridge", "f_pcr", "f_pls", "expanded"],
        rows.iter()
            .map(|r| vec![r.j.into(), r.e2.into(), r.alpha.into(), r.f_rr.into(), r.f_pcr.into(), r.f_pls.into(), r.expanded.into()]),
    )?;
    let prob = StandardizedProblem::new(&xtr, &ytr_v)?;
    let predict = |beta: &Vector| -> Result<Matrix> {
        let zs = prob.x_std.apply(&xte)? * beta;
        Ok(prob.y_std.invert(&column(&zs))?)
    };
    let models = vec![
        model_metrics("ols", &yte, &predict(&fit_ridge(&xtr, &ytr_v, 0.0)?)?, n_train)?,
        model_metrics(&format!("ridge-{lambda}"), &yte, &predict(&fit_ridge(&xtr, &ytr_v, lambda)?)?, n_train)?,
        model_metrics(&format!("pcr-{pcr}"), &yte, &predict(&fit_pcr(&xtr, &ytr_v, pcr)?.beta)?, n_train)?,
        model_metrics(&format!("pls-{pls}"), &yte, &fit_pls(&xtr, &ytr, pls)?.predict(&xte)?, n_train)?,
    ];
    let expanded = rows.iter().filter(|r| r.expanded).count();
    let mut summary = BTreeMap::new();
    summary.insert("expanded_directions".into(), expanded as f64);
    let mut text = String::from("dir  eigenvalue   f_ridge   f_pcr    f_pls\n");
    let show = |f: Option<f64>| f.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in &rows {
        writeln!(
            text,
            "{:>3}  {:>10.4}  {:>8}  {:>6}  {:>7}{}",
            r.j,
            r.e2,
            show(r.f_rr),
            show(r.f_pcr),
            show(r.f_pls),
            if r.expanded { "  (expands)" } else { "" }
        )?;
    }
    Ok(Outcome { models, summary, text })
}

/// Output columns of the published contaminant-transport table.
pub const MARTHE_OUTPUTS: [&str; 10] = ["p102K", "p104", "p106", "p2.76", "p29K", "p31K", "p35K", "p37K", "p38", "p4b"];
/// Eighth monitoring well, the default target.
pub const MARTHE_DEFAULT_TARGET: &str = "p37K";
/// Published `(model, RMSE, MAPE)` reference values.
pub const MARTHE_REFERENCE: [(&str, f64, f64); 3] = [("gp", 4.5, 0.8), ("pls-gp", 1.6, 0.73), ("dl-gp", 0.89, 0.16)];

const MARTHE_SCHEMA_HELP: &str = "the marthe experiment needs --data <csv>: a header row, 300 rows, 20 numeric input \
columns (per1 … i3) and the monitoring-well outputs (p102K … p4b); the target defaults to p37K, else the last column";

/// Model settings of the three-way comparison.
#[derive(Debug, Clone)]
pub struct MartheSettings {
    pub pls_components: usize,
    pub dl_components: usize,
    pub dl: DlGpConfig,
    pub gp: GpConfig,
    pub train_frac: f64,
    pub log_target: bool,
}

impl MartheSettings {
    pub fn new(seed: u64) -> Self {
        let mut dl = DlGpConfig::default();
        dl.train.seed = seed;
        dl.gp.seed = seed;
        Self {
            pls_components: 14,
            dl_components: 10,
            dl,
            gp: GpConfig {
                seed,
                ..GpConfig::default()
            },
            train_frac: 0.8,
            log_target: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MartheComparison {
    pub models: Vec<ModelMetrics>,
    pub test_rows: Vec<usize>,
    pub y_test: Matrix,
    pub predictions: Vec<(String, PredictiveDistribution)>,
}

/// Plain GP, PLS-GP and DL-GP on one seeded train/test split.
pub fn marthe_comparison(data: &Dataset, settings: &MartheSettings, split_seed: u64) -> Result<MartheComparison> {
    let n = data.x.nrows();
    ensure!(data.y.ncols() == 1, "the comparison uses one target column, found {}", data.y.ncols());
    let (train, test) = train_test_split(n, settings.train_frac, split_seed);
    ensure!(train.len() >= 2 && !test.is_empty(), "train fraction {} leaves an empty split", settings.train_frac);
    let (xtr, xte) = (select_rows(&data.x, &train), select_rows(&data.x, &test));
    let y_test = select_rows(&data.y, &test);
    let mut ytr = select_rows(&data.y, &train);
    if settings.log_target {
        ensure!(data.y.iter().all(|&v| v > 0.0), "--log-target needs a strictly positive target");
        ytr = ytr.map(f64::ln);
    }
    let p = data.x.ncols();
    let pls_l = settings.pls_components.min(p);
    let dl_k = settings.dl_components.min(p);
    let fits: Vec<(String, CompositeModel)> = vec![
        ("gp".into(), fit_plain_gp(&xtr, &ytr, &settings.gp)?),
        ("pls-gp".into(), fit_pls_gp(&xtr, &ytr, pls_l, &settings.gp)?),
        (
            "dl-gp".into(),
            fit_dl_gp(
                &xtr,
                &ytr,
                &DlGpConfig {
                    reduced_dim: dl_k,
                    ..settings.dl.clone()
                },
            )?,
        ),
    ];
    let mut models = Vec::new();
    let mut predictions = Vec::new();
    for (name, model) in fits {
        let mut pred = model.predict(&xte)?;
        if settings.log_target {
            let (m, s) = (pred.mean.clone(), pred.sd.clone());
            pred.mean = m.map(f64::exp);
            pred.sd = m.zip_map(&s, |mu, sd| mu.exp() * (sd * sd).exp_m1().sqrt());
        }
        models.push(model_metrics(&name, &y_test, &pred.mean, train.len())?);
        predictions.push((name, pred));
    }
    Ok(MartheComparison {
        models,
        test_rows: test,
        y_test,
        predictions,
    })
}

/// Picks the target and inputs of a contaminant-transport style table.
pub fn marthe_dataset(table: &Table, target: Option<&str>, inputs: &[String]) -> Result<Dataset> {
    let target = match target {
        Some(t) => t.to_string(),
        None if table.columns.iter().any(|c| c == MARTHE_DEFAULT_TARGET) => MARTHE_DEFAULT_TARGET.into(),
        None => table.columns.last().expect("non-empty header").clone(),
    };
    let inputs: Vec<String> = if inputs.is_empty() {
        table
            .columns
            .iter()
            .filter(|c| **c != target && !MARTHE_OUTPUTS.contains(&c.as_str()))
            .cloned()
            .collect()
    } else {
        inputs.to_vec()
    };
    Ok(data::split(table, &inputs, &[target], OutputDefault::None)?)
}

fn marthe(spec: &ExperimentSpec, ov: &mut Overrides, w: &mut ArtifactWriter) -> Result<Outcome> {
    let opts = &spec.marthe;
    let Some(path) = &opts.data else {
        bail!("{MARTHE_SCHEMA_HELP}");
    };
    let table = Table::read(path).with_context(|| MARTHE_SCHEMA_HELP.to_string())?;
    let data = marthe_dataset(&table, opts.target.as_deref(), &opts.inputs)?;
    let mut s = MartheSettings::new(spec.seed);
    s.pls_components = ov.get("pls_components", s.pls_components)?;
    s.dl_components = ov.get("dl_components", s.dl_components)?;
    s.dl.train.epochs = ov.get("dl_epochs", s.dl.train.epochs)?;
    s.dl.network.restarts = ov.get("dl_restarts", s.dl.network.restarts)?;
    s.train_frac = opts.train_frac.unwrap_or(s.train_frac);
    s.log_target = opts.log_target;
    let split_seed = opts.split_seed.unwrap_or(spec.seed);
    let cmp = marthe_comparison(&data, &s, split_seed)?;

    let mut text = format!("data: {} ({})\n", path.display(), data.summary());
    if data.x.ncols() != 20 {
        writeln!(text, "note: the published table has 20 inputs, this file has {}", data.x.ncols())?;
    }
    writeln!(text, "{:<8} {:>10} {:>10} {:>12} {:>12}", "model", "RMSE", "MAPE", "ref. RMSE", "ref. MAPE")?;
    let mut table_rows = Vec::new();
    for (m, (_, ref_rmse, ref_mape)) in cmp.models.iter().zip(MARTHE_REFERENCE) {
        writeln!(text, "{:<8} {:>10.4} {:>10.4} {:>12} {:>12}", m.name, m.rmse, m.mape, ref_rmse, ref_mape)?;
        table_rows.push(vec![m.name.as_str().into(), m.rmse.into(), m.mape.into(), ref_rmse.into(), ref_mape.into()]);
    }
    w.write_csv("comparison.csv", &["model", "rmse", "mape", "reference_rmse", "reference_mape"], table_rows)?;
    let mut columns = vec!["row_id".to_string(), "y_true".to_string()];
    for (name, _) in &cmp.predictions {
        columns.push(format!("pred_{name}"));
        columns.push(format!("sd_{name}"));
    }
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = cmp.test_rows.iter().enumerate().map(|(i, &row)| {
        let mut r: Vec<Cell> = vec![row.into(), cmp.y_test[(i, 0)].into()];
        for (_, p) in &cmp.predictions {
            r.push(p.mean[(i, 0)].into());
            r.push(p.sd[(i, 0)].into());
        }
        r
    });
    w.write_csv("predictions.csv", &refs, rows)?;
    let mut summary = BTreeMap::new();
    summary.insert("n_inputs".into(), data.x.ncols() as f64);
    summary.insert("pls_components".into(), s.pls_components.min(data.x.ncols()) as f64);
    summary.insert("dl_components".into(), s.dl_components.min(data.x.ncols()) as f64);
    Ok(Outcome {
        models: cmp.models,
        summary,
        text,
    })
}
