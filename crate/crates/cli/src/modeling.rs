//! Model fitting, persistence and prediction for the `fit`, `predict`, `cv`
//! and `diagnose` subcommands.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use twocultures_core::brillinger::estimate_index;
use twocultures_core::gp::GpConfig;
use twocultures_core::nnet::TrainConfig;
use twocultures_core::pipeline::{
    cross_validate_pipeline, fit_dl_gp, fit_dl_pls, fit_pca_gp, fit_pls_gp, fit_plain_gp, CompositeModel, CompositeRecord, DlGpConfig, PredictiveDistribution,
    Predictor, ScoreMap,
};
use twocultures_core::pls::{fit_pls, PlsModel, PlsRecord};
use twocultures_core::shrinkage::diagnostic_table;
use twocultures_core::{Error, Matrix};

use crate::artifacts::{envelope, ArtifactWriter, Cell, RunInfo, SCHEMA_VERSION};
use crate::data::Dataset;
use crate::format::to_json_string;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Partial least squares.
    Pls,
    /// One GP per output on standardized inputs.
    Gp,
    /// GP heads on PLS scores.
    PlsGp,
    /// GP heads on bottleneck-network features.
    DlGp,
    /// Relu network from x-scores to output scores.
    DlPls,
    /// GP per output principal-component weight.
    PcaGp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pls => "pls",
            ModelKind::Gp => "gp",
            ModelKind::PlsGp => "pls-gp",
            ModelKind::DlGp => "dl-gp",
            ModelKind::DlPls => "dl-pls",
            ModelKind::PcaGp => "pca-gp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub kind: ModelKind,
    /// PLS components, or output basis size for `pca-gp`.
    pub components: usize,
    /// Bottleneck width for `dl-gp`.
    pub reduced_dim: usize,
    pub epochs: Option<usize>,
    pub seed: u64,
}

impl FitOptions {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            kind,
            components: 2,
            reduced_dim: 2,
            epochs: None,
            seed,
        }
    }

    fn gp(&self) -> GpConfig {
        GpConfig {
            seed: self.seed,
            ..GpConfig::default()
        }
    }

    fn dl_gp(&self) -> DlGpConfig {
        let mut c = DlGpConfig {
            reduced_dim: self.reduced_dim,
            gp: self.gp(),
            ..DlGpConfig::default()
        };
        c.train.seed = self.seed;
        if let Some(e) = self.epochs {
            c.train.epochs = e;
        }
        c
    }

    fn score_map(&self) -> ScoreMap {
        ScoreMap::Mlp {
            hidden: vec![32],
            train: TrainConfig {
                learning_rate: 0.05,
                epochs: self.epochs.unwrap_or(300),
                batch_size: 16,
                seed: self.seed,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Pls(PlsModel),
    Composite(CompositeModel),
}

impl Predictor for FittedModel {
    fn predict_distribution(&self, x: &Matrix) -> twocultures_core::Result<PredictiveDistribution> {
        match self {
            FittedModel::Pls(m) => m.predict_distribution(x),
            FittedModel::Composite(m) => m.predict(x),
        }
    }
}

impl FittedModel {
    pub fn n_inputs(&self) -> usize {
        match self {
            FittedModel::Pls(m) => m.n_inputs(),
            FittedModel::Composite(m) => m.n_inputs(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<PredictiveDistribution> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::ShapeMismatch {
                what: "model input",
                expected: format!("{} columns", self.n_inputs()),
                found: format!("{} columns", x.ncols()),
            }
            .into());
        }
        Ok(self.predict_distribution(x)?)
    }
}

pub fn fit_model(x: &Matrix, y: &Matrix, opts: &FitOptions) -> Result<FittedModel> {
    ensure!(y.ncols() > 0, "fitting needs at least one output column");
    let model = match opts.kind {
        ModelKind::Pls => FittedModel::Pls(fit_pls(x, y, opts.components)?),
        ModelKind::Gp => FittedModel::Composite(fit_plain_gp(x, y, &opts.gp())?),
        ModelKind::PlsGp => FittedModel::Composite(fit_pls_gp(x, y, opts.components, &opts.gp())?),
        ModelKind::DlGp => FittedModel::Composite(fit_dl_gp(x, y, &opts.dl_gp())?),
        ModelKind::DlPls => FittedModel::Composite(fit_dl_pls(x, y, opts.components, &opts.score_map())?.model),
        ModelKind::PcaGp => FittedModel::Composite(fit_pca_gp(x, y, opts.components, &opts.gp())?),
    };
    Ok(model)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum ModelPayload {
    Pls(PlsRecord),
    Composite(CompositeRecord),
}

/// Contents of a saved model file besides the common envelope fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub model_kind: ModelKind,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub model: ModelPayload,
}

impl ModelFile {
    pub fn new(kind: ModelKind, fitted: &FittedModel, data: &Dataset) -> Self {
        let model = match fitted {
            FittedModel::Pls(m) => ModelPayload::Pls(m.into()),
            FittedModel::Composite(m) => ModelPayload::Composite(m.into()),
        };
        Self {
            model_kind: kind,
            input_names: data.input_names.clone(),
            output_names: data.output_names.clone(),
            model,
        }
    }

    pub fn save(&self, path: &Path, info: &RunInfo) -> Result<()> {
        let text = to_json_string(&envelope(info, "model", self)?)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<(Self, FittedModel)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let found = value.get("schema_version").and_then(Value::as_u64).unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SCHEMA_VERSION,
                found,
            })
            .with_context(|| format!("loading {}", path.display()));
        }
        ensure!(value.get("kind").and_then(Value::as_str) == Some("model"), "{} is not a model file", path.display());
        let file: ModelFile = serde_json::from_value(value).with_context(|| format!("decoding model in {}", path.display()))?;
        let fitted = match file.model.clone() {
            ModelPayload::Pls(r) => FittedModel::Pls(r.try_into()?),
            ModelPayload::Composite(r) => FittedModel::Composite(r.try_into()?),
        };
        Ok((file, fitted))
    }
}

/// `(row_id, true_*, pred_*, sd_*)`; the `true_*` columns only when outputs are known.
pub fn write_predictions(
    writer: &mut ArtifactWriter,
    name: &str,
    output_names: &[String],
    y_true: Option<&Matrix>,
    pred: &PredictiveDistribution,
) -> Result<()> {
    let mut columns = vec!["row_id".to_string()];
    if y_true.is_some() {
        columns.extend(output_names.iter().map(|n| format!("true_{n}")));
    }
    columns.extend(output_names.iter().map(|n| format!("pred_{n}")));
    columns.extend(output_names.iter().map(|n| format!("sd_{n}")));
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = (0..pred.mean.nrows()).map(|i| {
        let mut row: Vec<Cell> = vec![i.into()];
        if let Some(t) = y_true {
            row.extend(t.row(i).iter().map(|&v| Cell::Num(v)));
        }
        row.extend(pred.mean.row(i).iter().map(|&v| Cell::Num(v)));
        row.extend(pred.sd.row(i).iter().map(|&v| Cell::Num(v)));
        row
    });
    writer.write_csv(name, &refs, rows)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CvTableRow {
    pub setting: usize,
    pub rmse: f64,
}

/// K-fold search over component counts (or bottleneck widths for `dl-gp`).
pub fn cv_table(x: &Matrix, y: &Matrix, base: &FitOptions, max: usize, folds: usize) -> Result<(usize, Vec<CvTableRow>)> {
    if matches!(base.kind, ModelKind::Gp) {
        bail!("model kind 'gp' has no component count to cross-validate");
    }
    ensure!(max >= 1, "the largest setting must be at least 1");
    let grid: Vec<usize> = (1..=max).collect();
    let kind = base.kind;
    let builder = |xt: &Matrix, yt: &Matrix, s: &usize| -> twocultures_core::Result<Box<dyn Predictor>> {
        let mut opts = base.clone();
        if kind == ModelKind::DlGp {
            opts.reduced_dim = *s;
        } else {
            opts.components = *s;
        }
        fit_model(xt, yt, &opts)
            .map(|m| Box::new(m) as Box<dyn Predictor>)
            .map_err(|e| match e.downcast::<Error>() {
                Ok(core) => core,
                Err(other) => Error::Validation(other.to_string()),
            })
    };
    let cv = cross_validate_pipeline(builder, x, y, &grid, folds, base.seed)?;
    let rows = cv
        .table
        .iter()
        .map(|r| CvTableRow {
            setting: r.config,
            rmse: r.rmse,
        })
        .collect();
    Ok((cv.best, rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnosis {
    pub expanded_directions: Vec<usize>,
    pub index_direction: Option<Vec<f64>>,
    pub index_p_value: Option<f64>,
    pub index_error: Option<String>,
}

/// Shrinkage factors of ridge, PCR and PLS plus a single-index direction estimate.
pub fn diagnose(writer: &mut ArtifactWriter, data: &Dataset, lambda: f64, pcr: usize, pls: usize) -> Result<Diagnosis> {
    ensure!(data.y.ncols() == 1, "diagnostics need exactly one output column, found {}", data.y.ncols());
    let y = data.y.column(0).into_owned();
    let rows = diagnostic_table(&data.x, &y, lambda, pcr, pls)?;
    writer.write_csv(
        "shrinkage.csv",
        &["direction", "eigenvalue", "ols_coordinate", "f_ridge", "f_pcr", "f_pls", "expanded"],
        rows.iter()
            .map(|r| vec![r.j.into(), r.e2.into(), r.alpha.into(), r.f_rr.into(), r.f_pcr.into(), r.f_pls.into(), r.expanded.into()]),
    )?;
    let expanded_directions = rows.iter().filter(|r| r.expanded).map(|r| r.j).collect();
    let (index_direction, index_p_value, index_error) = match estimate_index(&data.x, &y) {
        Ok(m) => {
            writer.write_csv(
                "index_direction.csv",
                &["input", "weight"],
                data.input_names.iter().zip(m.beta_dir.iter()).map(|(n, &w)| vec![n.as_str().into(), w.into()]),
            )?;
            (Some(m.beta_dir.iter().copied().collect()), Some(m.p_value), None)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    let out = Diagnosis {
        expanded_directions,
        index_direction,
        index_p_value,
        index_error,
    };
    writer.write_json("diagnose.json", "diagnosis", &out)?;
    Ok(out)
}
