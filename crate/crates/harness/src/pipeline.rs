//! Steps shared by the single-purpose commands and the experiment runner.

use crate::error::HarnessError;
use ducs::config::KeyValues;
use ducs::data::DatasetBundle;
use ducs::dynamics::{TraceBuilder, TrainingTrace};
use ducs::model::{evaluate, EpochSummary, MlpClassifier, NullRecorder, TrainConfig, Trainer};
use ducs::selection::{
    baseline_scores, default_window_start, select_by_scores, select_top, unreliability_scores,
    window_grid_search, write_scores_csv, Baseline, CoresetSpec, Method, WMode,
};
use std::path::Path;

/// Epoch budget of the retrain used to score grid-search candidates.
pub const GRID_EPOCHS: u32 = 25;

/// Reads `path` (or starts from the defaults) and fits the layer sizes to the
/// data. A config that names `layer_dims` must already agree with the data.
pub fn load_train_config(
    path: Option<&Path>,
    train: &DatasetBundle,
    seed: Option<u64>,
) -> Result<TrainConfig, HarnessError> {
    let fitted = TrainConfig::for_dataset(train.dim, train.class_count);
    let mut cfg = match path {
        None => fitted,
        Some(p) => {
            let kv = KeyValues::read(p)?;
            let explicit_layers = kv.contains("layer_dims");
            let mut cfg = TrainConfig::from_kv(kv)?;
            if !explicit_layers {
                cfg.layer_dims = fitted.layer_dims;
            }
            cfg
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dims = &cfg.layer_dims;
    if dims[0] != train.dim || dims[dims.len() - 1] != train.class_count {
        return Err(HarnessError::Usage(format!(
            "layer_dims {dims:?} do not fit data with {} features and {} classes",
            train.dim, train.class_count
        )));
    }
    Ok(cfg)
}

/// Trains the surrogate on `train` for `cfg.epochs` epochs, recording dynamics.
pub fn record_dynamics(
    train: &DatasetBundle,
    cfg: &TrainConfig,
    extended: bool,
    on_epoch: impl FnMut(&EpochSummary),
) -> Result<(TrainingTrace, MlpClassifier), HarnessError> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut recorder = TraceBuilder::new(
        train.len(),
        train.class_count,
        cfg.epochs as usize,
        cfg.seed,
        train.fingerprint,
        extended,
    );
    trainer.fit(train, &mut recorder, on_epoch)?;
    let trace = recorder.finish().map_err(HarnessError::Data)?;
    Ok((trace, trainer.model))
}

/// Trains a fresh model on the selected rows of `train` and scores it on `eval`.
///
/// Rows are used in index order, so a coreset covering the whole split trains
/// exactly like the full-data reference.
pub fn retrain_accuracy(
    train: &DatasetBundle,
    indices: &[usize],
    cfg: &TrainConfig,
    eval: &DatasetBundle,
) -> Result<f64, HarnessError> {
    let mut rows = indices.to_vec();
    rows.sort_unstable();
    let subset = train.subset(&rows)?;
    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.fit(&subset, &mut NullRecorder, |_| {})?;
    Ok(evaluate(&trainer.model, eval)?)
}

/// Mean and sample standard deviation (absent below two values).
pub fn summarize(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (mean, std)
}

pub fn needs_extended(method: Method) -> bool {
    matches!(
        method,
        Method::Baseline(Baseline::Entropy | Baseline::El2n | Baseline::Aum)
    )
}

/// Data needed to run the window grid search.
pub struct GridContext<'a> {
    pub train: &'a DatasetBundle,
    pub val: &'a DatasetBundle,
    pub config: &'a TrainConfig,
    pub step: usize,
}

pub struct SelectRequest<'a> {
    pub method: Method,
    pub beta: f64,
    pub window_k: usize,
    pub window_start: Option<usize>,
    pub w_mode: WMode,
    pub seed: u64,
    pub grid: Option<GridContext<'a>>,
}

pub struct Selection {
    pub spec: CoresetSpec,
    /// `index,V,F,U` for DUCS, `index,score` for baselines.
    pub scores_csv: String,
}

pub fn select(trace: &TrainingTrace, req: &SelectRequest<'_>) -> Result<Selection, HarnessError> {
    if !(req.beta > 0.0 && req.beta <= 1.0) {
        return Err(HarnessError::Usage(format!("--beta {} not in (0, 1]", req.beta)));
    }
    let mut csv = Vec::new();
    let spec = match req.method {
        Method::Ducs => {
            let (t, k) = (trace.epoch_count, req.window_k);
            if k == 0 || k > t {
                return Err(HarnessError::Usage(format!(
                    "window length {k} not in 1..={t} (recorded epochs)"
                )));
            }
            if let Some(s) = req.window_start.filter(|&s| s == 0 || s + k - 1 > t) {
                return Err(HarnessError::Usage(format!(
                    "window {s}..={} outside recorded epochs 1..={t}",
                    s + k - 1
                )));
            }
            let start = match (&req.grid, req.window_start) {
                (Some(g), _) => {
                    let mut cfg = g.config.clone();
                    cfg.epochs = GRID_EPOCHS;
                    window_grid_search(trace, req.window_k, g.step, req.w_mode, req.beta, |spec| {
                        retrain_accuracy(g.train, &spec.indices, &cfg, g.val)
                    })?
                    .best_start
                }
                (None, Some(s)) => s,
                (None, None) => default_window_start(trace.epoch_count, req.window_k),
            };
            let report = unreliability_scores(trace, start, req.window_k, req.w_mode)?;
            report.write_csv(&mut csv).expect("writing to memory");
            select_top(&report, req.beta, trace.dataset_fingerprint)?
        }
        Method::Baseline(b) => {
            let scores = baseline_scores(trace, b, req.seed)?;
            write_scores_csv(&scores, &mut csv).expect("writing to memory");
            select_by_scores(&scores, req.beta, req.method.name(), trace.dataset_fingerprint)?
        }
    };
    Ok(Selection {
        spec,
        scores_csv: String::from_utf8(csv).expect("csv is ascii"),
    })
}

/// Writes via a sibling temporary file so readers never see a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}
