//! The full pipeline over methods × selection rates × seeds.
//!
//! Per seed the surrogate is trained once; every (method, window, β) cell then
//! selects and retrains independently, in parallel. The JSON report is
//! rewritten after every seed so an interrupted run still leaves a readable
//! file, with unfinished cells marked `pending`.

use crate::dataset::Prepared;
use crate::error::HarnessError;
use crate::pipeline::{
    needs_extended, record_dynamics, retrain_accuracy, select, summarize, write_atomic, write_file,
    GridContext, SelectRequest,
};
use crate::plot::scatter_svg;
use ducs::dynamics::write_trace;
use ducs::model::{evaluate, TrainConfig};
use ducs::selection::{coreset_size, default_window_start, unreliability_scores, CoresetSpec, Method, WMode};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub methods: Vec<Method>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Window lengths tried for DUCS; baselines ignore them.
    pub window_ks: Vec<usize>,
    pub window_start: Option<usize>,
    pub w_mode: WMode,
    /// `Some(step)` enables the window grid search.
    pub grid_step: Option<usize>,
    pub extended: bool,
}

impl ExperimentPlan {
    fn validate(&self) -> Result<(), HarnessError> {
        let usage = |m: &str| Err(HarnessError::Usage(m.into()));
        if self.methods.is_empty() || self.betas.is_empty() || self.seeds.is_empty() {
            return usage("experiment needs at least one method, one --beta and one seed");
        }
        if self.methods.contains(&Method::Ducs) && self.window_ks.is_empty() {
            return usage("DUCS needs at least one --window-k");
        }
        if let Some(b) = self.betas.iter().find(|&&b| !(b > 0.0 && b <= 1.0)) {
            return usage(&format!("selection rate {b} not in (0, 1]"));
        }
        Ok(())
    }

    fn cells(&self, train_len: usize) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &method in &self.methods {
            let ks: Vec<Option<usize>> = match method {
                Method::Ducs => self.window_ks.iter().map(|&k| Some(k)).collect(),
                Method::Baseline(_) => vec![None],
            };
            for k in ks {
                for &beta in &self.betas {
                    cells.push(Cell {
                        method,
                        window_k: k,
                        beta,
                        size: coreset_size(beta, train_len),
                        runs: Vec::new(),
                    });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone)]
enum Outcome {
    Done {
        accuracy: f64,
        window_start: Option<usize>,
        coreset: String,
    },
    Failed(String),
}

#[derive(Debug, Clone)]
struct Cell {
    method: Method,
    window_k: Option<usize>,
    beta: f64,
    size: usize,
    runs: Vec<(u64, Outcome)>,
}

impl Cell {
    fn label(&self) -> String {
        match self.window_k {
            Some(k) => format!("{}-k{k}", self.method),
            None => self.method.to_string(),
        }
    }

    fn accuracies(&self) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|(_, o)| match o {
                Outcome::Done { accuracy, .. } => Some(*accuracy),
                Outcome::Failed(_) => None,
            })
            .collect()
    }

    fn failed(&self) -> bool {
        self.runs.iter().any(|(_, o)| matches!(o, Outcome::Failed(_)))
    }

    fn status(&self, seeds: usize) -> &'static str {
        if self.failed() {
            "failed"
        } else if self.runs.len() < seeds {
            "pending"
        } else {
            "done"
        }
    }

    /// Mean and std over the seeds, present only once every seed succeeded.
    fn stats(&self, seeds: usize) -> Option<(f64, Option<f64>)> {
        (self.status(seeds) == "done").then(|| summarize(&self.accuracies()))
    }
}

struct ReportState<'a> {
    data: &'a Prepared,
    config: &'a TrainConfig,
    plan: &'a ExperimentPlan,
    cells: Vec<Cell>,
    reference: Vec<(u64, Result<f64, String>)>,
    wall_clock: BTreeMap<&'static str, f64>,
    finished: bool,
}

fn stats_json(stats: Option<(f64, Option<f64>)>) -> (Value, Value) {
    match stats {
        Some((m, s)) => (json!(m), json!(s)),
        None => (Value::Null, Value::Null),
    }
}

impl ReportState<'_> {
    fn reference_stats(&self) -> Option<(f64, Option<f64>)> {
        let accs: Vec<f64> = self.reference.iter().filter_map(|(_, r)| r.as_ref().ok().copied()).collect();
        (accs.len() == self.plan.seeds.len()).then(|| summarize(&accs))
    }

    fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }

    fn to_json(&self) -> Value {
        let n_seeds = self.plan.seeds.len();
        let d = self.data;
        let cfg = self.config;
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|c| {
                let (mean, std) = stats_json(c.stats(n_seeds));
                let runs: Vec<Value> = c
                    .runs
                    .iter()
                    .map(|(seed, o)| match o {
                        Outcome::Done {
                            accuracy,
                            window_start,
                            coreset,
                        } => json!({
                            "seed": seed,
                            "accuracy": accuracy,
                            "window_start": window_start,
                            "coreset": coreset,
                        }),
                        Outcome::Failed(e) => json!({ "seed": seed, "error": e }),
                    })
                    .collect();
                json!({
                    "method": c.method.name(),
                    "window_k": c.window_k,
                    "beta": c.beta,
                    "M": c.size,
                    "runs": runs,
                    "mean": mean,
                    "std": std,
                    "seeds": c.runs.iter().filter(|(_, o)| matches!(o, Outcome::Done { .. })).map(|(s, _)| *s).collect::<Vec<_>>(),
                    "status": c.status(n_seeds),
                })
            })
            .collect();
        let (ref_mean, ref_std) = stats_json(self.reference_stats());
        let status = if !self.finished {
            "running"
        } else if self.failures() > 0 {
            "partial"
        } else {
            "complete"
        };
        json!({
            "status": status,
            "dataset": {
                "descriptor": d.source.to_string(),
                "samples": d.full.len(),
                "train": d.train.len(),
                "val": d.val.len(),
                "test": d.test.len(),
                "dim": d.full.dim,
                "classes": d.full.class_count,
                "train_frac": d.plan.train_frac,
                "val_frac": d.plan.val_frac,
                "split_seed": d.plan.seed,
                "train_fingerprint": format!("{:#018x}", d.train.fingerprint),
            },
            "config": {
                "epochs": cfg.epochs,
                "batch_size": cfg.batch_size,
                "learning_rate": cfg.learning_rate,
                "momentum": cfg.momentum,
                "anneal_epochs": cfg.anneal_epochs,
                "lambda_max": cfg.lambda_max,
                "ce_mode": cfg.ce_mode.as_str(),
                "layer_dims": cfg.layer_dims,
                "seeds": self.plan.seeds,
            },
            "selection": {
                "methods": self.plan.methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
                "betas": self.plan.betas,
                "window_ks": self.plan.window_ks,
                "window_start": self.plan.window_start,
                "w_mode": self.plan.w_mode.to_string(),
                "grid_step": self.plan.grid_step,
                "extended_trace": self.plan.extended,
            },
            "full_reference": {
                "runs": self.reference.iter().map(|(seed, r)| match r {
                    Ok(a) => json!({ "seed": seed, "accuracy": a }),
                    Err(e) => json!({ "seed": seed, "error": e }),
                }).collect::<Vec<_>>(),
                "mean": ref_mean,
                "std": ref_std,
            },
            "cells": cells,
            "wall_clock": self.wall_clock,
        })
    }

    fn to_csv(&self) -> String {
        let n_seeds = self.plan.seeds.len();
        let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let join = |xs: &[f64]| xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
        let mut out = String::from("method,window_k,beta,M,mean,std,accuracies,status\n");
        let ref_accs: Vec<f64> = self.reference.iter().filter_map(|(_, r)| r.as_ref().ok().copied()).collect();
        let ref_stats = self.reference_stats();
        out.push_str(&format!(
            "full,,1,{},{},{},{},{}\n",
            self.data.train.len(),
            fmt(ref_stats.map(|s| s.0)),
            fmt(ref_stats.and_then(|s| s.1)),
            join(&ref_accs),
            if ref_accs.len() == n_seeds { "done" } else { "failed" },
        ));
        for c in &self.cells {
            let stats = c.stats(n_seeds);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.method,
                c.window_k.map(|k| k.to_string()).unwrap_or_default(),
                c.beta,
                c.size,
                fmt(stats.map(|s| s.0)),
                fmt(stats.and_then(|s| s.1)),
                join(&c.accuracies()),
                c.status(n_seeds),
            ));
        }
        out
    }

    fn write_json(&self, out_dir: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(&self.to_json()).expect("report serializes") + "\n";
        write_atomic(&out_dir.join("report.json"), text.as_bytes())
    }
}

struct CellResult {
    outcome: Outcome,
    spec: Option<CoresetSpec>,
    select_secs: f64,
    retrain_secs: f64,
}

fn mkdir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

/// Runs the plan, writing `report.json`, `report.csv`, per-seed traces and
/// scatter plots, and every coreset file under `out_dir`.
///
/// Returns [`HarnessError::Partial`] after writing everything if any cell failed.
pub fn run_experiment(
    data: &Prepared,
    config: &TrainConfig,
    plan: &ExperimentPlan,
    out_dir: &Path,
    log: &(dyn Fn(&str) + Sync),
) -> Result<(), HarnessError> {
    plan.validate()?;
    let test = data.require_test()?;
    let val = if plan.grid_step.is_some() {
        Some(data.require_val()?)
    } else {
        None
    };
    for sub in ["", "traces", "coresets"] {
        mkdir(&out_dir.join(sub))?;
    }
    let extended = plan.extended || plan.methods.iter().any(|&m| needs_extended(m));
    let mut state = ReportState {
        data,
        config,
        plan,
        cells: plan.cells(data.train.len()),
        reference: Vec::new(),
        wall_clock: BTreeMap::new(),
        finished: false,
    };
    state.write_json(out_dir)?;
    let started = Instant::now();
    let (mut train_secs, mut select_secs, mut retrain_secs) = (0.0, 0.0, 0.0);

    for &seed in &plan.seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        log(&format!("seed {seed}: training surrogate for {} epochs", cfg.epochs));
        let t0 = Instant::now();
        let surrogate = record_dynamics(&data.train, &cfg, extended, |_| {}).and_then(|(trace, model)| {
            let acc = evaluate(&model, test)?;
            write_trace(&trace, &out_dir.join(format!("traces/seed-{seed}.trace")))?;
            Ok((trace, acc))
        });
        train_secs += t0.elapsed().as_secs_f64();
        let trace = match surrogate {
            Ok((trace, acc)) => {
                state.reference.push((seed, Ok(acc)));
                trace
            }
            Err(e) => {
                let msg = format!("surrogate training: {e}");
                log(&format!("seed {seed}: {msg}"));
                state.reference.push((seed, Err(msg.clone())));
                for c in &mut state.cells {
                    c.runs.push((seed, Outcome::Failed(msg.clone())));
                }
                state.write_json(out_dir)?;
                continue;
            }
        };

        let results: Vec<CellResult> = state
            .cells
            .par_iter()
            .map(|cell| {
                let t0 = Instant::now();
                let req = SelectRequest {
                    method: cell.method,
                    beta: cell.beta,
                    window_k: cell.window_k.unwrap_or(0),
                    window_start: plan.window_start,
                    w_mode: plan.w_mode,
                    seed,
                    grid: match (plan.grid_step, val) {
                        (Some(step), Some(val)) => Some(GridContext {
                            train: &data.train,
                            val,
                            config: &cfg,
                            step,
                        }),
                        _ => None,
                    },
                };
                let selection = select(&trace, &req);
                let select_secs = t0.elapsed().as_secs_f64();
                let t1 = Instant::now();
                let (outcome, spec) = match selection.and_then(|s| {
                    retrain_accuracy(&data.train, &s.spec.indices, &cfg, test).map(|acc| (acc, s.spec))
                }) {
                    Ok((accuracy, spec)) => (
                        Outcome::Done {
                            accuracy,
                            window_start: spec.window.map(|w| w.0),
                            coreset: format!("coresets/{}-beta{}-seed{seed}.txt", cell.label(), cell.beta),
                        },
                        Some(spec),
                    ),
                    Err(e) => (Outcome::Failed(e.to_string()), None),
                };
                CellResult {
                    outcome,
                    spec,
                    select_secs,
                    retrain_secs: t1.elapsed().as_secs_f64(),
                }
            })
            .collect();

        for (cell, r) in state.cells.iter_mut().zip(results) {
            select_secs += r.select_secs;
            retrain_secs += r.retrain_secs;
            match (&r.outcome, &r.spec) {
                (Outcome::Done { coreset, accuracy, .. }, Some(spec)) => {
                    write_file(&out_dir.join(coreset), spec.to_text())?;
                    log(&format!("seed {seed}: {} beta={} M={} accuracy {accuracy:.4}", cell.label(), cell.beta, cell.size));
                }
                (Outcome::Failed(e), _) => {
                    log(&format!("seed {seed}: {} beta={} failed: {e}", cell.label(), cell.beta));
                }
                _ => {}
            }
            cell.runs.push((seed, r.outcome));
        }

        if let Some(&k) = plan.window_ks.first() {
            if let Ok(report) = unreliability_scores(&trace, default_window_start(trace.epoch_count, k), k, plan.w_mode) {
                let marked = state
                    .cells
                    .iter()
                    .filter(|c| c.method == Method::Ducs && c.window_k == Some(k))
                    .min_by(|a, b| a.beta.total_cmp(&b.beta))
                    .and_then(|c| match &c.runs.last() {
                        Some((_, Outcome::Done { coreset, .. })) => Some(out_dir.join(coreset)),
                        _ => None,
                    });
                let selected = match marked {
                    Some(p) => CoresetSpec::read(&p)?.indices,
                    None => Vec::new(),
                };
                let title = format!("seed {seed}: F vs V over epochs {}..{}", report.window_start, trace.epoch_count);
                write_file(
                    &out_dir.join(format!("scatter-seed-{seed}.svg")),
                    scatter_svg(&report.v, &report.f, &selected, &title),
                )?;
            }
        }
        state.write_json(out_dir)?;
    }

    state.finished = true;
    state.wall_clock = BTreeMap::from([
        ("train_dynamics_s", train_secs),
        ("selection_s", select_secs),
        ("retrain_s", retrain_secs),
        ("total_s", started.elapsed().as_secs_f64()),
    ]);
    write_file(&out_dir.join("report.csv"), state.to_csv())?;
    state.write_json(out_dir)?;
    match state.failures() {
        0 => Ok(()),
        failed => Err(HarnessError::Partial {
            failed,
            total: state.cells.len(),
        }),
    }
}
