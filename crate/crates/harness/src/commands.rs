use crate::cli::{ExperimentArgs, InspectArgs, RenderArgs, RetrainEvalArgs, SelectArgs, TrainDynamicsArgs};
use crate::error::HarnessError;
use crate::experiment::{run_experiment, ExperimentPlan};
use crate::pipeline::{self, load_train_config, record_dynamics, retrain_accuracy, summarize, write_file, GridContext, SelectRequest};
use crate::report::render;
use ducs::dynamics::{inspect, read_trace, write_trace};
use ducs::selection::{CoresetSpec, Method};
use serde_json::json;
use std::path::{Path, PathBuf};

fn emit(text: &str, out: Option<&Path>) -> Result<(), HarnessError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn train_dynamics(a: &TrainDynamicsArgs) -> Result<(), HarnessError> {
    let data = a.data.require()?;
    let cfg = load_train_config(a.config.as_deref(), &data.train, a.seed)?;
    let (trace, _) = record_dynamics(&data.train, &cfg, a.extended_trace, |s| {
        println!(
            "epoch {:>4}  loss {:.6}  train_acc {:.4}",
            s.epoch, s.mean_loss, s.train_accuracy
        );
    })?;
    write_trace(&trace, &a.out)?;
    eprintln!(
        "wrote {} (N={} C={} T={})",
        a.out.display(),
        trace.sample_count,
        trace.class_count,
        trace.epoch_count
    );
    Ok(())
}

pub fn select(a: &SelectArgs) -> Result<(), HarnessError> {
    let trace = read_trace(&a.trace)?;
    let data = a.data.load()?;
    if let Some(d) = &data {
        d.check_fingerprint("trace", trace.dataset_fingerprint, trace.sample_count)?;
    }
    let seed = a.seed.unwrap_or(trace.seed);
    let grid_data = match (&data, a.grid_search) {
        (_, false) => None,
        (None, true) => return Err(HarnessError::Usage("--grid-search needs --dataset".into())),
        (Some(d), true) => {
            if a.method != Method::Ducs {
                return Err(HarnessError::Usage("--grid-search applies only to --method ducs".into()));
            }
            let cfg = load_train_config(a.config.as_deref(), &d.train, Some(seed))?;
            Some((d, d.require_val()?, cfg))
        }
    };
    let req = SelectRequest {
        method: a.method,
        beta: a.beta,
        window_k: a.window_k,
        window_start: a.window_start,
        w_mode: a.w_mode,
        seed,
        grid: grid_data.as_ref().map(|(d, val, cfg)| GridContext {
            train: &d.train,
            val,
            config: cfg,
            step: a.grid_step,
        }),
    };
    let selection = pipeline::select(&trace, &req)?;
    selection.spec.write(&a.out)?;
    let scores = a.scores.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".csv");
        PathBuf::from(p)
    });
    write_file(&scores, &selection.scores_csv)?;
    eprintln!(
        "selected {} of {} samples with {} -> {}",
        selection.spec.size,
        selection.spec.sample_count,
        a.method,
        a.out.display()
    );
    Ok(())
}

pub fn retrain_eval(a: &RetrainEvalArgs) -> Result<(), HarnessError> {
    let data = a.data.require()?;
    let coreset = CoresetSpec::read(&a.coreset)?;
    data.check_fingerprint("coreset", coreset.dataset_fingerprint, coreset.sample_count)?;
    let test = data.require_test()?;
    let base = load_train_config(a.config.as_deref(), &data.train, a.seed)?;
    let seeds = if a.seeds.is_empty() { vec![base.seed] } else { a.seeds.clone() };
    let accuracies = seeds
        .iter()
        .map(|&seed| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            retrain_accuracy(&data.train, &coreset.indices, &cfg, test)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, std) = summarize(&accuracies);
    let report = json!({
        "scorer": coreset.scorer_name,
        "beta": coreset.beta,
        "M": coreset.size,
        "seeds": seeds,
        "accuracies": accuracies,
        "mean": mean,
        "std": std,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(p) = &a.out {
        write_file(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

pub fn experiment(a: &ExperimentArgs) -> Result<(), HarnessError> {
    let data = a.data.require()?;
    let config = load_train_config(a.config.as_deref(), &data.train, a.seed)?;
    let seeds = if a.seeds.is_empty() { vec![config.seed] } else { a.seeds.clone() };
    let plan = ExperimentPlan {
        methods: a.method.clone(),
        betas: a.beta.clone(),
        seeds,
        window_ks: a.window_k.clone(),
        window_start: a.window_start,
        w_mode: a.w_mode,
        grid_step: a.grid_search.then_some(a.grid_step),
        extended: a.extended_trace,
    };
    let quiet = a.quiet;
    let log = move |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    let result = run_experiment(&data, &config, &plan, &a.out, &log);
    eprintln!("report written to {}", a.out.join("report.json").display());
    result
}

pub fn trace_inspect(a: &InspectArgs) -> Result<(), HarnessError> {
    let trace = read_trace(&a.trace)?;
    if a.window_k == 0 || a.window_k > trace.epoch_count {
        return Err(HarnessError::Usage(format!(
            "--window-k {} not in 1..={}",
            a.window_k, trace.epoch_count
        )));
    }
    emit(&inspect(&trace, a.window_k), a.out.as_deref())
}

pub fn report_render(a: &RenderArgs) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&a.report).map_err(|e| HarnessError::io(&a.report, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Data(format!("{}: {e}", a.report.display())))?;
    emit(&render(&value)?, a.out.as_deref())
}
