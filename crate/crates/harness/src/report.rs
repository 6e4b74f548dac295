//! Text rendering of experiment reports.

use crate::error::HarnessError;
use serde_json::Value;
use std::fmt::Write;

fn pct(v: &Value) -> String {
    v.as_f64().map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into())
}

/// Accuracy table in percent, one row per cell plus the full-data reference.
pub fn render(report: &Value) -> Result<String, HarnessError> {
    let bad = |what: &str| HarnessError::Data(format!("report is missing `{what}`"));
    let dataset = report.get("dataset").ok_or_else(|| bad("dataset"))?;
    let cells = report
        .get("cells")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("cells"))?;
    let reference = report.get("full_reference").ok_or_else(|| bad("full_reference"))?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "dataset   {}  (train {}, val {}, test {})",
        dataset["descriptor"].as_str().unwrap_or("?"),
        dataset["train"],
        dataset["val"],
        dataset["test"]
    );
    let _ = writeln!(s, "status    {}", report["status"].as_str().unwrap_or("?"));
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<12} {:>4} {:>8} {:>6} {:>8} {:>7}  status", "method", "k", "beta", "M", "acc%", "std%");
    let _ = writeln!(
        s,
        "{:<12} {:>4} {:>8} {:>6} {:>8} {:>7}  -",
        "full",
        "-",
        "1",
        dataset["train"].to_string(),
        pct(&reference["mean"]),
        pct(&reference["std"])
    );
    for c in cells {
        let k = match &c["window_k"] {
            Value::Null => "-".to_string(),
            v => v.to_string(),
        };
        let _ = writeln!(
            s,
            "{:<12} {:>4} {:>8} {:>6} {:>8} {:>7}  {}",
            c["method"].as_str().unwrap_or("?"),
            k,
            c["beta"].to_string(),
            c["M"].to_string(),
            pct(&c["mean"]),
            pct(&c["std"]),
            c["status"].as_str().unwrap_or("?")
        );
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn renders_rows() {
        let r = json!({
            "status": "complete",
            "dataset": {"descriptor": "blobs:", "train": 10, "val": 2, "test": 3},
            "full_reference": {"mean": 0.5, "std": null},
            "cells": [
                {"method": "ducs", "window_k": 10, "beta": 0.1, "M": 1, "mean": 0.25, "std": 0.125, "status": "done"},
                {"method": "random", "window_k": null, "beta": 0.1, "M": 1, "mean": null, "std": null, "status": "failed"}
            ]
        });
        let text = render(&r).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert!(lines[4].starts_with("full") && lines[4].contains("50.00"));
        assert!(lines[5].contains("25.00") && lines[5].contains("12.50") && lines[5].ends_with("done"));
        assert!(lines[6].contains(" - ") && lines[6].ends_with("failed"));
        assert!(render(&json!({})).is_err());
    }
}
