//! Unreliability scoring, top-M coreset selection, window grid search and the
//! baseline scorers it is compared against.
//!
//! Every scorer follows one convention: a higher score is selected first.

use crate::dynamics::{forgetting_frequency, inward_variances, TrainingTrace};
use crate::numerics::NumericError;
use crate::rng::{Prng, Stream};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Ordering applied by [`select_top`]: score descending, then the secondary
/// key descending, then sample index ascending.
pub const TIE_RULE: &str = "score-desc,secondary-desc,index-asc";

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error(transparent)]
    Window(#[from] NumericError),
    #[error("selection rate {0} not in (0, 1]")]
    Beta(f64),
    #[error("method `{method}` needs the `{channel}` channel; record the trace with --extended-trace")]
    MissingChannel {
        method: &'static str,
        channel: &'static str,
    },
    #[error("grid search candidate starting at epoch {start}: {message}")]
    Evaluator { start: usize, message: String },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("coreset file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How the weight `w` on the forgetting frequency is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WMode {
    /// `w = range(V) / range(F)`, or 1 when F is constant.
    Range,
    /// `w = std(V) / std(F)`, or 1 when F is constant.
    ZScore,
    Fixed(f64),
}

impl fmt::Display for WMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WMode::Range => f.write_str("range"),
            WMode::ZScore => f.write_str("zscore"),
            WMode::Fixed(w) => write!(f, "fixed:{w}"),
        }
    }
}

impl FromStr for WMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "range" => Ok(WMode::Range),
            "zscore" => Ok(WMode::ZScore),
            _ => {
                let w = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .ok_or_else(|| format!("bad w-mode `{s}` (expected range|zscore|fixed:W with W >= 0)"))?;
                Ok(WMode::Fixed(w))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnreliabilityReport {
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    pub u: Vec<f64>,
    pub w: f64,
    pub window_start: usize,
    pub window_k: usize,
}

impl UnreliabilityReport {
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "index,V,F,U")?;
        for i in 0..self.u.len() {
            writeln!(out, "{i},{},{},{}", self.v[i], self.f[i], self.u[i])?;
        }
        Ok(())
    }
}

fn spread(xs: &[f64]) -> f64 {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if xs.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Weight aligning the scale of `f` to that of `v`.
pub fn balance_weight(v: &[f64], f: &[f64], mode: WMode) -> f64 {
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 1.0 };
    match mode {
        WMode::Range => ratio(spread(v), spread(f)),
        WMode::ZScore => ratio(std_dev(v), std_dev(f)),
        WMode::Fixed(w) => w,
    }
}

/// The latest window of length `k`.
pub fn default_window_start(epochs: usize, k: usize) -> usize {
    epochs.saturating_sub(k) + 1
}

/// `U = w·F_T + V` with `V` over the given window.
pub fn unreliability_scores(
    trace: &TrainingTrace,
    window_start: usize,
    k: usize,
    w_mode: WMode,
) -> Result<UnreliabilityReport, SelectionError> {
    let v = inward_variances(trace, window_start, k)?;
    let t = trace.epoch_count;
    let f: Vec<f64> = (0..trace.sample_count)
        .map(|i| forgetting_frequency(trace.correctness_row(i), t))
        .collect();
    let w = balance_weight(&v, &f, w_mode);
    let u = v.iter().zip(&f).map(|(vi, fi)| w * fi + vi).collect();
    Ok(UnreliabilityReport {
        v,
        f,
        u,
        w,
        window_start,
        window_k: k,
    })
}

/// `⌈β·N⌉`, treating products within 1e-9 of an integer as that integer so
/// that e.g. `0.05 · 100` gives 5 rather than 6.
pub fn coreset_size(beta: f64, n: usize) -> usize {
    let x = beta * n as f64;
    let r = x.round();
    let m = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (m as usize).min(n)
}

/// Indices of the `⌈β·N⌉` best scores under [`TIE_RULE`].
pub fn rank_top(scores: &[f64], secondary: &[f64], beta: f64) -> Result<Vec<usize>, SelectionError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(SelectionError::Beta(beta));
    }
    assert_eq!(scores.len(), secondary.len(), "score/secondary length mismatch");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(secondary[b].total_cmp(&secondary[a]))
            .then(a.cmp(&b))
    });
    order.truncate(coreset_size(beta, scores.len()));
    Ok(order)
}

/// A selected subset of the training split, in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoresetSpec {
    pub beta: f64,
    pub size: usize,
    pub indices: Vec<usize>,
    pub scorer_name: String,
    pub tie_rule: String,
    /// Number of samples the selection was made from.
    pub sample_count: usize,
    pub dataset_fingerprint: u64,
    pub window: Option<(usize, usize)>,
    pub w: Option<f64>,
}

impl CoresetSpec {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# scorer={}\n# beta={}\n# M={}\n",
            self.scorer_name, self.beta, self.size
        );
        match self.window {
            Some((start, k)) => s.push_str(&format!("# window={start},{k}\n")),
            None => s.push_str("# window=none\n"),
        }
        match self.w {
            Some(w) => s.push_str(&format!("# w={w}\n")),
            None => s.push_str("# w=none\n"),
        }
        s.push_str(&format!(
            "# N={}\n# fingerprint={:#018x}\n# tie_rule={}\n",
            self.sample_count, self.dataset_fingerprint, self.tie_rule
        ));
        for i in &self.indices {
            s.push_str(&format!("{i}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SelectionError> {
        let bad = |m: String| SelectionError::Format(m);
        let mut header = std::collections::HashMap::new();
        let mut indices = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| bad(format!("line {}: malformed header `{line}`", ln + 1)))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                indices.push(
                    line.parse::<usize>()
                        .map_err(|_| bad(format!("line {}: `{line}` is not an index", ln + 1)))?,
                );
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| bad(format!("missing `# {k}=` header")));
        let num = |k: &str| -> Result<f64, SelectionError> {
            get(k)?.parse().map_err(|_| bad(format!("header `{k}` is not numeric")))
        };
        let beta = num("beta")?;
        let size = num("M")? as usize;
        let sample_count = num("N")? as usize;
        let fp_text = get("fingerprint")?;
        let dataset_fingerprint = u64::from_str_radix(fp_text.trim_start_matches("0x"), 16)
            .map_err(|_| bad(format!("bad fingerprint `{fp_text}`")))?;
        let window = match get("window")?.as_str() {
            "none" => None,
            w => {
                let (a, b) = w
                    .split_once(',')
                    .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                    .ok_or_else(|| bad(format!("bad window `{w}`")))?;
                Some((a, b))
            }
        };
        let w = match get("w")?.as_str() {
            "none" => None,
            _ => Some(num("w")?),
        };
        let spec = Self {
            beta,
            size,
            indices,
            scorer_name: get("scorer")?.clone(),
            tie_rule: header.get("tie_rule").cloned().unwrap_or_else(|| TIE_RULE.to_string()),
            sample_count,
            dataset_fingerprint,
            window,
            w,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |m: String| Err(SelectionError::Format(m));
        if self.indices.len() != self.size {
            return bad(format!("M={} but {} indices listed", self.size, self.indices.len()));
        }
        if self.size != coreset_size(self.beta, self.sample_count) {
            return bad(format!(
                "M={} disagrees with ceil({} * {})",
                self.size, self.beta, self.sample_count
            ));
        }
        let mut seen = vec![false; self.sample_count];
        for &i in &self.indices {
            if i >= self.sample_count {
                return bad(format!("index {i} out of range for N={}", self.sample_count));
            }
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("index {i} listed twice"));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), SelectionError> {
        std::fs::write(path, self.to_text()).map_err(|source| SelectionError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, SelectionError> {
        let text = std::fs::read_to_string(path).map_err(|source| SelectionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Selects by `U`, breaking ties on the higher forgetting frequency.
pub fn select_top(
    report: &UnreliabilityReport,
    beta: f64,
    dataset_fingerprint: u64,
) -> Result<CoresetSpec, SelectionError> {
    let indices = rank_top(&report.u, &report.f, beta)?;
    Ok(CoresetSpec {
        beta,
        size: indices.len(),
        indices,
        scorer_name: "ducs".into(),
        tie_rule: TIE_RULE.into(),
        sample_count: report.u.len(),
        dataset_fingerprint,
        window: Some((report.window_start, report.window_k)),
        w: Some(report.w),
    })
}

/// Selects by a baseline score vector; ties fall back to sample index.
pub fn select_by_scores(
    scores: &[f64],
    beta: f64,
    scorer_name: &str,
    dataset_fingerprint: u64,
) -> Result<CoresetSpec, SelectionError> {
    let zeros = vec![0.0; scores.len()];
    let indices = rank_top(scores, &zeros, beta)?;
    Ok(CoresetSpec {
        beta,
        size: indices.len(),
        indices,
        scorer_name: scorer_name.into(),
        tie_rule: TIE_RULE.into(),
        sample_count: scores.len(),
        dataset_fingerprint,
        window: None,
        w: None,
    })
}

/// Window starts `1, 1 + step, …` up to `T - k + 1`.
pub fn grid_candidates(epochs: usize, k: usize, step: usize) -> Result<Vec<usize>, SelectionError> {
    if step == 0 {
        return Err(SelectionError::Grid("grid step must be at least 1".into()));
    }
    if k == 0 || k > epochs {
        return Err(SelectionError::Grid(format!("window length {k} not in 1..={epochs}")));
    }
    Ok((1..=epochs - k + 1).step_by(step).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_start: usize,
    /// `(window_start, validation accuracy)` per candidate.
    pub candidates: Vec<(usize, f64)>,
}

/// Scores, selects and evaluates every candidate window; returns the start with
/// the highest accuracy, preferring the later window on ties.
pub fn window_grid_search<E: fmt::Display>(
    trace: &TrainingTrace,
    k: usize,
    grid_step: usize,
    w_mode: WMode,
    beta: f64,
    mut evaluator: impl FnMut(&CoresetSpec) -> Result<f64, E>,
) -> Result<GridSearchResult, SelectionError> {
    let starts = grid_candidates(trace.epoch_count, k, grid_step)?;
    let mut candidates = Vec::with_capacity(starts.len());
    for start in starts {
        let report = unreliability_scores(trace, start, k, w_mode)?;
        let spec = select_top(&report, beta, trace.dataset_fingerprint)?;
        let acc = evaluator(&spec).map_err(|e| SelectionError::Evaluator {
            start,
            message: e.to_string(),
        })?;
        candidates.push((start, acc));
    }
    let best_start = candidates
        .iter()
        .fold(None::<(usize, f64)>, |best, &(s, a)| match best {
            Some((_, ba)) if a < ba => best,
            _ => Some((s, a)),
        })
        .map(|(s, _)| s)
        .expect("grid has at least one candidate");
    Ok(GridSearchResult {
        best_start,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Baseline {
    Random,
    Entropy,
    Forgetting,
    El2n,
    Aum,
}

/// Any selection method the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ducs,
    Baseline(Baseline),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ducs,
        Method::Baseline(Baseline::Random),
        Method::Baseline(Baseline::Entropy),
        Method::Baseline(Baseline::Forgetting),
        Method::Baseline(Baseline::El2n),
        Method::Baseline(Baseline::Aum),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ducs => "ducs",
            Method::Baseline(Baseline::Random) => "random",
            Method::Baseline(Baseline::Entropy) => "entropy",
            Method::Baseline(Baseline::Forgetting) => "forgetting",
            Method::Baseline(Baseline::El2n) => "el2n",
            Method::Baseline(Baseline::Aum) => "aum",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected ducs|random|entropy|forgetting|el2n|aum)"))
    }
}

/// Baseline scores, higher first.
///
/// * Random: uniform draws from the seeded generator.
/// * Entropy: entropy of the final-epoch softmax.
/// * Forgetting: total forgetting events; never-learned samples get `T`,
///   above any reachable count.
/// * EL2N: `‖p - y‖₂` of the final-epoch softmax.
/// * AUM: negated mean over epochs of `p_true - max_{c≠true} p_c`.
pub fn baseline_scores(
    trace: &TrainingTrace,
    method: Baseline,
    seed: u64,
) -> Result<Vec<f64>, SelectionError> {
    let n = trace.sample_count;
    let c = trace.class_count;
    let t = trace.epoch_count;
    let need = |channel: &'static str| {
        let method = Method::Baseline(method).name();
        trace
            .extended
            .as_ref()
            .ok_or(SelectionError::MissingChannel { method, channel })
    };
    Ok(match method {
        Baseline::Random => {
            let mut rng = Prng::new(seed, Stream::RandomScores, 0);
            (0..n).map(|_| rng.next_f64()).collect()
        }
        Baseline::Forgetting => (0..n)
            .map(|i| {
                let row = trace.correctness_row(i);
                if row.iter().any(|&d| d) {
                    row.windows(2).filter(|w| w[0] && !w[1]).count() as f64
                } else {
                    t as f64
                }
            })
            .collect(),
        Baseline::Entropy => {
            let ext = need("final_probs")?;
            (0..n)
                .map(|i| {
                    -ext.final_probs[i * c..(i + 1) * c]
                        .iter()
                        .filter(|&&p| p > 0.0)
                        .map(|&p| p * p.ln())
                        .sum::<f64>()
                })
                .collect()
        }
        Baseline::El2n => {
            let ext = need("final_probs")?;
            (0..n)
                .map(|i| {
                    let y = ext.labels[i] as usize;
                    ext.final_probs[i * c..(i + 1) * c]
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| {
                            let d = p - if j == y { 1.0 } else { 0.0 };
                            d * d
                        })
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        }
        Baseline::Aum => {
            let ext = need("margins")?;
            (0..n)
                .map(|i| -ext.margins[i * t..(i + 1) * t].iter().sum::<f64>() / t as f64)
                .collect()
        }
    })
}

pub fn write_scores_csv(scores: &[f64], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "index,score")?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{i},{s}")?;
    }
    Ok(())
}
