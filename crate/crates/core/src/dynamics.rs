//! Per-sample training dynamics: the recorded confidence/correctness trace,
//! forgetting events and frequencies, and windowed confidence variances.
//!
//! Epochs are 1-based throughout this module, matching window starts
//! `1..=T-K+1`.

mod format;

pub use format::{read_trace, write_trace, TraceError, MAGIC_V1, MAGIC_V2};

use crate::evidential::softmax;
use crate::model::{EpochRecord, Recorder};
use crate::numerics::{window_variance, NumericError};

/// Channels only needed by the baseline scorers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedChannels {
    /// `N × T`: softmax probability of the true class minus the largest other class.
    pub margins: Vec<f64>,
    /// `N × C`: softmax probabilities at the final epoch.
    pub final_probs: Vec<f64>,
    pub labels: Vec<u32>,
}

/// Confidence `S_t` and correctness `d_t` for every sample and epoch.
///
/// Floating-point channels hold values already rounded to `f32`, so a trace
/// read back from disk is identical to the one that was written.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub sample_count: usize,
    pub class_count: usize,
    pub epoch_count: usize,
    /// Row-major `N × T`.
    pub confidence: Vec<f64>,
    /// Row-major `N × T`.
    pub correctness: Vec<bool>,
    pub dataset_fingerprint: u64,
    pub seed: u64,
    pub extended: Option<ExtendedChannels>,
}

impl TrainingTrace {
    pub fn confidence_row(&self, i: usize) -> &[f64] {
        &self.confidence[i * self.epoch_count..(i + 1) * self.epoch_count]
    }

    pub fn correctness_row(&self, i: usize) -> &[bool] {
        &self.correctness[i * self.epoch_count..(i + 1) * self.epoch_count]
    }

    /// Checks shapes and value ranges.
    pub fn validate(&self) -> Result<(), String> {
        let (n, c, t) = (self.sample_count, self.class_count, self.epoch_count);
        if c < 2 || t == 0 {
            return Err(format!("degenerate shape N={n} C={c} T={t}"));
        }
        if self.confidence.len() != n * t || self.correctness.len() != n * t {
            return Err("channel sizes disagree with N × T".into());
        }
        // f32 storage may round √C down by a few ulps.
        let floor = (c as f64).sqrt() * (1.0 - 1e-6);
        if let Some(k) = self.confidence.iter().position(|&s| !(s >= floor) || !s.is_finite()) {
            return Err(format!(
                "confidence {} at sample {}, epoch {} is below √C",
                self.confidence[k],
                k / t,
                k % t + 1
            ));
        }
        if let Some(ext) = &self.extended {
            if ext.margins.len() != n * t || ext.final_probs.len() != n * c || ext.labels.len() != n {
                return Err("extended channel sizes disagree with N, C, T".into());
            }
            if ext.labels.iter().any(|&l| l as usize >= c) {
                return Err("extended label outside 0..C".into());
            }
        }
        Ok(())
    }
}

/// Forgetting events, cumulative counts and final-epoch frequencies for a whole trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingStats {
    /// `N × T`.
    pub events: Vec<bool>,
    /// `N × T`.
    pub cumulative: Vec<u32>,
    pub frequency_final: Vec<f64>,
}

/// `γ_t = 1` iff the sample was correct at `t-1` and wrong at `t`; `γ_1 = 0`.
pub fn forgetting_events(correctness: &[bool]) -> Vec<bool> {
    let mut out = vec![false; correctness.len()];
    for t in 1..correctness.len() {
        out[t] = correctness[t - 1] && !correctness[t];
    }
    out
}

/// Running count of forgetting events, `R_t`.
pub fn cumulative_forgetting(correctness: &[bool]) -> Vec<u32> {
    forgetting_events(correctness)
        .into_iter()
        .scan(0u32, |acc, e| {
            *acc += e as u32;
            Some(*acc)
        })
        .collect()
}

/// `F_t = R_t / t`, except that a sample never classified correctly during
/// epochs `1..=t` gets `F_t = 1`.
///
/// # Panics
/// If `t` is 0 or exceeds the row length.
pub fn forgetting_frequency(correctness: &[bool], t: usize) -> f64 {
    assert!(t >= 1 && t <= correctness.len(), "epoch {t} outside 1..={}", correctness.len());
    let prefix = &correctness[..t];
    if !prefix.iter().any(|&d| d) {
        return 1.0;
    }
    let forgotten = prefix.windows(2).filter(|w| w[0] && !w[1]).count();
    forgotten as f64 / t as f64
}

pub fn forgetting_stats(trace: &TrainingTrace) -> ForgettingStats {
    let t = trace.epoch_count;
    let mut events = Vec::with_capacity(trace.sample_count * t);
    let mut cumulative = Vec::with_capacity(trace.sample_count * t);
    let mut frequency_final = Vec::with_capacity(trace.sample_count);
    for i in 0..trace.sample_count {
        let row = trace.correctness_row(i);
        events.extend(forgetting_events(row));
        cumulative.extend(cumulative_forgetting(row));
        frequency_final.push(forgetting_frequency(row, t));
    }
    ForgettingStats {
        events,
        cumulative,
        frequency_final,
    }
}

/// Per-sample population variance of confidence over epochs
/// `window_start..window_start + k` (1-based).
pub fn inward_variances(
    trace: &TrainingTrace,
    window_start: usize,
    k: usize,
) -> Result<Vec<f64>, NumericError> {
    if window_start == 0 {
        return Err(NumericError::WindowOutOfBounds {
            start: 0,
            k,
            len: trace.epoch_count,
        });
    }
    (0..trace.sample_count)
        .map(|i| window_variance(trace.confidence_row(i), window_start - 1, k))
        .collect()
}

/// Human-readable dump: one line per sample with its final forgetting
/// frequency, the variance over the last `k` epochs, and the last correctness bit.
pub fn inspect(trace: &TrainingTrace, k: usize) -> String {
    let t = trace.epoch_count;
    let k = k.clamp(1, t);
    let mut out = format!(
        "# N={} C={} T={} seed={} fingerprint={:#018x} extended={} window={},{}\n# index F V last_d\n",
        trace.sample_count,
        trace.class_count,
        t,
        trace.seed,
        trace.dataset_fingerprint,
        trace.extended.is_some(),
        t - k + 1,
        k
    );
    for i in 0..trace.sample_count {
        let row = trace.correctness_row(i);
        let f = forgetting_frequency(row, t);
        let v = window_variance(trace.confidence_row(i), t - k, k).unwrap_or(f64::NAN);
        out.push_str(&format!("{i} {f:.6} {v:.6e} {}\n", row[t - 1] as u8));
    }
    out
}

/// [`Recorder`] that assembles a [`TrainingTrace`] epoch by epoch.
pub struct TraceBuilder {
    trace: TrainingTrace,
    filled: Vec<bool>,
}

impl TraceBuilder {
    pub fn new(
        sample_count: usize,
        class_count: usize,
        epoch_count: usize,
        seed: u64,
        dataset_fingerprint: u64,
        extended: bool,
    ) -> Self {
        let cells = sample_count * epoch_count;
        Self {
            trace: TrainingTrace {
                sample_count,
                class_count,
                epoch_count,
                confidence: vec![0.0; cells],
                correctness: vec![false; cells],
                dataset_fingerprint,
                seed,
                extended: extended.then(|| ExtendedChannels {
                    margins: vec![0.0; cells],
                    final_probs: vec![0.0; sample_count * class_count],
                    labels: vec![0; sample_count],
                }),
            },
            filled: vec![false; epoch_count],
        }
    }

    /// Fails unless every epoch has been recorded.
    pub fn finish(self) -> Result<TrainingTrace, String> {
        if let Some(e) = self.filled.iter().position(|&f| !f) {
            return Err(format!("epoch {} was never recorded", e + 1));
        }
        self.trace.validate()?;
        Ok(self.trace)
    }
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl Recorder for TraceBuilder {
    fn record(&mut self, r: &EpochRecord<'_>) -> Result<(), String> {
        let tr = &mut self.trace;
        let (n, t, c) = (tr.sample_count, tr.epoch_count, tr.class_count);
        let e = r.epoch as usize;
        if e == 0 || e > t {
            return Err(format!("epoch {e} outside 1..={t}"));
        }
        if r.confidence.len() != n || r.correct.len() != n || r.class_count != c {
            return Err(format!(
                "record shape ({} samples, {} classes) does not match trace ({n}, {c})",
                r.confidence.len(),
                r.class_count
            ));
        }
        for i in 0..n {
            tr.confidence[i * t + e - 1] = round_f32(r.confidence[i]);
            tr.correctness[i * t + e - 1] = r.correct[i];
        }
        if let Some(ext) = &mut tr.extended {
            for i in 0..n {
                let p = softmax(&r.logits[i * c..(i + 1) * c]);
                let y = r.labels[i] as usize;
                let other = p
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != y)
                    .map(|(_, &v)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                ext.margins[i * t + e - 1] = round_f32(p[y] - other);
                if e == t {
                    for (j, v) in p.iter().enumerate() {
                        ext.final_probs[i * c + j] = round_f32(*v);
                    }
                }
                ext.labels[i] = r.labels[i];
            }
        }
        self.filled[e - 1] = true;
        Ok(())
    }
}
