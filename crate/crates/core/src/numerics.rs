//! Special functions and small numerical utilities.
//!
//! Digamma and trigamma lift the argument above [`ASYMPTOTIC_THRESHOLD`] with
//! the upward recurrences and finish with the Bernoulli asymptotic series.
//! `log_gamma` uses the same shift followed by the Stirling series.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("{function}: argument {value} outside the domain ({domain})")]
    Domain {
        function: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("window [{start}, {start}+{k}) exceeds sequence of length {len}")]
    WindowOutOfBounds { start: usize, k: usize, len: usize },
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

const ASYMPTOTIC_THRESHOLD: f64 = 6.0;

/// B_{2k} / (2k) for k = 1..6.
const DIGAMMA_SERIES: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
];

/// B_{2k} for k = 1..6, the coefficients of x^{-(2k+1)} in ψ'(x).
const TRIGAMMA_SERIES: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// B_{2k} / (2k (2k - 1)) for k = 1..6.
const STIRLING_SERIES: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
];

const LOG_GAMMA_THRESHOLD: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check_positive(function: &'static str, x: f64) -> Result<(), NumericError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(NumericError::Domain {
            function,
            value: x,
            domain: "x > 0",
        })
    }
}

/// ψ(x), the logarithmic derivative of Γ.
pub fn digamma(x: f64) -> Result<f64, NumericError> {
    check_positive("digamma", x)?;
    let mut acc = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut pow = inv2;
    let mut tail = 0.0;
    for c in DIGAMMA_SERIES {
        tail += c * pow;
        pow *= inv2;
    }
    Ok(acc + z.ln() - 0.5 / z - tail)
}

/// ψ'(x).
pub fn trigamma(x: f64) -> Result<f64, NumericError> {
    check_positive("trigamma", x)?;
    let mut acc = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut pow = inv2 * inv;
    let mut tail = 0.0;
    for c in TRIGAMMA_SERIES {
        tail += c * pow;
        pow *= inv2;
    }
    Ok(acc + inv + 0.5 * inv2 + tail)
}

/// ln Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64, NumericError> {
    check_positive("log_gamma", x)?;
    // ln Γ(x) = ln Γ(x + n) - ln(x (x+1) ... (x+n-1)); the product is
    // accumulated directly and stays well inside f64 range for n ≤ 10.
    let mut prod = 1.0;
    let mut z = x;
    while z < LOG_GAMMA_THRESHOLD {
        prod *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut tail = 0.0;
    for c in STIRLING_SERIES {
        tail += c * pow;
        pow *= inv2;
    }
    Ok((z - 0.5) * z.ln() - z + HALF_LN_2PI + tail - prod.ln())
}

/// Population variance (divisor `k`) of `sequence[start..start + k]`.
pub fn window_variance(sequence: &[f64], start: usize, k: usize) -> Result<f64, NumericError> {
    if k == 0 {
        return Err(NumericError::EmptyWindow);
    }
    let end = start
        .checked_add(k)
        .filter(|&e| e <= sequence.len())
        .ok_or(NumericError::WindowOutOfBounds {
            start,
            k,
            len: sequence.len(),
        })?;
    let window = &sequence[start..end];
    let n = k as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok(var)
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn fd_gradient<F, E>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe)?;
        probe[j] = x[j] - h;
        let down = f(&probe)?;
        probe[j] = x[j];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}
