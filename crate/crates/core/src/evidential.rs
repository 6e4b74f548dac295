//! Evidential (Dirichlet) view of classifier logits and the compound training loss.
//!
//! Logits `z` become Dirichlet parameters `α = ReLU(z) + 1`. The loss combines a
//! classification term, the expected cross-entropy under the Dirichlet
//! `ψ(Q) - ψ(α_true)`, and an annealed KL divergence from the uniform Dirichlet
//! computed on the parameters with the true-class evidence removed.
//!
//! The density `D(p | α)`, its normalizer `B(α)` and the simplex are only
//! definitional here; nothing samples from or integrates the density.

use crate::numerics::{digamma, log_gamma, trigamma, NumericError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidentialError {
    #[error("at least two classes are required, got {0}")]
    TooFewClasses(usize),
    #[error("non-finite logit at class {0}")]
    NonFiniteLogit(usize),
    #[error("label is not one-hot")]
    NotOneHot,
    #[error("length mismatch: {expected} classes expected, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("KL input {value} at class {index} is below 1")]
    KlDomain { index: usize, value: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Whether the compound loss carries a softmax cross-entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CeMode {
    #[default]
    Softmax,
    None,
}

impl CeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CeMode::Softmax => "softmax",
            CeMode::None => "none",
        }
    }
}

impl std::str::FromStr for CeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(CeMode::Softmax),
            "none" => Ok(CeMode::None),
            other => Err(format!("unknown ce_mode `{other}` (expected softmax|none)")),
        }
    }
}

/// Dirichlet belief over class probabilities for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialBelief {
    pub alpha: Vec<f64>,
    /// Dirichlet strength, the sum of `alpha`.
    pub strength: f64,
    /// Expected class probabilities `alpha / strength`.
    pub probs: Vec<f64>,
}

impl EvidentialBelief {
    pub fn class_count(&self) -> usize {
        self.alpha.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce_term: f64,
    pub dirichlet_term: f64,
    pub kl_term: f64,
    pub lambda_t: f64,
    pub total: f64,
}

/// Index of the hot entry, validating that `label` is one-hot over `classes`.
pub fn one_hot_index(label: &[f64], classes: usize) -> Result<usize, EvidentialError> {
    if label.len() != classes {
        return Err(EvidentialError::LengthMismatch {
            expected: classes,
            found: label.len(),
        });
    }
    let mut hot = None;
    for (c, &y) in label.iter().enumerate() {
        if y == 1.0 {
            if hot.is_some() {
                return Err(EvidentialError::NotOneHot);
            }
            hot = Some(c);
        } else if y != 0.0 {
            return Err(EvidentialError::NotOneHot);
        }
    }
    hot.ok_or(EvidentialError::NotOneHot)
}

fn check_logits(logits: &[f64]) -> Result<(), EvidentialError> {
    if logits.len() < 2 {
        return Err(EvidentialError::TooFewClasses(logits.len()));
    }
    if let Some(c) = logits.iter().position(|z| !z.is_finite()) {
        return Err(EvidentialError::NonFiniteLogit(c));
    }
    Ok(())
}

pub fn dirichlet_from_logits(logits: &[f64]) -> Result<EvidentialBelief, EvidentialError> {
    check_logits(logits)?;
    let alpha: Vec<f64> = logits.iter().map(|&z| z.max(0.0) + 1.0).collect();
    let strength: f64 = alpha.iter().sum();
    let probs = alpha.iter().map(|a| a / strength).collect();
    Ok(EvidentialBelief {
        alpha,
        strength,
        probs,
    })
}

/// Expected cross-entropy under the Dirichlet: `ψ(Q) - ψ(α_true)`.
pub fn dirichlet_ce_loss(belief: &EvidentialBelief, label: &[f64]) -> Result<f64, EvidentialError> {
    let t = one_hot_index(label, belief.class_count())?;
    Ok(digamma(belief.strength)? - digamma(belief.alpha[t])?)
}

/// `α̂ = (α - 1)(1 - y) + 1`: the true class drops to the baseline evidence of 1.
pub fn remove_incorrect_support(
    belief: &EvidentialBelief,
    label: &[f64],
) -> Result<Vec<f64>, EvidentialError> {
    let t = one_hot_index(label, belief.class_count())?;
    let mut hat = belief.alpha.clone();
    hat[t] = 1.0;
    Ok(hat)
}

/// KL divergence from `Dir(alpha_hat)` to the uniform `Dir(1)`.
pub fn kl_to_uniform(alpha_hat: &[f64]) -> Result<f64, EvidentialError> {
    if alpha_hat.len() < 2 {
        return Err(EvidentialError::TooFewClasses(alpha_hat.len()));
    }
    if let Some((index, &value)) = alpha_hat
        .iter()
        .enumerate()
        .find(|(_, &a)| !(a >= 1.0 - 1e-12) || !a.is_finite())
    {
        return Err(EvidentialError::KlDomain { index, value });
    }
    let classes = alpha_hat.len() as f64;
    let sum: f64 = alpha_hat.iter().sum();
    let psi_sum = digamma(sum)?;
    let mut kl = log_gamma(sum)? - log_gamma(classes)?;
    for &a in alpha_hat {
        // Entries at exactly 1 contribute -ln Γ(1) + 0 = 0.
        if a != 1.0 {
            kl -= log_gamma(a)?;
            kl += (a - 1.0) * (digamma(a)? - psi_sum);
        }
    }
    // Rounding can leave a tiny negative residue near the uniform point.
    Ok(kl.max(0.0))
}

/// `λ_t = lambda_max · min(1, epoch / anneal_epochs)`.
pub fn annealing_coefficient(epoch: u32, anneal_epochs: u32, lambda_max: f64) -> f64 {
    let ramp = epoch as f64 / anneal_epochs.max(1) as f64;
    lambda_max * ramp.min(1.0)
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn compound_loss(
    logits: &[f64],
    label: &[f64],
    lambda_t: f64,
    ce_mode: CeMode,
) -> Result<LossBreakdown, EvidentialError> {
    let belief = dirichlet_from_logits(logits)?;
    let t = one_hot_index(label, logits.len())?;
    let ce_term = match ce_mode {
        CeMode::Softmax => log_sum_exp(logits) - logits[t],
        CeMode::None => 0.0,
    };
    let dirichlet_term = dirichlet_ce_loss(&belief, label)?;
    let kl_term = kl_to_uniform(&remove_incorrect_support(&belief, label)?)?;
    Ok(LossBreakdown {
        ce_term,
        dirichlet_term,
        kl_term,
        lambda_t,
        total: ce_term + dirichlet_term + lambda_t * kl_term,
    })
}

/// Gradient of [`compound_loss`]'s total with respect to the logits.
///
/// The ReLU sub-gradient is 0 at `z_c <= 0` and 1 above.
pub fn compound_loss_gradient(
    logits: &[f64],
    label: &[f64],
    lambda_t: f64,
    ce_mode: CeMode,
) -> Result<Vec<f64>, EvidentialError> {
    let belief = dirichlet_from_logits(logits)?;
    let t = one_hot_index(label, logits.len())?;
    let mut grad = match ce_mode {
        CeMode::Softmax => {
            let mut p = softmax(logits);
            p[t] -= 1.0;
            p
        }
        CeMode::None => vec![0.0; logits.len()],
    };

    let trigamma_q = trigamma(belief.strength)?;
    // KL pieces over α̂ (true class pinned to 1, so it never receives KL gradient).
    let hat_sum: f64 = belief.strength - belief.alpha[t] + 1.0;
    let classes = logits.len() as f64;
    let kl_shared = (hat_sum - classes) * trigamma(hat_sum)?;

    for (c, g) in grad.iter_mut().enumerate() {
        if logits[c] <= 0.0 {
            continue;
        }
        let a = belief.alpha[c];
        // d/dα_c [ψ(Q) - ψ(α_t)]
        let mut d_alpha = trigamma_q;
        if c == t {
            d_alpha -= trigamma(a)?;
        } else if lambda_t != 0.0 {
            // d/dα̂_c KL = (α̂_c - 1) ψ'(α̂_c) - (Σα̂ - C) ψ'(Σα̂)
            d_alpha += lambda_t * ((a - 1.0) * trigamma(a)? - kl_shared);
        }
        *g += d_alpha;
    }
    Ok(grad)
}

/// Confidence score `‖α‖₂`.
pub fn confidence_score(belief: &EvidentialBelief) -> f64 {
    belief.alpha.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fd_gradient;
    use crate::rng::{Prng, Stream};
    use proptest::prelude::*;

    fn one_hot(c: usize, t: usize) -> Vec<f64> {
        let mut y = vec![0.0; c];
        y[t] = 1.0;
        y
    }

    #[test]
    fn belief_from_logits() {
        let b = dirichlet_from_logits(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(b.alpha, vec![1.0; 3]);
        assert_eq!(b.strength, 3.0);
        assert!(b.probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));

        let b = dirichlet_from_logits(&[2.0, -1.0, 0.0]).unwrap();
        assert_eq!(b.alpha, vec![3.0, 1.0, 1.0]);
        assert_eq!(b.strength, 5.0);
        for (p, e) in b.probs.iter().zip([0.6, 0.2, 0.2]) {
            assert!((p - e).abs() < 1e-15);
        }

        let b = dirichlet_from_logits(&[-5.0, -5.0]).unwrap();
        assert_eq!(b.alpha, vec![1.0, 1.0]);
        assert_eq!(b.probs, vec![0.5, 0.5]);

        assert_eq!(
            dirichlet_from_logits(&[0.0, f64::NAN]),
            Err(EvidentialError::NonFiniteLogit(1))
        );
        assert_eq!(dirichlet_from_logits(&[1.0]), Err(EvidentialError::TooFewClasses(1)));
    }

    #[test]
    fn dirichlet_ce_values() {
        let b = dirichlet_from_logits(&[0.0, 0.0]).unwrap();
        assert!((dirichlet_ce_loss(&b, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let b = dirichlet_from_logits(&[0.0, 0.0, 0.0]).unwrap();
        for t in 0..3 {
            assert!((dirichlet_ce_loss(&b, &one_hot(3, t)).unwrap() - 1.5).abs() < 1e-10);
        }
        // ψ(5) - ψ(3) = 1/3 + 1/4
        let b = dirichlet_from_logits(&[2.0, -1.0, 0.0]).unwrap();
        let v = dirichlet_ce_loss(&b, &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - (1.0 / 3.0 + 1.0 / 4.0)).abs() < 1e-12);
        assert_eq!(dirichlet_ce_loss(&b, &[0.5, 0.5, 0.0]), Err(EvidentialError::NotOneHot));
        assert_eq!(dirichlet_ce_loss(&b, &[0.0, 0.0, 0.0]), Err(EvidentialError::NotOneHot));
        assert_eq!(dirichlet_ce_loss(&b, &[1.0, 1.0, 0.0]), Err(EvidentialError::NotOneHot));
    }

    #[test]
    fn support_removal() {
        let b = |alpha: Vec<f64>| {
            let strength = alpha.iter().sum();
            EvidentialBelief {
                probs: alpha.iter().map(|a| a / strength).collect(),
                alpha,
                strength,
            }
        };
        assert_eq!(
            remove_incorrect_support(&b(vec![3.0, 1.0, 1.0]), &[1.0, 0.0, 0.0]).unwrap(),
            vec![1.0, 1.0, 1.0]
        );
        assert_eq!(
            remove_incorrect_support(&b(vec![2.0, 5.0, 1.0]), &[0.0, 1.0, 0.0]).unwrap(),
            vec![2.0, 1.0, 1.0]
        );
        for t in 0..4 {
            assert_eq!(
                remove_incorrect_support(&b(vec![1.0; 4]), &one_hot(4, t)).unwrap(),
                vec![1.0; 4]
            );
        }
        assert!(remove_incorrect_support(&b(vec![1.0; 2]), &[0.3, 0.7]).is_err());
    }

    #[test]
    fn kl_values() {
        assert!(kl_to_uniform(&[1.0, 1.0, 1.0]).unwrap().abs() < 1e-12);
        let expected = 2f64.ln() - 0.5;
        assert!((kl_to_uniform(&[2.0, 1.0]).unwrap() - expected).abs() < 1e-10);
        let big = kl_to_uniform(&[10.0, 1.0, 1.0]).unwrap();
        let small = kl_to_uniform(&[2.0, 1.0, 1.0]).unwrap();
        assert!(big > small && small > 0.0);
        assert!(matches!(
            kl_to_uniform(&[0.5, 1.0]),
            Err(EvidentialError::KlDomain { index: 0, .. })
        ));
    }

    #[test]
    fn annealing_ramp() {
        assert!((annealing_coefficient(1, 10, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(annealing_coefficient(10, 10, 1.0), 1.0);
        assert_eq!(annealing_coefficient(200, 10, 1.0), 1.0);
        assert_eq!(annealing_coefficient(5, 10, 0.5), 0.25);
        let mut prev = 0.0;
        for e in 1..30 {
            let l = annealing_coefficient(e, 7, 0.8);
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn compound_loss_cases() {
        let l = compound_loss(&[0.0, 0.0], &[1.0, 0.0], 0.0, CeMode::Softmax).unwrap();
        assert!((l.ce_term - 2f64.ln()).abs() < 1e-12);
        assert!((l.dirichlet_term - 1.0).abs() < 1e-12);
        assert!((l.total - (2f64.ln() + 1.0)).abs() < 1e-12);

        let l = compound_loss(&[0.0; 3], &[0.0, 1.0, 0.0], 1.0, CeMode::Softmax).unwrap();
        assert_eq!(l.kl_term, 0.0);
        assert!((l.total - (3f64.ln() + 1.5)).abs() < 1e-10);

        let l = compound_loss(&[0.0, 0.0], &[1.0, 0.0], 0.0, CeMode::None).unwrap();
        assert_eq!(l.ce_term, 0.0);
        assert!((l.total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compound_loss_recomposes_from_parts() {
        let mut rng = Prng::new(11, Stream::Init, 900);
        for _ in 0..50 {
            let z: Vec<f64> = (0..5).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let y = one_hot(5, rng.below(5) as usize);
            let l = compound_loss(&z, &y, 0.5, CeMode::Softmax).unwrap();
            // Independent recomposition: CE via explicit log of softmax.
            let t = y.iter().position(|&v| v == 1.0).unwrap();
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            let ce = -(z[t].exp() / denom).ln();
            let b = dirichlet_from_logits(&z).unwrap();
            let d = dirichlet_ce_loss(&b, &y).unwrap();
            let k = kl_to_uniform(&remove_incorrect_support(&b, &y).unwrap()).unwrap();
            assert!((l.total - (ce + d + 0.5 * k)).abs() < 1e-12);
            assert!((l.total - (l.ce_term + l.dirichlet_term + l.lambda_t * l.kl_term)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_dead_zone_is_softmax_only() {
        let z = [-1.5, -2.0, -1.0, -4.0];
        let y = one_hot(4, 2);
        let g = compound_loss_gradient(&z, &y, 0.7, CeMode::Softmax).unwrap();
        let mut expected = softmax(&z);
        expected[2] -= 1.0;
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let g = compound_loss_gradient(&z, &y, 0.7, CeMode::None).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kl_gradient_vanishes_on_true_class_at_uniform() {
        // Only the true class carries evidence, so α̂ is uniform and the
        // dirichlet term alone drives the gradient.
        let z = [2.5, -1.0, -0.5];
        let y = one_hot(3, 0);
        let with_kl = compound_loss_gradient(&z, &y, 1.0, CeMode::None).unwrap();
        let without = compound_loss_gradient(&z, &y, 0.0, CeMode::None).unwrap();
        assert_eq!(with_kl, without);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Prng::new(5, Stream::Init, 901);
        for &c in &[2usize, 5, 11] {
            for _ in 0..30 {
                let z: Vec<f64> = (0..c).map(|_| rng.uniform(-4.0, 6.0)).collect();
                let y = one_hot(c, rng.below(c as u64) as usize);
                let lambda = rng.next_f64();
                let g = compound_loss_gradient(&z, &y, lambda, CeMode::Softmax).unwrap();
                let fd = fd_gradient(
                    |v: &[f64]| compound_loss(v, &y, lambda, CeMode::Softmax).map(|l| l.total),
                    &z,
                    1e-5,
                )
                .unwrap();
                for j in 0..c {
                    if z[j].abs() < 1e-4 {
                        continue;
                    }
                    let denom = g[j].abs().max(fd[j].abs()).max(1e-6);
                    assert!((g[j] - fd[j]).abs() / denom < 1e-5, "c={c} j={j} {} vs {}", g[j], fd[j]);
                }
            }
        }
    }

    #[test]
    fn confidence_norms() {
        let s = |z: &[f64]| confidence_score(&dirichlet_from_logits(z).unwrap());
        assert!((s(&[0.0, 0.0, 0.0]) - 3f64.sqrt()).abs() < 1e-15);
        assert!((s(&[2.0, 0.0, 0.0]) - 11f64.sqrt()).abs() < 1e-15);
        assert_eq!(s(&[3.0, 2.0]), 5.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn kl_nonnegative_and_zero_only_at_uniform(
            hat in proptest::collection::vec(1.0f64..30.0, 2..12),
            pin in proptest::bool::ANY,
        ) {
            let hat: Vec<f64> = if pin { vec![1.0; hat.len()] } else { hat };
            let kl = kl_to_uniform(&hat).unwrap();
            prop_assert!(kl >= 0.0);
            let uniform = hat.iter().all(|&a| a == 1.0);
            if uniform {
                prop_assert!(kl < 1e-10);
            } else if hat.iter().any(|&a| a > 1.0 + 1e-3) {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn dirichlet_ce_strictly_positive(
            z in proptest::collection::vec(-5.0f64..20.0, 2..12),
            t_frac in 0.0f64..1.0,
        ) {
            let c = z.len();
            let t = ((c as f64 * t_frac) as usize).min(c - 1);
            let b = dirichlet_from_logits(&z).unwrap();
            prop_assert!(dirichlet_ce_loss(&b, &one_hot(c, t)).unwrap() > 0.0);
        }

        #[test]
        fn confidence_increases_in_each_alpha(
            z in proptest::collection::vec(0.0f64..20.0, 2..8),
            bump in 1e-3f64..5.0,
            idx in 0usize..8,
        ) {
            let j = idx % z.len();
            let before = confidence_score(&dirichlet_from_logits(&z).unwrap());
            let mut z2 = z.clone();
            z2[j] += bump;
            let after = confidence_score(&dirichlet_from_logits(&z2).unwrap());
            prop_assert!(after > before);
        }

        #[test]
        fn true_class_logit_never_penalized_by_kl(
            z in proptest::collection::vec(-3.0f64..10.0, 2..8),
            t_frac in 0.0f64..1.0,
            bump in 0.0f64..10.0,
        ) {
            let c = z.len();
            let t = ((c as f64 * t_frac) as usize).min(c - 1);
            let y = one_hot(c, t);
            let mut z = z;
            z[t] = z[t].abs() + 0.1;
            let before = compound_loss(&z, &y, 1.0, CeMode::Softmax).unwrap().kl_term;
            z[t] += bump;
            let after = compound_loss(&z, &y, 1.0, CeMode::Softmax).unwrap().kl_term;
            prop_assert_eq!(before, after);
        }
    }
}
