//! Differential-privacy primitives: Laplace noise, shifted noisy counts, the
//! exponential mechanism and privacy budget composition.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An (ε, δ) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub const ZERO: Self = Self {
        epsilon: 0.0,
        delta: 0.0,
    };

    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::param("delta", format!("must lie in [0, 1], got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }
}

/// A composition tree of mechanism invocations.
///
/// Sequential children add up. Parallel children run on disjoint subsets of
/// the data and cost the maximum of their parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetNode {
    Mechanism(PrivacyParams),
    Sequential(Vec<BudgetNode>),
    Parallel(Vec<BudgetNode>),
}

impl BudgetNode {
    pub fn total(&self) -> PrivacyParams {
        match self {
            BudgetNode::Mechanism(p) => *p,
            BudgetNode::Sequential(parts) => sequential(parts.iter().map(BudgetNode::total)),
            BudgetNode::Parallel(parts) => parallel(parts.iter().map(BudgetNode::total)),
        }
    }
}

pub fn sequential(ops: impl IntoIterator<Item = PrivacyParams>) -> PrivacyParams {
    ops.into_iter().fold(PrivacyParams::ZERO, |acc, p| PrivacyParams {
        epsilon: acc.epsilon + p.epsilon,
        delta: acc.delta + p.delta,
    })
}

pub fn parallel(ops: impl IntoIterator<Item = PrivacyParams>) -> PrivacyParams {
    ops.into_iter().fold(PrivacyParams::ZERO, |acc, p| PrivacyParams {
        epsilon: acc.epsilon.max(p.epsilon),
        delta: acc.delta.max(p.delta),
    })
}

/// One draw from Laplace(0, scale) by inverting the CDF.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param("scale", format!("must be positive, got {scale}")));
    }
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u == -0.5 {
            continue;
        }
        return Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln());
    }
}

/// Shift added to every noisy count: ln(√n_total / δ) / ε.
pub fn count_offset(epsilon: f64, delta: f64, n_total: usize) -> Result<f64> {
    PrivacyParams::new(epsilon, delta)?;
    if delta == 0.0 {
        return Err(Error::param("delta", "must be positive: the count offset is infinite at 0"));
    }
    if n_total == 0 {
        return Err(Error::param("n_total", "must be at least 1"));
    }
    Ok(((n_total as f64).sqrt() / delta).ln() / epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyCount {
    pub value: f64,
    pub offset: f64,
}

/// raw + Lap(1/ε) + offset.
pub fn noisy_count<R: Rng + ?Sized>(
    raw: usize,
    epsilon: f64,
    delta: f64,
    n_total: usize,
    rng: &mut R,
) -> Result<NoisyCount> {
    let offset = count_offset(epsilon, delta, n_total)?;
    let noise = laplace_sample(1.0 / epsilon, rng)?;
    Ok(NoisyCount {
        value: raw as f64 + noise + offset,
        offset,
    })
}

/// The noise-free counterpart of [`noisy_count`]: raw + offset.
pub fn mean_noisy_count(raw: usize, epsilon: f64, delta: f64, n_total: usize) -> Result<NoisyCount> {
    let offset = count_offset(epsilon, delta, n_total)?;
    Ok(NoisyCount {
        value: raw as f64 + offset,
        offset,
    })
}

/// Pr[noise > offset] for Lap(1/ε): ½·exp(−ε·offset) = δ / (2√n_total).
pub fn count_tail_probability(epsilon: f64, delta: f64, n_total: usize) -> Result<f64> {
    let offset = count_offset(epsilon, delta, n_total)?;
    Ok(0.5 * (-epsilon * offset).exp())
}

/// The divergence probability 1/(2√n) quoted for the shifted count, which
/// coincides with [`count_tail_probability`] only at δ = 1.
pub fn quoted_tail_probability(n_total: usize) -> f64 {
    0.5 / (n_total as f64).sqrt()
}

/// Whether the exponential mechanism uses exp(ε·f/(2Δ)) or exp(ε·f/Δ).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentConvention {
    #[default]
    Halved,
    Full,
}

impl ExponentConvention {
    /// Multiplier k such that weights are exp(k · score).
    pub fn rate(self, epsilon: f64, sensitivity: f64) -> f64 {
        match self {
            ExponentConvention::Halved => epsilon / (2.0 * sensitivity),
            ExponentConvention::Full => epsilon / sensitivity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialMechanism {
    pub epsilon: f64,
    pub sensitivity: f64,
    pub convention: ExponentConvention,
}

impl ExponentialMechanism {
    pub fn new(epsilon: f64, sensitivity: f64, convention: ExponentConvention) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be nonnegative, got {epsilon}")));
        }
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::param(
                "sensitivity",
                format!("must be positive, got {sensitivity}"),
            ));
        }
        Ok(Self {
            epsilon,
            sensitivity,
            convention,
        })
    }

    pub fn rate(&self) -> f64 {
        self.convention.rate(self.epsilon, self.sensitivity)
    }

    /// Selection probabilities, stabilised by subtracting the maximum score.
    pub fn pmf(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(Error::NanScore(i));
        }
        let k = self.rate();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = if k == 0.0 {
            vec![1.0; scores.len()]
        } else {
            scores.iter().map(|s| (k * (s - max)).exp()).collect()
        };
        let total: f64 = w.iter().sum();
        for x in &mut w {
            *x /= total;
        }
        Ok(w)
    }

    pub fn select<R: Rng + ?Sized>(&self, scores: &[f64], rng: &mut R) -> Result<usize> {
        let pmf = self.pmf(scores)?;
        let dist = WeightedIndex::new(&pmf).map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(dist.sample(rng))
    }
}

/// Score level below which the exponential mechanism's output falls with
/// probability at most e^{−κ}:
/// OPT − ω − (c·Δ/ε)(ln(|W| / |W_OPT,ω|) + κ), with c = 2 under the halved
/// convention and 1 under the full one.
#[allow(clippy::too_many_arguments)]
pub fn em_utility_threshold(
    opt: f64,
    n_candidates: usize,
    n_near_opt: usize,
    omega: f64,
    kappa: f64,
    epsilon: f64,
    sensitivity: f64,
    convention: ExponentConvention,
) -> Result<f64> {
    if n_near_opt == 0 || n_near_opt > n_candidates {
        return Err(Error::param(
            "n_near_opt",
            format!("need 1 ≤ |W_opt| ≤ |W| = {n_candidates}, got {n_near_opt}"),
        ));
    }
    if !(kappa > 0.0) {
        return Err(Error::param("kappa", "must be positive"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    if !(sensitivity > 0.0) {
        return Err(Error::param("sensitivity", "must be positive"));
    }
    let c = 1.0 / convention.rate(1.0, 1.0);
    let log_ratio = (n_candidates as f64 / n_near_opt as f64).ln();
    Ok(opt - omega - c * sensitivity / epsilon * (log_ratio + kappa))
}
