//! Halting analysis: centreness thresholds, the closed-form lower bounds on
//! the probability that DPM halts, and the uniform and Gaussian case studies.
//!
//! All bounds use exponentials of the form exp(x · ε/(2Δ_f)) and are evaluated
//! in log space, so large rates and the 2^i powers in the multi-level bounds
//! do not overflow or underflow prematurely.

use serde::{Deserialize, Serialize};

use crate::dp::ExponentConvention;
use crate::normal;
use crate::splitting::check_tq;
use crate::{Error, Result};

/// The split-size threshold expressed as a centreness value: the centreness of
/// a split at rank τ_e on a set of noisy size ñ.
pub fn centreness_threshold(tau_e: f64, n_tilde: f64, t: f64, q: f64) -> Result<f64> {
    check_tq(t, q)?;
    if !(n_tilde > 0.0) {
        return Err(Error::param("n_tilde", format!("must be positive, got {n_tilde}")));
    }
    if 2.0 * tau_e > n_tilde {
        return Err(Error::NoAdmissibleSplit {
            two_tau_e: 2.0 * tau_e,
            n_tilde,
        });
    }
    crate::splitting::centreness(tau_e, n_tilde, t, q)
}

/// Whether uniform data keeps splitting down to the depth cap:
/// τ_e < n / 2^τ_s.
pub fn uniform_never_halts_early(tau_e: f64, n: f64, tau_s: u32) -> bool {
    tau_e < n / 2f64.powi(tau_s as i32)
}

/// Candidate counts feeding the bounds, either given directly or derived from
/// measured centreness values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CandidateProfile {
    /// Counts below/at the lower threshold, strictly between, and at/above the
    /// upper threshold. The same counts are used at every level and for both
    /// the `t` and the `t′` partition.
    Fixed { below: u64, mid: u64, above: u64 },
    /// Centreness of every candidate; counts are recomputed per threshold.
    Measured { centreness: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Counts {
    below: f64,
    mid: f64,
    above: f64,
}

impl CandidateProfile {
    /// |W_{≤lo}|, |W_{>lo, <hi}|, |W_{≥hi, >lo}|.
    fn classify(&self, lo: f64, hi: f64) -> Counts {
        match self {
            CandidateProfile::Fixed { below, mid, above } => Counts {
                below: *below as f64,
                mid: *mid as f64,
                above: *above as f64,
            },
            CandidateProfile::Measured { centreness } => {
                let mut c = Counts {
                    below: 0.0,
                    mid: 0.0,
                    above: 0.0,
                };
                for &x in centreness {
                    if x <= lo {
                        c.below += 1.0;
                    } else if x < hi {
                        c.mid += 1.0;
                    } else {
                        c.above += 1.0;
                    }
                }
                c
            }
        }
    }

    fn total(&self) -> f64 {
        match self {
            CandidateProfile::Fixed { below, mid, above } => (below + mid + above) as f64,
            CandidateProfile::Measured { centreness } => centreness.len() as f64,
        }
    }
}

/// Which centreness the t′-central bound puts in its numerator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralNumerator {
    /// exp((t_τ + e_min·α)·k), as stated for the bound.
    #[default]
    Displayed,
    /// exp((t′ + e_min·α)·k), as argued in its proof.
    TPrime,
}

/// Abstract quantities for the halting bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundScenario {
    pub n_tilde: f64,
    pub tau_e: f64,
    pub t: f64,
    pub q: f64,
    pub alpha: f64,
    pub eps: f64,
    pub delta_f: f64,
    pub e_min: f64,
    pub e_qi: f64,
    /// Overrides the threshold computed from τ_e and ñ.
    #[serde(default)]
    pub t_tau: Option<f64>,
    #[serde(default)]
    pub t_prime: Option<f64>,
    pub counts: CandidateProfile,
    #[serde(default)]
    pub convention: ExponentConvention,
    #[serde(default)]
    pub central_numerator: CentralNumerator,
}

impl BoundScenario {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_tilde", self.n_tilde),
            ("eps", self.eps),
            ("delta_f", self.delta_f),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.tau_e >= 0.0) {
            return Err(Error::param("tau_e", "must be nonnegative"));
        }
        check_tq(self.t, self.q)?;
        if !(self.e_min <= 1.0) {
            return Err(Error::param("e_min", "must be at most 1"));
        }
        if !(self.e_qi <= 1.0) {
            return Err(Error::param("e_qi", "must be at most 1"));
        }
        if let Some(tp) = self.t_prime {
            if !tp.is_finite() {
                return Err(Error::param("t_prime", "must be finite"));
            }
        }
        Ok(())
    }

    /// k in exp(score · k).
    pub fn rate(&self) -> f64 {
        self.convention.rate(self.eps, self.delta_f)
    }

    /// Level-0 threshold t_τ.
    pub fn t_tau(&self) -> Result<f64> {
        match self.t_tau {
            Some(v) => Ok(v),
            None => centreness_threshold(self.tau_e, self.n_tilde, self.t, self.q),
        }
    }

    fn t_prime(&self) -> Result<f64> {
        self.t_prime
            .ok_or_else(|| Error::param("t_prime", "required for the t′-central bound"))
    }
}

/// ln Σ c_i·exp(x_i), skipping zero counts. −∞ when every count is zero.
fn log_sum(terms: &[(f64, f64)]) -> f64 {
    let active: Vec<(f64, f64)> = terms.iter().copied().filter(|(c, _)| *c > 0.0).collect();
    let max = active
        .iter()
        .map(|(c, x)| c.ln() + x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + active
        .iter()
        .map(|(c, x)| (c.ln() + x - max).exp())
        .sum::<f64>()
        .ln()
}

fn immediate_at(s: &BoundScenario, t_tau: f64) -> Result<f64> {
    if s.counts.total() == 0.0 {
        return Err(Error::Empty("candidate counts"));
    }
    let c = s.counts.classify(t_tau, s.t);
    if c.below == 0.0 {
        return Ok(0.0);
    }
    let k = s.rate();
    let num = c.below.ln() + s.e_min * k;
    let den = log_sum(&[
        (c.below, (t_tau + s.alpha) * k),
        (c.above, (1.0 + s.alpha * s.e_qi) * k),
        (c.mid, (s.t + s.alpha) * k),
    ]);
    Ok((num - den).exp())
}

/// Lower bound on the probability of selecting a split that violates the
/// minimum cluster size at the top level.
pub fn prob_halt_immediately_lower(s: &BoundScenario) -> Result<f64> {
    s.validate()?;
    immediate_at(s, s.t_tau()?)
}

fn central_at(s: &BoundScenario, t_tau: f64, t_prime: f64) -> Result<f64> {
    if !(t_tau < t_prime && t_prime < s.t) {
        return Err(Error::Precondition(format!(
            "the t′-central bound needs t_τ < t′ < t, got t_τ = {t_tau}, t′ = {t_prime}, t = {}",
            s.t
        )));
    }
    let c = s.counts.classify(t_tau, t_prime);
    if c.above < 1.0 {
        return Err(Error::Precondition(
            "the t′-central bound needs at least one t′-central split".into(),
        ));
    }
    let k = s.rate();
    let lead = match s.central_numerator {
        CentralNumerator::Displayed => t_tau,
        CentralNumerator::TPrime => t_prime,
    };
    let num = (lead + s.e_min * s.alpha) * k;
    let den = log_sum(&[
        (c.below, (t_tau + s.alpha) * k),
        (c.above, (1.0 + s.alpha * s.e_qi) * k),
        (c.mid, (t_prime + s.alpha) * k),
    ]);
    Ok((num - den).exp())
}

/// Lower bound on the probability that a t′-central split is selected.
pub fn prob_central_split_lower(s: &BoundScenario) -> Result<f64> {
    s.validate()?;
    central_at(s, s.t_tau()?, s.t_prime()?)
}

fn not_halt_at(s: &BoundScenario, t_tau: f64) -> Result<f64> {
    if s.counts.total() == 0.0 {
        return Err(Error::Empty("candidate counts"));
    }
    let mut c = s.counts.classify(t_tau, s.t);
    if t_tau > s.t {
        c.mid = 0.0;
    }
    if c.below == 0.0 {
        return Ok(1.0);
    }
    let k = s.rate();
    let num = c.below.ln() + (s.alpha + t_tau) * k;
    let den = log_sum(&[
        (c.below, s.e_min * s.alpha * k),
        (c.mid, (s.e_min * s.alpha + t_tau) * k),
        (c.above, (s.e_min * s.alpha + s.t) * k),
    ]);
    Ok(1.0 - (num - den).exp())
}

/// Lower bound on the probability that the selected split keeps both sides
/// above the minimum cluster size. May be negative when loose.
pub fn prob_not_halt_lower(s: &BoundScenario) -> Result<f64> {
    s.validate()?;
    not_halt_at(s, s.t_tau()?)
}

/// Per-level growth of the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFactor {
    pub value: f64,
    /// For t′ ≤ t: the partition fraction (t − 2t′ − 2q)/(2(t − 1)).
    pub fraction: Option<f64>,
    /// The fraction lies outside (0, 1).
    pub fraction_out_of_range: bool,
}

/// n/(n − τ_e).
pub fn growth_general(n_tilde: f64, tau_e: f64) -> Result<GrowthFactor> {
    if !(n_tilde > tau_e) {
        return Err(Error::param("tau_e", format!("must be below ñ = {n_tilde}")));
    }
    Ok(GrowthFactor {
        value: n_tilde / (n_tilde - tau_e),
        fraction: None,
        fraction_out_of_range: false,
    })
}

/// The per-level factor when every selected split is t′-central.
pub fn growth_tprime(t_prime: f64, t: f64, q: f64) -> Result<GrowthFactor> {
    if t_prime > t {
        let r = t_prime * q / t;
        if r >= 1.0 {
            return Err(Error::param(
                "t_prime",
                format!("factor undefined: t′q/t = {r} must be below 1"),
            ));
        }
        Ok(GrowthFactor {
            value: (t / (t_prime * q)).min(1.0 / (1.0 - r)),
            fraction: None,
            fraction_out_of_range: false,
        })
    } else {
        if t == 1.0 {
            return Err(Error::param("t", "factor undefined at t = 1 for t′ ≤ t"));
        }
        let g = (t - 2.0 * t_prime - 2.0 * q) / (2.0 * (t - 1.0));
        Ok(GrowthFactor {
            value: (1.0 / g).min(1.0 / (1.0 - g)),
            fraction: Some(g),
            fraction_out_of_range: !(g > 0.0 && g < 1.0),
        })
    }
}

/// Evolved value after `level` splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evolved {
    pub value: f64,
    pub factor: GrowthFactor,
    /// Value reached 1, beyond which the recursion is not defined.
    pub saturated: bool,
}

pub fn threshold_evolution(t_tau0: f64, level: u32, factor: GrowthFactor) -> Evolved {
    let value = t_tau0 * factor.value.powi(level as i32);
    Evolved {
        value,
        factor,
        saturated: false,
    }
}

/// t′ expressed as a centreness of the origin set after `level` splits.
pub fn tprime_evolution(t_prime: f64, level: u32, t: f64, q: f64) -> Result<Evolved> {
    let factor = growth_tprime(t_prime, t, q)?;
    let value = t_prime * factor.value.powi(level as i32);
    Ok(Evolved {
        value,
        factor,
        saturated: value >= 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Assumes a t′-central split always exists.
    Tprime,
    /// No t′ assumption; factor ñ/(ñ − τ_e).
    General,
}

/// Range of the per-level product in the multi-level bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductRange {
    /// Levels 0..i, the splits that must happen before halting at level i.
    #[default]
    Preceding,
    /// Levels 0..=j for every term.
    AllLevels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTerm {
    pub level: u32,
    pub t_tau: f64,
    pub t_prime: Option<f64>,
    pub halt: f64,
    /// Raw bound on continuing past this level; `None` where it is undefined.
    pub progress: Option<f64>,
    /// Value entering the product after flooring at 0 and capping at 1.
    pub progress_used: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaltWithin {
    pub mode: ThresholdMode,
    pub levels: u32,
    pub raw: f64,
    pub clamped: f64,
    pub terms: Vec<LevelTerm>,
    /// Progress factors raised to 0 or lowered to 1 before composing.
    pub adjusted_factors: usize,
    pub growth: GrowthFactor,
}

/// Lower bound on the probability that DPM halts within `j` levels:
/// Σ_{i ≤ j} H(t_τ^i) · (Π_ℓ P(ℓ))^{2^i}.
pub fn prob_halt_within(
    s: &BoundScenario,
    j: u32,
    mode: ThresholdMode,
    range: ProductRange,
) -> Result<HaltWithin> {
    s.validate()?;
    let t0 = s.t_tau()?;
    let growth = match mode {
        ThresholdMode::General => growth_general(s.n_tilde, s.tau_e)?,
        ThresholdMode::Tprime => growth_tprime(s.t_prime()?, s.t, s.q)?,
    };

    let mut terms = Vec::with_capacity(j as usize + 1);
    let mut adjusted = 0;
    for level in 0..=j {
        let t_tau = threshold_evolution(t0, level, growth).value;
        let halt = immediate_at(s, t_tau)?;
        let (t_prime, progress, note) = match mode {
            ThresholdMode::General => (None, Some(not_halt_at(s, t_tau)?), None),
            ThresholdMode::Tprime => {
                let tp = tprime_evolution(s.t_prime()?, level, s.t, s.q)?;
                if tp.saturated {
                    (Some(tp.value), None, Some("t′ saturated at or above 1".to_string()))
                } else {
                    match central_at(s, t_tau, tp.value) {
                        Ok(p) => (Some(tp.value), Some(p), None),
                        Err(Error::Precondition(msg)) => (Some(tp.value), None, Some(msg)),
                        Err(e) => return Err(e),
                    }
                }
            }
        };
        let progress_used = match progress {
            Some(p) if (0.0..=1.0).contains(&p) => p,
            Some(p) => {
                adjusted += 1;
                p.clamp(0.0, 1.0)
            }
            None => 0.0,
        };
        terms.push(LevelTerm {
            level,
            t_tau,
            t_prime,
            halt,
            progress,
            progress_used,
            note,
        });
    }

    let mut raw = 0.0;
    for i in 0..=j as usize {
        let upto = match range {
            ProductRange::Preceding => i,
            ProductRange::AllLevels => j as usize + 1,
        };
        let log_prod: f64 = terms[..upto].iter().map(|t| t.progress_used.ln()).sum();
        let weight = (log_prod * 2f64.powi(i as i32)).exp();
        raw += terms[i].halt * weight;
    }

    Ok(HaltWithin {
        mode,
        levels: j,
        raw,
        clamped: raw.clamp(0.0, 1.0),
        terms,
        adjusted_factors: adjusted,
        growth,
    })
}

/// Where the Gaussian median shifts come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZSource {
    /// Full-precision Φ⁻¹.
    #[default]
    Exact,
    /// The rounded table values 0, 0.6744, 1.15, 1.53, 1.86, 2.13, 2.41.
    Published,
}

pub const PUBLISHED_Z: [f64; 7] = [0.0, 0.6744, 1.15, 1.53, 1.86, 2.13, 2.41];

/// z_i = Φ⁻¹((1 + (1 − 2^{−i}))/2), the distance from the mean to the median
/// of the outermost subset after i central splits.
pub fn gaussian_median_shift(i: u32) -> Result<f64> {
    if i > 12 {
        return Err(Error::param("i", format!("must be at most 12, got {i}")));
    }
    if i == 0 {
        return Ok(0.0);
    }
    normal::quantile((2.0 - 2f64.powi(-(i as i32))) / 2.0)
}

pub fn median_shift(i: u32, source: ZSource) -> Result<f64> {
    match source {
        ZSource::Exact => gaussian_median_shift(i),
        ZSource::Published => PUBLISHED_Z.get(i as usize).copied().ok_or_else(|| {
            Error::param("i", format!("published shifts stop at level 6, got {i}"))
        }),
    }
}

/// e^c_i = 1 − 2^i (Φ(z + β/(2σ)) − Φ(z − β/(2σ))) for a given shift z.
pub fn central_emptiness_at(i: u32, z: f64, beta_over_sigma: f64) -> f64 {
    let h = beta_over_sigma / 2.0;
    1.0 - 2f64.powi(i as i32) * (normal::cdf(z + h) - normal::cdf(z - h))
}

pub fn central_emptiness(i: u32, beta_over_sigma: f64) -> Result<f64> {
    Ok(central_emptiness_at(i, gaussian_median_shift(i)?, beta_over_sigma))
}

/// (1 + (e_c − 1)α + m) / 2^i.
pub fn gaussian_halt_threshold(i: u32, alpha: f64, m: f64, e_c: f64) -> f64 {
    (1.0 + (e_c - 1.0) * alpha + m) / 2f64.powi(i as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub level: u32,
    pub alpha: f64,
    pub value: f64,
}

/// Threshold curves per α for β/σ = 1/2.
pub fn reproduce_fig4(alphas: &[f64], m: f64, max_level: u32, source: ZSource) -> Result<Vec<Fig4Row>> {
    let mut rows = Vec::new();
    for &alpha in alphas {
        for level in 0..=max_level {
            let z = median_shift(level, source)?;
            let e_c = central_emptiness_at(level, z, 0.5);
            rows.push(Fig4Row {
                level,
                alpha,
                value: gaussian_halt_threshold(level, alpha, m, e_c),
            });
        }
    }
    Ok(rows)
}
