//! Monte Carlo checks of the analytic bounds and exact enumeration of the
//! halting probability on small instances.
//!
//! Every trial draws from its own generator, seeded by
//! `derive_seed(master_seed, [trial])`, so reports do not depend on the
//! thread schedule.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, Bounds, Dataset, GaussianMixtureSpec};
use crate::dp::{self, ExponentialMechanism};
use crate::engine::{self, CountNoise, DpmConfig, HaltReason, NodeKind};
use crate::halting::{self, BoundScenario, CandidateProfile, CentralNumerator, ProductRange, ThresholdMode};
use crate::rng::{derive_seed, derived_rng, DpmRng};
use crate::splitting::{self, CandidatePosition, SplitCandidate};
use crate::stats::{self, Interval};
use crate::{Error, Result};

/// Largest instance accepted by [`exact_halt_probability`].
pub const MAX_EXACT_CANDIDATES: usize = 12;
pub const MAX_EXACT_LEVELS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSpec {
    Uniform {
        dim: usize,
        n: usize,
        low: f64,
        high: f64,
        seed: u64,
    },
    Gaussian(GaussianMixtureSpec),
    Csv { path: PathBuf },
}

impl DatasetSpec {
    pub fn build(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Uniform {
                dim,
                n,
                low,
                high,
                seed,
            } => {
                let b = Bounds::new(*low, *high)?;
                datagen::generate_uniform(*dim, *n, &vec![b; *dim], *seed)
            }
            DatasetSpec::Gaussian(spec) => datagen::generate_gaussian_mixture(spec),
            DatasetSpec::Csv { path } => datagen::load_csv(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Target {
    /// The first selected split violates the minimum cluster size.
    ImmediateHalt,
    /// The first selected split has centreness at least t′.
    CentralSplit { t_prime: f64 },
    /// The first selected split keeps both sides above τ_e.
    NotHalt,
    /// Every branch halts on a size violation within `levels` levels.
    HaltWithin {
        levels: u32,
        mode: ThresholdMode,
        #[serde(default)]
        t_prime: Option<f64>,
    },
    /// The first selection scores below the utility threshold.
    EmUtility { kappa: f64, omega: f64 },
    /// A noisy count of the full dataset falls below the true count.
    NoisyCountTail,
}

impl Target {
    pub fn label(&self) -> String {
        match self {
            Target::ImmediateHalt => "immediate_halt".into(),
            Target::CentralSplit { t_prime } => format!("central_split(t'={t_prime})"),
            Target::NotHalt => "not_halt".into(),
            Target::HaltWithin { levels, mode, .. } => format!("halt_within(j={levels},{mode:?})"),
            Target::EmUtility { kappa, omega } => format!("em_utility(kappa={kappa},omega={omega})"),
            Target::NoisyCountTail => "noisy_count_tail".into(),
        }
    }
}

fn default_trials() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub dataset: DatasetSpec,
    pub config: DpmConfig,
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub master_seed: u64,
    pub target: Target,
}

impl TrialPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Holds when the bound does not exceed the upper 99% edge.
    Lower,
    /// Holds when the empirical frequency does not exceed bound + slack.
    Upper,
    /// Holds when the 99% interval contains the value.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub target: String,
    pub kind: BoundKind,
    /// Value compared against the empirical frequency.
    pub bound: f64,
    /// Before clamping to [0, 1].
    pub bound_raw: f64,
    pub empirical: f64,
    pub successes: u64,
    pub trials: u64,
    pub ci95: Interval,
    pub ci99: Interval,
    pub slack: f64,
    pub holds: bool,
    /// The bound is at most 0 and says nothing.
    pub loose: bool,
    /// A second reading of the bound, reported alongside.
    pub alternative: Option<f64>,
    pub modes: Vec<String>,
    pub master_seed: u64,
    pub config: DpmConfig,
    pub note: Option<String>,
}

impl BoundReport {
    pub const CSV_HEADER: [&'static str; 20] = [
        "target", "kind", "bound", "bound_raw", "empirical", "successes", "trials", "ci95_low",
        "ci95_high", "ci99_low", "ci99_high", "holds", "loose", "alternative", "alpha", "t", "q",
        "tau_e", "tau_s", "eps_select",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let c = &self.config;
        vec![
            self.target.clone(),
            format!("{:?}", self.kind).to_lowercase(),
            self.bound.to_string(),
            self.bound_raw.to_string(),
            self.empirical.to_string(),
            self.successes.to_string(),
            self.trials.to_string(),
            self.ci95.low.to_string(),
            self.ci95.high.to_string(),
            self.ci99.low.to_string(),
            self.ci99.high.to_string(),
            self.holds.to_string(),
            self.loose.to_string(),
            self.alternative.map(|v| v.to_string()).unwrap_or_default(),
            c.score.alpha.to_string(),
            c.score.t.to_string(),
            c.score.q.to_string(),
            c.tau_e.to_string(),
            c.tau_s.to_string(),
            c.eps_select.to_string(),
        ]
    }
}

pub fn write_reports_csv(reports: &[BoundReport], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = BoundReport::CSV_HEADER.to_vec();
    header.extend(["seed", "modes"]);
    out.write_record(&header)?;
    for r in reports {
        let mut rec = r.csv_record();
        rec.push(r.master_seed.to_string());
        rec.push(r.modes.join(";"));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Successes out of trials with Wilson intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
    pub frequency: f64,
    pub ci95: Interval,
    pub ci99: Interval,
}

impl Estimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        Estimate {
            successes,
            trials,
            frequency: successes as f64 / trials as f64,
            ci95: stats::wilson(successes, trials, 0.95),
            ci99: stats::wilson(successes, trials, 0.99),
        }
    }
}

/// Counts the trials for which `event` returns true.
pub fn monte_carlo<F>(trials: u64, master_seed: u64, event: F) -> Result<Estimate>
where
    F: Fn(&mut DpmRng) -> Result<bool> + Sync,
{
    let successes = (0..trials)
        .into_par_iter()
        .map(|i| event(&mut derived_rng(master_seed, &[i])).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(Estimate::new(successes, trials))
}

/// The first node's decision with ñ fixed at |D| + offset.
pub struct RootState {
    pub n_tilde: f64,
    pub offset: f64,
    pub candidates: Vec<SplitCandidate>,
    pub mechanism: ExponentialMechanism,
    pub pmf: Vec<f64>,
    /// Left and right sizes of each candidate's partition.
    pub sizes: Vec<(usize, usize)>,
}

impl RootState {
    pub fn new(dataset: &Dataset, config: &DpmConfig) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let positions = splitting::generate_candidates(dataset.bounds(), config.score.beta)?;
        let count = dp::mean_noisy_count(dataset.len(), config.eps_count, config.delta, dataset.len())?;
        let all: Vec<usize> = (0..dataset.len()).collect();
        let scored = engine::score_node(dataset, &all, &positions, count.value, config)?;
        let scores: Vec<f64> = scored.candidates.iter().map(|c| c.score).collect();
        let pmf = scored.mechanism.pmf(&scores)?;
        let sizes = scored
            .candidates
            .iter()
            .map(|c| {
                let (l, r) = engine::partition(dataset, &all, c.dimension, c.position);
                (l.len(), r.len())
            })
            .collect();
        Ok(RootState {
            n_tilde: count.value,
            offset: count.offset,
            candidates: scored.candidates,
            mechanism: scored.mechanism,
            pmf,
            sizes,
        })
    }

    fn sampler(&self) -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(&self.pmf).map_err(|e| Error::param("pmf", e.to_string()))
    }
}

/// The halting-bound quantities measured on the first node of `dataset`:
/// ñ = |D| + offset, e_min the smallest emptiness, e_QI the largest emptiness
/// among candidates with centreness at least t, and the measured centreness
/// of every candidate.
pub fn measure_scenario(dataset: &Dataset, config: &DpmConfig, t_prime: Option<f64>) -> Result<BoundScenario> {
    let root = RootState::new(dataset, config)?;
    Ok(scenario_from_root(&root, config, t_prime))
}

fn scenario_from_root(root: &RootState, config: &DpmConfig, t_prime: Option<f64>) -> BoundScenario {
    let t = config.score.t;
    let e_min = root
        .candidates
        .iter()
        .map(|c| c.emptiness)
        .fold(f64::INFINITY, f64::min);
    let e_qi = root
        .candidates
        .iter()
        .filter(|c| c.centreness >= t)
        .map(|c| c.emptiness)
        .fold(0.0, f64::max);
    BoundScenario {
        n_tilde: root.n_tilde,
        tau_e: config.tau_e as f64,
        t,
        q: config.score.q,
        alpha: config.score.alpha,
        eps: config.eps_select,
        delta_f: root.mechanism.sensitivity,
        e_min,
        e_qi,
        t_tau: None,
        t_prime,
        counts: CandidateProfile::Measured {
            centreness: root.candidates.iter().map(|c| c.centreness).collect(),
        },
        convention: config.convention,
        central_numerator: CentralNumerator::Displayed,
    }
}

fn child_violates(root: &RootState, k: usize, config: &DpmConfig, n_total: usize, rng: &mut DpmRng) -> Result<bool> {
    let (l, r) = root.sizes[k];
    let count = |raw: usize, rng: &mut DpmRng| -> Result<f64> {
        Ok(match config.count_noise {
            CountNoise::Laplace => dp::noisy_count(raw, config.eps_count, config.delta, n_total, rng)?.value,
            CountNoise::NoiseFree => dp::mean_noisy_count(raw, config.eps_count, config.delta, n_total)?.value,
        })
    };
    let tau_e = config.tau_e as f64;
    let ln = count(l, rng)?;
    let rn = count(r, rng)?;
    Ok(ln < tau_e || rn < tau_e)
}

fn count_mode(config: &DpmConfig) -> String {
    match config.count_noise {
        CountNoise::Laplace => "child_counts=laplace".into(),
        CountNoise::NoiseFree => "child_counts=noise_free".into(),
    }
}

/// Lower-bound report; a precondition failure makes the bound vacuous.
fn lower(value: Result<f64>) -> Result<(f64, f64, Option<String>)> {
    match value {
        Ok(v) => Ok((v.clamp(0.0, 1.0), v, None)),
        Err(Error::Precondition(msg)) => Ok((0.0, 0.0, Some(msg))),
        Err(e) => Err(e),
    }
}

/// Runs the plan's trials and compares the event frequency with the
/// matching analytic value.
pub fn run_plan(plan: &TrialPlan) -> Result<BoundReport> {
    plan.validate()?;
    let dataset = plan.dataset.build()?;
    let config = &plan.config;
    let n_total = dataset.len();
    let mut modes = vec!["root_n_tilde=|D|+offset".to_string(), count_mode(config)];

    let (kind, bound, bound_raw, slack, alternative, note, est) = match plan.target {
        Target::ImmediateHalt | Target::NotHalt | Target::CentralSplit { .. } => {
            let root = RootState::new(&dataset, config)?;
            let t_prime = match plan.target {
                Target::CentralSplit { t_prime } => Some(t_prime),
                _ => None,
            };
            let scenario = scenario_from_root(&root, config, t_prime);
            let sampler = root.sampler()?;
            let (b, raw, note) = match plan.target {
                Target::ImmediateHalt => lower(halting::prob_halt_immediately_lower(&scenario))?,
                Target::NotHalt => lower(halting::prob_not_halt_lower(&scenario))?,
                _ => lower(halting::prob_central_split_lower(&scenario))?,
            };
            let target = plan.target;
            let est = monte_carlo(plan.trials, plan.master_seed, |rng| {
                let k = sampler.sample(rng);
                Ok(match target {
                    Target::CentralSplit { t_prime } => root.candidates[k].centreness >= t_prime,
                    Target::ImmediateHalt => child_violates(&root, k, config, n_total, rng)?,
                    _ => !child_violates(&root, k, config, n_total, rng)?,
                })
            })?;
            (BoundKind::Lower, b, raw, 0.0, None, note, est)
        }
        Target::HaltWithin { levels, mode, t_prime } => {
            let scenario = measure_scenario(&dataset, config, t_prime)?;
            let hw = halting::prob_halt_within(&scenario, levels, mode, ProductRange::Preceding)?;
            let notes: Vec<String> = hw.terms.iter().filter_map(|t| t.note.clone()).collect();
            let mut run_config = *config;
            run_config.tau_s = levels as usize + 1;
            modes[0] = "root_n_tilde=per_config".into();
            let est = monte_carlo(plan.trials, plan.master_seed, |rng| {
                let seed = rand::Rng::random::<u64>(rng);
                halts_on_size(&engine::run_dpm(&dataset, &run_config, seed)?)
            })?;
            let note = (!notes.is_empty()).then(|| notes.join("; "));
            (BoundKind::Lower, hw.clamped, hw.raw, 0.0, None, note, est)
        }
        Target::EmUtility { kappa, omega } => {
            let root = RootState::new(&dataset, config)?;
            let scores: Vec<f64> = root.candidates.iter().map(|c| c.score).collect();
            let opt = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let near = scores.iter().filter(|s| **s >= opt - omega).count();
            let threshold = dp::em_utility_threshold(
                opt,
                scores.len(),
                near,
                omega,
                kappa,
                config.eps_select,
                root.mechanism.sensitivity,
                config.convention,
            )?;
            let sampler = root.sampler()?;
            let est = monte_carlo(plan.trials, plan.master_seed, |rng| Ok(scores[sampler.sample(rng)] < threshold))?;
            let b = (-kappa).exp();
            let note = Some(format!("score threshold {threshold}"));
            (BoundKind::Upper, b, b, 0.005, None, note, est)
        }
        Target::NoisyCountTail => {
            let p = dp::count_tail_probability(config.eps_count, config.delta, n_total)?;
            let est = monte_carlo(plan.trials, plan.master_seed, |rng| {
                let c = dp::noisy_count(n_total, config.eps_count, config.delta, n_total, rng)?;
                Ok(c.value < n_total as f64)
            })?;
            modes = vec!["laplace".into()];
            let quoted = dp::quoted_tail_probability(n_total);
            (BoundKind::Exact, p, p, 0.0, Some(quoted), None, est)
        }
    };

    let loose = kind == BoundKind::Lower && bound_raw <= 0.0;
    let holds = match kind {
        BoundKind::Lower => loose || bound <= est.ci99.high + slack,
        BoundKind::Upper => est.frequency <= bound + slack,
        BoundKind::Exact => est.ci99.contains(bound),
    };
    Ok(BoundReport {
        target: plan.target.label(),
        kind,
        bound,
        bound_raw,
        empirical: est.frequency,
        successes: est.successes,
        trials: est.trials,
        ci95: est.ci95,
        ci99: est.ci99,
        slack,
        holds,
        loose,
        alternative,
        modes,
        master_seed: plan.master_seed,
        config: *config,
        note,
    })
}

/// No branch of the tree reached the depth cap.
fn halts_on_size(result: &engine::ClusteringResult) -> Result<bool> {
    Ok(result.tree.root.leaves().iter().all(|l| {
        matches!(
            l.kind,
            NodeKind::Leaf {
                reason: HaltReason::MinSizeViolated,
                ..
            }
        )
    }))
}

/// Axes of a cartesian sweep. `None` keeps the template's value; a grid with
/// no axes is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub alpha: Option<Vec<f64>>,
    pub t: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub tau_e: Option<Vec<usize>>,
    pub tau_s: Option<Vec<usize>>,
    pub eps_select: Option<Vec<f64>>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_none()
            && self.t.is_none()
            && self.q.is_none()
            && self.tau_e.is_none()
            && self.tau_s.is_none()
            && self.eps_select.is_none()
    }

    pub fn configs(&self, template: &DpmConfig) -> Vec<DpmConfig> {
        if self.is_empty() {
            return Vec::new();
        }
        fn axis<T: Copy>(v: &Option<Vec<T>>, default: T) -> Vec<T> {
            v.clone().unwrap_or_else(|| vec![default])
        }
        let mut out = Vec::new();
        for &alpha in &axis(&self.alpha, template.score.alpha) {
            for &t in &axis(&self.t, template.score.t) {
                for &q in &axis(&self.q, template.score.q) {
                    for &tau_e in &axis(&self.tau_e, template.tau_e) {
                        for &tau_s in &axis(&self.tau_s, template.tau_s) {
                            for &eps in &axis(&self.eps_select, template.eps_select) {
                                let mut c = *template;
                                c.score.alpha = alpha;
                                c.score.t = t;
                                c.score.q = q;
                                c.tau_e = tau_e;
                                c.tau_s = tau_s;
                                c.eps_select = eps;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One report per grid point, in grid order.
pub fn sweep(grid: &SweepGrid, template: &TrialPlan) -> Result<Vec<BoundReport>> {
    grid.configs(&template.config)
        .into_iter()
        .map(|config| {
            run_plan(&TrialPlan {
                config,
                ..template.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactHalt {
    pub probability: f64,
    pub max_level: u32,
    pub candidates: usize,
    /// Distinct (subset, level) pairs evaluated.
    pub nodes: usize,
    pub count_noise: CountNoise,
}

struct Enumerator<'a> {
    dataset: &'a Dataset,
    config: &'a DpmConfig,
    positions: Vec<CandidatePosition>,
    offset: f64,
    max_level: u32,
    memo: HashMap<(Vec<usize>, u32), f64>,
}

impl Enumerator<'_> {
    fn prob(&mut self, indices: Vec<usize>, level: u32) -> Result<f64> {
        let key = (indices, level);
        if let Some(p) = self.memo.get(&key) {
            return Ok(*p);
        }
        let (indices, level) = key;
        let n_tilde = indices.len() as f64 + self.offset;
        let scored = engine::score_node(self.dataset, &indices, &self.positions, n_tilde, self.config)?;
        let scores: Vec<f64> = scored.candidates.iter().map(|c| c.score).collect();
        let pmf = scored.mechanism.pmf(&scores)?;
        let tau_e = self.config.tau_e as f64;
        let mut total = 0.0;
        for (c, p) in scored.candidates.iter().zip(pmf) {
            if p == 0.0 {
                continue;
            }
            let (l, r) = engine::partition(self.dataset, &indices, c.dimension, c.position);
            let violates = (l.len() as f64 + self.offset) < tau_e || (r.len() as f64 + self.offset) < tau_e;
            total += p * if violates {
                1.0
            } else if level == self.max_level {
                0.0
            } else {
                self.prob(l, level + 1)? * self.prob(r, level + 1)?
            };
        }
        // The pmf sums to 1 only up to rounding.
        let total = total.clamp(0.0, 1.0);
        self.memo.insert((indices, level), total);
        Ok(total)
    }
}

/// Probability that every branch halts on a size violation at some level
/// 0..=max_level, with every count fixed at |S| + offset. Enumerates every
/// split choice weighted by its exponential-mechanism probability.
pub fn exact_halt_probability(dataset: &Dataset, config: &DpmConfig, max_level: u32) -> Result<ExactHalt> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let positions = splitting::generate_candidates(dataset.bounds(), config.score.beta)?;
    if positions.len() > MAX_EXACT_CANDIDATES {
        return Err(Error::TooLarge(format!(
            "{} candidates, at most {MAX_EXACT_CANDIDATES} supported",
            positions.len()
        )));
    }
    if max_level > MAX_EXACT_LEVELS {
        return Err(Error::TooLarge(format!(
            "{max_level} levels, at most {MAX_EXACT_LEVELS} supported"
        )));
    }
    let offset = dp::count_offset(config.eps_count, config.delta, dataset.len())?;
    let candidates = positions.len();
    let mut e = Enumerator {
        dataset,
        config,
        positions,
        offset,
        max_level,
        memo: HashMap::new(),
    };
    let probability = e.prob((0..dataset.len()).collect(), 0)?;
    Ok(ExactHalt {
        probability,
        max_level,
        candidates,
        nodes: e.memo.len(),
        count_noise: CountNoise::NoiseFree,
    })
}

/// The Monte Carlo counterpart of [`exact_halt_probability`]: the engine in
/// noise-free count mode with depth cap `max_level + 1`.
pub fn monte_carlo_halt(
    dataset: &Dataset,
    config: &DpmConfig,
    max_level: u32,
    trials: u64,
    master_seed: u64,
) -> Result<Estimate> {
    let mut c = *config;
    c.count_noise = CountNoise::NoiseFree;
    c.tau_s = max_level as usize + 1;
    c.validate()?;
    monte_carlo(trials, master_seed, |rng| {
        let seed = rand::Rng::random::<u64>(rng);
        halts_on_size(&engine::run_dpm(dataset, &c, seed)?)
    })
}

/// Seed for trial `i` of a plan.
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    derive_seed(master_seed, &[trial])
}
