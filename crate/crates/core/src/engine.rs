//! The recursive DPM clustering engine.
//!
//! Every node draws its own noisy size (the root) or inherits the one drawn by
//! its parent, scores all root-level split candidates on its subset, selects
//! one with the exponential mechanism and draws noisy sizes for both sides. If
//! either side falls below `tau_e` the node becomes a cluster; nodes at depth
//! `tau_s` become clusters without selecting a split.
//!
//! Node generators are derived from the master seed and the node's path, so
//! sibling subtrees can be built in parallel without affecting the output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::dp::{
    self, BudgetNode, ExponentConvention, ExponentialMechanism, NoisyCount, PrivacyParams,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::splitting::{self, CandidatePosition, Projections, ScoreParams, SplitCandidate};
use crate::{Error, Result};

/// How the exponential mechanism's sensitivity is chosen at each node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum SensitivityRule {
    /// (1 + α) / ñ with the node's noisy size.
    #[default]
    Default,
    Fixed(f64),
}

impl SensitivityRule {
    pub fn at(&self, alpha: f64, n_tilde: f64) -> f64 {
        match *self {
            SensitivityRule::Default => (1.0 + alpha) / n_tilde,
            SensitivityRule::Fixed(v) => v,
        }
    }
}

/// `NoiseFree` replaces every Laplace draw in the counts by its mean, leaving
/// ñ = |S| + offset. Selection stays randomised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountNoise {
    #[default]
    Laplace,
    NoiseFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpmConfig {
    #[serde(flatten)]
    pub score: ScoreParams,
    pub tau_e: usize,
    pub tau_s: usize,
    pub eps_count: f64,
    pub eps_select: f64,
    pub eps_avg: f64,
    pub delta: f64,
    pub clip_bound: f64,
    #[serde(default)]
    pub sensitivity: SensitivityRule,
    #[serde(default)]
    pub convention: ExponentConvention,
    #[serde(default)]
    pub count_noise: CountNoise,
}

impl DpmConfig {
    pub fn validate(&self) -> Result<()> {
        self.score.validate()?;
        if self.tau_e < 1 {
            return Err(Error::param("tau_e", "must be at least 1"));
        }
        for (name, v) in [
            ("eps_count", self.eps_count),
            ("eps_select", self.eps_select),
            ("eps_avg", self.eps_avg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::param(
                "delta",
                format!("must satisfy 0 < delta ≤ 1, got {}", self.delta),
            ));
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            return Err(Error::param("clip_bound", "must be positive"));
        }
        if let SensitivityRule::Fixed(v) = self.sensitivity {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param("sensitivity", format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn count_params(&self) -> PrivacyParams {
        PrivacyParams {
            epsilon: self.eps_count,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HaltReason {
    MinSizeViolated,
    MaxDepth,
}

/// A selected split that was not applied because a side's noisy size fell
/// below `tau_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSplit {
    pub split: SplitCandidate,
    pub left_size: usize,
    pub right_size: usize,
    pub left_n_tilde: f64,
    pub right_n_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Split {
        split: SplitCandidate,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        reason: HaltReason,
        /// Absent for empty subsets.
        center: Option<Vec<f64>>,
        rejected: Option<RejectedSplit>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// `L`/`R` steps from the root.
    pub path: String,
    pub depth: usize,
    pub indices: Vec<usize>,
    pub n_tilde: f64,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        match &self.kind {
            NodeKind::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
            NodeKind::Leaf { .. } => out.push(self),
        }
    }

    pub fn visit(&self, f: &mut impl FnMut(&TreeNode)) {
        f(self);
        if let NodeKind::Split { left, right, .. } = &self.kind {
            left.visit(f);
            right.visit(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub dim: usize,
    pub root: TreeNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub count_noise: CountNoise,
    pub n_total: usize,
    pub count_offset: f64,
    /// Nodes whose noisy size was raised to 1 before scoring.
    pub floor_hits: usize,
    /// Scored candidates whose emptiness fell outside [0, 1].
    pub clamp_violations: usize,
    pub max_leaf_depth: usize,
    pub averaging: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub config: DpmConfig,
    pub seed: u64,
    pub tree: ClusterTree,
    /// Non-empty leaves in tree order.
    pub clusters: Vec<Vec<usize>>,
    pub centers: Vec<Vec<f64>>,
    pub halt_reasons: Vec<HaltReason>,
    pub budget: PrivacyParams,
    pub budget_tree: BudgetNode,
    pub metadata: RunMetadata,
}

impl ClusteringResult {
    pub fn reached_max_depth(&self) -> bool {
        self.tree
            .root
            .leaves()
            .iter()
            .any(|l| matches!(l.kind, NodeKind::Leaf { reason: HaltReason::MaxDepth, .. }))
    }

    /// Cluster id per point.
    pub fn assignments(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (k, c) in self.clusters.iter().enumerate() {
            for &i in c {
                out[i] = k;
            }
        }
        out
    }
}

/// Clipped mean plus Laplace noise of scale 2·clip·d/(ε·count) per coordinate.
pub fn dp_average<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    clip_bound: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let first = points.first().ok_or(Error::Empty("point list"))?;
    let d = first.as_ref().len();
    if !(clip_bound > 0.0) {
        return Err(Error::param("clip_bound", "must be positive"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let mut sum = vec![0.0; d];
    for p in points {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        for (s, &x) in sum.iter_mut().zip(p) {
            *s += x.clamp(-clip_bound, clip_bound);
        }
    }
    let count = points.len() as f64;
    let scale = 2.0 * clip_bound * d as f64 / (epsilon * count);
    sum.iter()
        .map(|s| Ok(s / count + dp::laplace_sample(scale, rng)?))
        .collect()
}

pub const AVERAGING_FORMULA: &str =
    "clip each coordinate to [-clip_bound, clip_bound], take the mean, add Laplace(2*clip_bound*d/(eps_avg*count)) per coordinate";

/// Scores and selection mechanism at one node, shared with the exact
/// enumeration in [`crate::simulate`].
pub(crate) struct NodeScores {
    pub candidates: Vec<SplitCandidate>,
    pub mechanism: ExponentialMechanism,
    pub floored: bool,
}

pub(crate) fn score_node(
    dataset: &Dataset,
    indices: &[usize],
    positions: &[CandidatePosition],
    n_tilde: f64,
    config: &DpmConfig,
) -> Result<NodeScores> {
    let floored = n_tilde < 1.0;
    let n = n_tilde.max(1.0);
    let proj = Projections::new(dataset, indices);
    let candidates = splitting::score_candidates(&proj, positions, n, &config.score)?;
    let sensitivity = config.sensitivity.at(config.score.alpha, n);
    let mechanism = ExponentialMechanism::new(config.eps_select, sensitivity, config.convention)?;
    Ok(NodeScores {
        candidates,
        mechanism,
        floored,
    })
}

/// Left side gets projected values strictly below the split position.
pub(crate) fn partition(
    dataset: &Dataset,
    indices: &[usize],
    dimension: usize,
    position: f64,
) -> (Vec<usize>, Vec<usize>) {
    indices
        .iter()
        .partition(|&&i| dataset.point(i)[dimension] < position)
}

struct Ctx<'a> {
    dataset: &'a Dataset,
    config: &'a DpmConfig,
    positions: Vec<CandidatePosition>,
    seed: u64,
    n_total: usize,
}

struct Built {
    node: TreeNode,
    budget: BudgetNode,
    floor_hits: usize,
    clamp_violations: usize,
}

impl Ctx<'_> {
    fn count<R: Rng + ?Sized>(&self, raw: usize, rng: &mut R) -> Result<NoisyCount> {
        let c = self.config;
        match c.count_noise {
            CountNoise::Laplace => dp::noisy_count(raw, c.eps_count, c.delta, self.n_total, rng),
            CountNoise::NoiseFree => dp::mean_noisy_count(raw, c.eps_count, c.delta, self.n_total),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn leaf<R: Rng + ?Sized>(
        &self,
        path: String,
        depth: usize,
        indices: Vec<usize>,
        n_tilde: f64,
        reason: HaltReason,
        rejected: Option<RejectedSplit>,
        rng: &mut R,
    ) -> Result<(TreeNode, Option<BudgetNode>)> {
        let (center, budget) = if indices.is_empty() {
            (None, None)
        } else {
            let pts: Vec<&[f64]> = indices.iter().map(|&i| self.dataset.point(i)).collect();
            let c = dp_average(&pts, self.config.clip_bound, self.config.eps_avg, rng)?;
            let b = BudgetNode::Mechanism(PrivacyParams {
                epsilon: self.config.eps_avg,
                delta: 0.0,
            });
            (Some(c), Some(b))
        };
        let node = TreeNode {
            path,
            depth,
            indices,
            n_tilde,
            kind: NodeKind::Leaf {
                reason,
                center,
                rejected,
            },
        };
        Ok((node, budget))
    }

    fn build(&self, path: String, depth: usize, indices: Vec<usize>, n_tilde: f64) -> Result<Built> {
        let steps: Vec<u64> = path.bytes().map(u64::from).collect();
        let mut rng = rng_from_seed(derive_seed(self.seed, &steps));
        let config = self.config;

        if depth >= config.tau_s {
            let (node, avg) =
                self.leaf(path, depth, indices, n_tilde, HaltReason::MaxDepth, None, &mut rng)?;
            return Ok(Built {
                node,
                budget: BudgetNode::Sequential(avg.into_iter().collect()),
                floor_hits: 0,
                clamp_violations: 0,
            });
        }

        let scored = score_node(self.dataset, &indices, &self.positions, n_tilde, config)?;
        let floor_hits = usize::from(scored.floored);
        let clamp_violations = scored
            .candidates
            .iter()
            .filter(|c| !(0.0..=1.0).contains(&c.emptiness))
            .count();
        let scores: Vec<f64> = scored.candidates.iter().map(|c| c.score).collect();
        let chosen = scored.candidates[scored.mechanism.select(&scores, &mut rng)?];
        let (left, right) = partition(self.dataset, &indices, chosen.dimension, chosen.position);
        let left_n = self.count(left.len(), &mut rng)?.value;
        let right_n = self.count(right.len(), &mut rng)?.value;

        let select = BudgetNode::Mechanism(PrivacyParams {
            epsilon: config.eps_select,
            delta: 0.0,
        });
        let counts = BudgetNode::Parallel(vec![
            BudgetNode::Mechanism(config.count_params()),
            BudgetNode::Mechanism(config.count_params()),
        ]);

        let tau_e = config.tau_e as f64;
        if left_n < tau_e || right_n < tau_e {
            let rejected = RejectedSplit {
                split: chosen,
                left_size: left.len(),
                right_size: right.len(),
                left_n_tilde: left_n,
                right_n_tilde: right_n,
            };
            let (node, avg) = self.leaf(
                path,
                depth,
                indices,
                n_tilde,
                HaltReason::MinSizeViolated,
                Some(rejected),
                &mut rng,
            )?;
            let mut parts = vec![select, counts];
            parts.extend(avg);
            return Ok(Built {
                node,
                budget: BudgetNode::Sequential(parts),
                floor_hits,
                clamp_violations,
            });
        }

        let (l, r) = rayon::join(
            || self.build(format!("{path}L"), depth + 1, left, left_n),
            || self.build(format!("{path}R"), depth + 1, right, right_n),
        );
        let (l, r) = (l?, r?);
        Ok(Built {
            floor_hits: floor_hits + l.floor_hits + r.floor_hits,
            clamp_violations: clamp_violations + l.clamp_violations + r.clamp_violations,
            budget: BudgetNode::Sequential(vec![
                select,
                counts,
                BudgetNode::Parallel(vec![l.budget, r.budget]),
            ]),
            node: TreeNode {
                path,
                depth,
                indices,
                n_tilde,
                kind: NodeKind::Split {
                    split: chosen,
                    left: Box::new(l.node),
                    right: Box::new(r.node),
                },
            },
        })
    }
}

/// Runs DPM on `dataset` with all randomness derived from `seed`.
pub fn run_dpm(dataset: &Dataset, config: &DpmConfig, seed: u64) -> Result<ClusteringResult> {
    config.validate()?;
    let positions = splitting::generate_candidates(dataset.bounds(), config.score.beta)?;
    let ctx = Ctx {
        dataset,
        config,
        positions,
        seed,
        n_total: dataset.len(),
    };
    let mut root_rng = rng_from_seed(derive_seed(seed, &[u64::MAX]));
    let root_count = ctx.count(dataset.len(), &mut root_rng)?;
    let built = ctx.build(String::new(), 0, (0..dataset.len()).collect(), root_count.value)?;
    let budget_tree = BudgetNode::Sequential(vec![
        BudgetNode::Mechanism(config.count_params()),
        built.budget,
    ]);

    let mut clusters = Vec::new();
    let mut centers = Vec::new();
    let mut halt_reasons = Vec::new();
    let mut max_leaf_depth = 0;
    for leaf in built.node.leaves() {
        max_leaf_depth = max_leaf_depth.max(leaf.depth);
        if let NodeKind::Leaf {
            reason,
            center: Some(center),
            ..
        } = &leaf.kind
        {
            clusters.push(leaf.indices.clone());
            centers.push(center.clone());
            halt_reasons.push(*reason);
        }
    }

    Ok(ClusteringResult {
        config: *config,
        seed,
        tree: ClusterTree {
            dim: dataset.dim(),
            root: built.node,
        },
        clusters,
        centers,
        halt_reasons,
        budget: budget_tree.total(),
        budget_tree,
        metadata: RunMetadata {
            count_noise: config.count_noise,
            n_total: dataset.len(),
            count_offset: root_count.offset,
            floor_hits: built.floor_hits,
            clamp_violations: built.clamp_violations,
            max_leaf_depth,
            averaging: AVERAGING_FORMULA.to_string(),
        },
    })
}

/// Re-applies the stored splits to `dataset`, returning the non-empty leaf
/// memberships in tree order.
pub fn replay(tree: &ClusterTree, dataset: &Dataset) -> Result<Vec<Vec<usize>>> {
    if tree.dim != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.dim,
            found: dataset.dim(),
        });
    }
    let mut out = Vec::new();
    replay_node(&tree.root, dataset, (0..dataset.len()).collect(), &mut out);
    Ok(out)
}

fn replay_node(node: &TreeNode, dataset: &Dataset, indices: Vec<usize>, out: &mut Vec<Vec<usize>>) {
    match &node.kind {
        NodeKind::Split { split, left, right } => {
            let (l, r) = partition(dataset, &indices, split.dimension, split.position);
            replay_node(left, dataset, l, out);
            replay_node(right, dataset, r, out);
        }
        NodeKind::Leaf { .. } => {
            if !indices.is_empty() {
                out.push(indices);
            }
        }
    }
}
