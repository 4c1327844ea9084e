//! Silhouette scores, the point-wise effect of splitting one cluster, and the
//! three-cluster counterexample family.
//!
//! Intra- and inter-cluster distances are mean point-to-point Euclidean
//! distances, not distances to centroids.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::derived_rng;
use crate::stats;
use crate::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// (inter − intra) / max(inter, intra), 0 when both vanish.
pub fn silhouette_from(inter: f64, intra: f64) -> f64 {
    let m = inter.max(intra);
    if m == 0.0 {
        0.0
    } else {
        (inter - intra) / m
    }
}

/// Maps arbitrary labels to 0..k and returns (dense labels, cluster sizes).
fn densify(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut map = std::collections::BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    let dense: Vec<usize> = labels.iter().map(|l| map[l]).collect();
    let mut sizes = vec![0; map.len()];
    for &d in &dense {
        sizes[d] += 1;
    }
    (dense, sizes)
}

/// Per-point silhouette values.
pub fn silhouette_values<P: AsRef<[f64]> + Sync>(points: &[P], labels: &[usize]) -> Result<Vec<f64>> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    if points.is_empty() {
        return Err(Error::Empty("clustering"));
    }
    let (dense, sizes) = densify(labels);
    let k = sizes.len();
    if k < 2 {
        return Err(Error::param("k", "silhouette needs at least two clusters"));
    }
    Ok((0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = dense[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            let x = points[i].as_ref();
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[dense[j]] += dist(x, p.as_ref());
                }
            }
            let intra = sums[own] / (sizes[own] - 1) as f64;
            let inter = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            silhouette_from(inter, intra)
        })
        .collect())
}

pub fn silhouette_value<P: AsRef<[f64]> + Sync>(point: usize, points: &[P], labels: &[usize]) -> Result<f64> {
    if point >= points.len() {
        return Err(Error::param("point", format!("index {point} out of range")));
    }
    Ok(silhouette_values(points, labels)?[point])
}

/// Mean silhouette value.
pub fn silhouette_score<P: AsRef<[f64]> + Sync>(points: &[P], labels: &[usize]) -> Result<f64> {
    Ok(stats::mean(&silhouette_values(points, labels)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    InSplitSubset,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseLabel {
    /// Split member whose nearest other cluster is still C.
    CRemainsNearest,
    /// Split member whose nearest other cluster is now the other part.
    OtherPartNearest,
    /// Outsider: S0 was nearest, a part is nearest now.
    Case1a,
    /// Outsider: S0 was nearest, C is nearest now.
    Case1b,
    /// Outsider: C was nearest, a part is nearest now.
    Case2a,
    /// Outsider: C was and stays nearest.
    Case2b,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Change {
    Improved,
    Unchanged,
    Worsened,
}

impl Change {
    fn between(before: f64, after: f64) -> Self {
        if after > before {
            Change::Improved
        } else if after < before {
            Change::Worsened
        } else {
            Change::Unchanged
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitChangeCase {
    pub role: Role,
    pub case: CaseLabel,
    /// Sign of the exact change of the silhouette value.
    pub change: Change,
    pub improved: bool,
    /// The sufficient condition stated for this case, evaluated literally.
    pub lemma_condition: bool,
    pub before: f64,
    pub after: f64,
}

fn check_distances(ds: &[f64]) -> Result<()> {
    if ds.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::param("distance", "distances must be finite and nonnegative"));
    }
    Ok(())
}

/// Effect of splitting S0 into S0′ and S0″ on a point of S0.
///
/// `d_c` is the mean distance to the nearest other cluster before the split,
/// `d_s0` the mean distance to the rest of S0, and `d_s0p`/`d_s0pp` the mean
/// distances to the rest of each part. `side` says which part holds the point.
pub fn classify_split_member(d_c: f64, d_s0: f64, d_s0p: f64, d_s0pp: f64, side: Side) -> Result<SplitChangeCase> {
    check_distances(&[d_c, d_s0, d_s0p, d_s0pp])?;
    let (own, other) = match side {
        Side::First => (d_s0p, d_s0pp),
        Side::Second => (d_s0pp, d_s0p),
    };
    let before = silhouette_from(d_c, d_s0);
    let after = silhouette_from(d_c.min(other), own);
    let change = Change::between(before, after);
    let (case, lemma_condition) = if d_c < other {
        (CaseLabel::CRemainsNearest, other < d_s0)
    } else {
        (CaseLabel::OtherPartNearest, other - own > d_c - d_s0)
    };
    Ok(SplitChangeCase {
        role: Role::InSplitSubset,
        case,
        change,
        improved: change == Change::Improved,
        lemma_condition,
        before,
        after,
    })
}

/// Effect of splitting S0 on a point of another cluster.
///
/// `d_c` is the mean distance to the nearest cluster other than S0 and the
/// point's own, `d_own` the point's intra-cluster distance.
pub fn classify_outsider(d_c: f64, d_s0: f64, d_s0p: f64, d_s0pp: f64, d_own: f64) -> Result<SplitChangeCase> {
    check_distances(&[d_s0, d_s0p, d_s0pp, d_own])?;
    if !(d_c >= 0.0) {
        return Err(Error::param("distance", "distances must be nonnegative"));
    }
    let parts = d_s0p.min(d_s0pp);
    let before = silhouette_from(d_c.min(d_s0), d_own);
    let after = silhouette_from(d_c.min(parts), d_own);
    let change = Change::between(before, after);
    let case = match (d_s0 < d_c, parts < d_c) {
        (true, true) => CaseLabel::Case1a,
        (true, false) => CaseLabel::Case1b,
        (false, true) => CaseLabel::Case2a,
        (false, false) => CaseLabel::Case2b,
    };
    Ok(SplitChangeCase {
        role: Role::Outside,
        case,
        change,
        improved: change == Change::Improved,
        lemma_condition: d_s0 < d_c && d_s0 < parts,
        before,
        after,
    })
}

/// Three isotropic Gaussian clusters: S0′ at the origin, S0″ at
/// (0, d_split) and C at (d_c_s0, d_split/2), so that C sits at distance
/// d_c_s0 from the centre of S0 = S0′ ∪ S0″ along an orthogonal axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig3Geometry {
    pub d_c_s0: f64,
    pub d_split: f64,
    pub sigma: f64,
}

impl Fig3Geometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_c_s0", self.d_c_s0), ("d_split", self.d_split), ("sigma", self.sigma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Infeasible(format!("{name} must be a positive distance, got {v}")));
            }
        }
        Ok(())
    }

    pub fn centers(&self) -> [[f64; 2]; 3] {
        [
            [self.d_c_s0, self.d_split / 2.0],
            [0.0, 0.0],
            [0.0, self.d_split],
        ]
    }

    /// Points of C, then S0′, then S0″, with their generating component.
    pub fn sample(&self, n_per_cluster: usize, seed: u64) -> Result<(Vec<[f64; 2]>, Vec<usize>)> {
        self.validate()?;
        let normal = Normal::new(0.0, self.sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
        let mut rng = derived_rng(seed, &[self.d_c_s0.to_bits(), self.d_split.to_bits()]);
        let mut pts = Vec::with_capacity(3 * n_per_cluster);
        let mut comp = Vec::with_capacity(3 * n_per_cluster);
        for (k, c) in self.centers().iter().enumerate() {
            for _ in 0..n_per_cluster {
                pts.push([c[0] + normal.sample(&mut rng), c[1] + normal.sample(&mut rng)]);
                comp.push(k);
            }
        }
        Ok((pts, comp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

/// Silhouette scores before (C vs S0) and after splitting S0 at the
/// hyperplane y = d_split/2.
pub fn split_outcome(geom: &Fig3Geometry, n_per_cluster: usize, seed: u64) -> Result<SplitOutcome> {
    let (pts, comp) = geom.sample(n_per_cluster, seed)?;
    let before_labels: Vec<usize> = comp.iter().map(|&c| usize::from(c != 0)).collect();
    let after_labels: Vec<usize> = pts
        .iter()
        .zip(&comp)
        .map(|(p, &c)| match c {
            0 => 0,
            _ if p[1] < geom.d_split / 2.0 => 1,
            _ => 2,
        })
        .collect();
    let (before, after) = paired_scores(&pts, &before_labels, &after_labels)?;
    Ok(SplitOutcome {
        before,
        after,
        delta: after - before,
    })
}

/// Scores of two clusterings where the second refines the first, sharing one
/// pass over all pairs.
fn paired_scores(pts: &[[f64; 2]], coarse: &[usize], fine: &[usize]) -> Result<(f64, f64)> {
    let (fine, fine_sizes) = densify(fine);
    let (coarse, coarse_sizes) = densify(coarse);
    let kf = fine_sizes.len();
    if coarse_sizes.len() < 2 {
        return Err(Error::param("k", "silhouette needs at least two clusters"));
    }
    let mut fine_to_coarse = vec![0; kf];
    for (f, c) in fine.iter().zip(&coarse) {
        fine_to_coarse[*f] = *c;
    }
    let per_point: Vec<(f64, f64)> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; kf];
            for (j, p) in pts.iter().enumerate() {
                if j != i {
                    sums[fine[j]] += dist(&pts[i], p);
                }
            }
            let mut csums = vec![0.0; coarse_sizes.len()];
            for (f, s) in sums.iter().enumerate() {
                csums[fine_to_coarse[f]] += s;
            }
            let value = |sums: &[f64], sizes: &[usize], own: usize| {
                if sizes[own] == 1 {
                    return 0.0;
                }
                let intra = sums[own] / (sizes[own] - 1) as f64;
                let inter = (0..sizes.len())
                    .filter(|&c| c != own)
                    .map(|c| sums[c] / sizes[c] as f64)
                    .fold(f64::INFINITY, f64::min);
                silhouette_from(inter, intra)
            };
            (
                value(&csums, &coarse_sizes, coarse[i]),
                value(&sums, &fine_sizes, fine[i]),
            )
        })
        .collect();
    let n = pts.len() as f64;
    Ok((
        per_point.iter().map(|p| p.0).sum::<f64>() / n,
        per_point.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d_c_s0: f64,
    pub d_split: f64,
    pub delta_sc_mean: f64,
    pub delta_sc_std: f64,
    pub before_mean: f64,
    pub after_mean: f64,
    /// Fraction of seeds with a negative change.
    pub negative_fraction: f64,
    pub seeds: usize,
}

fn summarise(geom: &Fig3Geometry, outcomes: &[SplitOutcome]) -> SweepRow {
    let deltas: Vec<f64> = outcomes.iter().map(|o| o.delta).collect();
    SweepRow {
        d_c_s0: geom.d_c_s0,
        d_split: geom.d_split,
        delta_sc_mean: stats::mean(&deltas),
        delta_sc_std: stats::std_dev(&deltas),
        before_mean: stats::mean(&outcomes.iter().map(|o| o.before).collect::<Vec<_>>()),
        after_mean: stats::mean(&outcomes.iter().map(|o| o.after).collect::<Vec<_>>()),
        negative_fraction: deltas.iter().filter(|d| **d < 0.0).count() as f64 / deltas.len() as f64,
        seeds: deltas.len(),
    }
}

/// Mean change in silhouette score over seeds for every (d_c_s0, d_split).
pub fn counterexample_experiment(
    d_c_s0: &[f64],
    d_split: &[f64],
    sigma: f64,
    n_per_cluster: usize,
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if n_per_cluster < 50 {
        return Err(Error::param("n_per_cluster", "must be at least 50"));
    }
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let mut rows = Vec::new();
    for &dc in d_c_s0 {
        for &ds in d_split {
            let geom = Fig3Geometry {
                d_c_s0: dc,
                d_split: ds,
                sigma,
            };
            let outcomes = seeds
                .iter()
                .map(|&s| split_outcome(&geom, n_per_cluster, s))
                .collect::<Result<Vec<_>>>()?;
            rows.push(summarise(&geom, &outcomes));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub geometry: Fig3Geometry,
    pub target_before: f64,
    pub outcomes: Vec<SplitOutcome>,
    pub summary: SweepRow,
}

/// Finds d_c_s0 in [lo, hi] whose seed-averaged before-score matches
/// `target_before`, by bisection (the before-score grows with d_c_s0).
pub fn calibrate_fig3(
    target_before: f64,
    d_split: f64,
    sigma: f64,
    n_per_cluster: usize,
    seeds: &[u64],
    (mut lo, mut hi): (f64, f64),
) -> Result<Calibration> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let before_at = |d: f64| -> Result<f64> {
        let geom = Fig3Geometry {
            d_c_s0: d,
            d_split,
            sigma,
        };
        let v = seeds
            .iter()
            .map(|&s| split_outcome(&geom, n_per_cluster, s).map(|o| o.before))
            .collect::<Result<Vec<_>>>()?;
        Ok(stats::mean(&v))
    };
    if before_at(lo)? > target_before || before_at(hi)? < target_before {
        return Err(Error::Infeasible(format!(
            "target silhouette {target_before} is not bracketed by d_c_s0 in [{lo}, {hi}]"
        )));
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if before_at(mid)? < target_before {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    let geometry = Fig3Geometry {
        d_c_s0: 0.5 * (lo + hi),
        d_split,
        sigma,
    };
    let outcomes = seeds
        .iter()
        .map(|&s| split_outcome(&geometry, n_per_cluster, s))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarise(&geometry, &outcomes);
    Ok(Calibration {
        geometry,
        target_before,
        outcomes,
        summary,
    })
}
