//! Geometric separability of point sets, projections onto unit directions,
//! and gap search along a projection axis.
//!
//! ρ_{X,Y} is the minimum cross distance. The checks verify the full-width
//! bound `b − a` on cross pairs; the half-width `(b − a)/2` is reported next
//! to it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats;
use crate::{Error, Result};

const TOL: f64 = 1e-9;

fn dist<P: AsRef<[f64]>>(a: &P, b: &P) -> f64 {
    let (a, b) = (a.as_ref(), b.as_ref());
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimum distance between a point of `x` and a point of `y`.
pub fn cross_distance<P: AsRef<[f64]> + Sync>(x: &[P], y: &[P]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("point set"));
    }
    Ok(x
        .par_iter()
        .map(|a| y.iter().map(|b| dist(a, b)).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min))
}

pub fn is_rho_separable<P: AsRef<[f64]> + Sync>(x: &[P], y: &[P], rho: f64) -> Result<bool> {
    Ok(cross_distance(x, y)? >= rho)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive and finite, got {rho}")));
    }
    Ok(())
}

/// Largest number of points of `y` inside a closed ball of radius ρ/2 around
/// a point of `x`.
pub fn xi_for_rho<P: AsRef<[f64]> + Sync>(x: &[P], y: &[P], rho: f64) -> Result<usize> {
    check_rho(rho)?;
    let r = rho / 2.0;
    Ok(x
        .par_iter()
        .map(|a| y.iter().filter(|b| dist(a, *b) <= r).count())
        .max()
        .unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct XiPair {
    pub x_to_y: usize,
    pub y_to_x: usize,
}

impl XiPair {
    pub fn max(&self) -> usize {
        self.x_to_y.max(self.y_to_x)
    }
}

pub fn xi_both_ways<P: AsRef<[f64]> + Sync>(x: &[P], y: &[P], rho: f64) -> Result<XiPair> {
    Ok(XiPair {
        x_to_y: xi_for_rho(x, y, rho)?,
        y_to_x: xi_for_rho(y, x, rho)?,
    })
}

/// Unit-length direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalises `v`; the zero vector is rejected.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.is_empty() || !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::param("direction", "must be a nonzero finite vector"));
        }
        Ok(Direction(v.into_iter().map(|x| x / norm).collect()))
    }

    pub fn axis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::param("direction", format!("axis {i} out of range for dimension {dim}")));
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Ok(Direction(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

fn check_dims<P: AsRef<[f64]>>(v: &Direction, points: &[P]) -> Result<()> {
    for p in points {
        if p.as_ref().len() != v.dim() {
            return Err(Error::DimensionMismatch {
                expected: v.dim(),
                found: p.as_ref().len(),
            });
        }
    }
    Ok(())
}

pub fn project<P: AsRef<[f64]>>(v: &Direction, points: &[P]) -> Result<Vec<f64>> {
    check_dims(v, points)?;
    Ok(points.iter().map(|p| v.dot(p.as_ref())).collect())
}

/// Open interval (a, b) on a projection axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub a: f64,
    pub b: f64,
}

impl OpenInterval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::param("interval", format!("need finite a < b, got ({a}, {b})")));
        }
        Ok(OpenInterval { a, b })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn centre(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

pub fn preimage<P: AsRef<[f64]>>(v: &Direction, g: OpenInterval, points: &[P]) -> Result<Vec<usize>> {
    Ok(project(v, points)?
        .iter()
        .enumerate()
        .filter(|(_, x)| g.contains(**x))
        .map(|(i, _)| i)
        .collect())
}

pub fn preimage_count<P: AsRef<[f64]>>(v: &Direction, g: OpenInterval, points: &[P]) -> Result<usize> {
    Ok(preimage(v, g, points)?.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityCertificate {
    pub rho: f64,
    /// Half the gap width, the constant in the separability statement.
    pub rho_statement: f64,
    pub xi: usize,
    pub separator: Vec<f64>,
    pub direction: Vec<f64>,
    /// Indices with projection ≤ a and ≥ b.
    pub partition: (Vec<usize>, Vec<usize>),
    /// None when one side is empty.
    pub cross_distance: Option<f64>,
    /// Every cross pair is at least `rho` apart.
    pub verified: bool,
}

impl SeparabilityCertificate {
    /// Points of `points` strictly inside the ball of radius ρ/2 around the
    /// separator.
    pub fn recount<P: AsRef<[f64]>>(&self, points: &[P]) -> usize {
        let r = self.rho / 2.0;
        points
            .iter()
            .filter(|p| {
                let d = p
                    .as_ref()
                    .iter()
                    .zip(&self.separator)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                d < r
            })
            .count()
    }

    pub fn ball_check<P: AsRef<[f64]>>(&self, points: &[P]) -> bool {
        self.recount(points) <= self.xi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhoEmptyCheck {
    /// No projected point falls in G.
    pub antecedent: bool,
    pub preimage: usize,
    pub holds: bool,
}

/// If no projection lands in G then no point lies in the preimage of G.
pub fn check_lemma_rho_empty<P: AsRef<[f64]>>(points: &[P], v: &Direction, g: OpenInterval) -> Result<RhoEmptyCheck> {
    let proj = project(v, points)?;
    let antecedent = !proj.iter().any(|x| g.contains(*x));
    let preimage = preimage_count(v, g, points)?;
    Ok(RhoEmptyCheck {
        antecedent,
        preimage,
        holds: !antecedent || preimage == 0,
    })
}

fn certify<P: AsRef<[f64]> + Sync>(points: &[P], v: &Direction, g: OpenInterval, xi: usize) -> Result<SeparabilityCertificate> {
    let proj = project(v, points)?;
    let left: Vec<usize> = (0..points.len()).filter(|&i| proj[i] <= g.a).collect();
    let right: Vec<usize> = (0..points.len()).filter(|&i| proj[i] >= g.b).collect();
    let rho = g.width();
    let c = g.centre();

    let mut closest: Option<(f64, usize, usize)> = None;
    for &i in &left {
        for &j in &right {
            let d = dist(&points[i], &points[j]);
            if closest.is_none_or(|(best, _, _)| d < best) {
                closest = Some((d, i, j));
            }
        }
    }
    // Midpoint of the closest cross pair, moved along v until its projection
    // sits at the centre of G. Without a cross pair, c·v.
    let separator: Vec<f64> = match closest {
        Some((_, i, j)) => {
            let mid: Vec<f64> = points[i]
                .as_ref()
                .iter()
                .zip(points[j].as_ref())
                .map(|(x, y)| 0.5 * x + 0.5 * y)
                .collect();
            let shift = c - v.dot(&mid);
            mid.iter().zip(v.as_slice()).map(|(m, u)| m + shift * u).collect()
        }
        None => v.as_slice().iter().map(|u| c * u).collect(),
    };
    let cross = closest.map(|(d, _, _)| d);
    Ok(SeparabilityCertificate {
        rho,
        rho_statement: rho / 2.0,
        xi,
        separator,
        direction: v.as_slice().to_vec(),
        partition: (left, right),
        cross_distance: cross,
        verified: cross.is_none_or(|d| d >= rho - TOL),
    })
}

/// With an empty preimage of G = (a, b), the sides {v·x ≤ a} and {v·x ≥ b}
/// are at least b − a apart.
pub fn check_lemma_empty_rho<P: AsRef<[f64]> + Sync>(
    points: &[P],
    v: &Direction,
    g: OpenInterval,
) -> Result<SeparabilityCertificate> {
    let n = preimage_count(v, g, points)?;
    if n > 0 {
        return Err(Error::Precondition(format!("{n} points project into the gap")));
    }
    certify(points, v, g, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoXiCheck {
    pub xi: usize,
    /// Points projecting into G, left out of the partition.
    pub excluded: Vec<usize>,
    pub certificate: SeparabilityCertificate,
}

/// Removes the ξ points projecting into G and certifies the rest as
/// |G|-separated.
pub fn check_lemma_rhoxi<P: AsRef<[f64]> + Sync>(points: &[P], v: &Direction, g: OpenInterval) -> Result<RhoXiCheck> {
    let excluded = preimage(v, g, points)?;
    let certificate = certify(points, v, g, excluded.len())?;
    Ok(RhoXiCheck {
        xi: excluded.len(),
        excluded,
        certificate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap1D {
    pub a: f64,
    pub b: f64,
    pub xi_inside: usize,
}

impl Gap1D {
    pub fn interval(&self) -> OpenInterval {
        OpenInterval { a: self.a, b: self.b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestGap {
    pub gap: Gap1D,
    pub warning: Option<String>,
}

fn count_open(sorted: &[f64], a: f64, b: f64) -> usize {
    let lo = sorted.partition_point(|x| *x <= a);
    let hi = sorted.partition_point(|x| *x < b);
    hi.saturating_sub(lo)
}

/// Width-ρ open window inside the range of `values` holding the fewest
/// values; ties go to the window centred closest to the median.
pub fn best_gap_1d(values: &[f64], rho: f64) -> Result<BestGap> {
    check_rho(rho)?;
    if values.is_empty() {
        return Err(Error::Empty("projected values"));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("values", "must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let med = stats::median(&sorted);

    if rho > hi - lo {
        let a = 0.5 * (lo + hi) - rho / 2.0;
        return Ok(BestGap {
            gap: Gap1D {
                a,
                b: a + rho,
                xi_inside: count_open(&sorted, a, a + rho),
            },
            warning: Some(format!(
                "rho = {rho} exceeds the projected range {}; using a single centred window",
                hi - lo
            )),
        });
    }

    let (amin, amax) = (lo, hi - rho);
    let mut starts: Vec<f64> = sorted.iter().flat_map(|&x| [x, x - rho]).collect();
    starts.extend([amin, amax, med - rho / 2.0]);
    let best = starts
        .into_iter()
        .map(|a| a.clamp(amin, amax))
        .map(|a| (count_open(&sorted, a, a + rho), (a + rho / 2.0 - med).abs(), a))
        .min_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.total_cmp(&y.2)))
        .expect("at least one window");
    Ok(BestGap {
        gap: Gap1D {
            a: best.2,
            b: best.2 + rho,
            xi_inside: best.0,
        },
        warning: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub direction: Vec<f64>,
    pub gap: Gap1D,
    pub certificate: SeparabilityCertificate,
    pub warning: Option<String>,
}

/// Best width-ρ gap over the given directions, certified along the winner.
/// Fewer points inside wins; ties keep the earlier direction.
pub fn best_separation<P: AsRef<[f64]> + Sync>(points: &[P], rho: f64, directions: &[Direction]) -> Result<Separation> {
    if directions.is_empty() {
        return Err(Error::Empty("direction list"));
    }
    let gaps = directions
        .par_iter()
        .map(|v| best_gap_1d(&project(v, points)?, rho))
        .collect::<Result<Vec<_>>>()?;
    let (k, best) = gaps
        .iter()
        .enumerate()
        .min_by_key(|(k, g)| (g.gap.xi_inside, *k))
        .expect("nonempty");
    let check = check_lemma_rhoxi(points, &directions[k], best.gap.interval())?;
    Ok(Separation {
        direction: directions[k].as_slice().to_vec(),
        gap: best.gap,
        certificate: check.certificate,
        warning: best.warning.clone(),
    })
}

/// Emptiness of a candidate whose interval holds ξ points.
pub fn emptiness_xi_bridge(xi: usize, n_tilde: f64) -> Result<f64> {
    if !(n_tilde > 0.0) {
        return Err(Error::param("n_tilde", "must be positive"));
    }
    Ok(1.0 - xi as f64 / n_tilde)
}
