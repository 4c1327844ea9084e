//! Split candidates and the emptiness/centreness score.
//!
//! Each dimension's range is cut into ⌈range/β⌉ equal intervals whose
//! midpoints are the candidate split positions. A candidate at `s` is scored on
//! a subset `S` with noisy size ñ as
//!
//! ```text
//! f = α · (1 − |s|/ñ) + c_{t,q}(r)
//! ```
//!
//! where `|s|` counts projected points in `[s − β/2, s + β/2]` and `r` is the
//! rank of `s` among the projected points.

use serde::{Deserialize, Serialize};

use crate::datagen::{Bounds, Dataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub alpha: f64,
    pub t: f64,
    pub q: f64,
    pub beta: f64,
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must satisfy alpha > 0, got {}", self.alpha)));
        }
        check_tq(self.t, self.q)?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must satisfy beta > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

pub(crate) fn check_tq(t: f64, q: f64) -> Result<()> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::param("q", format!("must satisfy 0 < q < 1/2, got {q}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param("t", format!("must satisfy 0 ≤ t ≤ 1, got {t}")));
    }
    if t < 2.0 * q {
        return Err(Error::param("t", format!("must satisfy t ≥ 2q, got t = {t}, q = {q}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePosition {
    pub dimension: usize,
    pub position: f64,
}

/// Interval midpoints per dimension. A width larger than the range yields a
/// single candidate at the midpoint.
pub fn generate_candidates(bounds: &[Bounds], beta: f64) -> Result<Vec<CandidatePosition>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", format!("must satisfy beta > 0, got {beta}")));
    }
    let mut out = Vec::new();
    for (dimension, b) in bounds.iter().enumerate() {
        let b = Bounds::new(b.low, b.high)?;
        // The small slack keeps exact multiples such as 1/0.25 from rounding up.
        let k = ((b.range() / beta - 1e-9).ceil() as usize).max(1);
        let width = b.range() / k as f64;
        out.extend((0..k).map(|i| CandidatePosition {
            dimension,
            position: b.low + (i as f64 + 0.5) * width,
        }));
    }
    Ok(out)
}

pub fn emptiness(count: usize, n_tilde: f64) -> Result<f64> {
    if !(n_tilde > 0.0) {
        return Err(Error::param("n_tilde", format!("must be positive, got {n_tilde}")));
    }
    Ok(1.0 - count as f64 / n_tilde)
}

/// Piecewise-linear centreness: `t` at the quantile boundaries ñq and ñ − ñq,
/// 1 at the median, 0 at ranks 0 and ñ.
pub fn centreness(rank: f64, n_tilde: f64, t: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::param("q", format!("must satisfy 0 < q < 1/2, got {q}")));
    }
    if !(n_tilde > 0.0) {
        return Err(Error::param("n_tilde", format!("must be positive, got {n_tilde}")));
    }
    let half = n_tilde / 2.0;
    let dist = half - (rank - half).abs();
    let nq = n_tilde * q;
    if rank <= nq || rank >= n_tilde - nq {
        Ok(dist * t / nq)
    } else {
        Ok((t - 2.0 * q) / (1.0 - 2.0 * q) + dist * (1.0 - t) / (half - nq))
    }
}

pub fn score(count: usize, rank: f64, n_tilde: f64, params: &ScoreParams) -> Result<f64> {
    Ok(params.alpha * emptiness(count, n_tilde)? + centreness(rank, n_tilde, params.t, params.q)?)
}

/// Number of values strictly below `position` plus half the ties.
pub fn rank_of(position: f64, sorted: &[f64]) -> f64 {
    let below = sorted.partition_point(|&x| x < position);
    let upto = sorted.partition_point(|&x| x <= position);
    below as f64 + 0.5 * (upto - below) as f64
}

/// Values inside the closed interval [position − β/2, position + β/2].
pub fn count_in_interval(position: f64, beta: f64, sorted: &[f64]) -> usize {
    let lo = sorted.partition_point(|&x| x < position - beta / 2.0);
    let hi = sorted.partition_point(|&x| x <= position + beta / 2.0);
    hi - lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub dimension: usize,
    pub position: f64,
    pub width: f64,
    pub count: usize,
    pub rank: f64,
    pub emptiness: f64,
    pub centreness: f64,
    pub score: f64,
}

/// Sorted projections of a subset onto every axis.
#[derive(Debug, Clone)]
pub struct Projections {
    sorted: Vec<Vec<f64>>,
}

impl Projections {
    pub fn new(dataset: &Dataset, indices: &[usize]) -> Self {
        let sorted = (0..dataset.dim())
            .map(|j| {
                let mut v: Vec<f64> = indices.iter().map(|&i| dataset.point(i)[j]).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        Self { sorted }
    }

    pub fn axis(&self, dimension: usize) -> &[f64] {
        &self.sorted[dimension]
    }

    pub fn len(&self) -> usize {
        self.sorted.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scores every candidate position on a subset with noisy size `n_tilde`.
pub fn score_candidates(
    projections: &Projections,
    positions: &[CandidatePosition],
    n_tilde: f64,
    params: &ScoreParams,
) -> Result<Vec<SplitCandidate>> {
    positions
        .iter()
        .map(|c| {
            let axis = projections.axis(c.dimension);
            let count = count_in_interval(c.position, params.beta, axis);
            let rank = rank_of(c.position, axis);
            let e = emptiness(count, n_tilde)?;
            let cen = centreness(rank, n_tilde, params.t, params.q)?;
            Ok(SplitCandidate {
                dimension: c.dimension,
                position: c.position,
                width: params.beta,
                count,
                rank,
                emptiness: e,
                centreness: cen,
                score: params.alpha * e + cen,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(lo: f64, hi: f64) -> Bounds {
        Bounds::new(lo, hi).unwrap()
    }

    #[test]
    fn candidate_positions() {
        let c = generate_candidates(&[b(0.0, 1.0)], 0.25).unwrap();
        let pos: Vec<f64> = c.iter().map(|c| c.position).collect();
        assert_eq!(pos, vec![0.125, 0.375, 0.625, 0.875]);
        let c = generate_candidates(&[b(0.0, 1.0)], 1.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].position, 0.5);
        let c = generate_candidates(&[b(0.0, 1.0)], 3.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].position, 0.5);
        let c = generate_candidates(&[b(0.0, 1.0), b(0.0, 2.0)], 0.5).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.iter().filter(|c| c.dimension == 1).count(), 4);
        assert!(generate_candidates(&[b(0.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn emptiness_examples() {
        assert_eq!(emptiness(0, 50.0).unwrap(), 1.0);
        assert_eq!(emptiness(100, 100.0).unwrap(), 0.0);
        assert!((emptiness(20, 100.0).unwrap() - 0.8).abs() < 1e-15);
        assert!(emptiness(120, 100.0).unwrap() < 0.0);
        assert!(emptiness(1, 0.0).is_err());
    }

    #[test]
    fn centreness_examples() {
        assert_eq!(centreness(50.0, 100.0, 0.4, 0.2).unwrap(), 1.0);
        assert_eq!(centreness(0.0, 100.0, 0.4, 0.2).unwrap(), 0.0);
        assert_eq!(centreness(100.0, 100.0, 0.4, 0.2).unwrap(), 0.0);
        assert!((centreness(20.0, 100.0, 0.4, 0.2).unwrap() - 0.4).abs() < 1e-12);
        assert!(centreness(1.0, 10.0, 0.4, 0.0).is_err());
        assert!(centreness(1.0, 10.0, 0.4, 0.5).is_err());
    }

    #[test]
    fn score_examples() {
        let p = ScoreParams { alpha: 1.0, t: 0.5, q: 0.2, beta: 0.1 };
        assert_eq!(score(0, 50.0, 100.0, &p).unwrap(), 2.0);
        assert_eq!(score(100, 0.0, 100.0, &p).unwrap(), 0.0);
        let p = ScoreParams { alpha: 2.0, t: 0.4, q: 0.2, beta: 0.1 };
        assert!((score(20, 20.0, 100.0, &p).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_examples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rank_of(0.0, &v), 0.0);
        assert_eq!(rank_of(9.0, &v), 4.0);
        assert_eq!(rank_of(2.5, &v), 2.0);
        assert_eq!(rank_of(2.0, &v), 1.5);
        assert_eq!(rank_of(2.0, &[2.0, 2.0, 2.0]), 1.5);
    }

    #[test]
    fn interval_is_closed() {
        let v = [0.0, 0.5, 1.0, 1.5];
        assert_eq!(count_in_interval(0.5, 1.0, &v), 3);
        assert_eq!(count_in_interval(2.5, 0.5, &v), 0);
    }

    #[test]
    fn params_validation_names_q_range() {
        let p = ScoreParams { alpha: 1.0, t: 0.8, q: 0.6, beta: 0.1 };
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("0 < q < 1/2"), "{msg}");
        let p = ScoreParams { alpha: 1.0, t: 0.3, q: 0.2, beta: 0.1 };
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn continuity_at_quantile_boundaries(
            q in 0.01f64..0.49,
            frac in 0.0f64..1.0,
            n in 1.0f64..1e5,
        ) {
            let t = 2.0 * q + frac * (1.0 - 2.0 * q);
            let nq = n * q;
            let half = n / 2.0;
            for r in [nq, n - nq] {
                let dist = half - (r - half).abs();
                let outer = dist * t / nq;
                let inner = (t - 2.0 * q) / (1.0 - 2.0 * q) + dist * (1.0 - t) / (half - nq);
                prop_assert!((outer - inner).abs() < 1e-9);
                prop_assert!((centreness(r, n, t, q).unwrap() - t).abs() < 1e-9);
            }
        }

        #[test]
        fn symmetric_and_bounded(
            q in 0.01f64..0.49,
            frac in 0.0f64..1.0,
            n in 1.0f64..1e4,
            u in 0.0f64..1.0,
        ) {
            let t = 2.0 * q + frac * (1.0 - 2.0 * q);
            let r = u * n;
            let a = centreness(r, n, t, q).unwrap();
            let b = centreness(n - r, n, t, q).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
            prop_assert!(a <= centreness(n / 2.0, n, t, q).unwrap() + 1e-12);
        }

        #[test]
        fn emptiness_strictly_decreasing(c in 0usize..1000, n in 1.0f64..2000.0) {
            prop_assert!(emptiness(c + 1, n).unwrap() < emptiness(c, n).unwrap());
        }

        #[test]
        fn score_is_additive(
            c in 0usize..100, r in 0.0f64..100.0, n in 1.0f64..100.0, alpha in 0.1f64..10.0
        ) {
            let p = ScoreParams { alpha, t: 0.5, q: 0.2, beta: 0.1 };
            let s = score(c, r, n, &p).unwrap();
            let e = emptiness(c, n).unwrap();
            let cen = centreness(r, n, 0.5, 0.2).unwrap();
            prop_assert_eq!(s, alpha * e + cen);
        }
    }
}
