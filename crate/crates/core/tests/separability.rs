use dpm_core::separability::{self, Direction, OpenInterval};
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn points(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 2..max)
}

fn direction() -> impl Strategy<Value = Direction> {
    (0.0f64..std::f64::consts::TAU).prop_map(|t| Direction::new(vec![t.cos(), t.sin()]).unwrap())
}

/// Fewest values strictly inside any width-ρ window within [min, max - ρ],
/// by scanning every breakpoint and the midpoints between them.
fn exhaustive_min(values: &[f64], rho: f64) -> usize {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut starts: Vec<f64> = values.iter().flat_map(|&x| [x, x - rho]).chain([lo, hi - rho]).collect();
    starts.retain(|a| *a >= lo && *a <= hi - rho);
    starts.sort_by(f64::total_cmp);
    let mids: Vec<f64> = starts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    starts
        .iter()
        .chain(&mids)
        .map(|&a| values.iter().filter(|&&x| a < x && x < a + rho).count())
        .min()
        .unwrap()
}

fn rotate(p: &[f64], t: f64) -> Vec<f64> {
    let (c, s) = (t.cos(), t.sin());
    vec![c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

proptest! {
    #[test]
    fn projection_is_a_contraction(pts in points(30), v in direction()) {
        let proj = separability::project(&v, &pts).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                prop_assert!((proj[i] - proj[j]).abs() <= dist(&pts[i], &pts[j]) + 1e-12);
            }
        }
    }

    #[test]
    fn cross_distance_and_xi_match_brute_force(x in points(20), y in points(20), rho in 0.1f64..8.0) {
        let brute = x.iter().flat_map(|a| y.iter().map(move |b| dist(a, b))).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(separability::cross_distance(&x, &y).unwrap(), brute);
        prop_assert_eq!(separability::is_rho_separable(&x, &y, rho).unwrap(), brute >= rho);

        let xi = x.iter().map(|a| y.iter().filter(|b| dist(a, b) <= rho / 2.0).count()).max().unwrap();
        prop_assert_eq!(separability::xi_for_rho(&x, &y, rho).unwrap(), xi);
        let both = separability::xi_both_ways(&x, &y, rho).unwrap();
        prop_assert_eq!(both.x_to_y, xi);
        prop_assert!(both.max() >= xi);
    }

    #[test]
    fn xi_is_monotone_in_rho(x in points(20), y in points(20), r1 in 0.1f64..8.0, r2 in 0.1f64..8.0) {
        let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(separability::xi_for_rho(&x, &y, small).unwrap() <= separability::xi_for_rho(&x, &y, large).unwrap());
    }

    #[test]
    fn preimage_count_matches_projection(pts in points(40), v in direction(), a in -10.0f64..10.0, w in 0.01f64..5.0) {
        let g = OpenInterval::new(a, a + w).unwrap();
        let brute = pts.iter().filter(|p| { let s = v.dot(p); a < s && s < a + w }).count();
        prop_assert_eq!(separability::preimage_count(&v, g, &pts).unwrap(), brute);
        let check = separability::check_lemma_rho_empty(&pts, &v, g).unwrap();
        prop_assert!(check.holds);
    }

    #[test]
    fn best_gap_matches_exhaustive_scan(values in prop::collection::vec(-50.0f64..50.0, 2..200), frac in 0.01f64..0.9) {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(hi - lo > 1e-6);
        let rho = frac * (hi - lo);
        let best = separability::best_gap_1d(&values, rho).unwrap();
        prop_assert!(best.warning.is_none());
        prop_assert_eq!(best.gap.xi_inside, exhaustive_min(&values, rho));
        prop_assert!(best.gap.a >= lo && best.gap.b <= hi + 1e-9);
        prop_assert!((best.gap.b - best.gap.a - rho).abs() < 1e-9);
    }

    #[test]
    fn certificates_are_sound(pts in points(40), v in direction(), a in -8.0f64..8.0, w in 0.1f64..4.0) {
        let g = OpenInterval::new(a, a + w).unwrap();
        let check = separability::check_lemma_rhoxi(&pts, &v, g).unwrap();
        let cert = &check.certificate;
        prop_assert!(cert.verified);
        prop_assert_eq!(cert.xi, check.excluded.len());
        prop_assert_eq!(cert.partition.0.len() + cert.partition.1.len() + cert.xi, pts.len());
        if let Some(d) = cert.cross_distance {
            prop_assert!(d >= w - 1e-9);
        }
        prop_assert!(cert.ball_check(&pts));
        prop_assert!((v.dot(&cert.separator) - g.centre()).abs() < 1e-9);
    }

    #[test]
    fn certificates_rotate_with_the_data(pts in points(30), t in 0.0f64..std::f64::consts::TAU, a in -5.0f64..5.0, w in 0.1f64..4.0) {
        let v = Direction::axis(2, 0).unwrap();
        let g = OpenInterval::new(a, a + w).unwrap();
        let base = separability::check_lemma_rhoxi(&pts, &v, g).unwrap();

        let moved: Vec<Vec<f64>> = pts.iter().map(|p| rotate(p, t)).collect();
        let v2 = Direction::new(rotate(v.as_slice(), t)).unwrap();
        // Keep clear of boundary points, where rounding could flip membership.
        let proj = separability::project(&v, &pts).unwrap();
        prop_assume!(proj.iter().all(|s| (s - a).abs() > 1e-7 && (s - a - w).abs() > 1e-7));
        let turned = separability::check_lemma_rhoxi(&moved, &v2, g).unwrap();

        prop_assert_eq!(&base.excluded, &turned.excluded);
        prop_assert_eq!(&base.certificate.partition, &turned.certificate.partition);
        match (base.certificate.cross_distance, turned.certificate.cross_distance) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (None, None) => {}
            _ => prop_assert!(false, "cross distance presence differs"),
        }
        let expected = rotate(&base.certificate.separator, t);
        prop_assert!(dist(&expected, &turned.certificate.separator) < 1e-7);
    }
}

#[test]
fn two_blobs_separate_along_x() {
    let mut pts = Vec::new();
    for i in 0..20 {
        let y = i as f64 * 0.1;
        pts.push(vec![0.0 + 0.01 * i as f64, y]);
        pts.push(vec![5.0 + 0.01 * i as f64, y]);
    }
    let dirs = [Direction::axis(2, 1).unwrap(), Direction::axis(2, 0).unwrap()];
    let sep = separability::best_separation(&pts, 3.0, &dirs).unwrap();
    assert_eq!(sep.direction, vec![1.0, 0.0]);
    assert_eq!(sep.gap.xi_inside, 0);
    assert!(sep.certificate.verified);
    assert_eq!(sep.certificate.partition.0.len(), 20);
    assert!(sep.certificate.cross_distance.unwrap() >= 3.0);

    let strict = separability::check_lemma_empty_rho(&pts, &dirs[1], sep.gap.interval()).unwrap();
    assert_eq!(strict.xi, 0);
    assert!(separability::check_lemma_empty_rho(&pts, &dirs[1], OpenInterval::new(-1.0, 1.0).unwrap()).is_err());
}

#[test]
fn wide_rho_warns() {
    let g = separability::best_gap_1d(&[0.0, 1.0, 2.0], 5.0).unwrap();
    assert!(g.warning.is_some());
    assert_eq!(g.gap.xi_inside, 3);
    assert!((separability::emptiness_xi_bridge(3, 12.0).unwrap() - 0.75).abs() < 1e-15);
}
