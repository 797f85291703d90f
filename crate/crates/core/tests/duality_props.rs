use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sweepplast::duality::{additivity_check, cq_test, duality_check, DualityError, DualityVerdict};
use sweepplast::geometry::{project, ConvexSetDesc};
use sweepplast::linalg::{Vector, WeightedMetric};

fn vec_in(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vector> {
    proptest::collection::vec(lo..hi, n).prop_map(DVector::from_vec)
}

fn shape(n: usize) -> impl Strategy<Value = ConvexSetDesc> {
    prop_oneof![
        (vec_in(n, -2.0, -0.1), vec_in(n, 0.1, 2.0)).prop_map(|(lo, hi)| ConvexSetDesc::boxed(lo, hi).unwrap()),
        (vec_in(n, -0.5, 0.5), 1.0..2.0f64).prop_map(|(c, r)| ConvexSetDesc::ball(c, r).unwrap()),
        (1..=n).prop_flat_map(move |k| proptest::collection::vec(-1.0..1.0f64, n * k)
            .prop_map(move |b| ConvexSetDesc::subspace(DMatrix::from_vec(n, k, b)))),
    ]
}

/// Two sets that both contain the origin, a metric, and a point
/// to project; at most one of them is a ball.
fn pair() -> impl Strategy<Value = (ConvexSetDesc, ConvexSetDesc, WeightedMetric, Vector)> {
    (1..4usize)
        .prop_flat_map(|n| (shape(n), shape(n), proptest::collection::vec(0.3..3.0f64, n), vec_in(n, -3.0, 3.0)))
        .prop_filter("one ball at most", |(a, b, _, _)| {
            !matches!((a, b), (ConvexSetDesc::Ball { .. }, ConvexSetDesc::Ball { .. }))
        })
        .prop_map(|(a, b, w, z)| (a, b, WeightedMetric::diagonal(&w).unwrap(), z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With `x = P(z)` and `v = z − x`, `v` is normal to the intersection.
    #[test]
    fn weak_duality_and_additivity((c1, c2, metric, z) in pair()) {
        let inter = ConvexSetDesc::Intersection(vec![c1.clone(), c2.clone()]);
        let x = project(&inter, &z, &metric).unwrap();
        let v = &z - &x;
        let rep = match duality_check(&c1, &c2, &x, &v, &metric, 1e-8) {
            Err(DualityError::Unsupported(_)) => return Ok(()),
            other => other.unwrap(),
        };
        prop_assert!(rep.d_star <= rep.p_star + 1e-6 * (1.0 + rep.p_star.abs()));
        let add = additivity_check(&c1, &c2, &x, &v, &metric, 1e-8).unwrap();
        if add.holds {
            prop_assert_eq!(rep.verdict, DualityVerdict::StrongDuality);
        }
    }

    #[test]
    fn cq_verdicts_are_monotone((c1, c2, metric, _z) in pair()) {
        let v = cq_test(&c1, &c2, &metric, 1e-9).unwrap();
        prop_assert!(v.is_monotone(), "{:?}", v.outcomes());
        let swapped = cq_test(&c2, &c1, &metric, 1e-9).unwrap();
        prop_assert!(swapped.is_monotone(), "{:?}", swapped.outcomes());
    }
}
