use curvetrace::geometry::{grid_count, max_distance, rmesh, PointRegistry};
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..=4)
        .prop_flat_map(|d| {
            (
                proptest::collection::vec(-10.0f64..10.0, d),
                proptest::collection::vec(0.0f64..6.0, d),
                0.3f64..3.0,
            )
        })
        .prop_map(|(lo, width, step)| {
            let hi = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
            (lo, hi, step)
        })
}

fn clouds() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, f64)> {
    (1usize..=5).prop_flat_map(|d| {
        (
            Just(d),
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, d), 0..120),
            0.01f64..0.5,
        )
    })
}

proptest! {
    #[test]
    fn mesh_row_count_is_product_of_axis_counts((lo, hi, step) in boxes()) {
        let mesh = rmesh(&lo, &hi, step).unwrap();
        let expected: usize = lo.iter().zip(&hi).map(|(&l, &h)| grid_count(l, h, step)).product();
        prop_assert_eq!(mesh.len(), expected);
        for row in mesh.rows() {
            for (k, &v) in row.iter().enumerate() {
                prop_assert!(v >= lo[k] && v <= hi[k] + 1e-9 * (1.0 + hi[k].abs()));
            }
        }
    }

    #[test]
    fn stored_points_are_pairwise_farther_than_tol((d, points, tol) in clouds()) {
        let mut reg = PointRegistry::new(d, tol);
        for (i, p) in points.iter().enumerate() {
            reg.append_unique(p, i);
        }
        for i in 0..reg.len() {
            for j in 0..i {
                prop_assert!(max_distance(reg.point(i), reg.point(j)) > tol);
            }
        }
        // every rejected point has a stored neighbour
        for p in &points {
            prop_assert!(reg.belongs(p, tol));
        }
    }

    #[test]
    fn belongs_agrees_with_append((d, points, tol) in clouds(), probe in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let mut reg = PointRegistry::new(d, tol);
        for p in &points {
            reg.append_unique(p, ());
        }
        let probe = &probe[..d];
        let mut copy = reg.clone();
        prop_assert_eq!(reg.belongs(probe, tol), !copy.append_unique(probe, ()));
    }

    #[test]
    fn hashed_lookup_matches_linear_scan((d, points, tol) in clouds(), probe in proptest::collection::vec(-1.0f64..1.0, 5), r in 0.0f64..0.6) {
        let mut reg = PointRegistry::new(d, tol);
        for p in &points {
            reg.append_unique(p, ());
        }
        let probe = &probe[..d];
        let scan = (0..reg.len()).find(|&i| max_distance(reg.point(i), probe) <= r);
        prop_assert_eq!(reg.find_within(probe, r).is_some(), scan.is_some());
    }
}

#[test]
fn grid_keeps_exact_multiples() {
    assert_eq!(grid_count(-10.0, 10.0, 1.0), 21);
    assert_eq!(grid_count(0.0, 1.0, 0.005), 201);
    assert_eq!(grid_count(-1.04, 1.04, 0.7), 3);
    assert_eq!(grid_count(0.0, 0.0, 1.0), 1);
}
