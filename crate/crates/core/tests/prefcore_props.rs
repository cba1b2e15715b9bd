use pairalign::prefcore::{
    halfspace_satisfied, logistic, loss_gradient, total_loss, tuple_loss, PreferenceDataset, PreferenceTuple,
};
use proptest::prelude::*;

fn vec_in(d: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, d)
}

/// A dimension, a dataset of unit-bounded differences, and two parameters.
fn instance() -> impl Strategy<Value = (PreferenceDataset<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(|d| {
        let tuple = (vec_in(d, 1.0), 0u8..=1).prop_map(|(z, r)| {
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            PreferenceTuple::from_parts(0, 1, r, z.into_iter().map(|v| v / n).collect()).unwrap()
        });
        (prop::collection::vec(tuple, 0..=20), vec_in(d, 3.0), vec_in(d, 3.0)).prop_map(move |(ts, a, b)| {
            let mut data = PreferenceDataset::new(d);
            for t in ts {
                data.push(t).unwrap();
            }
            (data, a, b)
        })
    })
}

proptest! {
    #[test]
    fn logistic_range_and_symmetry(u in -1e3f64..1e3) {
        let (p, q) = (logistic(u), logistic(-u));
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!((p + q - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn label_sign_duality(z in vec_in(3, 0.5), theta in vec_in(3, 3.0), r in 0u8..=1) {
        let t = PreferenceTuple::from_parts(0, 1, r, z.clone()).unwrap();
        let flipped = PreferenceTuple::from_parts(0, 1, 1 - r, z).unwrap();
        let neg: Vec<f64> = theta.iter().map(|v| -v).collect();
        let (a, b) = (tuple_loss(&theta, &t).unwrap(), tuple_loss(&neg, &flipped).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn total_loss_is_convex((data, a, b) in instance(), alpha in 0.0f64..=1.0) {
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
        let lhs = total_loss(&mix, &data).unwrap();
        let rhs = alpha * total_loss(&a, &data).unwrap() + (1.0 - alpha) * total_loss(&b, &data).unwrap();
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences((data, theta, _) in instance()) {
        let g = loss_gradient(&theta, &data).unwrap();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (total_loss(&up, &data).unwrap() - total_loss(&down, &data).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6, "coordinate {}: {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn both_halfspaces_only_on_the_boundary(z in vec_in(2, 0.5), theta in vec_in(2, 3.0), r in 0u8..=1) {
        let t = PreferenceTuple::from_parts(0, 1, r, z.clone()).unwrap();
        let neg: Vec<f64> = theta.iter().map(|v| -v).collect();
        if halfspace_satisfied(&theta, &t).unwrap() && halfspace_satisfied(&neg, &t).unwrap() {
            let m: f64 = theta.iter().zip(&z).map(|(a, b)| a * b).sum();
            prop_assert!(m.abs() <= 1e-9);
        }
    }

    #[test]
    fn orthogonal_parameter_satisfies_both_sides(x in -0.5f64..0.5, s in -3.0f64..3.0, r in 0u8..=1) {
        let t = PreferenceTuple::from_parts(0, 1, r, vec![x, 0.0]).unwrap();
        prop_assert!(halfspace_satisfied(&[0.0, s], &t).unwrap());
        prop_assert!(halfspace_satisfied(&[0.0, -s], &t).unwrap());
    }
}
