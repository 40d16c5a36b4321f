use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use otcal::calibration::{eval_calibration, CalibrationForm};
use otcal::geometry::{orientation_sign, TangentPlane};
use otcal::graph::determinant_inequality_check;
use otcal::{BoxDomain, CostField, DensitySpec, TransportProblem};

fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0_f64, n * n).prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
}

/// `A Aᵀ + ε I + (K − Kᵀ)`: positive definite symmetric part.
fn monotone(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (matrix(n), matrix(n), 1e-3..1.0_f64).prop_map(move |(a, k, eps)| {
        &a * a.transpose() + DMatrix::identity(n, n) * eps + (&k - k.transpose())
    })
}

fn point(n: usize, r: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-r..r, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn determinant_of_symmetric_part_is_smaller(b in (1usize..=4).prop_flat_map(monotone)) {
        let r = determinant_inequality_check(&b).unwrap();
        prop_assert!(r.holds, "det sym {} > det {}", r.det_sym, r.det);
    }

    #[test]
    fn calibration_scales_with_frame_determinant(
        b in matrix(2),
        a in matrix(2),
        x in point(2, 2.0),
        xb in point(2, 2.0),
    ) {
        prop_assume!(a.determinant().abs() > 1e-3);
        let g = DensitySpec::standard_gaussian(2);
        let phi = CalibrationForm::new(g.clone(), g);
        let plane = TangentPlane::graph(&b);
        let v0 = eval_calibration(&phi, &x, &xb, &plane);
        let v1 = eval_calibration(&phi, &x, &xb, &plane.transformed(&a).unwrap());
        prop_assert!((v1 - a.determinant() * v0).abs() <= 1e-12 * (1.0 + v1.abs()));
    }

    /// `Φ(ξ) ≥ √(ρρ̄ det B) ≥ √det g` on τ-oriented spacelike graphs.
    #[test]
    fn calibration_dominates_volume(
        c in (2usize..=2).prop_flat_map(monotone),
        x in point(2, 1.5),
        xb in point(2, 1.5),
    ) {
        let g = DensitySpec::standard_gaussian(2);
        for cost in [CostField::quadratic(2), CostField::sqrt1p(2)] {
            let pr = TransportProblem::new(cost, g.clone(), g.clone()).unwrap();
            let gm = -pr.cost.mixed_hessian(&x, &xb).unwrap();
            let b = gm.try_inverse().unwrap() * &c;
            let plane = TangentPlane::graph(&b);
            prop_assert_eq!(orientation_sign(&plane).unwrap(), 1);
            let h = pr.conformal_metric(&x, &xb).unwrap();
            let vol = h.gram(&plane).determinant().sqrt();
            let (r, rb) = (g.value(&x), g.value(&xb));
            let mid = (r * rb * b.determinant()).sqrt();
            let phi = eval_calibration(&CalibrationForm::of(&pr), &x, &xb, &plane);
            let tol = 1e-12 * phi.abs().max(1e-300);
            prop_assert!(phi + tol >= mid, "Φ {} < geometric mean {}", phi, mid);
            prop_assert!(mid + tol >= vol, "geometric mean {} < volume {}", mid, vol);
        }
    }

    #[test]
    fn uniform_identity_graph_is_calibrated(x in 0.05..0.95_f64) {
        let u = DensitySpec::uniform(BoxDomain::cube(1, 0.0, 1.0).unwrap());
        let pr = TransportProblem::new(CostField::quadratic(1), u.clone(), u).unwrap();
        let p = DVector::from_element(1, x);
        let plane = TangentPlane::graph(&DMatrix::identity(1, 1));
        let h = pr.conformal_metric(&p, &p).unwrap();
        prop_assert!((h.gram(&plane).determinant().sqrt() - 1.0).abs() < 1e-14);
        prop_assert!((eval_calibration(&CalibrationForm::of(&pr), &p, &p, &plane) - 1.0).abs() < 1e-14);
    }
}
