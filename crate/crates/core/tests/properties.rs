use bergman_core::geometry::{bracket_sq_stable, rho_raw};
use bergman_core::interpolation::{matrix_a, solve_interpolation};
use bergman_core::io::{fmt_f64, lattice_frame, lattice_from_frame, CacheFrame, CacheKind};
use bergman_core::kernels::{KernelBackend, PowerKernel, ZonalHarmonicKernel};
use bergman_core::lattice::{build_lattice, verify_separation, SeparatedSet};
use bergman_core::operators::{CoefSeq, Polynomial, SpaceParams};
use bergman_core::Error;
use proptest::prelude::*;

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, n), 0.0f64..0.97).prop_filter_map("non-zero direction", |(v, r)| {
        let len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        (len > 1e-3).then(|| v.iter().map(|c| c / len * r).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn floats_round_trip_through_text(x in prop::num::f64::NORMAL) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn frames_round_trip(data in prop::collection::vec(-1e3f64..1e3, 0..64), seed in any::<u64>(), cut in 1usize..40) {
        let frame = CacheFrame { kind: CacheKind::Coefficients, n: 2, param_a: 0.25, param_b: 0.5, seed, count: data.len() as u64, data };
        let bytes = frame.encode();
        let back = CacheFrame::decode(&bytes).unwrap();
        prop_assert_eq!(&back.data, &frame.data);
        prop_assert_eq!(back.seed, seed);
        let cut = cut.min(bytes.len());
        prop_assert!(matches!(CacheFrame::decode(&bytes[..bytes.len() - cut]), Err(Error::Format(_))));
    }

    #[test]
    fn power_kernel_is_symmetric(x in point(3), y in point(3), s in 0.1f64..4.0) {
        let k = PowerKernel::new(s, 3).unwrap();
        let (a, b) = (k.eval(&x, &y), k.eval(&y, &x));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        prop_assert!(bracket_sq_stable(&x, &y) > 0.0);
    }

    #[test]
    fn zonal_kernel_is_symmetric(x in point(2), y in point(2)) {
        prop_assume!((x[0] * x[0] + x[1] * x[1]).sqrt() * (y[0] * y[0] + y[1] * y[1]).sqrt() < 0.9);
        let k = ZonalHarmonicKernel::new(1.0, 256).unwrap();
        let (a, b) = (k.eval(&x, &y), k.eval(&y, &x));
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn coefficient_norms_are_homogeneous(v in prop::collection::vec(-5.0f64..5.0, 1..20), t in 0.1f64..10.0, p in 0.5f64..4.0) {
        let a = CoefSeq::new(v.clone(), p).norm();
        let b = CoefSeq::new(v.iter().map(|c| c * t).collect(), p).norm();
        prop_assert!((b - t * a).abs() <= 1e-10 * (1.0 + t * a));
    }

    #[test]
    fn polynomial_text_evaluates(a in -3.0f64..3.0, b in -3.0f64..3.0, x in point(2)) {
        let p = Polynomial::parse(2, &format!("{a} * x1^2 - {b} * x1 * x2 + 1")).unwrap();
        let want = a * x[0] * x[0] - b * x[0] * x[1] + 1.0;
        prop_assert!((p.eval(&x) - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn single_point_interpolation_is_exact(x in point(2), value in -10.0f64..10.0) {
        let sp = SpaceParams::new(2.0, 0.0, 1.0, 2).unwrap();
        let k = PowerKernel::new(1.0, 2).unwrap();
        let set = SeparatedSet::from_points(2, 0.5, 0.98, x).unwrap();
        let (_, rep) = solve_interpolation(&CoefSeq::new(vec![value], 2.0), &set, &sp, &k, 1e-12, 5).unwrap();
        prop_assert!(rep.iterations <= 1);
        prop_assert!(rep.max_residual <= 1e-12 * value.abs().max(1.0));
        prop_assert_eq!(matrix_a(&set, &sp)[(0, 0)], 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn greedy_lattices_are_separated(r in 0.3f64..0.8, seed in 0u64..1000) {
        let set = build_lattice(2, r, 0.7, seed).unwrap();
        prop_assert!(verify_separation(&set) >= r);
        for i in 0..set.len() {
            for j in 0..i {
                prop_assert!(rho_raw(set.point(i), set.point(j)) >= r);
            }
        }
        let back = lattice_from_frame(&CacheFrame::decode(&lattice_frame(&set).encode()).unwrap()).unwrap();
        prop_assert_eq!(back.points, set.points);
    }
}
