use hyperphg::models::*;
use hyperphg::tensor::*;
use hyperphg::weights::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points(chart: Chart, bx: &SamplingBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| bx.sample(chart, &mut rng)).collect()
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    (0..dim).map(|k| if k == i { 1.0 } else { 0.0 }).collect()
}

#[test]
fn bisector_pullback_both_jacobian_routes() {
    let narrow = SamplingBox::default().with_rho_max(3.0);
    for m in [2, 3] {
        let pts = points(Chart::Bisector(m), &narrow, 100, 11);
        let map = BisectorToSiegel { m };
        for route in [JacobianRoute::Analytic, JacobianRoute::FiniteDifference] {
            let r = pullback_check(&map, &Bisector { m }, &Siegel { m }, &pts, route);
            assert_eq!(r.evaluated, 100);
            assert!(r.max_deviation < 1e-6, "m={m} {route:?}: {}", r.max_deviation);
        }
        // wide box: the entrywise deviation grows with the metric entries,
        // the scaled one does not
        let wide = points(Chart::Bisector(m), &SamplingBox::default(), 100, 12);
        let r = pullback_check(&map, &Bisector { m }, &Siegel { m }, &wide, JacobianRoute::Analytic);
        assert!(r.max_scaled_deviation < 1e-10, "m={m}: {}", r.max_scaled_deviation);
    }
}

#[test]
fn fermi_pullback() {
    for n in [3, 4] {
        let pts = points(Chart::RealFermi(n), &SamplingBox::default(), 100, 5);
        let map = FermiToUpperHalf { n };
        let r = pullback_check(
            &map,
            &RealFermi { n },
            &UpperHalfReal { n },
            &pts,
            JacobianRoute::Analytic,
        );
        assert!(r.max_deviation < 1e-9, "n={n}: {}", r.max_deviation);
    }
}

#[test]
fn bisector_curvature_on_both_routes() {
    for m in [2usize, 3] {
        let dim = 2 * m;
        let einstein = -(m as f64 + 1.0) / 2.0;
        for x in points(Chart::Bisector(m), &SamplingBox::default().with_rho_max(3.0), 3, 21) {
            let j = complex_structure_j(m, &x).unwrap();
            let e0 = unit(dim, 0);
            let je0: Vec<f64> = (0..dim).map(|i| j[(i, 0)]).collect();
            for (route, tol) in [
                (DerivativeRoute::HyperDual, 1e-10),
                (DerivativeRoute::FiniteDifference, 1e-6),
            ] {
                let c = curvature(&Bisector { m }, &x, route).unwrap();
                let (k, defect) = c.einstein_constant();
                assert!((k - einstein).abs() < tol && defect < tol, "{route:?} {k} {defect}");
                assert!((c.sectional(&e0, &je0).unwrap() + 1.0).abs() < tol);
                assert!((c.sectional(&e0, &unit(dim, 2)).unwrap() + 0.25).abs() < tol);
                assert!(c.symmetry_defect() < tol && c.bianchi_defect() < tol);
            }
        }
    }
}

#[test]
fn bisector_foliation_matches_closed_forms() {
    for m in [2usize, 3] {
        for x in points(Chart::Bisector(m), &SamplingBox::default(), 6, 31) {
            let fol = second_fundamental_form(&Bisector { m }, &x, DerivativeRoute::HyperDual).unwrap();
            let h = bisector_mean_curvature_closed(m, x[0], x[2]);
            assert!((fol.mean_curvature - h).abs() < 1e-9, "{} vs {h}", fol.mean_curvature);
            let b = bisector_frame_block(m, &x, &fol);
            let closed = bisector_block_closed(x[0], x[2]);
            for r in 0..2 {
                for c in 0..2 {
                    assert!((b[r][c] - closed[r][c]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn weight_functional_closed_matches_numeric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in [
        WeightKind::Real(3),
        WeightKind::Real(5),
        WeightKind::Complex(2),
        WeightKind::Complex(3),
    ] {
        let chart = match kind {
            WeightKind::Real(n) => Chart::RealFermi(n),
            WeightKind::Complex(m) => Chart::Bisector(m),
        };
        let mut dev_printed = 0.0f64;
        for spec in admissible_grid(kind, 3) {
            for _ in 0..2 {
                let x = sample_model_coords(chart, &mut rng);
                let c = weight_functional_closed(&spec, &x);
                let n = weight_functional_numeric(&spec, &x, DerivativeRoute::HyperDual).unwrap();
                let f = weight_functional_numeric(&spec, &x, DerivativeRoute::FiniteDifference).unwrap();
                assert!((c - n).abs() < 1e-10, "{kind:?} {c} vs {n}");
                assert!((c - f).abs() < 1e-5, "{kind:?} {c} vs {f}");
                dev_printed = dev_printed.max((c - weight_functional_printed(&spec, &x)).abs());
            }
        }
        assert!(dev_printed > 1e-2, "{kind:?}: printed line agrees ({dev_printed})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn complex_structure_is_orthogonal(seed in 0u64..10_000, m in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = SamplingBox::default().with_rho_max(3.0).sample(Chart::Bisector(m), &mut rng);
        let j = complex_structure_j(m, &x).unwrap();
        let g = Bisector { m }.evaluate(&x).unwrap();
        let dim = 2 * m;
        let sq = &j * &j + nalgebra::DMatrix::<f64>::identity(dim, dim);
        prop_assert!(sq.amax() < 1e-9, "J^2 + I = {}", sq.amax());
        let rot = j.transpose() * &g * &j - &g;
        prop_assert!(rot.amax() < 1e-8 * g.amax(), "J not orthogonal: {}", rot.amax());
    }

    #[test]
    fn complex_sectional_pinching(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = SamplingBox::default().with_rho_max(3.0).sample(Chart::Bisector(2), &mut rng);
        let c = curvature(&Bisector { m: 2 }, &x, DerivativeRoute::HyperDual).unwrap();
        let u: Vec<f64> = (0..4).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let v: Vec<f64> = (0..4).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        if let Ok(k) = c.sectional(&u, &v) {
            prop_assert!((-1.0 - 1e-8..=-0.25 + 1e-8).contains(&k), "K = {k}");
        }
    }

    #[test]
    fn real_model_constant_curvature(seed in 0u64..10_000, n in 3usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_model_coords(Chart::RealFermi(n), &mut rng);
        let c = curvature(&RealFermi { n }, &x, DerivativeRoute::HyperDual).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        if let Ok(k) = c.sectional(&u, &v) {
            prop_assert!((k + 1.0).abs() < 1e-9, "K = {k}");
        }
    }
}
