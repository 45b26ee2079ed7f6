use hyperphg::indicial::{ExactWeight, Rational};
use hyperphg::phg::*;
use proptest::prelude::*;

fn weight() -> impl Strategy<Value = ExactWeight> {
    (
        -6i64..=6,
        1i64..=4,
        -3i64..=3,
        1i64..=3,
        prop::sample::select(vec![2i64, 3, 5, 13]),
    )
        .prop_map(|(p, q, a, b, r)| {
            let root = ExactWeight::sqrt_of(Rational::from_integer(r)).unwrap();
            &ExactWeight::rational(Rational::new(p, q)) + &root.scale(Rational::new(a, b))
        })
}

fn series() -> impl Strategy<Value = PolySeries> {
    prop::collection::vec((0u32..3, 0i64..8, 1i64..3, -2.0f64..2.0), 0..5).prop_map(|v| {
        PolySeries::from_terms(
            v.into_iter()
                .map(|(sigma, p, q, c)| PolyTerm::new(sigma, ExactWeight::rational(Rational::new(p, q)), c)),
        )
    })
}

fn close(a: &PolySeries, b: &PolySeries, tol: f64) -> bool {
    (a - b).max_abs_coeff() <= tol * (1.0 + a.max_abs_coeff().max(b.max_abs_coeff()))
}

proptest! {
    #[test]
    fn exact_weight_round_trips(a in weight(), b in weight()) {
        prop_assert_eq!(&(&a + &b) - &b, a.clone());
        prop_assert_eq!(a.expr().parse::<ExactWeight>().unwrap(), a.clone());
        if (a.value() - b.value()).abs() > 1e-9 {
            prop_assert_eq!(a.cmp(&b), a.value().partial_cmp(&b.value()).unwrap());
        }
    }

    #[test]
    fn series_product_laws(a in series(), b in series(), c in series()) {
        prop_assert!(close(&(&a * &b), &(&b * &a), 1e-14));
        prop_assert!(close(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c)), 1e-12));
        if let (Some(fa), Some(fb)) = (a.floor(), b.floor()) {
            let prod = &a * &b;
            // the floor coefficient is a single product, so it cannot cancel
            prop_assert_eq!(prod.floor(), Some(&(fa + fb)));
        }
    }

    #[test]
    fn component_split_is_exact(a in series()) {
        if let Some(f) = a.floor().cloned() {
            let rest = a.without_component(&f);
            prop_assert_eq!(&rest + &a.component(&f), a.clone());
            prop_assert!(rest.floor().is_none_or(|g| g > &f));
        }
    }

    #[test]
    fn right_inverses(h_num in 1i64..13, lam_num in -8i64..20, sigma in 0u32..=3, shift in 1i64..6) {
        let hcal = Rational::new(h_num, 2);
        let lambda = Rational::new(lam_num, 4);
        let Ok(op) = RadialOperator::scalar(hcal, lambda) else {
            return Ok(());
        };
        let ap = op.alpha_plus(0).clone();
        let mid = (&ap + op.alpha_minus(0)).scale(Rational::new(1, 2));
        let above = &ap + &ExactWeight::rational(Rational::new(shift, 3));
        for (tau, inf) in [(above, true), (mid, false), (ap.clone(), false)] {
            let u = PolySeries::monomial(sigma, tau.clone(), 1.0);
            let g = if inf { op.g_inf(0, &u) } else { op.g_zero(0, &u) }.unwrap();
            let back = op.apply_radial(0, &g).unwrap();
            prop_assert!((&back - &u).max_abs_coeff() <= 1e-12, "tau {tau}");
            let grows = g.max_sigma_at(&tau).unwrap() == sigma + 1;
            prop_assert_eq!(grows, tau == ap);
        }
    }
}
