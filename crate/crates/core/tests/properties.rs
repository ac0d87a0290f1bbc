use casbi::diagnostics::{diagnose, ess_from_g};
use casbi::metrics::{ks_marginals, mmd2, KernelConfig};
use casbi::oracle::{closed_form_b, closed_form_cg, quad_b, quad_cg, tilted_cdf, ClosedFormCase, CostShape};
use casbi::proposal::{ca_weights, normalise, rejection_sample};
use casbi::{CostAwareProposal, CostModel, PenaltySpec, PriorSpec, RngKey};
use proptest::prelude::*;

fn linear_problem() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (0.1f64..50.0, 0.1f64..20.0, 1e-3f64..5.0, 0.0f64..2.0, 0.0f64..3.0)
        .prop_map(|(lo, width, slope, intercept, k)| (lo, lo + width, slope, intercept, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_within_proven_bounds((lo, hi, slope, intercept, k) in linear_problem(), seed in 0u64..1000) {
        let p = CostAwareProposal::new(
            PriorSpec::uniform(lo, hi).unwrap(),
            CostModel::analytic_linear(vec![slope], intercept),
            PenaltySpec::power(k),
        ).unwrap();
        let s = rejection_sample(&p, 300, RngKey::new(seed)).unwrap();
        prop_assert!(s.check_weight_bounds(1e-12).is_ok());
        prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let r = p.bounds.ratio();
        let e = ess_from_g(&s.g_values);
        prop_assert!(e >= 1.0 / (r * r) - 1e-9 && e <= r * r + 1e-9);
    }

    #[test]
    fn gain_within_bounds((lo, hi, slope, intercept, k) in linear_problem(), seed in 0u64..1000) {
        let p = CostAwareProposal::new(
            PriorSpec::uniform(lo, hi).unwrap(),
            CostModel::analytic_linear(vec![slope], intercept),
            PenaltySpec::power(k),
        ).unwrap();
        let r = diagnose(&p, 2000, RngKey::new(seed)).unwrap();
        prop_assert!(r.check_bounds(1e-9, 3.0).is_ok(), "{:?}", r);
    }

    #[test]
    fn weights_are_scale_free(g in prop::collection::vec(1e-3f64..1e3, 1..50), scale in 1e-3f64..1e3) {
        let a = normalise(&g).unwrap();
        let scaled: Vec<f64> = g.iter().map(|x| x * scale).collect();
        let b = normalise(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(*y));
        }
    }

    #[test]
    fn closed_forms_match_quadrature((lo, hi, slope, intercept, k) in linear_problem()) {
        let case = ClosedFormCase::new(CostShape::Linear { alpha: slope, beta: intercept }, k, lo, hi).unwrap();
        let b = closed_form_b(&case).unwrap().value;
        let qb = quad_b(&case.prior(), &case.cost_model(), &case.penalty()).unwrap();
        prop_assert!((b / qb - 1.0).abs() < 1e-8);
        let cg = closed_form_cg(&case).unwrap().value;
        let qcg = quad_cg(&case.prior(), &case.cost_model(), &case.penalty()).unwrap();
        prop_assert!((cg / qcg - 1.0).abs() < 1e-8);
        prop_assert!(cg >= 1.0 - 1e-12);
    }

    #[test]
    fn tilted_cdf_is_monotone((lo, hi, slope, intercept, k) in linear_problem(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let case = ClosedFormCase::new(CostShape::Linear { alpha: slope, beta: intercept }, k, lo, hi).unwrap();
        let (s, t) = (lo + u.min(v) * (hi - lo), lo + u.max(v) * (hi - lo));
        let (fs, ft) = (tilted_cdf(&case, s).unwrap().value, tilted_cdf(&case, t).unwrap().value);
        prop_assert!((0.0..=1.0).contains(&fs) && (0.0..=1.0).contains(&ft));
        prop_assert!(fs <= ft + 1e-15);
    }

    #[test]
    fn ks_bounded_and_rank_invariant(
        x in prop::collection::vec(-10.0f64..10.0, 1..60),
        y in prop::collection::vec(-10.0f64..10.0, 1..60),
    ) {
        let px: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
        let py: Vec<Vec<f64>> = y.iter().map(|v| vec![*v]).collect();
        let ks = ks_marginals(&px, &py).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&ks));
        let tx: Vec<Vec<f64>> = x.iter().map(|v| vec![v.exp() + v.powi(3)]).collect();
        let ty: Vec<Vec<f64>> = y.iter().map(|v| vec![v.exp() + v.powi(3)]).collect();
        prop_assert_eq!(ks, ks_marginals(&tx, &ty).unwrap()[0]);
    }

    #[test]
    fn mmd_symmetric_and_non_negative(
        x in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..30),
        y in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..30),
        ell in 0.05f64..5.0,
    ) {
        let px: Vec<Vec<f64>> = x.iter().map(|(a, b)| vec![*a, *b]).collect();
        let py: Vec<Vec<f64>> = y.iter().map(|(a, b)| vec![*a, *b]).collect();
        let k = KernelConfig::new(ell).unwrap();
        let xy = mmd2(&px, &py, &k).unwrap();
        prop_assert_eq!(xy.to_bits(), mmd2(&py, &px, &k).unwrap().to_bits());
        prop_assert!(xy >= -1e-12);
    }

    #[test]
    fn rng_streams_are_reproducible(seed in any::<u64>(), tag in any::<u64>(), idx in any::<u64>()) {
        use rand::Rng;
        let a: u64 = RngKey::new(seed).child(tag).stream(idx).random();
        let b: u64 = RngKey::new(seed).child(tag).stream(idx).random();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn weight_function_examples() {
    let cost = CostModel::analytic_linear(vec![1.0], 0.0);
    assert_eq!(ca_weights(&[vec![1.0], vec![3.0]], &cost, &PenaltySpec::power(1.0)).unwrap(), vec![0.25, 0.75]);
}
