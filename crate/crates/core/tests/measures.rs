use mpmf_core::measures::{p_measure, q_objective, MeasureSpec, Rates};
use proptest::prelude::*;

/// Each score as an explicit decreasing function of its objective.
fn p_from_q(measure: MeasureSpec, q: f64, p: f64) -> f64 {
    match measure {
        MeasureSpec::Ar | MeasureSpec::Am | MeasureSpec::Qm => 1.0 - q,
        MeasureSpec::FBeta { beta } => 1.0 / (1.0 + q / (p * (1.0 + beta * beta))),
        MeasureSpec::Hm => 2.0 / q,
        MeasureSpec::Gm => 1.0 / q.sqrt(),
        MeasureSpec::GTpPr => (p / q).sqrt(),
        MeasureSpec::Jac => 1.0 / (1.0 + q / p),
    }
}

fn measure_strategy() -> impl Strategy<Value = MeasureSpec> {
    (0usize..8, 0.2f64..5.0).prop_map(|(i, beta)| MeasureSpec::all(beta)[i])
}

proptest! {
    #[test]
    fn score_is_decreasing_function_of_objective(
        measure in measure_strategy(),
        fnr in 0.0f64..0.95,
        fpr in 0.0f64..0.95,
        p in 0.01f64..0.99,
    ) {
        let rates = Rates::from_errors(fnr, fpr).unwrap();
        let score = p_measure(measure, &rates, p).unwrap();
        prop_assume!(!score.degenerate);
        let q = q_objective(measure, fnr, fpr, p).unwrap();
        let expected = p_from_q(measure, q, p);
        prop_assert!((score.value - expected).abs() <= 1e-12 * expected.abs().max(1.0),
            "{measure}: P={} from Q gives {expected}", score.value);
    }

    #[test]
    fn orderings_agree(
        measure in measure_strategy(),
        a in (0.0f64..0.9, 0.0f64..0.9),
        b in (0.0f64..0.9, 0.0f64..0.9),
        p in 0.05f64..0.95,
    ) {
        let pa = p_measure(measure, &Rates::from_errors(a.0, a.1).unwrap(), p).unwrap();
        let pb = p_measure(measure, &Rates::from_errors(b.0, b.1).unwrap(), p).unwrap();
        prop_assume!(!pa.degenerate && !pb.degenerate);
        let qa = q_objective(measure, a.0, a.1, p).unwrap();
        let qb = q_objective(measure, b.0, b.1, p).unwrap();
        prop_assume!((qa - qb).abs() > 1e-9 * qa.abs().max(1.0));
        prop_assert_eq!(qa < qb, pa.value > pb.value);
    }

    #[test]
    fn f_beta_duality(beta in 0.1f64..10.0, fnr in 0.0f64..0.99, fpr in 0.0f64..1.0, p in 0.001f64..0.999) {
        let spec = MeasureSpec::f_beta(beta).unwrap();
        let f = p_measure(spec, &Rates::from_errors(fnr, fpr).unwrap(), p).unwrap();
        prop_assume!(!f.degenerate && f.value > 0.0);
        let q = q_objective(spec, fnr, fpr, p).unwrap();
        let rhs = 1.0 + q / (p * (1.0 + beta * beta));
        prop_assert!((1.0 / f.value - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn jaccard_and_f1_pick_the_same_winner(
        a in (0.0f64..0.9, 0.0f64..0.9),
        b in (0.0f64..0.9, 0.0f64..0.9),
        p in 0.05f64..0.95,
    ) {
        let f1 = MeasureSpec::FBeta { beta: 1.0 };
        let qf = |r: (f64, f64)| q_objective(f1, r.0, r.1, p).unwrap();
        let qj = |r: (f64, f64)| q_objective(MeasureSpec::Jac, r.0, r.1, p).unwrap();
        prop_assume!((qf(a) - qf(b)).abs() > 1e-9);
        prop_assert_eq!(qf(a) < qf(b), qj(a) < qj(b));
    }
}

#[test]
fn error_free_classifier_scores_one() {
    let perfect = Rates::from_errors(0.0, 0.0).unwrap();
    for measure in MeasureSpec::all(2.0) {
        let v = p_measure(measure, &perfect, 0.3).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15, "{measure}");
    }
}
