use pacf::audit::{
    all_pairs_mf_loss, empirical_l1_loss, empirical_mf_loss, group_fairness_profile, surrogate_ramp,
    threshold_indicator, violation_vector,
};
use pacf::learners::{linear_program_values, LinearFairProgram};
use pacf::metric::validate_metric;
use pacf::{build_matching, LabeledDataset, MatchingStrategy, Predictor, SimilarityMetric};
use proptest::prelude::*;

fn ball_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_map(|v| {
        let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if len > 1.0 {
            v.iter().map(|a| a / len).collect()
        } else {
            v
        }
    })
}

fn sample(n: usize, m: std::ops::Range<usize>) -> impl Strategy<Value = LabeledDataset> {
    prop::collection::vec((ball_point(n), prop::bool::ANY), m).prop_map(|rows| {
        LabeledDataset::from_rows(rows.into_iter().map(|(x, y)| (x, if y { 1 } else { -1 })).collect()).unwrap()
    })
}

fn metric() -> impl Strategy<Value = SimilarityMetric> {
    prop_oneof![
        (0.0f64..=1.0).prop_map(|c| SimilarityMetric::constant(c).unwrap()),
        (0.0f64..2.0).prop_map(|s| SimilarityMetric::euclidean(s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn l1_l0_sandwich(s in sample(3, 2..30), w in ball_point(3), d in metric(),
                      tau in 0.0f64..1.0, gamma in 0.001f64..1.0, seed in any::<u64>()) {
        let h = Predictor::linear(w).unwrap();
        let m = build_matching(&s, MatchingStrategy::RandomPermutation { seed }).unwrap();
        let l1 = empirical_l1_loss(&h, &s, &m, &d).unwrap();
        let mf = empirical_mf_loss(&h, &s, &m, &d, gamma).unwrap();
        if l1 <= tau {
            prop_assert!(mf <= tau / gamma + 1e-12);
        }
        if mf <= tau - gamma {
            prop_assert!(l1 <= tau + 1e-12);
        }
    }

    #[test]
    fn mf_loss_nonincreasing_in_gamma(s in sample(2, 2..30), w in ball_point(2), d in metric(),
                                      g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
        let h = Predictor::linear(w).unwrap();
        let m = build_matching(&s, MatchingStrategy::Consecutive).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        prop_assert!(empirical_mf_loss(&h, &s, &m, &d, hi).unwrap() <= empirical_mf_loss(&h, &s, &m, &d, lo).unwrap());
    }

    #[test]
    fn violation_vector_matches_losses(s in sample(3, 2..30), w in ball_point(3), d in metric(), gamma in 0.0f64..1.0) {
        let h = Predictor::linear(w).unwrap();
        let m = build_matching(&s, MatchingStrategy::Consecutive).unwrap();
        let v = violation_vector(&h, &s, &m, &d, gamma).unwrap();
        let mf = empirical_mf_loss(&h, &s, &m, &d, gamma).unwrap();
        prop_assert_eq!(v.l0() as f64 / v.len() as f64, mf);
        prop_assert!(v.values.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn surrogate_between_thresholds(u in -1.0f64..1.0, gamma in 0.0001f64..1.0, g in 1.0f64..1000.0) {
        let t = surrogate_ramp(u, gamma, g);
        prop_assert!(threshold_indicator(u, gamma + 1.0 / g) <= t);
        prop_assert!(t <= threshold_indicator(u, gamma));
    }

    #[test]
    fn group_profile_obeys_markov(s in sample(2, 2..25), w in ball_point(2), d in metric(),
                                  gamma in 0.0f64..0.5, a2 in 0.01f64..1.0) {
        let h = Predictor::linear(w).unwrap();
        let alpha_hat = all_pairs_mf_loss(&h, &s, &d, gamma).unwrap();
        let p = group_fairness_profile(&h, &s, &d, gamma, &[a2]).unwrap();
        prop_assert!(p[0].alpha1 <= alpha_hat / a2 + 1e-12);
    }

    #[test]
    fn linear_program_is_convex(s in sample(3, 2..20), d in metric(), tau in 0.0f64..0.3,
                                w1 in ball_point(3), w2 in ball_point(3), t in 0.0f64..=1.0) {
        let m = build_matching(&s, MatchingStrategy::Consecutive).unwrap();
        let p = LinearFairProgram::new(&s, &m, &d, tau).unwrap();
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let (f1, g1) = linear_program_values(&p, &w1);
        let (f2, g2) = linear_program_values(&p, &w2);
        let (fm, gm) = linear_program_values(&p, &mix);
        prop_assert!(fm <= t * f1 + (1.0 - t) * f2 + 1e-9);
        prop_assert!(gm <= t * g1 + (1.0 - t) * g2 + 1e-9);
    }

    #[test]
    fn builtin_metrics_are_pseudometrics(s in sample(3, 3..20), d in metric(), seed in any::<u64>()) {
        prop_assert!(validate_metric(&d, &s, 200, seed).unwrap().is_clean());
    }

    #[test]
    fn csv_round_trip(s in sample(4, 1..20)) {
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = LabeledDataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), s.len());
        for (a, b) in back.iter().zip(s.iter()) {
            prop_assert_eq!(a.features(), b.features());
            prop_assert_eq!(a.label(), b.label());
        }
    }

    #[test]
    fn predictions_are_probabilities(w in ball_point(4), x in ball_point(4), l in 0.1f64..100.0) {
        let ex = pacf::Example::new(x, 1).unwrap();
        for h in [Predictor::linear(w.clone()).unwrap(), Predictor::logistic(w.clone(), l).unwrap()] {
            let p = h.predict(&ex).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
