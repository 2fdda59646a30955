use modguard_core::metrics::{confusion, prf1, roc_auc, EvaluationReport};
use proptest::prelude::*;

fn scored(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (
        prop::collection::vec(prop_oneof![(0u8..8).prop_map(|q| q as f64 / 8.0), -5.0f64..5.0], n),
        prop::collection::vec(0u8..=1, n),
    )
        .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn auc_ignores_order((s, y) in (2usize..60).prop_flat_map(scored), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        // Fisher-Yates driven by a simple LCG; proptest already randomises the seed.
        let mut state = seed | 1;
        for i in (1..idx.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (state >> 33) as usize % (i + 1));
        }
        let s2: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
        let y2: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
        let a = roc_auc(&s, &y).unwrap();
        let b = roc_auc(&s2, &y2).unwrap();
        prop_assert_eq!(a.auc, b.auc);
        prop_assert_eq!(a.points, b.points);
    }

    #[test]
    fn roc_is_monotone_staircase((s, y) in (2usize..60).prop_flat_map(scored)) {
        let r = roc_auc(&s, &y).unwrap();
        prop_assert_eq!(r.points.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(r.points.last().copied(), Some((1.0, 1.0)));
        for w in r.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        prop_assert!((0.0..=1.0).contains(&r.auc));
    }

    #[test]
    fn negated_scores_mirror_auc((s, y) in (2usize..60).prop_flat_map(scored)) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = roc_auc(&s, &y).unwrap().auc;
        let b = roc_auc(&neg, &y).unwrap().auc;
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_transform_keeps_auc((s, y) in (2usize..60).prop_flat_map(scored)) {
        let t: Vec<f64> = s.iter().map(|v| 3.0 * v + 7.0).collect();
        prop_assert_eq!(roc_auc(&s, &y).unwrap().auc, roc_auc(&t, &y).unwrap().auc);
    }

    #[test]
    fn confusion_ignores_order(pairs in prop::collection::vec((0u8..=1, 0u8..=1), 1..80)) {
        let (y, p): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let (yr, pr): (Vec<u8>, Vec<u8>) = pairs.iter().rev().copied().unzip();
        let a = confusion(&y, &p).unwrap();
        prop_assert_eq!(a, confusion(&yr, &pr).unwrap());
        prop_assert_eq!(a.total() as usize, pairs.len());
        prop_assert_eq!(prf1(&a), prf1(&confusion(&yr, &pr).unwrap()));
    }
}

#[test]
fn report_round_trips_through_json() {
    let r = EvaluationReport::from_scores(&[0.9, 0.2, 0.6, 0.4], &[1, 0, 1, 0], &[1, 0, 0, 1]).unwrap();
    let back: EvaluationReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
    let mut csv = Vec::new();
    r.write_roc_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("fpr,tpr\n0,0\n"));
    assert_eq!(text.lines().count(), r.roc.len() + 1);
}
