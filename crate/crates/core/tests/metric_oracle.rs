mod common;

use std::collections::BTreeSet;

use authattr::evaluate::{self, PaperPrediction};
use common::oracle;
use proptest::prelude::*;

#[test]
fn metrics_match_enumeration() {
    let r = oracle::metric_check(10_000, 31);
    assert_eq!(r.samples, 10_000 * 31);
    assert_eq!(r.mismatches, 0);
    assert_eq!(r.implication_failures, 0);
}

#[test]
fn ties_rank_by_index() {
    let p = vec![0.25, 0.25, 0.1, 0.25, 0.15];
    assert_eq!(evaluate::rank(&p), vec![0, 1, 3, 4, 2]);
}

#[test]
fn count_estimate_examples() {
    let pred = |p: Vec<f64>| PaperPrediction {
        paper_id: String::new(),
        logits: Vec::new(),
        ranked: evaluate::rank(&p),
        probabilities: p,
    };
    assert_eq!(evaluate::estimate_author_count(&pred(vec![0.5, 0.45, 0.04, 0.01]), 0.1), 2);
    assert_eq!(evaluate::estimate_author_count(&pred(vec![0.96, 0.01, 0.01, 0.01, 0.01]), 0.1), 1);
    assert_eq!(evaluate::estimate_author_count(&pred(vec![0.2; 5]), 0.1), 5);
}

proptest! {
    #[test]
    fn exact_top_set_implies_top_label(raw in prop::collection::vec(0u8..6, 5), mask in 1u32..32) {
        let total: f64 = raw.iter().map(|&x| f64::from(x)).sum::<f64>().max(1.0);
        let p: Vec<f64> = raw.iter().map(|&x| f64::from(x) / total).collect();
        let pred = PaperPrediction { paper_id: String::new(), logits: Vec::new(), ranked: evaluate::rank(&p), probabilities: p.clone() };
        let gold: BTreeSet<usize> = (0..5).filter(|i| mask & (1 << i) != 0).collect();
        if evaluate::metric2(&pred, &gold) {
            prop_assert!(evaluate::metric1(&pred, &gold));
            prop_assert!(evaluate::metric4(&pred, &gold, gold.len()));
        }
        prop_assert_eq!(evaluate::metric4(&pred, &gold, 5), true);
    }
}
