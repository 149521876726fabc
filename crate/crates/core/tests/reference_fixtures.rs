mod common;

use authattr::refparse::{extract_surnames, parse_block, split_references};
use authattr::{Error, Stage};

#[test]
fn corpus_is_large_enough() {
    let blocks = common::reference_blocks();
    assert!(blocks.len() >= 60, "{} blocks", blocks.len());
    for style in ["apa", "mla", "chicago", "angew", "ieee", "acl"] {
        let n = blocks.iter().filter(|b| b.id.contains(style)).count();
        assert!(n >= 10, "{style}: {n} blocks");
    }
}

#[test]
fn surname_lists_match_gold() {
    let score = common::score_reference_fixtures();
    let rate = score.exact as f64 / score.entries as f64;
    assert!(rate >= 0.95, "{:.3} exact over {} entries:\n{}", rate, score.entries, score.misses.join("\n"));
}

#[test]
fn malformed_blocks_are_rejected() {
    let blocks = common::malformed_blocks();
    assert!(blocks.len() >= 5);
    for b in blocks {
        match parse_block(&b.raw) {
            Err(Error::FailFast { stage: Stage::References, .. }) => {}
            other => panic!("{}: {other:?}", b.id),
        }
    }
}

#[test]
fn bracketed_blocks_split_on_indices() {
    for b in common::reference_blocks().iter().filter(|b| b.raw.trim_start().starts_with("[1]")) {
        let (entries, report) = split_references(&b.raw).unwrap();
        assert_eq!(entries.len(), b.gold.as_ref().unwrap().len(), "{}", b.id);
        assert!(report.plausible);
    }
}

#[test]
fn index_value_and_padding_do_not_matter() {
    for b in common::reference_blocks() {
        let Ok((entries, _)) = split_references(&b.raw) else { continue };
        for e in entries {
            let base = extract_surnames(&e).surnames;
            assert_eq!(extract_surnames(&format!("  {e}\t ")).surnames, base);
            if let Some(rest) = e.strip_prefix("[1] ") {
                assert_eq!(extract_surnames(&format!("[417] {rest}")).surnames, base);
            }
        }
    }
}
