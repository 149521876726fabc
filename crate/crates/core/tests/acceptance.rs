//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p authattr-core --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use authattr::preprocess::MIN_AVG_WORD_LEN;
use authattr::synth::SmokeConfig;
use common::{e2e, oracle};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradients() -> Outcome {
    let r = oracle::gradient_check(100, 1);
    outcome(
        r.max_rel < 1e-4 && r.elapsed < Duration::from_secs(60) && r.checked > 0,
        format!(
            "{} models, {} coordinates ({} skipped at ReLU kinks), max rel err {:.2e}, {:.1}s",
            r.models,
            r.checked,
            r.kinks,
            r.max_rel,
            r.elapsed.as_secs_f64()
        ),
    )
}

fn forward() -> Outcome {
    let r = oracle::forward_check(400, 2);
    outcome(r.max_rel < 1e-6, format!("{} instances, max rel err {:.2e}", r.instances, r.max_rel))
}

fn reference_parser() -> Outcome {
    let blocks = common::reference_blocks();
    let score = common::score_reference_fixtures();
    let (rejected, malformed) = common::score_malformed();
    let rate = score.exact as f64 / score.entries as f64;
    outcome(
        blocks.len() >= 60 && rate >= 0.95 && rejected == malformed,
        format!(
            "{} blocks, {}/{} entries exact ({:.1}%), {}/{} malformed rejected",
            blocks.len(),
            score.exact,
            score.entries,
            100.0 * rate,
            rejected,
            malformed
        ),
    )
}

fn segmentation() -> Outcome {
    let s = common::score_segmentation();
    let mut detail = format!(
        "{}/{} boundaries agree, {}/{} anchor-free rejected",
        s.agree, s.labelled, s.rejected, s.anchor_free
    );
    if !s.misses.is_empty() {
        detail.push_str(&format!(" (misses: {})", s.misses.join(", ")));
    }
    outcome(
        s.labelled >= 20 && s.agree == s.labelled && s.anchor_free > 0 && s.rejected == s.anchor_free,
        detail,
    )
}

fn chunk_filter() -> Outcome {
    let cases = common::chunk_cases();
    let straddles = cases.iter().any(|c| (c.expected_avg - 4.21).abs() < 1e-9 && !c.keep)
        && cases.iter().any(|c| (c.expected_avg - 4.23).abs() < 1e-9 && c.keep);
    let (correct, total) = common::score_chunks();
    outcome(
        MIN_AVG_WORD_LEN == 4.22 && straddles && correct == total,
        format!("threshold {MIN_AVG_WORD_LEN}, {correct}/{total} hand-computed cases"),
    )
}

fn dbscan() -> Outcome {
    let fixtures = oracle::dbscan_fixtures(100, 3);
    let largest = fixtures.iter().map(|f| f.points.len()).max().unwrap_or(0);
    let r = oracle::dbscan_check(&fixtures, 50, 4);
    outcome(
        r.mismatches == 0 && r.permutation_failures == 0 && largest <= 200,
        format!(
            "{}/{} fixtures (n <= {largest}) equal the oracle, {}/{} shuffles invariant",
            r.fixtures - r.mismatches,
            r.fixtures,
            r.shuffles - r.permutation_failures,
            r.shuffles
        ),
    )
}

fn dataset() -> Outcome {
    let r = oracle::dataset_check(1000, 5);
    outcome(
        r.corpora == 1000 && r.leakage == 0 && r.label_errors == 0 && r.ratio_errors == 0,
        format!(
            "{} corpora: {} leaking, {} bad train labels, {} of {} authors outside rounding ({} flagged as drifting)",
            r.corpora, r.leakage, r.label_errors, r.ratio_errors, r.authors, r.flagged
        ),
    )
}

fn metrics() -> Outcome {
    let r = oracle::metric_check(10_000, 6);
    outcome(
        r.mismatches == 0 && r.implication_failures == 0,
        format!(
            "{} (vector, gold set) samples, {} mismatches, {} m2-without-m1",
            r.samples, r.mismatches, r.implication_failures
        ),
    )
}

fn smoke() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let s = e2e::smoke(dir.path(), &SmokeConfig::default());
    let (c, r, rn, rc) = (s.get("D50/content"), s.get("D50/references"), s.get("D50/ref-no-self"), s.get("D50/ref-cont"));
    let cc = s.get("D50-C/content");
    let a = rc >= r && rc >= c;
    let b = rn < r;
    let chunked = cc >= c;
    let fast = s.elapsed < Duration::from_secs(600);
    outcome(
        a && b && chunked && fast && s.labels == 7,
        format!(
            "{} labels (discarded {:?}); (a) ref+cont {rc:.3} vs refs {r:.3}, content {c:.3}: {}; \
             (b) no-self {rn:.3} < refs {r:.3}: {}; (c) chunked {cc:.3} >= first chunk {c:.3}: {}; {:.0}s",
            s.labels,
            s.discarded,
            verdict(a),
            verdict(b),
            verdict(chunked),
            s.elapsed.as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let (files, diff) = e2e::determinism_diff(dir.path(), &e2e::small_config(11));
    outcome(
        diff.is_empty() && files > 0,
        format!("{files} artifacts compared, {} differ {:?}", diff.len(), diff),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradients),
        ("forward oracle", forward),
        ("reference-parser fixtures", reference_parser),
        ("segmentation fixtures", segmentation),
        ("chunk filter threshold", chunk_filter),
        ("dbscan oracle and permutation invariance", dbscan),
        ("dataset invariants", dataset),
        ("metric oracles", metrics),
        ("end-to-end smoke", smoke),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "{} of {} criteria passed in {:.0}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
