//! Text overlap metrics: BLEU, ROUGE-L, and exact-match METEOR.
//!
//! All three operate on whitespace tokens, take multiple references, and
//! return scores in [0, 1]. METEOR here uses exact unigram matches only —
//! no stemming or synonymy — so it is deterministic and dependency-free.

use std::collections::HashMap;

use thiserror::Error;

use crate::{real, Real};

/// ROUGE-L recall weight (the β of the LCS F-measure).
pub const ROUGE_L_BETA: f64 = 1.2;

/// Smoothing epsilon substituted for zero n-gram precisions in BLEU.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("candidate must be non-empty")]
    EmptyCandidate,
    #[error("at least one reference is required")]
    EmptyReferences,
    #[error("reference too long for exact alignment ({0} tokens, limit 64)")]
    ReferenceTooLong(usize),
}

fn check_inputs<S: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<String>],
) -> Result<(), MetricsError> {
    if candidate.is_empty() {
        return Err(MetricsError::EmptyCandidate);
    }
    if references.is_empty() {
        return Err(MetricsError::EmptyReferences);
    }
    Ok(())
}

/// BLEU with clipped modified n-gram precision, multi-reference max, and
/// the `exp(min(0, 1 - r/c))` brevity penalty with r the closest reference
/// length. Zero precisions are smoothed to a fixed epsilon, and orders
/// above the candidate length are skipped so identical short phrases still
/// score 1.
pub fn bleu<R: Real>(
    candidate: &[String],
    references: &[Vec<String>],
    max_n: usize,
) -> Result<R, MetricsError> {
    check_inputs(candidate, references)?;
    let c = candidate.len();
    let effective_n = max_n.min(c).max(1);

    let mut log_sum = 0f64;
    for n in 1..=effective_n {
        let mut counts: HashMap<&[String], u64> = HashMap::new();
        for gram in candidate.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
        let mut matches = 0u64;
        let total = (c - n + 1) as u64;
        for (gram, &count) in &counts {
            let clip = references
                .iter()
                .map(|r| r.windows(n).filter(|g| g == gram).count() as u64)
                .max()
                .unwrap_or(0);
            matches += count.min(clip);
        }
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else {
            BLEU_EPSILON
        };
        log_sum += p.ln();
    }
    let geo_mean = (log_sum / effective_n as f64).exp();

    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap();
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(real(bp * geo_mean))
}

/// ROUGE-L: LCS-based F-measure with β = 1.2, maximized over references.
pub fn rouge_l<R: Real>(
    candidate: &[String],
    references: &[Vec<String>],
) -> Result<R, MetricsError> {
    check_inputs(candidate, references)?;
    let mut best = 0f64;
    for reference in references {
        if reference.is_empty() {
            continue;
        }
        let lcs = lcs_len(candidate, reference) as f64;
        if lcs == 0.0 {
            continue;
        }
        let p = lcs / candidate.len() as f64;
        let r = lcs / reference.len() as f64;
        let b2 = ROUGE_L_BETA * ROUGE_L_BETA;
        let f = (1.0 + b2) * r * p / (r + b2 * p);
        best = best.max(f);
    }
    Ok(real(best))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(row[j])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// Exact-match METEOR: align unigrams to maximize matches and then minimize
/// chunks, score `F_mean * (1 - 0.5 * (chunks/matches)^3)` with
/// `F_mean = 10PR / (R + 9P)`, maximized over references. No match, no score.
pub fn meteor_exact<R: Real>(
    candidate: &[String],
    references: &[Vec<String>],
) -> Result<R, MetricsError> {
    check_inputs(candidate, references)?;
    let mut best = 0f64;
    for reference in references {
        if reference.is_empty() {
            continue;
        }
        if reference.len() > 64 {
            return Err(MetricsError::ReferenceTooLong(reference.len()));
        }
        let (matches, chunks) = align(candidate, reference);
        if matches == 0 {
            continue;
        }
        let m = matches as f64;
        let p = m / candidate.len() as f64;
        let r = m / reference.len() as f64;
        let f_mean = 10.0 * p * r / (r + 9.0 * p);
        let penalty = 0.5 * (chunks as f64 / m).powi(3);
        best = best.max(f_mean * (1.0 - penalty));
    }
    Ok(real(best))
}

/// Maximum exact unigram matches and, among maximal alignments, the minimum
/// number of chunks (maximal runs contiguous and in order on both sides).
fn align(candidate: &[String], reference: &[String]) -> (usize, usize) {
    // The match count is fixed by word multiplicities; only chunking needs
    // search.
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for w in reference {
        *ref_counts.entry(w).or_insert(0) += 1;
    }
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for w in candidate {
        *cand_counts.entry(w).or_insert(0) += 1;
    }
    let required: usize = cand_counts
        .iter()
        .map(|(w, &c)| c.min(ref_counts.get(w).copied().unwrap_or(0)))
        .sum();
    if required == 0 {
        return (0, 0);
    }
    if candidate == reference {
        return (required, 1);
    }

    let mut memo = HashMap::new();
    let chunks = min_chunks(
        candidate,
        reference,
        0,
        0u64,
        usize::MAX, // no previous ref position
        required,
        &mut memo,
    )
    .expect("required match count is achievable by construction");
    (required, chunks)
}

/// Minimum chunks completing `needed` more matches from candidate position
/// `ci`, given used reference positions and the alignment of the previous
/// candidate word (`prev_ref`, MAX when the previous word was unmatched).
fn min_chunks(
    candidate: &[String],
    reference: &[String],
    ci: usize,
    used: u64,
    prev_ref: usize,
    needed: usize,
    memo: &mut HashMap<(usize, u64, usize), Option<usize>>,
) -> Option<usize> {
    if needed == 0 {
        return Some(0);
    }
    if candidate.len() - ci < needed {
        return None;
    }
    let key = (ci, used, prev_ref);
    if let Some(&cached) = memo.get(&key) {
        return cached;
    }

    let word = &candidate[ci];
    let mut best: Option<usize> = None;

    // Match this word to each free reference slot holding the same word.
    for (j, rw) in reference.iter().enumerate() {
        if rw == word && used & (1 << j) == 0 {
            let starts_chunk = prev_ref == usize::MAX || prev_ref + 1 != j;
            let cost = usize::from(starts_chunk);
            if let Some(rest) = min_chunks(
                candidate,
                reference,
                ci + 1,
                used | (1 << j),
                j,
                needed - 1,
                memo,
            ) {
                let total = cost + rest;
                if best.is_none_or(|b| total < b) {
                    best = Some(total);
                }
            }
        }
    }
    // Or leave it unmatched.
    if let Some(rest) = min_chunks(
        candidate,
        reference,
        ci + 1,
        used,
        usize::MAX,
        needed,
        memo,
    ) {
        if best.is_none_or(|b| rest < b) {
            best = Some(rest);
        }
    }

    memo.insert(key, best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn bleu_identity_is_one() {
        let c = toks("the right train");
        let got: f64 = bleu(&c, std::slice::from_ref(&c), 4).unwrap();
        assert!((got - 1.0).abs() < 1e-12);
        let short = toks("right train");
        let got: f64 = bleu(&short, std::slice::from_ref(&short), 4).unwrap();
        assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu2_hand_fixture() {
        // p1 = 2/3, p2 = 1/2, BP = 1 -> sqrt(1/3).
        let got: f64 = bleu(&toks("the right train"), &[toks("right train")], 2).unwrap();
        let expected = (2.0f64 / 3.0 * 0.5).sqrt();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.5774).abs() < 1e-4);
    }

    #[test]
    fn bleu_disjoint_is_smoothed_to_near_zero() {
        let got: f64 = bleu(&toks("cat mat"), &[toks("dog run")], 4).unwrap();
        assert!(got < 1e-6);
    }

    #[test]
    fn bleu_brevity_penalty_kicks_in() {
        // Candidate shorter than the reference: BP = exp(1 - r/c).
        let got: f64 = bleu(&toks("right train"), &[toks("the right train here")], 1).unwrap();
        let bp = (1.0f64 - 4.0 / 2.0).exp();
        assert!((got - bp * 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_rejects_degenerate_inputs() {
        let empty: Vec<String> = Vec::new();
        assert!(matches!(
            bleu::<f64>(&empty, &[toks("x")], 4),
            Err(MetricsError::EmptyCandidate)
        ));
        assert!(matches!(
            bleu::<f64>(&toks("x"), &[], 4),
            Err(MetricsError::EmptyReferences)
        ));
    }

    #[test]
    fn rouge_identity_is_one() {
        let c = toks("the right train");
        let got: f64 = rouge_l(&c, std::slice::from_ref(&c)).unwrap();
        assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_hand_fixture() {
        // LCS = 2, P = 1, R = 2/3 under the β-weighted F.
        let got: f64 = rouge_l(&toks("right train"), &[toks("the right train")]).unwrap();
        let (p, r) = (1.0f64, 2.0 / 3.0);
        let b2 = ROUGE_L_BETA * ROUGE_L_BETA;
        let expected = (1.0 + b2) * r * p / (r + b2 * p);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn rouge_disjoint_is_zero() {
        let got: f64 = rouge_l(&toks("cat mat"), &[toks("dog run")]).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn meteor_identity_closed_form() {
        for text in ["right train", "the right train", "a b c d e"] {
            let c = toks(text);
            let n = c.len() as f64;
            let got: f64 = meteor_exact(&c, std::slice::from_ref(&c)).unwrap();
            let expected = 1.0 - 0.5 / (n * n * n);
            assert!((got - expected).abs() < 1e-12, "{text}: {got} vs {expected}");
        }
    }

    #[test]
    fn meteor_swapped_words_fixture() {
        // matches = 2, chunks = 2: penalty halves the harmonic mean.
        let got: f64 = meteor_exact(&toks("right train"), &[toks("train right")]).unwrap();
        assert!((got - 0.5).abs() < 1e-12);
    }

    #[test]
    fn meteor_no_match_is_zero() {
        let got: f64 = meteor_exact(&toks("cat mat"), &[toks("dog run")]).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn meteor_minimizes_chunks_among_max_alignments() {
        // "a b" against "a b a": matching both words contiguously gives one
        // chunk; a naive left-to-right pairing of "a" to the last slot
        // would give two.
        let got: f64 = meteor_exact(&toks("a b"), &[toks("a b a")]).unwrap();
        let (p, r) = (1.0f64, 2.0 / 3.0);
        let f_mean = 10.0 * p * r / (r + 9.0 * p);
        let expected = f_mean * (1.0 - 0.5 * (1.0f64 / 2.0).powi(3));
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn multi_reference_takes_the_best() {
        let c = toks("right train");
        let refs = vec![toks("dog run"), toks("right train")];
        let b: f64 = bleu(&c, &refs, 4).unwrap();
        let r: f64 = rouge_l(&c, &refs).unwrap();
        let m: f64 = meteor_exact(&c, &refs).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
        assert!(m > 0.9);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn phrase() -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec("[a-d]{1,2}", 1..6)
        }

        proptest! {
            #[test]
            fn metrics_stay_in_unit_interval(c in phrase(), r1 in phrase(), r2 in phrase()) {
                let refs = vec![r1, r2];
                let b: f64 = bleu(&c, &refs, 4).unwrap();
                let r: f64 = rouge_l(&c, &refs).unwrap();
                let m: f64 = meteor_exact(&c, &refs).unwrap();
                for v in [b, r, m] {
                    prop_assert!((0.0..=1.0).contains(&v), "out of range: {}", v);
                }
            }
        }
    }
}
