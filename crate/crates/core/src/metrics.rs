//! Latency and quality metrics.
//!
//! Average lagging measures how far token emissions trail an ideal
//! translator that spends the source duration evenly across the reference
//! length. It is computed twice per run from the same rule: once from the
//! audio actually read (non-computation-aware) and once from the simulated
//! wall clock (computation-aware), which also charges encode/decode time.
//!
//! BLEU is corpus-level: clipped n-gram matches and totals are summed over
//! all sentence pairs before the geometric mean, with a brevity penalty
//! from the corpus length totals.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::DelayRecord;

/// Average lagging of `delays_ms` against a source of `source_duration_ms`,
/// normalised by `ref_len` (the reference translation length).
///
/// The sum runs up to the first token whose delay reaches the source
/// duration (every later token necessarily has the same delay floor), or
/// over all tokens when none does.
pub fn average_lagging(delays_ms: &[f64], source_duration_ms: f64, ref_len: usize) -> Result<f64> {
    if delays_ms.is_empty() {
        return Err(Error::EmptyInput("average_lagging: no delays"));
    }
    if !(source_duration_ms > 0.0) || !source_duration_ms.is_finite() {
        return Err(Error::Contract("average_lagging: source duration must be positive"));
    }
    if ref_len == 0 {
        return Err(Error::Contract("average_lagging: reference length must be >= 1"));
    }
    for &d in delays_ms {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::NonFinite("average_lagging: delay"));
        }
    }
    let tau = delays_ms
        .iter()
        .position(|&d| d >= source_duration_ms)
        .map(|p| p + 1)
        .unwrap_or(delays_ms.len());
    let per_token = source_duration_ms / ref_len as f64;
    let mut sum = 0.0f64;
    for (i, &d) in delays_ms[..tau].iter().enumerate() {
        sum += d - per_token * i as f64;
    }
    Ok(sum / tau as f64)
}

/// Both lagging figures for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ALReport {
    /// From audio read at each emission (computation is free).
    pub al_nca_ms: f64,
    /// From the simulated clock at each emission (computation counted).
    pub al_ca_ms: f64,
    pub n_tokens: usize,
}

/// Computes both lagging variants from a run's delay records.
pub fn al_report(
    records: &[DelayRecord],
    source_frames: usize,
    frame_shift_ms: f64,
    ref_len: usize,
) -> Result<ALReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("al_report: no emissions"));
    }
    let duration = source_frames as f64 * frame_shift_ms;
    let nca: Vec<f64> = records.iter().map(|r| r.speech_read_ms).collect();
    let ca: Vec<f64> = records.iter().map(|r| r.clock_ms).collect();
    Ok(ALReport {
        al_nca_ms: average_lagging(&nca, duration, ref_len)?,
        al_ca_ms: average_lagging(&ca, duration, ref_len)?,
        n_tokens: records.len(),
    })
}

const MAX_ORDER: usize = 4;

/// Corpus BLEU over tokenised sentence pairs, orders 1..=4.
///
/// Orders with no hypothesis n-grams anywhere in the corpus are dropped
/// from the geometric mean (short inputs); an order with n-grams but zero
/// matches sends the score to 0. An empty hypothesis corpus scores 0.
pub fn corpus_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Contract("corpus_bleu: hypothesis/reference count mismatch"));
    }
    if hyps.is_empty() {
        return Err(Error::EmptyInput("corpus_bleu: empty corpus"));
    }
    let mut total = [0usize; MAX_ORDER];
    let mut matched = [0usize; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, rf) in hyps.iter().zip(refs) {
        hyp_len += hyp.len();
        ref_len += rf.len();
        for n in 1..=MAX_ORDER {
            if hyp.len() < n {
                continue;
            }
            let mut ref_counts: BTreeMap<&[String], usize> = BTreeMap::new();
            for gram in rf.windows(n) {
                *ref_counts.entry(gram).or_insert(0) += 1;
            }
            let mut hyp_counts: BTreeMap<&[String], usize> = BTreeMap::new();
            for gram in hyp.windows(n) {
                *hyp_counts.entry(gram).or_insert(0) += 1;
            }
            total[n - 1] += hyp.len() + 1 - n;
            for (gram, count) in &hyp_counts {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += (*count).min(clip);
            }
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    let mut orders_used = 0usize;
    for n in 0..MAX_ORDER {
        if total[n] == 0 {
            continue; // corpus too short for this order everywhere
        }
        orders_used += 1;
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += libm::log(matched[n] as f64 / total[n] as f64);
    }
    if orders_used == 0 {
        return Ok(0.0);
    }
    let geo_mean = libm::exp(log_sum / orders_used as f64);
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / hyp_len as f64)
    };
    Ok(bp * geo_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn al_all_tokens_at_source_end() {
        // Every token emitted at the end of a 100 ms source: the first one
        // already reaches the duration, so only it enters the average.
        let al = average_lagging(&[100.0; 5], 100.0, 5).unwrap();
        assert!((al - 100.0).abs() < 1e-9);
    }

    #[test]
    fn al_ideal_sync_equals_per_token_budget() {
        // Emitting exactly in step with an even source split lags by one
        // token budget.
        let al = average_lagging(&[50.0, 100.0, 150.0, 200.0], 200.0, 4).unwrap();
        assert!((al - 50.0).abs() < 1e-9);
    }

    #[test]
    fn al_hand_worked_three_token_case() {
        // (30-0) + (40-50/3) + (50-100/3) = 70, averaged over tau=3.
        let al = average_lagging(&[30.0, 40.0, 50.0], 50.0, 3).unwrap();
        assert!((al - 70.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn al_ignores_tokens_after_cutoff() {
        let base = average_lagging(&[30.0, 40.0, 50.0], 50.0, 3).unwrap();
        let padded = average_lagging(&[30.0, 40.0, 50.0, 50.0, 50.0, 50.0], 50.0, 3).unwrap();
        assert_eq!(base, padded);
    }

    #[test]
    fn al_shifts_with_constant_delay_offset() {
        // While no delay reaches the source end, adding a constant wait to
        // every emission adds exactly that constant to the lag.
        let d: Vec<f64> = vec![10.0, 20.0, 30.0, 40.0];
        let base = average_lagging(&d, 1000.0, 4).unwrap();
        let shifted: Vec<f64> = d.iter().map(|x| x + 15.0).collect();
        let moved = average_lagging(&shifted, 1000.0, 4).unwrap();
        assert!((moved - (base + 15.0)).abs() < 1e-9);
    }

    #[test]
    fn al_rejects_bad_input() {
        assert!(matches!(
            average_lagging(&[], 100.0, 1),
            Err(Error::EmptyInput(_))
        ));
        assert!(average_lagging(&[1.0], 0.0, 1).is_err());
        assert!(average_lagging(&[1.0], 100.0, 0).is_err());
        assert!(average_lagging(&[f64::NAN], 100.0, 1).is_err());
        assert!(average_lagging(&[-1.0], 100.0, 1).is_err());
    }

    #[test]
    fn report_offsets_ca_by_compute_when_tau_matches() {
        let records: Vec<DelayRecord> = (0..4)
            .map(|i| DelayRecord {
                index: i + 1,
                sentence: 0,
                token_id: 5,
                speech_read_ms: 10.0 * (i + 1) as f64,
                clock_ms: 10.0 * (i + 1) as f64 + 7.0,
                compute_ms: 7.0,
                capped: false,
            })
            .collect();
        // 100 frames x 10 ms: no delay reaches the end, tau = 4 for both.
        let rep = al_report(&records, 100, 10.0, 4).unwrap();
        assert!((rep.al_ca_ms - (rep.al_nca_ms + 7.0)).abs() < 1e-9);
        assert_eq!(rep.n_tokens, 4);
    }

    #[test]
    fn bleu_identity_is_one() {
        let sents = vec![toks("the quick brown fox jumps"), toks("over the lazy dog today")];
        let score = corpus_bleu(&sents, &sents).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_short_hypothesis_hand_case() {
        // Unigrams and bigrams are perfect; 3/4-grams don't exist in the
        // hypothesis so they drop out, leaving only the brevity penalty
        // exp(1 - 3/2).
        let score = corpus_bleu(&[toks("the cat")], &[toks("the cat sat")]).unwrap();
        assert!((score - 0.606_531).abs() < 1e-4, "got {score}");
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        // "the the the" can only match "the" once.
        let score = corpus_bleu(&[toks("the the the")], &[toks("the cat")]).unwrap();
        // Unigram precision 1/3; bigrams present but unmatched -> 0.
        assert_eq!(score, 0.0);
        let uni_only = corpus_bleu(&[toks("the")], &[toks("the cat")]).unwrap();
        // Single unigram, matched: precision 1, BP = exp(1 - 2).
        assert!((uni_only - libm::exp(-1.0)).abs() < 1e-9);
    }

    #[test]
    fn bleu_empty_hypotheses_score_zero() {
        let score = corpus_bleu(&[toks("")], &[toks("the cat")]).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn bleu_is_invariant_to_sentence_order() {
        let hyps = vec![toks("a b c d"), toks("e f g h"), toks("a b x y")];
        let refs = vec![toks("a b c d"), toks("e f q h"), toks("a b x z")];
        let forward = corpus_bleu(&hyps, &refs).unwrap();
        let rev_h: Vec<_> = hyps.iter().rev().cloned().collect();
        let rev_r: Vec<_> = refs.iter().rev().cloned().collect();
        let backward = corpus_bleu(&rev_h, &rev_r).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn bleu_rejects_mismatched_corpora() {
        assert!(corpus_bleu(&[toks("a")], &[]).is_err());
        assert!(matches!(corpus_bleu(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn bleu_no_match_scores_zero() {
        let score = corpus_bleu(&[toks("x y z w v")], &[toks("a b c d e")]).unwrap();
        assert_eq!(score, 0.0);
    }
}
