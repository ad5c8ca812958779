//! The composite per-completion reward.
//!
//! `r_total = r_confidence + r_entropy + r_format`, where
//!
//! * `r_confidence = (2·correct − 1)(2·confidence − 1)` rewards confidence
//!   that matches correctness,
//! * `r_entropy = −λ · max(0, z_max − τ)` penalizes entropy spikes inside the
//!   think span,
//! * `r_format` is +1 for a well-formatted completion and −1 otherwise.
//!
//! Malformed completions still get all three components: the confidence
//! term is 0 when no confidence can be recovered, and the entropy term falls
//! back to every token when the think block cannot be located.

use crate::answer::answers_equivalent;
use crate::entropy::{analyze, EntropyProfile};
use crate::error::{Error, Result};
use crate::parser::{parse_completion, think_token_indices};
use crate::trace::{validate_trace_with_k, GenerationTrace, ParsedCompletion, RewardBreakdown, RewardParams};

pub fn confidence_reward(correct: bool, confidence: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::ConfidenceOutOfRange(confidence));
    }
    let sign = if correct { 1.0 } else { -1.0 };
    Ok(sign * (2.0 * confidence - 1.0))
}

pub fn entropy_reward(z_max: f64, params: &RewardParams) -> f64 {
    let excess = (z_max - params.tau).max(0.0);
    if excess == 0.0 {
        0.0
    } else {
        -params.lambda * excess
    }
}

pub fn format_reward(parsed: &ParsedCompletion) -> f64 {
    if parsed.format_valid {
        1.0
    } else {
        -1.0
    }
}

/// Tokens the entropy statistics are restricted to: the think span when the
/// think block can be located, otherwise the whole completion.
pub fn reasoning_indices(parsed: &ParsedCompletion, trace: &GenerationTrace) -> Vec<usize> {
    think_token_indices(parsed, trace).unwrap_or_else(|_| (0..trace.tokens.len()).collect())
}

/// Everything computed while scoring one trace.
#[derive(Debug, Clone)]
pub struct Scored {
    pub parsed: ParsedCompletion,
    pub reasoning_indices: Vec<usize>,
    pub profile: EntropyProfile,
    pub breakdown: RewardBreakdown,
}

/// Scores one trace.
pub fn score(trace: &GenerationTrace, params: &RewardParams) -> Result<RewardBreakdown> {
    score_detailed(trace, params).map(|s| s.breakdown)
}

pub fn score_detailed(trace: &GenerationTrace, params: &RewardParams) -> Result<Scored> {
    params.validate()?;
    validate_trace_with_k(trace, Some(params.k)).map_err(Error::InvalidTrace)?;

    let parsed = parse_completion(&trace.completion);
    let correct = parsed
        .answer
        .as_deref()
        .is_some_and(|a| answers_equivalent(a, &trace.ground_truth));
    let indices = reasoning_indices(&parsed, trace);
    let profile = analyze(trace, &indices, params)?;

    let r_confidence = if params.confidence_reward {
        Some(match parsed.confidence {
            Some(c) => confidence_reward(correct, c)?,
            None => 0.0,
        })
    } else {
        None
    };
    let r_entropy = params
        .entropy_reward
        .then(|| entropy_reward(profile.z_max, params));
    let r_format = format_reward(&parsed);
    let r_total = r_confidence.unwrap_or(0.0) + r_entropy.unwrap_or(0.0) + r_format;

    let breakdown = RewardBreakdown {
        r_confidence,
        r_entropy,
        r_format,
        r_total,
        correct,
        format_valid: parsed.format_valid,
        confidence: parsed.confidence,
        z_max: profile.z_max,
        spike_rate: profile.spike_rate,
        sentence_entropy: profile.sentence_entropy,
        mean_token_entropy: profile.mean_entropy,
    };
    Ok(Scored {
        parsed,
        reasoning_indices: indices,
        profile,
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TokenRecord;

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence_reward(true, 1.0).unwrap(), 1.0);
        assert_eq!(confidence_reward(false, 1.0).unwrap(), -1.0);
        assert_eq!(confidence_reward(true, 0.5).unwrap(), 0.0);
        assert_eq!(confidence_reward(false, 0.5).unwrap(), 0.0);
        assert!((confidence_reward(false, 0.9).unwrap() + 0.8).abs() < 1e-15);
        assert!(confidence_reward(true, 1.01).is_err());
        assert!(confidence_reward(true, f64::NAN).is_err());
    }

    #[test]
    fn entropy_examples() {
        let p = RewardParams::default();
        assert_eq!(entropy_reward(2.0, &p), -0.5);
        assert_eq!(entropy_reward(1.5, &p), 0.0);
        assert_eq!(entropy_reward(0.3, &p), 0.0);
        let off = RewardParams { lambda: 0.0, ..p };
        assert_eq!(entropy_reward(9.0, &off), 0.0);
    }

    #[test]
    fn format_examples() {
        assert_eq!(
            format_reward(&parse_completion(
                "<think>a</think><answer>1</answer><confidence>1</confidence>"
            )),
            1.0
        );
        assert_eq!(format_reward(&parse_completion("just 4")), -1.0);
    }

    /// Builds a trace from literal pieces, each piece one token, all with the
    /// same flat-ish distribution except the pieces listed in `spiky`.
    fn pieces_trace(pieces: &[&str], spiky: &[usize], truth: &str) -> GenerationTrace {
        let mut tokens = Vec::new();
        let mut pos = 0;
        for (i, p) in pieces.iter().enumerate() {
            let n = p.chars().count();
            let probs = if spiky.contains(&i) {
                vec![0.2; 5]
            } else {
                vec![0.9, 0.04, 0.03, 0.02, 0.01]
            };
            tokens.push(TokenRecord::new(*p, (pos, pos + n), probs));
            pos += n;
        }
        GenerationTrace {
            id: "t".into(),
            completion: pieces.concat(),
            ground_truth: truth.into(),
            tokens,
        }
    }

    const WELL_FORMED: [&str; 12] = [
        "<think>",
        "a",
        "b",
        "c",
        "d",
        "e",
        "</think>",
        "<answer>",
        "4",
        "</answer>",
        "<confidence>0.9",
        "</confidence>",
    ];

    #[test]
    fn composed_correct_no_spike() {
        let t = pieces_trace(&WELL_FORMED, &[], "4");
        let b = score(&t, &RewardParams::default()).unwrap();
        assert!(b.correct && b.format_valid);
        assert!((b.r_confidence.unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(b.r_entropy, Some(0.0));
        assert_eq!(b.r_format, 1.0);
        assert!((b.r_total - 1.8).abs() < 1e-12);
    }

    #[test]
    fn composed_wrong_with_spike() {
        // One high-entropy token among twelve: z = sqrt(11) > 1.5.
        let t = pieces_trace(&WELL_FORMED, &[3], "5");
        let b = score(&t, &RewardParams::default()).unwrap();
        assert!(!b.correct);
        assert!((b.z_max - 11f64.sqrt()).abs() < 1e-9);
        assert!((b.r_entropy.unwrap() + (11f64.sqrt() - 1.5)).abs() < 1e-9);
        assert_eq!(
            b.r_total,
            b.r_confidence.unwrap() + b.r_entropy.unwrap() + b.r_format
        );
        assert!((b.spike_rate - 0.2).abs() < 1e-12);
    }

    #[test]
    fn malformed_without_confidence() {
        let t = pieces_trace(&["<think>", "a", "b", "</think>", "4"], &[1], "4");
        let b = score(&t, &RewardParams::default()).unwrap();
        assert_eq!(b.r_confidence, Some(0.0));
        assert_eq!(b.r_format, -1.0);
        assert!(b.r_entropy.unwrap() < 0.0);
        assert!(!b.correct);
    }

    #[test]
    fn malformed_without_think_uses_all_tokens() {
        let t = pieces_trace(&["x", "y", "z", "w"], &[0], "4");
        let s = score_detailed(&t, &RewardParams::default()).unwrap();
        assert_eq!(s.reasoning_indices, vec![0, 1, 2, 3]);
        assert!((s.breakdown.z_max - 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ablation_switches() {
        let t = pieces_trace(&WELL_FORMED, &[3], "5");
        let no_entropy = RewardParams {
            entropy_reward: false,
            ..Default::default()
        };
        let b = score(&t, &no_entropy).unwrap();
        assert_eq!(b.r_entropy, None);
        assert_eq!(b.r_total, b.r_confidence.unwrap() + b.r_format);
        let no_conf = RewardParams {
            confidence_reward: false,
            ..Default::default()
        };
        let b = score(&t, &no_conf).unwrap();
        assert_eq!(b.r_confidence, None);
        assert_eq!(b.r_total, b.r_entropy.unwrap() + b.r_format);
    }

    #[test]
    fn invalid_trace_is_an_error() {
        let mut t = pieces_trace(&WELL_FORMED, &[], "4");
        t.tokens[2].top_k_probs = vec![0.9, 0.9, 0.1, 0.1, 0.1];
        assert!(matches!(
            score(&t, &RewardParams::default()),
            Err(Error::InvalidTrace(_))
        ));
        let t = pieces_trace(&WELL_FORMED, &[], "4");
        let k3 = RewardParams {
            k: 3,
            ..Default::default()
        };
        assert!(matches!(score(&t, &k3), Err(Error::InvalidTrace(_))));
    }
}
