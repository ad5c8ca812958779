//! Token entropy, per-sequence z-scores and think-span spike statistics.
//!
//! All entropies are in nats. Z-scores use the population standard
//! deviation; a sequence whose entropies are all equal (or that has fewer
//! than two tokens) gets z = 0 everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{GenerationTrace, RewardParams, ZScope};

/// Shannon entropy `-Σ p ln p` over exactly the given probabilities.
///
/// Zero terms contribute nothing. The list is not renormalized.
pub fn token_entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::NoProbabilities);
    }
    Ok(probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub token_entropies: Vec<f64>,
    pub z_scores: Vec<f64>,
    /// Largest z-score inside the think span, 0 when the span is empty.
    pub z_max: f64,
    /// Largest token entropy inside the think span.
    pub sentence_entropy: f64,
    /// Mean token entropy inside the think span.
    pub mean_entropy: f64,
    /// Fraction of think-span tokens with z above tau.
    pub spike_rate: f64,
}

/// Population z-scores. Degenerate inputs map to all zeros.
pub fn z_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        return vec![0.0; n];
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return vec![0.0; n];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Computes the entropy profile of `trace`, restricting the spike statistics
/// to `think_indices`.
pub fn analyze(
    trace: &GenerationTrace,
    think_indices: &[usize],
    params: &RewardParams,
) -> Result<EntropyProfile> {
    let token_entropies = trace
        .tokens
        .iter()
        .map(|t| token_entropy(&t.top_k_probs))
        .collect::<Result<Vec<_>>>()?;
    let len = token_entropies.len();
    if let Some(&index) = think_indices.iter().find(|&&i| i >= len) {
        return Err(Error::TokenIndexOutOfRange { index, len });
    }

    let z_scores = match params.z_scope {
        ZScope::Sequence => z_scores(&token_entropies),
        ZScope::Think => {
            let span: Vec<f64> = think_indices.iter().map(|&i| token_entropies[i]).collect();
            let mut z = vec![0.0; len];
            for (&i, zi) in think_indices.iter().zip(z_scores(&span)) {
                z[i] = zi;
            }
            z
        }
    };

    Ok(span_statistics(
        token_entropies,
        z_scores,
        think_indices,
        params.tau,
    ))
}

fn span_statistics(
    token_entropies: Vec<f64>,
    z_scores: Vec<f64>,
    think_indices: &[usize],
    tau: f64,
) -> EntropyProfile {
    let mut z_max = f64::NEG_INFINITY;
    let mut sentence_entropy = f64::NEG_INFINITY;
    let mut entropy_sum = 0.0;
    let mut spikes = 0usize;
    for &i in think_indices {
        z_max = z_max.max(z_scores[i]);
        sentence_entropy = sentence_entropy.max(token_entropies[i]);
        entropy_sum += token_entropies[i];
        if z_scores[i] > tau {
            spikes += 1;
        }
    }
    let n = think_indices.len();
    let (z_max, sentence_entropy, mean_entropy, spike_rate) = if n == 0 {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        (
            z_max,
            sentence_entropy,
            entropy_sum / n as f64,
            spikes as f64 / n as f64,
        )
    };
    EntropyProfile {
        token_entropies,
        z_scores,
        z_max,
        sentence_entropy,
        mean_entropy,
        spike_rate,
    }
}

/// One think-span token whose z-score exceeds the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub index: usize,
    pub z: f64,
    pub entropy: f64,
    pub text: String,
    /// The completion text around the token.
    pub excerpt: String,
}

const EXCERPT_CONTEXT_CHARS: usize = 24;

/// Lists the think-span spikes of an analyzed trace, in token order.
pub fn spikes(
    trace: &GenerationTrace,
    profile: &EntropyProfile,
    think_indices: &[usize],
    tau: f64,
) -> Vec<Spike> {
    let chars: Vec<char> = trace.completion.chars().collect();
    think_indices
        .iter()
        .copied()
        .filter(|&i| profile.z_scores[i] > tau)
        .map(|i| {
            let tok = &trace.tokens[i];
            let from = tok.char_start.saturating_sub(EXCERPT_CONTEXT_CHARS);
            let to = (tok.char_end + EXCERPT_CONTEXT_CHARS).min(chars.len());
            Spike {
                index: i,
                z: profile.z_scores[i],
                entropy: profile.token_entropies[i],
                text: tok.text.clone(),
                excerpt: chars[from.min(to)..to].iter().collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TokenRecord;

    /// Entropy oracle: Kahan-compensated sum, terms sorted by magnitude.
    fn entropy_oracle(p: &[f64]) -> f64 {
        let mut terms: Vec<f64> = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).collect();
        terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for t in terms {
            let y = t - c;
            let s = sum + y;
            c = (s - sum) - y;
            sum = s;
        }
        sum
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(token_entropy(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let uniform = token_entropy(&[0.2; 5]).unwrap();
        assert!((uniform - 5f64.ln()).abs() < 1e-12);
        let skewed = [0.9, 0.05, 0.03, 0.01, 0.01];
        let h = token_entropy(&skewed).unwrap();
        assert!((h - entropy_oracle(&skewed)).abs() < 1e-14);
        // Frozen from a 40-digit mpmath evaluation.
        assert!((h - 0.441_911_218_409_104_5).abs() < 1e-12, "{h}");
        assert!(matches!(token_entropy(&[]), Err(Error::NoProbabilities)));
    }

    fn trace_with_entropies(targets: &[f64]) -> GenerationTrace {
        // Two-outcome distributions with a known entropy, found by bisection.
        let tokens = targets
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let (mut lo, mut hi) = (0.5f64, 1.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if token_entropy(&[mid, 1.0 - mid]).unwrap() > h {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                TokenRecord::new("t", (i, i + 1), vec![lo, 1.0 - lo])
            })
            .collect();
        GenerationTrace {
            id: "x".into(),
            completion: "t".repeat(targets.len()),
            ground_truth: String::new(),
            tokens,
        }
    }

    #[test]
    fn z_score_fixture() {
        let z = z_scores(&[1.0, 1.0, 1.0, 1.0, 5.0]);
        assert!((z[4] - 2.0).abs() < 1e-12);
        assert!((z[0] + 0.5).abs() < 1e-12);
        assert_eq!(z_scores(&[0.4; 10]), vec![0.0; 10]);
        assert_eq!(z_scores(&[3.0]), vec![0.0]);
    }

    #[test]
    fn spike_rate_counts_strictly_above_tau() {
        let z = vec![0.1, 2.0, 1.0, 1.6];
        let p = span_statistics(vec![0.0; 4], z, &[0, 1, 2, 3], 1.5);
        assert_eq!(p.spike_rate, 0.5);
        assert_eq!(p.z_max, 2.0);
    }

    #[test]
    fn analyze_restricts_to_think_span() {
        let t = trace_with_entropies(&[0.6, 0.1, 0.2, 0.1, 0.2]);
        let prof = analyze(&t, &[1, 2, 3], &RewardParams::default()).unwrap();
        assert_eq!(prof.token_entropies.len(), 5);
        assert!((prof.sentence_entropy - 0.2).abs() < 1e-9);
        // Token 0 has the sequence's largest z but lies outside the span.
        assert!(prof.z_max < prof.z_scores[0]);

        let empty = analyze(&t, &[], &RewardParams::default()).unwrap();
        assert_eq!(
            (empty.z_max, empty.sentence_entropy, empty.spike_rate),
            (0.0, 0.0, 0.0)
        );
        assert!(matches!(
            analyze(&t, &[5], &RewardParams::default()),
            Err(Error::TokenIndexOutOfRange { index: 5, len: 5 })
        ));
    }

    #[test]
    fn think_scope_ignores_outside_tokens() {
        let t = trace_with_entropies(&[0.6, 0.1, 0.1, 0.1, 0.5]);
        let params = RewardParams {
            z_scope: ZScope::Think,
            ..Default::default()
        };
        let prof = analyze(&t, &[1, 2, 3, 4], &params).unwrap();
        assert_eq!(prof.z_scores[0], 0.0);
        assert!((prof.z_max - 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn spike_listing() {
        let t = trace_with_entropies(&[0.1, 0.1, 0.1, 0.1, 0.6]);
        let prof = analyze(&t, &[0, 1, 2, 3, 4], &RewardParams::default()).unwrap();
        let s = spikes(&t, &prof, &[0, 1, 2, 3, 4], 1.5);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].index, 4);
        assert!(spikes(&t, &prof, &[0, 1, 2, 3, 4], 10.0).is_empty());
    }
}
