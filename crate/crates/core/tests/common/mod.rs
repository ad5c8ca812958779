#![allow(dead_code)]

use hallureward::synth::distribution_with_entropy;
use hallureward::{GenerationTrace, TokenRecord};

pub const K: usize = 5;

/// Builds a well-formed trace whose think content is one token per entry of
/// `think`, surrounded by tag tokens with entropies `outer` (before) and
/// `tail` (after). Entropies must lie strictly inside (0, ln 5).
pub fn trace_with_entropies(
    outer: f64,
    think: &[f64],
    tail: &[f64; 6],
    answer: &str,
    confidence: &str,
) -> GenerationTrace {
    let mut pieces: Vec<(String, f64)> = vec![("<think>".into(), outer)];
    pieces.extend(think.iter().enumerate().map(|(i, &h)| (format!(" w{i}"), h)));
    let tail_texts = [
        "</think>",
        "<answer>",
        answer,
        "</answer>",
        "<confidence>",
        confidence,
    ];
    pieces.extend(tail_texts.iter().zip(tail).map(|(t, &h)| (t.to_string(), h)));
    pieces.push(("</confidence>".into(), outer));
    from_pieces("t", &pieces, "1")
}

pub fn from_pieces(id: &str, pieces: &[(String, f64)], truth: &str) -> GenerationTrace {
    let mut completion = String::new();
    let mut tokens = Vec::new();
    let mut pos = 0;
    for (text, h) in pieces {
        let len = text.chars().count();
        let probs = distribution_with_entropy(*h, K).expect("realizable entropy");
        tokens.push(TokenRecord::new(text.clone(), (pos, pos + len), probs));
        completion.push_str(text);
        pos += len;
    }
    GenerationTrace {
        id: id.into(),
        completion,
        ground_truth: truth.into(),
        tokens,
    }
}
