//! Splits a completion into its `<think>`, `<answer>` and `<confidence>`
//! blocks and decides whether it is well formatted.
//!
//! A completion is well formatted when each of the six tags appears exactly
//! once, the blocks come in think, answer, confidence order, only whitespace
//! sits outside the blocks, and the confidence is a plain decimal in [0, 1].
//! Tag names are case-sensitive. Malformed completions still yield whatever
//! blocks can be recovered.

use crate::error::{Error, Result};
use crate::trace::{GenerationTrace, ParsedCompletion};

const THINK: (&str, &str) = ("<think>", "</think>");
const ANSWER: (&str, &str) = ("<answer>", "</answer>");
const CONFIDENCE: (&str, &str) = ("<confidence>", "</confidence>");

/// Byte range of a block's inner content, plus the range of the whole block.
#[derive(Debug, Clone, Copy)]
struct Block {
    inner: (usize, usize),
    outer: (usize, usize),
}

fn first_block(text: &str, (open, close): (&str, &str)) -> Option<Block> {
    let start = text.find(open)?;
    let inner_start = start + open.len();
    let inner_end = inner_start + text[inner_start..].find(close)?;
    Some(Block {
        inner: (inner_start, inner_end),
        outer: (start, inner_end + close.len()),
    })
}

fn occurrences(text: &str, tag: &str) -> usize {
    text.matches(tag).count()
}

fn is_blank(s: &str) -> bool {
    s.chars().all(char::is_whitespace)
}

/// Parses a confidence literal: `0.85`, `.85`, `1`, `0`, `1.0`. Surrounding
/// whitespace is allowed; signs, exponents, percent signs and fractions are
/// not. Returns `None` for anything malformed or outside [0, 1].
pub fn parse_confidence(raw: &str) -> Option<f64> {
    let s = raw.trim();
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int_part) {
        return None;
    }
    match frac_part {
        None if int_part.is_empty() => return None,
        Some(f) if f.is_empty() || !all_digits(f) => return None,
        _ => {}
    }

    // Range check on the digits themselves so that e.g. "1.0000000000000001"
    // is rejected even though it rounds to 1.0.
    let int_value = int_part.trim_start_matches('0');
    let frac_nonzero = frac_part.is_some_and(|f| f.bytes().any(|b| b != b'0'));
    let in_range = match int_value {
        "" => true,
        "1" => !frac_nonzero,
        _ => false,
    };
    if !in_range {
        return None;
    }
    s.parse::<f64>().ok()
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Decomposes `completion` into its tagged blocks.
pub fn parse_completion(completion: &str) -> ParsedCompletion {
    let think = first_block(completion, THINK);
    let answer = first_block(completion, ANSWER);
    let confidence = first_block(completion, CONFIDENCE);

    let slice = |b: Option<Block>| b.map(|b| completion[b.inner.0..b.inner.1].to_string());
    let confidence_value = confidence.and_then(|b| parse_confidence(&completion[b.inner.0..b.inner.1]));

    let format_valid = match (think, answer, confidence) {
        (Some(t), Some(a), Some(c)) => {
            let single = [THINK, ANSWER, CONFIDENCE]
                .iter()
                .all(|(o, cl)| occurrences(completion, o) == 1 && occurrences(completion, cl) == 1);
            single
                && t.outer.1 <= a.outer.0
                && a.outer.1 <= c.outer.0
                && is_blank(&completion[..t.outer.0])
                && is_blank(&completion[t.outer.1..a.outer.0])
                && is_blank(&completion[a.outer.1..c.outer.0])
                && is_blank(&completion[c.outer.1..])
                && confidence_value.is_some()
        }
        _ => false,
    };

    ParsedCompletion {
        think: slice(think),
        answer: slice(answer),
        confidence: confidence_value,
        format_valid,
        think_span: think.map(|b| {
            let start = char_offset(completion, b.inner.0);
            let len = completion[b.inner.0..b.inner.1].chars().count();
            (start, start + len)
        }),
    }
}

/// Renders the canonical well-formed template.
pub fn render_completion(think: &str, answer: &str, confidence: f64) -> String {
    format!("<think>{think}</think><answer>{answer}</answer><confidence>{confidence}</confidence>")
}

/// Indices of the tokens whose character span intersects the think block's
/// inner content, ascending.
pub fn think_token_indices(parsed: &ParsedCompletion, trace: &GenerationTrace) -> Result<Vec<usize>> {
    let (start, end) = parsed.think_span.ok_or(Error::NoThinkSpan)?;
    Ok(overlapping_tokens(trace, start, end))
}

pub(crate) fn overlapping_tokens(trace: &GenerationTrace, start: usize, end: usize) -> Vec<usize> {
    if start >= end {
        return Vec::new();
    }
    trace
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.char_start < end && start < t.char_end)
        .map(|(i, _)| i)
        .collect()
}
