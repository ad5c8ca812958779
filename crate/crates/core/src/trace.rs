//! Core value types shared across the engine, and trace validation.
//!
//! A [`GenerationTrace`] is one completion together with, for every generated
//! token, its character span in the completion and the top-k next-token
//! probabilities the producer logged at that step. Offsets count Unicode
//! scalar values, not bytes, so traces produced by any language runtime that
//! indexes strings by code point line up without re-tokenization.
//!
//! Probabilities are kept exactly as logged. Whether they were recorded
//! before or after temperature scaling is up to the producer; nothing here
//! renormalizes the top-k mass.

use std::fmt;

use serde::de::Deserializer;
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

/// Default number of logged probabilities per token.
pub const DEFAULT_TOP_K: usize = 5;
/// Default entropy-penalty scale.
pub const DEFAULT_LAMBDA: f64 = 1.0;
/// Default z-score threshold above which a token counts as a spike.
pub const DEFAULT_TAU: f64 = 1.5;

/// Slack allowed on the total logged probability mass.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Minimum significant digits written for each probability.
const PROB_SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub text: String,
    /// Inclusive start offset, in characters.
    pub char_start: usize,
    /// Exclusive end offset, in characters.
    pub char_end: usize,
    /// Top-k probabilities, descending.
    pub top_k_probs: Vec<f64>,
}

impl TokenRecord {
    pub fn new(text: impl Into<String>, span: (usize, usize), top_k_probs: Vec<f64>) -> Self {
        Self {
            text: text.into(),
            char_start: span.0,
            char_end: span.1,
            top_k_probs,
        }
    }

    pub fn span(&self) -> (usize, usize) {
        (self.char_start, self.char_end)
    }
}

#[derive(Deserialize)]
struct TokenWire {
    text: String,
    span: (usize, usize),
    p: Vec<f64>,
}

impl<'de> Deserialize<'de> for TokenRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = TokenWire::deserialize(deserializer)?;
        Ok(TokenRecord::new(wire.text, wire.span, wire.p))
    }
}

impl Serialize for TokenRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let probs =
            RawValue::from_string(format_prob_list(&self.top_k_probs)).map_err(serde::ser::Error::custom)?;
        let mut s = serializer.serialize_struct("TokenRecord", 3)?;
        s.serialize_field("text", &self.text)?;
        s.serialize_field("span", &(self.char_start, self.char_end))?;
        s.serialize_field("p", &probs)?;
        s.end()
    }
}

/// Formats a probability as a plain decimal with at least twelve significant
/// digits. The digits are the shortest representation that parses back to
/// the same `f64`, padded with trailing zeros.
pub fn format_probability(p: f64) -> String {
    if !p.is_finite() {
        return "null".to_string();
    }
    let mut s = format!("{p}");
    let significant = s
        .trim_start_matches('-')
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if significant < PROB_SIGNIFICANT_DIGITS {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', PROB_SIGNIFICANT_DIGITS - significant));
    }
    s
}

fn format_prob_list(probs: &[f64]) -> String {
    let mut out = String::with_capacity(probs.len() * 16 + 2);
    out.push('[');
    for (i, &p) in probs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_probability(p));
    }
    out.push(']');
    out
}

/// One model completion with its per-token probability records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub id: String,
    pub completion: String,
    pub ground_truth: String,
    pub tokens: Vec<TokenRecord>,
}

impl GenerationTrace {
    /// Serializes the trace as one JSONL line (without the trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serialization is infallible")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }

    pub fn completion_char_len(&self) -> usize {
        self.completion.chars().count()
    }
}

/// The `<think>` / `<answer>` / `<confidence>` decomposition of a completion.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedCompletion {
    pub think: Option<String>,
    pub answer: Option<String>,
    pub confidence: Option<f64>,
    pub format_valid: bool,
    /// Character span of the think block's inner content.
    pub think_span: Option<(usize, usize)>,
}

/// Which tokens the z-score mean and deviation are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZScope {
    /// Statistics over every token of the completion.
    #[default]
    Sequence,
    /// Statistics over the think-span tokens only; other tokens get z = 0.
    Think,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub lambda: f64,
    pub tau: f64,
    pub k: usize,
    /// Include the confidence-calibration component in the total.
    pub confidence_reward: bool,
    /// Include the entropy-spike component in the total.
    pub entropy_reward: bool,
    pub z_scope: ZScope,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            tau: DEFAULT_TAU,
            k: DEFAULT_TOP_K,
            confidence_reward: true,
            entropy_reward: true,
            z_scope: ZScope::Sequence,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidParams(format!(
                "tau must be finite, got {}",
                self.tau
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-completion reward components and the diagnostics behind them.
///
/// A component switched off through [`RewardParams`] is `None` and adds
/// nothing to `r_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_confidence: Option<f64>,
    pub r_entropy: Option<f64>,
    pub r_format: f64,
    pub r_total: f64,
    pub correct: bool,
    pub format_valid: bool,
    pub confidence: Option<f64>,
    pub z_max: f64,
    pub spike_rate: f64,
    /// Maximum token entropy over the think span, in nats.
    pub sentence_entropy: f64,
    /// Mean token entropy over the think span, in nats.
    pub mean_token_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Offending token, when the violation is local to one token.
    pub token: Option<usize>,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    NoTokens,
    EmptyProbabilities,
    ProbabilityOutOfRange,
    NotDescending,
    MassExceedsOne,
    MixedTopK { expected: usize, found: usize },
    EmptySpan,
    Overlap,
    Gap,
    SpanBeyondText { text_len: usize },
    IncompleteTiling { covered: usize, text_len: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(t) = self.token {
            write!(f, "token {t}: ")?;
        }
        match &self.kind {
            ViolationKind::NoTokens => f.write_str("non-empty completion has no tokens"),
            ViolationKind::EmptyProbabilities => f.write_str("empty probability list"),
            ViolationKind::ProbabilityOutOfRange => f.write_str("probability outside (0, 1]"),
            ViolationKind::NotDescending => f.write_str("probabilities not sorted descending"),
            ViolationKind::MassExceedsOne => f.write_str("probability mass > 1"),
            ViolationKind::MixedTopK { expected, found } => {
                write!(f, "top-k length {found}, expected {expected}")
            }
            ViolationKind::EmptySpan => f.write_str("span start must be below span end"),
            ViolationKind::Overlap => f.write_str("span overlaps previous token"),
            ViolationKind::Gap => f.write_str("span leaves a gap after previous token"),
            ViolationKind::SpanBeyondText { text_len } => {
                write!(f, "span ends beyond completion length {text_len}")
            }
            ViolationKind::IncompleteTiling { covered, text_len } => {
                write!(f, "tokens cover [0, {covered}) of a {text_len}-char completion")
            }
        }
    }
}

/// Checks every trace invariant and reports each violation found.
///
/// The top-k length is taken from the first token; use
/// [`validate_trace_with_k`] to pin it to a dataset-wide value.
pub fn validate_trace(trace: &GenerationTrace) -> std::result::Result<(), Vec<Violation>> {
    validate_trace_with_k(trace, None)
}

pub fn validate_trace_with_k(
    trace: &GenerationTrace,
    expected_k: Option<usize>,
) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let text_len = trace.completion_char_len();
    let mut push = |token: Option<usize>, kind| violations.push(Violation { token, kind });

    if trace.tokens.is_empty() && text_len > 0 {
        push(None, ViolationKind::NoTokens);
    }

    let k = expected_k.or_else(|| trace.tokens.first().map(|t| t.top_k_probs.len()));
    let mut prev_end = 0usize;
    for (i, tok) in trace.tokens.iter().enumerate() {
        let probs = &tok.top_k_probs;
        if probs.is_empty() {
            push(Some(i), ViolationKind::EmptyProbabilities);
        } else {
            if let Some(k) = k {
                if probs.len() != k {
                    push(
                        Some(i),
                        ViolationKind::MixedTopK {
                            expected: k,
                            found: probs.len(),
                        },
                    );
                }
            }
            if probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
                push(Some(i), ViolationKind::ProbabilityOutOfRange);
            }
            if probs.windows(2).any(|w| w[0] < w[1]) {
                push(Some(i), ViolationKind::NotDescending);
            }
            if probs.iter().sum::<f64>() > 1.0 + MASS_TOLERANCE {
                push(Some(i), ViolationKind::MassExceedsOne);
            }
        }

        if tok.char_start >= tok.char_end {
            push(Some(i), ViolationKind::EmptySpan);
        }
        if tok.char_start < prev_end {
            push(Some(i), ViolationKind::Overlap);
        } else if tok.char_start > prev_end {
            push(Some(i), ViolationKind::Gap);
        }
        if tok.char_end > text_len {
            push(Some(i), ViolationKind::SpanBeyondText { text_len });
        }
        prev_end = prev_end.max(tok.char_end);
    }

    if !trace.tokens.is_empty() && prev_end != text_len {
        push(
            None,
            ViolationKind::IncompleteTiling {
                covered: prev_end,
                text_len,
            },
        );
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
