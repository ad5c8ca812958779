//! Process-level reward signals for reasoning completions.
//!
//! A completion is expected in three tagged blocks:
//!
//! ```text
//! <think>step-by-step reasoning</think><answer>3/4</answer><confidence>0.85</confidence>
//! ```
//!
//! Given the completion, its per-token top-k probabilities and the reference
//! answer, [`score`] returns a [`RewardBreakdown`] that sums three parts:
//! a calibration term comparing stated confidence with correctness, a
//! penalty on token-entropy spikes inside the think block, and a ±1 format
//! term. [`build_report`] aggregates many breakdowns into accuracy, ECE,
//! Brier score and entropy statistics.
//!
//! The [`service`] module serves the same scoring over newline-delimited JSON
//! for a training loop, and [`synth`] produces traces with known spikes for
//! testing the detector end to end.
//!
//! ```
//! use hallureward::{score, RewardParams, SyntheticSpec};
//!
//! let (trace, _) = hallureward::synth::generate(&SyntheticSpec::default()).unwrap();
//! let reward = score(&trace, &RewardParams::default()).unwrap();
//! assert!(reward.format_valid && reward.correct);
//! ```

pub mod answer;
pub mod cli;
pub mod entropy;
pub mod error;
pub mod metrics;
pub mod parser;
pub mod reward;
pub mod service;
pub mod synth;
pub mod trace;

pub use answer::{answers_equivalent, parse_answer, MathValue};
pub use entropy::{analyze, token_entropy, EntropyProfile};
pub use error::{Error, Result};
pub use metrics::{
    brier_score, build_report, calibration_error, expected_calibration_error, CalibrationReport,
    SampleOutcome,
};
pub use parser::{parse_completion, think_token_indices};
pub use reward::{confidence_reward, entropy_reward, format_reward, score};
pub use synth::SyntheticSpec;
pub use trace::{
    validate_trace, GenerationTrace, ParsedCompletion, RewardBreakdown, RewardParams, TokenRecord, ZScope,
};
