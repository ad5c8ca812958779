// Scores a single hand-built completion and prints the reward breakdown.
//
// Run with `cargo run --example score_completion`.

use hallureward::{score, GenerationTrace, RewardParams, TokenRecord};

const CONFIDENT: [f64; 5] = [0.9, 0.05, 0.03, 0.01, 0.01];
const UNSURE: [f64; 5] = [0.3, 0.25, 0.2, 0.15, 0.1];

/// Concatenates token texts into a completion, giving every token the
/// confident distribution except the ones listed in `unsure`.
fn build_trace(id: &str, pieces: &[&str], unsure: &[usize], truth: &str) -> GenerationTrace {
    let mut completion = String::new();
    let mut tokens = Vec::new();
    let mut pos = 0;
    for (i, piece) in pieces.iter().enumerate() {
        let len = piece.chars().count();
        let probs = if unsure.contains(&i) { UNSURE } else { CONFIDENT };
        tokens.push(TokenRecord::new(*piece, (pos, pos + len), probs.to_vec()));
        completion.push_str(piece);
        pos += len;
    }
    GenerationTrace {
        id: id.into(),
        completion,
        ground_truth: truth.into(),
        tokens,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pieces = [
        "<think>",
        "3",
        " of",
        " 4",
        " slices",
        " remain",
        ",",
        " so",
        " 3",
        "/4",
        "</think>",
        "<answer>",
        "\\frac{3}{4}",
        "</answer>",
        "<confidence>",
        "0.9",
        "</confidence>",
    ];
    let params = RewardParams::default();

    let steady = build_trace("steady", &pieces, &[], "0.75");
    let steady_reward = score(&steady, &params)?;
    println!("steady: {}", serde_json::to_string(&steady_reward)?);
    assert!(steady_reward.correct && steady_reward.format_valid);
    assert_eq!(steady_reward.r_entropy, Some(0.0));

    // Same text, but the model wavers on " 4".
    let wavering = build_trace("wavering", &pieces, &[3], "0.75");
    let wavering_reward = score(&wavering, &params)?;
    println!("wavering: {}", serde_json::to_string(&wavering_reward)?);
    assert!(wavering_reward.z_max > params.tau);
    assert!(wavering_reward.r_total < steady_reward.r_total);
    Ok(())
}
