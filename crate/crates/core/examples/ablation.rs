// Turns reward components off one at a time and compares the mean reward
// over the same corpus.
//
// Run with `cargo run --example ablation`.

use hallureward::synth::{corpus_specs, generate};
use hallureward::{score, GenerationTrace, RewardParams};

fn mean_reward(traces: &[GenerationTrace], params: &RewardParams) -> Result<f64, hallureward::Error> {
    let mut total = 0.0;
    for t in traces {
        total += score(t, params)?.r_total;
    }
    Ok(total / traces.len() as f64)
}

fn main() -> Result<(), hallureward::Error> {
    let traces = corpus_specs(7, 200, 80)
        .iter()
        .map(|s| generate(s).map(|(t, _)| t))
        .collect::<Result<Vec<_>, _>>()?;

    let full = RewardParams::default();
    let variants = [
        ("full", full),
        (
            "no entropy",
            RewardParams {
                entropy_reward: false,
                ..full
            },
        ),
        (
            "no confidence",
            RewardParams {
                confidence_reward: false,
                ..full
            },
        ),
        (
            "format only",
            RewardParams {
                entropy_reward: false,
                confidence_reward: false,
                ..full
            },
        ),
        ("lambda 0", RewardParams { lambda: 0.0, ..full }),
    ];
    for (name, params) in &variants {
        println!("{name:<14} mean reward {:+.4}", mean_reward(&traces, params)?);
    }

    let no_entropy = mean_reward(&traces, &variants[1].1)?;
    assert!((no_entropy - mean_reward(&traces, &variants[4].1)?).abs() < 1e-12);
    Ok(())
}
