// Finds entropy spikes in a synthetic trace with two injected spikes.
//
// Run with `cargo run --example entropy_spikes`.

use hallureward::entropy::spikes;
use hallureward::reward::score_detailed;
use hallureward::synth::generate;
use hallureward::{RewardParams, SyntheticSpec};

fn main() -> Result<(), hallureward::Error> {
    let spec = SyntheticSpec {
        seed: 11,
        spike_positions: vec![30, 70],
        ..Default::default()
    };
    let (trace, labels) = generate(&spec)?;
    let params = RewardParams::default();
    let scored = score_detailed(&trace, &params)?;
    let found = spikes(&trace, &scored.profile, &scored.reasoning_indices, params.tau);

    println!(
        "z_max {:.3}  spike rate {:.3}  mean entropy {:.3} nats",
        scored.profile.z_max, scored.profile.spike_rate, scored.profile.mean_entropy
    );
    for s in &found {
        println!(
            "token {:>3}  z={:>6.3}  H={:.3}  ...{}...",
            s.index,
            s.z,
            s.entropy,
            s.excerpt.replace('\n', " ")
        );
    }

    for pos in &labels.spike_positions {
        assert!(found.iter().any(|s| s.index == *pos), "missed spike at {pos}");
    }
    Ok(())
}
