// Generates a reproducible synthetic trace and shows it round-trips through
// the JSONL schema byte for byte.
//
// Run with `cargo run --example synth_fixtures`.

use hallureward::synth::{generate, GENERATOR_ID};
use hallureward::{validate_trace, GenerationTrace, SyntheticSpec};

fn main() -> Result<(), hallureward::Error> {
    let spec = SyntheticSpec {
        seed: 42,
        n_tokens: 16,
        spike_positions: vec![5],
        answer_correct: false,
        stated_confidence: 0.35,
        ..Default::default()
    };
    let (trace, labels) = generate(&spec)?;
    let line = trace.to_json_line();
    println!("{line}");
    println!("{}", serde_json::to_string(&labels)?);

    assert_eq!(labels.generator, GENERATOR_ID);
    assert!(validate_trace(&trace).is_ok());
    assert_eq!(GenerationTrace::from_json_line(&line)?.to_json_line(), line);
    assert_eq!(generate(&spec)?.0.to_json_line(), line);
    Ok(())
}
