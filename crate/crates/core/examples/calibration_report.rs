// Scores a synthetic corpus and prints the calibration report as text and CSV.
//
// Run with `cargo run --example calibration_report`.

use hallureward::synth::{corpus_specs, generate};
use hallureward::{build_report, score, RewardParams};

fn main() -> Result<(), hallureward::Error> {
    let params = RewardParams::default();
    let mut breakdowns = Vec::new();
    for spec in corpus_specs(2024, 300, 64) {
        let (trace, _) = generate(&spec)?;
        breakdowns.push(score(&trace, &params)?);
    }
    let report = build_report(&breakdowns, 10)?;
    print!("{}", report.to_text());
    println!();
    print!("{}", report.to_csv()?);

    assert_eq!(report.n, 300);
    assert_eq!(report.calibrated_n + report.excluded_from_calibration, 300);
    Ok(())
}
