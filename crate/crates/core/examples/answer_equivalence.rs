// Compares predicted answers with reference answers using exact rational
// arithmetic, falling back to normalized string comparison.
//
// Run with `cargo run --example answer_equivalence`.

use hallureward::{answers_equivalent, parse_answer};

fn main() -> Result<(), hallureward::Error> {
    let pairs = [
        ("\\frac{3}{4}", "0.75"),
        ("$\\boxed{75\\%}$", "3/4"),
        ("-\\dfrac{1}{3}", "-1/3"),
        ("0.1", "1/10"),
        ("0.333", "1/3"),
        ("(2)", "2.0"),
        ("x + 1", "x   +  1"),
        ("1/0", "1/0"),
    ];
    for (predicted, truth) in pairs {
        println!(
            "{predicted:>18}  vs {truth:<10} -> {}",
            answers_equivalent(predicted, truth)
        );
    }
    println!("parsed: {}", parse_answer("\\boxed{12.50}")?);

    assert!(answers_equivalent("\\frac{3}{4}", "0.75"));
    assert!(!answers_equivalent("0.333", "1/3"));
    assert!(!answers_equivalent("1/0", "1/0"));
    Ok(())
}
