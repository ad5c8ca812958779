// Parses a few completions, well-formed and not, and shows what the parser
// recovers from each.
//
// Run with `cargo run --example parse_completions`.

use hallureward::parse_completion;

fn main() {
    let samples = [
        "<think>2+2 is 4</think><answer>4</answer><confidence>0.95</confidence>",
        "  <think>\nline one\nline two\n</think>\n<answer>x = 2</answer>\n<confidence> .5 </confidence>\n",
        "<think>a</think><answer>b</answer>",
        "<answer>7</answer><think>late thought</think><confidence>0.6</confidence>",
        "Sure! <think>x</think><answer>1</answer><confidence>0.7</confidence>",
        "<think>x</think><answer>1</answer><confidence>1.2</confidence>",
        "<think>x</think><answer>1</answer><confidence>80%</confidence>",
    ];
    for text in samples {
        let p = parse_completion(text);
        println!("{text:?}");
        println!(
            "  valid={} think={:?} answer={:?} confidence={:?} span={:?}",
            p.format_valid, p.think, p.answer, p.confidence, p.think_span
        );
    }

    assert!(parse_completion(samples[0]).format_valid);
    assert_eq!(parse_completion(samples[1]).confidence, Some(0.5));
    // Reordered blocks are rejected but the pieces are still recovered.
    let reordered = parse_completion(samples[3]);
    assert!(!reordered.format_valid);
    assert_eq!(reordered.answer.as_deref(), Some("7"));
    assert_eq!(parse_completion(samples[5]).confidence, None);
}
