// Drives the NDJSON service in-process: a few requests go in, one response
// per request comes out.
//
// Run with `cargo run --example reward_service`. The same protocol is served
// by `hallureward serve --stdio` or `hallureward serve --listen ADDR`.

use std::io::Cursor;

use hallureward::service::{serve_stream, ParamOverrides, ScoreRequest, ScoreResponse, ServiceConfig};
use hallureward::synth::generate;
use hallureward::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut input = String::new();
    for seed in 0..3 {
        let (trace, _) = generate(&SyntheticSpec {
            seed,
            n_tokens: 24,
            ..Default::default()
        })?;
        let params = (seed == 2).then(|| ParamOverrides {
            lambda: Some(0.0),
            ..Default::default()
        });
        input.push_str(&serde_json::to_string(&ScoreRequest::from_trace(trace, params))?);
        input.push('\n');
    }
    input.push_str("{\"v\":1,\"id\":\"broken\"\n");

    let mut output = Vec::new();
    let stats = serve_stream(Cursor::new(input), &mut output, &ServiceConfig::default())?;
    let text = String::from_utf8(output)?;
    print!("{text}");

    let responses: Vec<ScoreResponse> = text.lines().map(serde_json::from_str).collect::<Result<_, _>>()?;
    assert_eq!(stats.responses, 4);
    assert_eq!(responses.iter().filter(|r| r.ok).count(), 3);
    Ok(())
}
