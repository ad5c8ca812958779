//! Newline-delimited JSON scoring service.
//!
//! Each request line carries one trace inline plus an `id`; each response
//! line echoes the `id` with either a reward breakdown or an error. Requests
//! are scored on a bounded worker pool, so responses may come back in a
//! different order than the requests. A single writer emits whole lines.
//!
//! ```text
//! → {"v":1,"id":"a","completion":"...","ground_truth":"4","tokens":[...],"params":{"lambda":0}}
//! ← {"v":1,"id":"a","ok":true,"reward":{...}}
//! ← {"v":1,"id":null,"ok":false,"error":{"code":"PARSE","message":"..."}}
//! ```
//!
//! Blank lines are skipped. Unknown request fields are ignored.

use std::fmt;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::thread;

use crossbeam_channel::bounded;
use serde::de::{Deserializer as _, IgnoredAny, MapAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::reward::score;
use crate::trace::{GenerationTrace, RewardBreakdown, RewardParams, TokenRecord, Violation, ZScope};

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    /// The line is not a JSON document.
    Parse,
    /// Valid JSON, but not a well-formed request.
    InvalidRequest,
    UnsupportedVersion,
    BadParams,
    /// The trace breaks one or more trace invariants.
    InvalidTrace,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty", skip_deserializing)]
    pub violations: Vec<Violation>,
}

/// Per-request overrides of the service defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamOverrides {
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub k: Option<usize>,
    pub confidence_reward: Option<bool>,
    pub entropy_reward: Option<bool>,
    pub z_scope: Option<ZScope>,
}

impl ParamOverrides {
    pub fn apply(&self, base: RewardParams) -> RewardParams {
        RewardParams {
            lambda: self.lambda.unwrap_or(base.lambda),
            tau: self.tau.unwrap_or(base.tau),
            k: self.k.unwrap_or(base.k),
            confidence_reward: self.confidence_reward.unwrap_or(base.confidence_reward),
            entropy_reward: self.entropy_reward.unwrap_or(base.entropy_reward),
            z_scope: self.z_scope.unwrap_or(base.z_scope),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<u32>,
    pub id: String,
    pub completion: String,
    pub ground_truth: String,
    pub tokens: Vec<TokenRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamOverrides>,
}

impl ScoreRequest {
    pub fn from_trace(trace: GenerationTrace, params: Option<ParamOverrides>) -> Self {
        Self {
            v: Some(WIRE_VERSION),
            id: trace.id,
            completion: trace.completion,
            ground_truth: trace.ground_truth,
            tokens: trace.tokens,
            params,
        }
    }

    fn into_trace(self) -> (GenerationTrace, Option<ParamOverrides>) {
        (
            GenerationTrace {
                id: self.id,
                completion: self.completion,
                ground_truth: self.ground_truth,
                tokens: self.tokens,
            },
            self.params,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub v: u32,
    pub id: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl ScoreResponse {
    pub fn success(id: String, reward: RewardBreakdown) -> Self {
        Self {
            v: WIRE_VERSION,
            id: Some(id),
            ok: true,
            reward: Some(reward),
            error: None,
        }
    }

    pub fn failure(id: Option<String>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            v: WIRE_VERSION,
            id,
            ok: false,
            reward: None,
            error: Some(ErrorBody {
                code,
                message: message.into(),
                violations: Vec::new(),
            }),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("response serialization is infallible")
    }
}

/// Reads a line as far as it parses and returns the top-level `id` string,
/// if one was seen before any syntax error.
pub(crate) fn leading_id(line: &str) -> Option<String> {
    struct Scan<'a>(&'a mut Option<String>);

    impl<'de> Visitor<'de> for Scan<'_> {
        type Value = ();

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a request object")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<(), A::Error> {
            while let Some(key) = map.next_key::<String>()? {
                if key == "id" && self.0.is_none() {
                    *self.0 = map.next_value::<Option<String>>()?;
                } else {
                    map.next_value::<IgnoredAny>()?;
                }
            }
            Ok(())
        }
    }

    let mut id = None;
    let mut de = serde_json::Deserializer::from_str(line);
    let _ = de.deserialize_map(Scan(&mut id));
    id.filter(|s| !s.is_empty())
}

/// Scores a single trace under `params`, folding failures into an error
/// response.
pub fn score_to_response(trace: &GenerationTrace, params: &RewardParams) -> ScoreResponse {
    let id = Some(trace.id.clone());
    if let Err(e) = params.validate() {
        return ScoreResponse::failure(id, ErrorCode::BadParams, e.to_string());
    }
    match score(trace, params) {
        Ok(reward) => ScoreResponse::success(trace.id.clone(), reward),
        Err(Error::InvalidTrace(violations)) => {
            let mut resp = ScoreResponse::failure(
                id,
                ErrorCode::InvalidTrace,
                Error::InvalidTrace(violations.clone()).to_string(),
            );
            if let Some(err) = resp.error.as_mut() {
                err.violations = violations;
            }
            resp
        }
        Err(e) => ScoreResponse::failure(id, ErrorCode::Internal, e.to_string()),
    }
}

/// Handles one request line.
pub fn handle_request(line: &str, defaults: &RewardParams) -> ScoreResponse {
    let request: ScoreRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) if e.is_syntax() || e.is_eof() => {
            return ScoreResponse::failure(leading_id(line), ErrorCode::Parse, e.to_string());
        }
        Err(e) => return ScoreResponse::failure(leading_id(line), ErrorCode::InvalidRequest, e.to_string()),
    };
    if let Some(v) = request.v.filter(|&v| v != WIRE_VERSION) {
        return ScoreResponse::failure(
            Some(request.id),
            ErrorCode::UnsupportedVersion,
            format!("unsupported wire version {v}, expected {WIRE_VERSION}"),
        );
    }
    if request.id.is_empty() {
        return ScoreResponse::failure(None, ErrorCode::InvalidRequest, "empty id");
    }
    let (trace, overrides) = request.into_trace();
    let params = overrides.map_or(*defaults, |o| o.apply(*defaults));
    score_to_response(&trace, &params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig {
    pub workers: usize,
    pub defaults: RewardParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            defaults: RewardParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServeStats {
    pub requests: usize,
    pub responses: usize,
}

fn response_line(raw: &[u8], defaults: &RewardParams) -> String {
    let resp = match std::str::from_utf8(raw) {
        Ok(line) => handle_request(line, defaults),
        Err(e) => ScoreResponse::failure(None, ErrorCode::Parse, format!("invalid UTF-8: {e}")),
    };
    resp.to_json_line()
}

fn trim_line_end(mut buf: &[u8]) -> &[u8] {
    while let [rest @ .., b'\n' | b'\r'] = buf {
        buf = rest;
    }
    buf
}

/// Serves requests from `reader` until end of input, writing responses to
/// `writer`. Returns once every accepted request has been answered.
pub fn serve_stream<R, W>(mut reader: R, writer: W, config: &ServiceConfig) -> io::Result<ServeStats>
where
    R: BufRead,
    W: Write + Send,
{
    let workers = config.workers.max(1);
    let defaults = config.defaults;
    let (job_tx, job_rx) = bounded::<Vec<u8>>(workers * 16);
    let (out_tx, out_rx) = bounded::<String>(workers * 16);

    thread::scope(|scope| {
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let out_tx = out_tx.clone();
            scope.spawn(move || {
                for raw in job_rx {
                    if out_tx.send(response_line(&raw, &defaults)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(job_rx);
        drop(out_tx);

        let writer_handle = scope.spawn(move || -> io::Result<usize> {
            let mut out = BufWriter::new(writer);
            let mut written = 0;
            for line in out_rx.iter() {
                out.write_all(line.as_bytes())?;
                out.write_all(b"\n")?;
                written += 1;
                if out_rx.is_empty() {
                    out.flush()?;
                }
            }
            out.flush()?;
            Ok(written)
        });

        let mut requests = 0;
        let mut read_result = Ok(());
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => break,
                Ok(_) => {
                    let line = trim_line_end(&buf);
                    if line.iter().all(u8::is_ascii_whitespace) {
                        continue;
                    }
                    requests += 1;
                    if job_tx.send(line.to_vec()).is_err() {
                        break;
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    read_result = Err(e);
                    break;
                }
            }
        }
        drop(job_tx);

        let responses = writer_handle.join().expect("writer thread panicked")?;
        read_result?;
        Ok(ServeStats { requests, responses })
    })
}

/// Serves one connection per accepted socket until the listener fails.
pub fn serve_listener(listener: TcpListener, config: ServiceConfig) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            let result = stream
                .try_clone()
                .and_then(|read_half| serve_stream(BufReader::new(read_half), stream, &config));
            if let Err(e) = result {
                eprintln!("connection {peer:?}: {e}");
            }
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Stdio,
    Tcp(String),
}

pub fn serve(transport: &Transport, config: ServiceConfig) -> io::Result<ServeStats> {
    match transport {
        Transport::Stdio => serve_stream(io::stdin().lock(), io::stdout(), &config),
        Transport::Tcp(addr) => {
            let addr = addr
                .to_socket_addrs()?
                .next()
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no listen address"))?;
            let listener = TcpListener::bind(addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            serve_listener(listener, config)?;
            Ok(ServeStats::default())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SyntheticSpec};

    fn request_line(id: &str, params: Option<ParamOverrides>) -> String {
        let (mut trace, _) = generate(&SyntheticSpec {
            spike_positions: vec![30],
            ..Default::default()
        })
        .unwrap();
        trace.id = id.into();
        serde_json::to_string(&ScoreRequest::from_trace(trace, params)).unwrap()
    }

    #[test]
    fn happy_path() {
        let resp = handle_request(&request_line("a", None), &RewardParams::default());
        assert_eq!(resp.id.as_deref(), Some("a"));
        assert!(resp.ok);
        assert!(resp.reward.is_some() && resp.error.is_none());
    }

    #[test]
    fn not_json() {
        let resp = handle_request("not json", &RewardParams::default());
        assert_eq!(resp.id, None);
        assert_eq!(resp.error.unwrap().code, ErrorCode::Parse);
        assert_eq!(
            handle_request("not json", &RewardParams::default()).to_json_line(),
            r#"{"v":1,"id":null,"ok":false,"error":{"code":"PARSE","message":"expected ident at line 1 column 2"}}"#
        );
    }

    #[test]
    fn truncated_lines_keep_a_leading_id() {
        let resp = handle_request(
            r#"{"v":1,"id":"cut","completion":"<think>"#,
            &RewardParams::default(),
        );
        assert_eq!(resp.id.as_deref(), Some("cut"));
        assert_eq!(resp.error.unwrap().code, ErrorCode::Parse);
        let resp = handle_request(r#"{"v":1,"completion":"x", "id""#, &RewardParams::default());
        assert_eq!(resp.id, None);
        let resp = handle_request(r#"{"meta":{"id":"inner"},"#, &RewardParams::default());
        assert_eq!(resp.id, None);
    }

    #[test]
    fn structural_errors_keep_the_id() {
        let resp = handle_request(r#"{"id":"q","completion":3}"#, &RewardParams::default());
        assert_eq!(resp.id.as_deref(), Some("q"));
        assert_eq!(resp.error.unwrap().code, ErrorCode::InvalidRequest);
        let resp = handle_request(r#"[1,2]"#, &RewardParams::default());
        assert_eq!(resp.error.unwrap().code, ErrorCode::InvalidRequest);
    }

    #[test]
    fn version_and_params_checked() {
        let line = request_line("a", None).replacen(r#""v":1"#, r#""v":2"#, 1);
        let resp = handle_request(&line, &RewardParams::default());
        assert_eq!(resp.error.unwrap().code, ErrorCode::UnsupportedVersion);

        let bad = ParamOverrides {
            lambda: Some(-1.0),
            ..Default::default()
        };
        let resp = handle_request(&request_line("a", Some(bad)), &RewardParams::default());
        assert_eq!(resp.error.unwrap().code, ErrorCode::BadParams);
    }

    #[test]
    fn overrides_apply_per_request() {
        let defaults = RewardParams::default();
        let off = ParamOverrides {
            entropy_reward: Some(false),
            ..Default::default()
        };
        let with = handle_request(&request_line("a", None), &defaults)
            .reward
            .unwrap();
        let without = handle_request(&request_line("a", Some(off)), &defaults)
            .reward
            .unwrap();
        assert!(with.r_entropy.unwrap() < 0.0);
        assert_eq!(without.r_entropy, None);
        // Defaults are untouched by the previous request.
        assert_eq!(
            handle_request(&request_line("a", None), &defaults)
                .reward
                .unwrap(),
            with
        );
    }

    #[test]
    fn invalid_trace_reports_violations() {
        let line = r#"{"id":"x","completion":"abc","ground_truth":"1","tokens":[{"text":"ab","span":[0,2],"p":[0.9,0.2]}]}"#;
        let resp = handle_request(
            line,
            &RewardParams {
                k: 2,
                ..Default::default()
            },
        );
        let err = resp.error.unwrap();
        assert_eq!(err.code, ErrorCode::InvalidTrace);
        assert_eq!(err.violations.len(), 2);
        let json = serde_json::to_value(&err).unwrap();
        assert_eq!(json["violations"][0]["kind"], "mass_exceeds_one");
    }

    #[test]
    fn unknown_fields_ignored() {
        let line = request_line("a", None).replacen('{', r#"{"extra":[1,{"x":2}],"#, 1);
        assert!(handle_request(&line, &RewardParams::default()).ok);
    }

    #[test]
    fn stream_round_trip() {
        let mut input = String::new();
        for i in 0..50 {
            input.push_str(&request_line(&format!("r{i}"), None));
            input.push('\n');
        }
        input.push_str("garbage\n\n");
        let mut out = Vec::new();
        let stats = serve_stream(input.as_bytes(), &mut out, &ServiceConfig::default()).unwrap();
        assert_eq!(
            stats,
            ServeStats {
                requests: 51,
                responses: 51
            }
        );
        let lines: Vec<ScoreResponse> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 51);
        assert_eq!(lines.iter().filter(|r| r.ok).count(), 50);
    }
}
