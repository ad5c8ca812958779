//! Batch commands over JSONL files, and the argument parser behind the
//! `hallureward` binary.
//!
//! Every flag can also be set through an environment variable named
//! `HALLUREWARD_<FLAG>` (e.g. `HALLUREWARD_LAMBDA`); an explicit flag wins.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 internal.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{spikes, Spike};
use crate::metrics::{build_report, DEFAULT_BINS};
use crate::reward::score_detailed;
use crate::service::{self, score_to_response, ErrorCode, ScoreResponse, ServiceConfig, Transport};
use crate::synth::{corpus_specs, generate, SyntheticSpec};
use crate::trace::{
    GenerationTrace, RewardBreakdown, RewardParams, ZScope, DEFAULT_LAMBDA, DEFAULT_TAU, DEFAULT_TOP_K,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Lines scored per parallel batch.
const CHUNK_LINES: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "hallureward",
    version,
    about = "Hallucination-aware reward scoring and calibration reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score JSONL traces; one result line per input line, same order.
    Score(ScoreArgs),
    /// Aggregate `score` output into a calibration report.
    Report(ReportArgs),
    /// List think-span entropy spikes per trace.
    Detect(DetectArgs),
    /// Generate synthetic traces with known spikes.
    Synth(SynthArgs),
    /// Run the newline-delimited JSON scoring service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Sequence,
    Think,
}

#[derive(Debug, Clone, Args)]
pub struct RewardFlags {
    /// Entropy-penalty scale.
    #[arg(long, env = "HALLUREWARD_LAMBDA", default_value_t = DEFAULT_LAMBDA, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Z-score threshold for spikes.
    #[arg(long, env = "HALLUREWARD_TAU", default_value_t = DEFAULT_TAU, allow_negative_numbers = true)]
    pub tau: f64,
    /// Probabilities logged per token.
    #[arg(long = "top-k", env = "HALLUREWARD_TOP_K", default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Drop the confidence component from the total.
    #[arg(long, env = "HALLUREWARD_NO_CONFIDENCE_REWARD")]
    pub no_confidence_reward: bool,
    /// Drop the entropy component from the total.
    #[arg(long, env = "HALLUREWARD_NO_ENTROPY_REWARD")]
    pub no_entropy_reward: bool,
    /// Tokens the z-score statistics are computed over.
    #[arg(long, env = "HALLUREWARD_Z_SCOPE", value_enum, default_value_t = ScopeArg::Sequence)]
    pub z_scope: ScopeArg,
}

impl RewardFlags {
    pub fn params(&self) -> CliResult<RewardParams> {
        let params = RewardParams {
            lambda: self.lambda,
            tau: self.tau,
            k: self.top_k,
            confidence_reward: !self.no_confidence_reward,
            entropy_reward: !self.no_entropy_reward,
            z_scope: match self.z_scope {
                ScopeArg::Sequence => ZScope::Sequence,
                ScopeArg::Think => ZScope::Think,
            },
        };
        params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Args)]
pub struct IoFlags {
    /// Input JSONL file; `-` for standard input.
    #[arg(long, env = "HALLUREWARD_INPUT", default_value = "-")]
    pub input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long, env = "HALLUREWARD_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub reward: RewardFlags,
    /// Worker threads.
    #[arg(long, env = "HALLUREWARD_WORKERS", default_value_t = 4)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub io: IoFlags,
    /// Confidence bins for ECE.
    #[arg(long, env = "HALLUREWARD_BINS", default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, env = "HALLUREWARD_FORMAT", value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub reward: RewardFlags,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output JSONL of traces; standard output when omitted.
    #[arg(long, env = "HALLUREWARD_OUTPUT")]
    pub output: Option<PathBuf>,
    /// Also write generator labels (one JSON line per trace) here.
    #[arg(long, env = "HALLUREWARD_LABELS")]
    pub labels: Option<PathBuf>,
    /// JSON file holding one spec object, an array of specs, or JSONL specs.
    #[arg(long, env = "HALLUREWARD_SPEC_FILE", conflicts_with = "corpus")]
    pub spec_file: Option<PathBuf>,
    /// Generate a mixed corpus of this many traces instead of one spec.
    #[arg(long, env = "HALLUREWARD_CORPUS")]
    pub corpus: Option<usize>,
    #[arg(long, env = "HALLUREWARD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Copies of the flag-built spec, with seeds seed, seed+1, ...
    #[arg(long, env = "HALLUREWARD_COUNT", default_value_t = 1)]
    pub count: usize,
    #[arg(long, env = "HALLUREWARD_N_TOKENS", default_value_t = 100)]
    pub n_tokens: usize,
    #[arg(long = "top-k", env = "HALLUREWARD_TOP_K", default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, env = "HALLUREWARD_BASELINE_MEAN", default_value_t = 0.4)]
    pub baseline_mean: f64,
    #[arg(long, env = "HALLUREWARD_BASELINE_SD", default_value_t = 0.08)]
    pub baseline_sd: f64,
    /// Spike position (token index); repeatable.
    #[arg(long = "spike", env = "HALLUREWARD_SPIKE", value_delimiter = ',')]
    pub spikes: Vec<usize>,
    /// Spike height in baseline standard deviations.
    #[arg(long, env = "HALLUREWARD_SPIKE_MAGNITUDE", default_value_t = 6.0)]
    pub spike_magnitude: f64,
    /// Emit a wrong answer.
    #[arg(long, env = "HALLUREWARD_INCORRECT")]
    pub incorrect: bool,
    #[arg(long, env = "HALLUREWARD_CONFIDENCE", default_value_t = 0.8)]
    pub confidence: f64,
    /// Emit a completion without confidence tags.
    #[arg(long, env = "HALLUREWARD_MALFORMED")]
    pub malformed: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Serve over standard input/output (default).
    #[arg(long, conflicts_with = "listen")]
    pub stdio: bool,
    /// Listen on a TCP address, e.g. 127.0.0.1:7070.
    #[arg(long, env = "HALLUREWARD_LISTEN")]
    pub listen: Option<String>,
    #[arg(long, env = "HALLUREWARD_WORKERS", default_value_t = 4)]
    pub workers: usize,
    #[command(flatten)]
    pub reward: RewardFlags,
}

fn open_input(path: &Path) -> CliResult<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// Applies `f` to every non-blank line of `input` on `workers` threads and
/// writes the results in input order. `f` gets the 1-based line number.
fn map_lines<F>(input: &mut dyn BufRead, output: &mut dyn Write, workers: usize, f: F) -> CliResult<LineStats>
where
    F: Fn(usize, &str) -> (String, bool) + Sync,
{
    let pool = thread_pool(workers)?;
    let mut stats = LineStats::default();
    let mut lines = input.lines().enumerate();
    loop {
        let mut chunk = Vec::with_capacity(CHUNK_LINES);
        for (i, line) in lines.by_ref() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            chunk.push((i + 1, line));
            if chunk.len() == CHUNK_LINES {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let results: Vec<(String, bool)> = pool.install(|| chunk.par_iter().map(|(n, l)| f(*n, l)).collect());
        for (line, ok) in results {
            output.write_all(line.as_bytes())?;
            output.write_all(b"\n")?;
            stats.lines += 1;
            if !ok {
                stats.errors += 1;
            }
        }
    }
    output.flush()?;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LineStats {
    pub lines: usize,
    pub errors: usize,
}

fn parse_trace_line(line_no: usize, line: &str) -> Result<GenerationTrace, Box<ScoreResponse>> {
    serde_json::from_str(line).map_err(|e| {
        let code = if e.is_syntax() || e.is_eof() {
            ErrorCode::Parse
        } else {
            ErrorCode::InvalidRequest
        };
        Box::new(ScoreResponse::failure(
            service::leading_id(line),
            code,
            format!("line {line_no}: {e}"),
        ))
    })
}

/// Scores one JSONL line into one output line.
pub fn score_line(line_no: usize, line: &str, params: &RewardParams) -> ScoreResponse {
    match parse_trace_line(line_no, line) {
        Ok(trace) => score_to_response(&trace, params),
        Err(resp) => *resp,
    }
}

/// Scores every trace line of `input`, writing one [`ScoreResponse`] line per
/// input line in the same order. Per-line failures become error records.
pub fn score_stream(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    params: &RewardParams,
    workers: usize,
) -> CliResult<LineStats> {
    map_lines(input, output, workers, |n, line| {
        let resp = score_line(n, line, params);
        (resp.to_json_line(), resp.ok)
    })
}

pub fn cmd_score(args: &ScoreArgs) -> CliResult<LineStats> {
    let params = args.reward.params()?;
    let mut input = open_input(&args.io.input)?;
    let mut output = open_output(args.io.output.as_deref())?;
    let stats = score_stream(&mut *input, &mut *output, &params, args.workers)?;
    eprintln!("scored {} lines, {} errors", stats.lines, stats.errors);
    Ok(stats)
}

/// Reads `score` output, keeping successful breakdowns. Returns the
/// breakdowns and the number of skipped error or unreadable lines.
pub fn read_breakdowns(input: &mut dyn BufRead) -> CliResult<(Vec<RewardBreakdown>, usize)> {
    let mut breakdowns = Vec::new();
    let mut skipped = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ScoreResponse>(&line) {
            Ok(ScoreResponse {
                ok: true,
                reward: Some(reward),
                ..
            }) => breakdowns.push(reward),
            _ => skipped += 1,
        }
    }
    Ok((breakdowns, skipped))
}

pub fn render_report(breakdowns: &[RewardBreakdown], bins: usize, format: ReportFormat) -> CliResult<String> {
    let report = build_report(breakdowns, bins).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(match format {
        ReportFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => report.to_csv().map_err(|e| CliError::Internal(e.to_string()))?,
        ReportFormat::Text => report.to_text(),
    })
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let mut input = open_input(&args.io.input)?;
    let (breakdowns, skipped) = read_breakdowns(&mut *input)?;
    if skipped > 0 {
        eprintln!("skipped {skipped} error lines");
    }
    let rendered = render_report(&breakdowns, args.bins, args.format)?;
    let mut output = open_output(args.io.output.as_deref())?;
    output.write_all(rendered.as_bytes())?;
    output.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRecord {
    pub id: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default)]
    pub spikes: Vec<Spike>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn detect_line(line_no: usize, line: &str, params: &RewardParams) -> DetectRecord {
    let failure = |id: Option<String>, message: String| DetectRecord {
        id,
        ok: false,
        z_max: None,
        spikes: Vec::new(),
        error: Some(message),
    };
    let trace = match parse_trace_line(line_no, line) {
        Ok(t) => t,
        Err(resp) => return failure(None, resp.error.map(|e| e.message).unwrap_or_default()),
    };
    match score_detailed(&trace, params) {
        Ok(scored) => DetectRecord {
            id: Some(trace.id.clone()),
            ok: true,
            z_max: Some(scored.profile.z_max),
            spikes: spikes(&trace, &scored.profile, &scored.reasoning_indices, params.tau),
            error: None,
        },
        Err(e) => failure(Some(trace.id.clone()), format!("line {line_no}: {e}")),
    }
}

pub fn detect_stream(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    params: &RewardParams,
) -> CliResult<LineStats> {
    map_lines(input, output, 1, |n, line| {
        let rec = detect_line(n, line, params);
        let json = serde_json::to_string(&rec).expect("detect record serializes");
        (json, rec.ok)
    })
}

pub fn cmd_detect(args: &DetectArgs) -> CliResult<LineStats> {
    let params = args.reward.params()?;
    let mut input = open_input(&args.io.input)?;
    let mut output = open_output(args.io.output.as_deref())?;
    detect_stream(&mut *input, &mut *output, &params)
}

fn read_spec_file(path: &Path) -> CliResult<Vec<SyntheticSpec>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let usage = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(usage);
    }
    serde_json::Deserializer::from_str(trimmed)
        .into_iter::<SyntheticSpec>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)
}

impl SynthArgs {
    pub fn specs(&self) -> CliResult<Vec<SyntheticSpec>> {
        if let Some(path) = &self.spec_file {
            return read_spec_file(path);
        }
        if let Some(n) = self.corpus {
            return Ok(corpus_specs(self.seed, n, self.n_tokens));
        }
        let base = SyntheticSpec {
            seed: self.seed,
            n_tokens: self.n_tokens,
            k: self.top_k,
            baseline_entropy_mean: self.baseline_mean,
            baseline_entropy_sd: self.baseline_sd,
            spike_positions: self.spikes.clone(),
            spike_magnitude_sd: self.spike_magnitude,
            answer_correct: !self.incorrect,
            stated_confidence: self.confidence,
            malformed: self.malformed,
        };
        Ok((0..self.count as u64)
            .map(|i| SyntheticSpec {
                seed: self.seed.wrapping_add(i),
                ..base.clone()
            })
            .collect())
    }
}

/// Writes generated traces (and optionally labels) for every spec.
pub fn write_synth(
    specs: &[SyntheticSpec],
    traces: &mut dyn Write,
    mut labels: Option<&mut dyn Write>,
) -> CliResult<()> {
    for spec in specs {
        let (trace, label) = generate(spec).map_err(|e| CliError::Usage(e.to_string()))?;
        traces.write_all(trace.to_json_line().as_bytes())?;
        traces.write_all(b"\n")?;
        if let Some(out) = labels.as_mut() {
            let line = serde_json::to_string(&label).map_err(|e| CliError::Internal(e.to_string()))?;
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    traces.flush()?;
    if let Some(out) = labels {
        out.flush()?;
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let specs = args.specs()?;
    let mut output = open_output(args.output.as_deref())?;
    match args.labels.as_deref() {
        Some(path) => {
            let mut labels = open_output(Some(path))?;
            write_synth(&specs, &mut *output, Some(&mut *labels))
        }
        None => write_synth(&specs, &mut *output, None),
    }
}

pub fn cmd_serve(args: &ServeArgs) -> CliResult<()> {
    let config = ServiceConfig {
        workers: args.workers,
        defaults: args.reward.params()?,
    };
    let transport = match &args.listen {
        Some(addr) => Transport::Tcp(addr.clone()),
        None => Transport::Stdio,
    };
    service::serve(&transport, config)?;
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Score(a) => cmd_score(a).map(drop),
        Command::Report(a) => cmd_report(a),
        Command::Detect(a) => cmd_detect(a).map(drop),
        Command::Synth(a) => cmd_synth(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            eprintln!("hallureward: {e}");
            e.exit_code()
        }
    }
}
