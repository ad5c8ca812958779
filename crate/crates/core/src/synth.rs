//! Deterministic synthetic traces with known entropy spikes.
//!
//! Each generated trace has a fixed layout: an opening `<think>` token,
//! filler reasoning tokens, then seven closing tokens carrying the answer
//! and confidence. Every token's top-k distribution is built so that its
//! entropy hits a chosen target: Gaussian baseline noise around a mean, and
//! spikes at fixed height `mean + magnitude · sd` at the requested positions.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64`, and normals
//! from the Box–Muller transform on 53-bit uniforms, so a spec reproduces the
//! same bytes everywhere.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::token_entropy;
use crate::error::{Error, Result};
use crate::trace::{GenerationTrace, TokenRecord, DEFAULT_TOP_K};

/// Identifies the random source and sampling scheme in generated labels.
pub const GENERATOR_ID: &str = "chacha20-seed_from_u64/box-muller/v1";

/// Tokens after the think content.
pub const TAIL_TOKENS: usize = 7;

/// Smallest trace: opening tag, one filler token, the tail.
pub const MIN_TOKENS: usize = 2 + TAIL_TOKENS;

/// Baseline noise is kept this far inside (0, ln k).
const ENTROPY_MARGIN: f64 = 1e-4;

const FILLER: [&str; 16] = [
    " so", " the", " sum", " is", " then", " we", " get", " x", " =", " 2", " +", " 3", " and", " check",
    " it", ".",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Total token count, including tag and answer tokens.
    pub n_tokens: usize,
    pub k: usize,
    pub baseline_entropy_mean: f64,
    pub baseline_entropy_sd: f64,
    /// Token indices of injected spikes; must fall inside the think content.
    #[serde(default)]
    pub spike_positions: Vec<usize>,
    /// Spike height above the baseline mean, in baseline standard deviations.
    #[serde(default)]
    pub spike_magnitude_sd: f64,
    pub answer_correct: bool,
    pub stated_confidence: f64,
    #[serde(default)]
    pub malformed: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_tokens: 100,
            k: DEFAULT_TOP_K,
            baseline_entropy_mean: 0.4,
            baseline_entropy_sd: 0.08,
            spike_positions: Vec::new(),
            spike_magnitude_sd: 6.0,
            answer_correct: true,
            stated_confidence: 0.8,
            malformed: false,
        }
    }
}

/// What the generator put into a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLabels {
    pub id: String,
    pub generator: String,
    pub seed: u64,
    pub spike_positions: Vec<usize>,
    pub think_tokens: (usize, usize),
    pub correct: bool,
    pub confidence: f64,
    pub malformed: bool,
    pub target_entropies: Vec<f64>,
}

impl SyntheticSpec {
    /// Half-open range of think-content token indices.
    pub fn think_tokens(&self) -> (usize, usize) {
        (1, self.n_tokens.saturating_sub(TAIL_TOKENS))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthSpec(msg));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.n_tokens < MIN_TOKENS {
            return bad(format!(
                "n_tokens must be at least {MIN_TOKENS}, got {}",
                self.n_tokens
            ));
        }
        let ln_k = (self.k as f64).ln();
        if !(self.baseline_entropy_mean > 0.0 && self.baseline_entropy_mean < ln_k) {
            return Err(Error::UnrealizableEntropy {
                target: self.baseline_entropy_mean,
                k: self.k,
            });
        }
        if !(self.baseline_entropy_sd >= 0.0 && self.baseline_entropy_sd.is_finite()) {
            return bad(format!(
                "baseline sd must be finite and >= 0, got {}",
                self.baseline_entropy_sd
            ));
        }
        if !(0.0..=1.0).contains(&self.stated_confidence) {
            return bad(format!("confidence {} outside [0, 1]", self.stated_confidence));
        }
        let (lo, hi) = self.think_tokens();
        if let Some(p) = self.spike_positions.iter().find(|&&p| p < lo || p >= hi) {
            return bad(format!("spike position {p} outside think tokens [{lo}, {hi})"));
        }
        if !self.spike_positions.is_empty() {
            let target = self.spike_target();
            if !(target > 0.0 && target < ln_k) {
                return Err(Error::UnrealizableEntropy { target, k: self.k });
            }
        }
        Ok(())
    }

    fn spike_target(&self) -> f64 {
        self.baseline_entropy_mean + self.spike_magnitude_sd * self.baseline_entropy_sd
    }

    pub fn id(&self) -> String {
        format!("synth-{}", self.seed)
    }
}

/// Gaussian sampler over a ChaCha20 stream.
struct Normals {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Normals {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on (0, 1].
    fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.open_uniform();
        let u2 = self.open_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    fn index(&mut self, n: usize) -> usize {
        (self.rng.next_u64() % n as u64) as usize
    }
}

fn tilted(beta: f64, k: usize) -> Vec<f64> {
    let weights: Vec<f64> = (0..k).map(|i| (-beta * i as f64).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// A descending top-k distribution whose entropy equals `target`.
///
/// Searches the family `p_i ∝ exp(−β·i)`, which runs from uniform (β = 0,
/// entropy ln k) toward one-hot as β grows, bisecting β to 1e-12.
pub fn distribution_with_entropy(target: f64, k: usize) -> Result<Vec<f64>> {
    let ln_k = (k as f64).ln();
    if !(target > 0.0 && target < ln_k) {
        return Err(Error::UnrealizableEntropy { target, k });
    }
    let entropy = |beta: f64| token_entropy(&tilted(beta, k)).expect("k >= 1");
    let mut hi = 1.0;
    while entropy(hi) > target {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::UnrealizableEntropy { target, k });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if entropy(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(tilted(0.5 * (lo + hi), k))
}

fn tail_texts(spec: &SyntheticSpec, answer: &str) -> [String; TAIL_TOKENS] {
    let confidence = format!("{}", spec.stated_confidence);
    if spec.malformed {
        [
            "</think>".into(),
            "<answer>".into(),
            answer.into(),
            "</answer>".into(),
            "\nconfidence".into(),
            ": ".into(),
            confidence,
        ]
    } else {
        [
            "</think>".into(),
            "<answer>".into(),
            answer.into(),
            "</answer>".into(),
            "<confidence>".into(),
            confidence,
            "</confidence>".into(),
        ]
    }
}

/// Generates one trace and the labels describing what was injected.
pub fn generate(spec: &SyntheticSpec) -> Result<(GenerationTrace, SynthLabels)> {
    spec.validate()?;
    let mut normals = Normals::new(spec.seed);
    let ln_k = (spec.k as f64).ln();
    let (lo, hi) = (ENTROPY_MARGIN, ln_k - ENTROPY_MARGIN);

    let targets: Vec<f64> = (0..spec.n_tokens)
        .map(|i| {
            if spec.spike_positions.contains(&i) {
                spec.spike_target()
            } else if spec.baseline_entropy_sd == 0.0 {
                spec.baseline_entropy_mean
            } else {
                (spec.baseline_entropy_mean + spec.baseline_entropy_sd * normals.next()).clamp(lo, hi)
            }
        })
        .collect();

    let truth = (spec.seed % 90 + 10).to_string();
    let answer = if spec.answer_correct {
        truth.clone()
    } else {
        (spec.seed % 90 + 11).to_string()
    };

    let (think_lo, think_hi) = spec.think_tokens();
    let mut texts = Vec::with_capacity(spec.n_tokens);
    texts.push("<think>".to_string());
    texts.extend((think_lo..think_hi).map(|_| FILLER[normals.index(FILLER.len())].to_string()));
    texts.extend(tail_texts(spec, &answer));

    let mut tokens = Vec::with_capacity(spec.n_tokens);
    let mut completion = String::new();
    let mut pos = 0;
    for (text, &target) in texts.into_iter().zip(&targets) {
        let len = text.chars().count();
        completion.push_str(&text);
        tokens.push(TokenRecord::new(
            text,
            (pos, pos + len),
            distribution_with_entropy(target, spec.k)?,
        ));
        pos += len;
    }

    let trace = GenerationTrace {
        id: spec.id(),
        completion,
        ground_truth: truth,
        tokens,
    };
    let labels = SynthLabels {
        id: spec.id(),
        generator: GENERATOR_ID.to_string(),
        seed: spec.seed,
        spike_positions: spec.spike_positions.clone(),
        think_tokens: (think_lo, think_hi),
        correct: spec.answer_correct,
        confidence: spec.stated_confidence,
        malformed: spec.malformed,
        target_entropies: targets,
    };
    Ok((trace, labels))
}

/// A mixed corpus: roughly half correct answers, a spread of stated
/// confidences, a spike in about half the traces and one malformed
/// completion in ten. Spec `i` gets seed `seed + i`.
pub fn corpus_specs(seed: u64, count: usize, n_tokens: usize) -> Vec<SyntheticSpec> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n_tokens = n_tokens.max(MIN_TOKENS);
    let (lo, hi) = (1, n_tokens - TAIL_TOKENS);
    (0..count)
        .map(|i| {
            let correct = rng.gen_bool(0.5);
            let confidence = f64::from(rng.gen_range(1u32..=19)) / 20.0;
            let spike = rng.gen_bool(0.5);
            SyntheticSpec {
                seed: seed.wrapping_add(i as u64),
                n_tokens,
                spike_positions: if spike {
                    vec![rng.gen_range(lo..hi)]
                } else {
                    vec![]
                },
                spike_magnitude_sd: f64::from(rng.gen_range(4u32..=8)),
                answer_correct: correct,
                stated_confidence: confidence,
                malformed: rng.gen_ratio(1, 10),
                ..Default::default()
            }
        })
        .collect()
}
