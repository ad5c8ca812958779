//! Dataset-level calibration metrics and the aggregate report.
//!
//! ECE uses `M` equal-width bins `((m−1)/M, m/M]`; a confidence of exactly 0
//! belongs to no such interval and is placed in the first bin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::RewardBreakdown;

pub const DEFAULT_BINS: usize = 10;
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub confidence: f64,
    pub correct: bool,
    pub sentence_entropy: f64,
    pub spike_rate: f64,
    pub format_valid: bool,
}

impl SampleOutcome {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self {
            confidence,
            correct,
            sentence_entropy: 0.0,
            spike_rate: 0.0,
            format_valid: true,
        }
    }

    /// The calibration view of a scored completion; `None` when the
    /// completion carried no usable confidence.
    pub fn from_breakdown(b: &RewardBreakdown) -> Option<Self> {
        b.confidence.map(|confidence| Self {
            confidence,
            correct: b.correct,
            sentence_entropy: b.sentence_entropy,
            spike_rate: b.spike_rate,
            format_valid: b.format_valid,
        })
    }

    fn label(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

fn check_samples(samples: &[SampleOutcome]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    if let Some(s) = samples.iter().find(|s| !(0.0..=1.0).contains(&s.confidence)) {
        return Err(Error::ConfidenceOutOfRange(s.confidence));
    }
    Ok(())
}

/// 0-based bin of `confidence` among `bins` intervals `((m−1)/M, m/M]`.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    let m = bins as f64;
    let upper = |j: usize| j as f64 / m;
    // First guess from the product, then settle against the exact bounds
    // so products like 0.3 * 10 = 3.0000000000000004 land correctly.
    let mut j = ((confidence * m).ceil() as usize).clamp(1, bins);
    while j > 1 && confidence <= upper(j - 1) {
        j -= 1;
    }
    while j < bins && confidence > upper(j) {
        j += 1;
    }
    j - 1
}

#[derive(Debug, Clone, Copy, Default)]
struct BinAcc {
    count: usize,
    confidence_sum: f64,
    correct: usize,
}

fn accumulate(samples: &[SampleOutcome], bins: usize) -> Vec<BinAcc> {
    let mut acc = vec![BinAcc::default(); bins];
    for s in samples {
        let b = &mut acc[bin_index(s.confidence, bins)];
        b.count += 1;
        b.confidence_sum += s.confidence;
        b.correct += usize::from(s.correct);
    }
    acc
}

fn ece_from_bins(acc: &[BinAcc], n: usize) -> f64 {
    acc.iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let c = b.count as f64;
            (c / n as f64) * (b.correct as f64 / c - b.confidence_sum / c).abs()
        })
        .sum()
}

pub fn expected_calibration_error(samples: &[SampleOutcome], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidBinCount);
    }
    check_samples(samples)?;
    Ok(ece_from_bins(&accumulate(samples, bins), samples.len()))
}

pub fn brier_score(samples: &[SampleOutcome]) -> Result<f64> {
    check_samples(samples)?;
    Ok(samples
        .iter()
        .map(|s| (s.confidence - s.label()).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
}

/// Mean absolute gap between confidence and the 0/1 correctness label.
pub fn calibration_error(samples: &[SampleOutcome]) -> Result<f64> {
    check_samples(samples)?;
    Ok(samples
        .iter()
        .map(|s| (s.confidence - s.label()).abs())
        .sum::<f64>()
        / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub v: u32,
    pub n: usize,
    pub accuracy: f64,
    pub format_validity: f64,
    /// Samples with a usable confidence; the calibration metrics cover only these.
    pub calibrated_n: usize,
    pub excluded_from_calibration: usize,
    pub calibration_error: Option<f64>,
    pub ece: Option<f64>,
    pub brier: Option<f64>,
    /// Mean over samples of the think-span mean token entropy (nats).
    pub mean_token_entropy: f64,
    /// Population deviation of the per-sample mean token entropy.
    pub entropy_std: f64,
    /// Mean over samples of the think-span maximum token entropy.
    pub mean_sentence_entropy: f64,
    pub sentence_entropy_std: f64,
    pub mean_spike_rate: f64,
    pub mean_reward: f64,
    pub bins: Vec<BinSummary>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn build_report(breakdowns: &[RewardBreakdown], bins: usize) -> Result<CalibrationReport> {
    if breakdowns.is_empty() {
        return Err(Error::NoSamples);
    }
    if bins == 0 {
        return Err(Error::InvalidBinCount);
    }
    let n = breakdowns.len();
    let frac = |count: usize| count as f64 / n as f64;
    let calibrated: Vec<SampleOutcome> = breakdowns
        .iter()
        .filter_map(SampleOutcome::from_breakdown)
        .collect();

    let (calibration_error, ece, brier, bin_acc) = if calibrated.is_empty() {
        (None, None, None, vec![BinAcc::default(); bins])
    } else {
        let acc = accumulate(&calibrated, bins);
        (
            Some(calibration_error(&calibrated)?),
            Some(ece_from_bins(&acc, calibrated.len())),
            Some(brier_score(&calibrated)?),
            acc,
        )
    };

    let (mean_token_entropy, entropy_std) = mean_std(breakdowns.iter().map(|b| b.mean_token_entropy));
    let (mean_sentence_entropy, sentence_entropy_std) =
        mean_std(breakdowns.iter().map(|b| b.sentence_entropy));

    Ok(CalibrationReport {
        v: REPORT_VERSION,
        n,
        accuracy: frac(breakdowns.iter().filter(|b| b.correct).count()),
        format_validity: frac(breakdowns.iter().filter(|b| b.format_valid).count()),
        calibrated_n: calibrated.len(),
        excluded_from_calibration: n - calibrated.len(),
        calibration_error,
        ece,
        brier,
        mean_token_entropy,
        entropy_std,
        mean_sentence_entropy,
        sentence_entropy_std,
        mean_spike_rate: breakdowns.iter().map(|b| b.spike_rate).sum::<f64>() / n as f64,
        mean_reward: breakdowns.iter().map(|b| b.r_total).sum::<f64>() / n as f64,
        bins: bin_acc
            .iter()
            .enumerate()
            .map(|(i, b)| BinSummary {
                lower: i as f64 / bins as f64,
                upper: (i + 1) as f64 / bins as f64,
                count: b.count,
                mean_confidence: (b.count > 0).then(|| b.confidence_sum / b.count as f64),
                accuracy: (b.count > 0).then(|| b.correct as f64 / b.count as f64),
            })
            .collect(),
    })
}

impl CalibrationReport {
    fn scalar_rows(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        vec![
            ("samples", self.n.to_string()),
            ("accuracy", format!("{:.4}", self.accuracy)),
            ("format_validity", format!("{:.4}", self.format_validity)),
            ("calibrated_samples", self.calibrated_n.to_string()),
            (
                "excluded_from_calibration",
                self.excluded_from_calibration.to_string(),
            ),
            ("calibration_error", opt(self.calibration_error)),
            ("ece", opt(self.ece)),
            ("brier", opt(self.brier)),
            ("mean_token_entropy", format!("{:.4}", self.mean_token_entropy)),
            ("entropy_std", format!("{:.4}", self.entropy_std)),
            (
                "mean_sentence_entropy",
                format!("{:.4}", self.mean_sentence_entropy),
            ),
            (
                "sentence_entropy_std",
                format!("{:.4}", self.sentence_entropy_std),
            ),
            ("mean_spike_rate", format!("{:.4}", self.mean_spike_rate)),
            ("mean_reward", format!("{:.4}", self.mean_reward)),
        ]
    }

    /// Aligned plain-text rendering: scalar metrics, then the bin table.
    pub fn to_text(&self) -> String {
        let rows = self.scalar_rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v:>10}\n"));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:<15}  {:>6}  {:>10}  {:>10}\n",
            "bin", "count", "mean_conf", "accuracy"
        ));
        for b in &self.bins {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "{:<15}  {:>6}  {:>10}  {:>10}\n",
                format!("({:.2}, {:.2}]", b.lower, b.upper),
                b.count,
                opt(b.mean_confidence),
                opt(b.accuracy)
            ));
        }
        out
    }

    /// One header row and one data row; bins become `bin{m}_*` columns.
    pub fn to_csv(&self) -> Result<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let mut header: Vec<String> = [
            "v",
            "n",
            "accuracy",
            "format_validity",
            "calibrated_n",
            "excluded_from_calibration",
            "calibration_error",
            "ece",
            "brier",
            "mean_token_entropy",
            "entropy_std",
            "mean_sentence_entropy",
            "sentence_entropy_std",
            "mean_spike_rate",
            "mean_reward",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut row = vec![
            self.v.to_string(),
            self.n.to_string(),
            self.accuracy.to_string(),
            self.format_validity.to_string(),
            self.calibrated_n.to_string(),
            self.excluded_from_calibration.to_string(),
            opt(self.calibration_error),
            opt(self.ece),
            opt(self.brier),
            self.mean_token_entropy.to_string(),
            self.entropy_std.to_string(),
            self.mean_sentence_entropy.to_string(),
            self.sentence_entropy_std.to_string(),
            self.mean_spike_rate.to_string(),
            self.mean_reward.to_string(),
        ];
        for (i, b) in self.bins.iter().enumerate() {
            let m = i + 1;
            header.extend([
                format!("bin{m}_count"),
                format!("bin{m}_mean_confidence"),
                format!("bin{m}_accuracy"),
            ]);
            row.extend([b.count.to_string(), opt(b.mean_confidence), opt(b.accuracy)]);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).map_err(std::io::Error::from)?;
        w.write_record(&row).map_err(std::io::Error::from)?;
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
