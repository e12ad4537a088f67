//! Evaluation metrics and report emission: classification scores, BLEU,
//! lexical executability, semantic consistency, latency/throughput/memory
//! benchmarks, and the CSV/JSON report files.

use crate::corpus::tokenize_code;
use crate::encoder::Encoder;
use crate::fusion::FusionError;
use crate::tensor::peak_tensor_bytes;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("max_n must be positive")]
    BadMaxN,
    #[error("interval ends before it starts: start {start}, end {end}")]
    Clock { start: f64, end: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metrics file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] FusionError),
}

/// Tallies of a next-token classification run. Classes are token ids;
/// macro scores average only over classes present in the references.
#[derive(Debug, Clone, Default)]
pub struct ClassificationCounts {
    pub total: usize,
    pub correct: usize,
    tp: BTreeMap<u32, usize>,
    fp: BTreeMap<u32, usize>,
    fn_: BTreeMap<u32, usize>,
}

impl ClassificationCounts {
    pub fn observe(&mut self, label: u32, predicted: u32) {
        self.total += 1;
        if label == predicted {
            self.correct += 1;
            *self.tp.entry(label).or_insert(0) += 1;
        } else {
            *self.fn_.entry(label).or_insert(0) += 1;
            *self.fp.entry(predicted).or_insert(0) += 1;
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut counts = ClassificationCounts::default();
        for (label, predicted) in pairs {
            counts.observe(label, predicted);
        }
        counts
    }
}

pub fn accuracy(counts: &ClassificationCounts) -> Result<f64, MetricError> {
    if counts.total == 0 {
        return Err(MetricError::Empty);
    }
    Ok(counts.correct as f64 / counts.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro precision/recall over classes that occur in the references,
/// with 0/0 ratios scored 0. F1 is the harmonic mean of the two macro
/// averages.
pub fn precision_recall_f1(counts: &ClassificationCounts) -> Result<MacroScores, MetricError> {
    if counts.total == 0 {
        return Err(MetricError::Empty);
    }
    let mut reference_classes: Vec<u32> = counts
        .tp
        .keys()
        .chain(counts.fn_.keys())
        .copied()
        .collect();
    reference_classes.sort_unstable();
    reference_classes.dedup();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for class in &reference_classes {
        let tp = counts.tp.get(class).copied().unwrap_or(0);
        let fp = counts.fp.get(class).copied().unwrap_or(0);
        let fn_ = counts.fn_.get(class).copied().unwrap_or(0);
        p_sum += ratio(tp, tp + fp);
        r_sum += ratio(tp, tp + fn_);
    }
    let n = reference_classes.len() as f64;
    let precision = p_sum / n;
    let recall = r_sum / n;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MacroScores {
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuBreakdown {
    pub score: f64,
    pub brevity_penalty: f64,
    pub precisions: Vec<f64>,
    pub weights: Vec<f64>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<T: Eq + std::hash::Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with uniform weights 1/max_n, clipped n-gram counts,
/// and add-one smoothing for orders ≥ 2 with zero matches. Unigram
/// precision is never smoothed, so a candidate sharing no tokens with
/// the reference scores 0.
pub fn bleu<T: Eq + std::hash::Hash>(
    candidate: &[T],
    reference: &[T],
    max_n: usize,
) -> Result<BleuBreakdown, MetricError> {
    if max_n == 0 {
        return Err(MetricError::BadMaxN);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let weights = vec![1.0 / max_n as f64; max_n];
    if candidate.is_empty() {
        return Ok(BleuBreakdown {
            score: 0.0,
            brevity_penalty: 0.0,
            precisions: vec![0.0; max_n],
            weights,
            candidate_len: 0,
            reference_len: reference.len(),
        });
    }
    let c = candidate.len();
    let r = reference.len();
    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let cand_counts = ngram_counts(candidate, n);
        let ref_counts = ngram_counts(reference, n);
        let mut matched = 0usize;
        let mut total = 0usize;
        for (gram, count) in &cand_counts {
            total += count;
            let clip = ref_counts.get(gram).copied().unwrap_or(0);
            matched += (*count).min(clip);
        }
        let (num, den) = if n >= 2 && matched == 0 {
            (matched + 1, total + 1)
        } else {
            (matched, total)
        };
        precisions.push(if den == 0 { 1.0 } else { num as f64 / den as f64 });
    }
    let brevity_penalty = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let score = if precisions.iter().any(|p| *p == 0.0) {
        0.0
    } else {
        let log_sum: f64 = precisions
            .iter()
            .zip(weights.iter())
            .map(|(p, w)| w * p.ln())
            .sum();
        brevity_penalty * log_sum.exp()
    };
    Ok(BleuBreakdown {
        score,
        brevity_penalty,
        precisions,
        weights,
        candidate_len: c,
        reference_len: r,
    })
}

/// Mean of (end − start) over the given intervals, in the intervals'
/// own time unit.
pub fn average_response_time(intervals: &[(f64, f64)]) -> Result<f64, MetricError> {
    if intervals.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = 0.0;
    for &(start, end) in intervals {
        if end < start {
            return Err(MetricError::Clock { start, end });
        }
        sum += end - start;
    }
    Ok(sum / intervals.len() as f64)
}

/// True when the source lexes cleanly and its bracket delimiters are
/// balanced with correct nesting.
pub fn is_executable(source: &str) -> bool {
    let Ok(tokens) = tokenize_code(source) else {
        return false;
    };
    let mut stack = Vec::new();
    for token in &tokens {
        match token.as_str() {
            "(" => stack.push(')'),
            "[" => stack.push(']'),
            "{" => stack.push('}'),
            ")" | "]" | "}" => {
                let expected = stack.pop();
                if expected != token.chars().next() {
                    return false;
                }
            }
            _ => {}
        }
    }
    stack.is_empty()
}

pub fn executability_rate(sources: &[String]) -> Result<f64, MetricError> {
    if sources.is_empty() {
        return Err(MetricError::Empty);
    }
    let ok = sources.iter().filter(|s| is_executable(s)).count();
    Ok(ok as f64 / sources.len() as f64)
}

/// Cosine similarity mapped affinely onto [0, 1]; a zero-norm side
/// yields the midpoint 0.5.
pub fn cosine_mapped(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.5;
    }
    let cos = (dot / (norm_a * norm_b)).clamp(-1.0, 1.0);
    (cos + 1.0) / 2.0
}

/// Agreement of encoder features between a candidate and its reference.
pub fn semantic_consistency(
    encoder: &Encoder,
    candidate: &[u32],
    reference: &[u32],
) -> Result<f64, MetricError> {
    let (cand, _) = encoder.encode_context(candidate).map_err(FusionError::from)?;
    let (reff, _) = encoder.encode_context(reference).map_err(FusionError::from)?;
    Ok(cosine_mapped(&cand.f_code, &reff.f_code))
}

#[derive(Debug, Clone, Copy)]
pub struct BenchResult {
    pub art_ms: f64,
    pub tokens_per_second: f64,
    pub memory_gb: f64,
    pub total_tokens: usize,
    pub total_seconds: f64,
}

/// Times one completion call per prompt. Average response time is the
/// mean wall-clock per call; speed is total generated tokens over total
/// elapsed seconds; memory is the process-wide peak of live tensor
/// bytes, reported in GB as bytes / 1e9.
pub fn benchmark<F>(
    mut complete: F,
    prompts: &[Vec<u32>],
    max_new: usize,
) -> Result<BenchResult, MetricError>
where
    F: FnMut(&[u32], usize) -> Result<Vec<u32>, FusionError>,
{
    if prompts.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut intervals = Vec::with_capacity(prompts.len());
    let mut total_tokens = 0usize;
    let mut total_seconds = 0.0;
    for prompt in prompts {
        let begin = Instant::now();
        let out = complete(prompt, max_new)?;
        let elapsed = begin.elapsed().as_secs_f64();
        total_tokens += out.len();
        total_seconds += elapsed;
        intervals.push((0.0, elapsed * 1e3));
    }
    let art_ms = average_response_time(&intervals)?;
    let tokens_per_second = if total_seconds > 0.0 {
        total_tokens as f64 / total_seconds
    } else {
        0.0
    };
    Ok(BenchResult {
        art_ms,
        tokens_per_second,
        memory_gb: peak_tensor_bytes() as f64 / 1e9,
        total_tokens,
        total_seconds,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassificationRow {
    pub model: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerationRow {
    pub model: String,
    pub bleu: f64,
    pub executability: f64,
    pub consistency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EfficiencyRow {
    pub model: String,
    pub art_ms: f64,
    pub memory_gb: f64,
    pub tokens_per_second: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RobustnessRow {
    pub scenario: String,
    pub accuracy: f64,
    pub recovery: f64,
    pub stability: f64,
}

/// Full-precision metric store; rounding happens only when rendering
/// CSV tables. Sections are filled in by the subcommands that compute
/// them and carried through otherwise.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct MetricsReport {
    pub classification: Vec<ClassificationRow>,
    pub generation: Vec<GenerationRow>,
    pub efficiency: Vec<EfficiencyRow>,
    pub robustness: Vec<RobustnessRow>,
}

pub fn write_metrics_json(report: &MetricsReport, path: impl AsRef<Path>) -> Result<(), MetricError> {
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

pub fn load_metrics_json(path: impl AsRef<Path>) -> Result<MetricsReport, MetricError> {
    let body = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&body)?)
}

/// Two-decimal cell rendering. Rust's fixed-point formatting rounds the
/// binary value half-to-even, which is the rounding the tables expect.
pub fn render_2dp(value: f64) -> String {
    format!("{value:.2}")
}

pub const TABLE1_HEADER: &str = "Model,Accuracy,Precision,Recall,F1-Score";
pub const TABLE2_HEADER: &str = "Model,BLEU,Code Executability,Semantic Consistency";
pub const TABLE3_HEADER: &str =
    "Model,Average Response Time(ms),Memory Usage(GB),Inference Speed(tokens/s)";
pub const TABLE4_HEADER: &str = "Test Scenario,Accuracy,Recovery Ability,Stability Index";
pub const FIGURE_HEADER: &str = "model,metric,value";

/// Renders the four result tables under `dir`. Headers are fixed
/// byte-for-byte; one file per table.
pub fn write_tables(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<(), MetricError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut t1 = String::from(TABLE1_HEADER);
    t1.push('\n');
    for row in &report.classification {
        t1.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model,
            render_2dp(row.accuracy),
            render_2dp(row.precision),
            render_2dp(row.recall),
            render_2dp(row.f1)
        ));
    }
    std::fs::write(dir.join("table1_accuracy.csv"), t1)?;

    let mut t2 = String::from(TABLE2_HEADER);
    t2.push('\n');
    for row in &report.generation {
        t2.push_str(&format!(
            "{},{},{},{}\n",
            row.model,
            render_2dp(row.bleu),
            render_2dp(row.executability),
            render_2dp(row.consistency)
        ));
    }
    std::fs::write(dir.join("table2_generation.csv"), t2)?;

    let mut t3 = String::from(TABLE3_HEADER);
    t3.push('\n');
    for row in &report.efficiency {
        t3.push_str(&format!(
            "{},{},{},{}\n",
            row.model,
            render_2dp(row.art_ms),
            render_2dp(row.memory_gb),
            render_2dp(row.tokens_per_second)
        ));
    }
    std::fs::write(dir.join("table3_efficiency.csv"), t3)?;

    let mut t4 = String::from(TABLE4_HEADER);
    t4.push('\n');
    for row in &report.robustness {
        t4.push_str(&format!(
            "{},{},{},{}\n",
            row.scenario,
            render_2dp(row.accuracy),
            render_2dp(row.recovery),
            render_2dp(row.stability)
        ));
    }
    std::fs::write(dir.join("table4_robustness.csv"), t4)?;
    Ok(())
}

/// Long-form per-figure CSVs for plotting, one value per line under the
/// fixed `model,metric,value` header. Values are full precision.
pub fn write_figures(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<(), MetricError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let line = |buf: &mut String, model: &str, metric: &str, value: f64| {
        buf.push_str(&format!("{model},{metric},{value}\n"));
    };

    let mut f1 = String::from(FIGURE_HEADER);
    f1.push('\n');
    for row in &report.classification {
        line(&mut f1, &row.model, "accuracy", row.accuracy);
        line(&mut f1, &row.model, "precision", row.precision);
        line(&mut f1, &row.model, "recall", row.recall);
        line(&mut f1, &row.model, "f1", row.f1);
    }
    std::fs::write(dir.join("figure_accuracy.csv"), f1)?;

    let mut f2 = String::from(FIGURE_HEADER);
    f2.push('\n');
    for row in &report.generation {
        line(&mut f2, &row.model, "bleu", row.bleu);
        line(&mut f2, &row.model, "executability", row.executability);
        line(&mut f2, &row.model, "consistency", row.consistency);
    }
    std::fs::write(dir.join("figure_generation.csv"), f2)?;

    let mut f3 = String::from(FIGURE_HEADER);
    f3.push('\n');
    for row in &report.efficiency {
        line(&mut f3, &row.model, "art_ms", row.art_ms);
        line(&mut f3, &row.model, "memory_gb", row.memory_gb);
        line(&mut f3, &row.model, "tokens_per_second", row.tokens_per_second);
    }
    std::fs::write(dir.join("figure_efficiency.csv"), f3)?;

    let mut f4 = String::from(FIGURE_HEADER);
    f4.push('\n');
    for row in &report.robustness {
        line(&mut f4, &row.scenario, "accuracy", row.accuracy);
        line(&mut f4, &row.scenario, "recovery", row.recovery);
        line(&mut f4, &row.scenario, "stability", row.stability);
    }
    std::fs::write(dir.join("figure_robustness.csv"), f4)?;
    Ok(())
}
