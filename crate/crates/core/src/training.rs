//! Staged training: P0 pretrains the generator as a language model, P1
//! fine-tunes the encoder under a temporary prediction head, P2 trains the
//! fusion parameters and the shared head (backbones frozen, initialized
//! from P1's head), P3 optimizes everything jointly.
//!
//! Also home to teacher-forcing example construction, the SGD optimizer,
//! and the binary checkpoint format.

use crate::corpus::Vocabulary;
use crate::encoder::EncoderConfig;
use crate::fusion::{FusionError, FusionMode, HybridModel};
use crate::generator::{argmax, next_token_distribution, GeneratorConfig, PredictionHead};
use crate::tensor::{cross_entropy, softmax_cross_entropy_backward, Parameter, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HCC1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("no training examples")]
    EmptyDataset,
    #[error("gradient for parameter {param} is not finite")]
    Divergence { param: String },
    #[error("phase {requested} cannot run before phase {expected}")]
    OutOfOrderPhase { requested: usize, expected: usize },
    #[error("phase {phase} does not exist (phases are 0..=3)")]
    NoSuchPhase { phase: usize },
    #[error("invalid training config: {reason}")]
    BadConfig { reason: String },
    #[error("checkpoint has bad magic bytes")]
    BadMagic,
    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint corrupted: {reason}")]
    Corrupted { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest is not valid JSON: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] FusionError),
}

/// One teacher-forcing example: predict `label` from `prefix`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub prefix: Vec<u32>,
    pub label: u32,
}

/// Every position t ≥ 1 of every sample yields (x_{1:t}, x_{t+1});
/// prefixes are truncated to the most recent `window` tokens. Order is
/// corpus order (shuffling is the training loop's job).
pub fn make_examples(samples: &[Vec<u32>], window: usize) -> Vec<Example> {
    let mut out = Vec::new();
    for ids in samples {
        for t in 1..ids.len() {
            let start = t.saturating_sub(window);
            out.push(Example {
                prefix: ids[start..t].to_vec(),
                label: ids[t],
            });
        }
    }
    out
}

/// A batch under evaluation: aligned prefixes, true labels, and the
/// model's predicted distributions.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub prefixes: Vec<Vec<u32>>,
    pub labels: Vec<u32>,
    pub predictions: Vec<Vec<f64>>,
}

/// Mean per-example cross-entropy of a batch.
pub fn batch_loss(batch: &TrainingBatch) -> Result<f64, TrainError> {
    if batch.labels.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    debug_assert_eq!(batch.prefixes.len(), batch.labels.len());
    debug_assert_eq!(batch.predictions.len(), batch.labels.len());
    let mut sum = 0.0;
    for (dist, &label) in batch.predictions.iter().zip(batch.labels.iter()) {
        debug_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        sum += cross_entropy(dist, label as usize).map_err(|e| TrainError::BadConfig {
            reason: e.to_string(),
        })?;
    }
    Ok(sum / batch.labels.len() as f64)
}

/// Plain gradient descent, with optional classical momentum. Gradients
/// are zeroed after every step.
#[derive(Debug)]
pub struct Sgd {
    pub momentum: Option<f64>,
    velocity: HashMap<String, Tensor>,
}

impl Sgd {
    pub fn new(momentum: Option<f64>) -> Self {
        Sgd {
            momentum,
            velocity: HashMap::new(),
        }
    }

    pub fn step_param(&mut self, param: &mut Parameter, rate: f64) -> Result<(), TrainError> {
        if !param.grad.all_finite() {
            return Err(TrainError::Divergence {
                param: param.name.clone(),
            });
        }
        match self.momentum {
            Some(m) => {
                let v = self
                    .velocity
                    .entry(param.name.clone())
                    .or_insert_with(|| Tensor::zeros(param.value.shape().to_vec()));
                let vd = v.data_mut();
                let g = param.grad.data();
                let theta = param.value.data_mut();
                for i in 0..theta.len() {
                    vd[i] = m * vd[i] + g[i];
                    theta[i] -= rate * vd[i];
                }
            }
            None => {
                let g = param.grad.data();
                let theta = param.value.data_mut();
                for i in 0..theta.len() {
                    theta[i] -= rate * g[i];
                }
            }
        }
        param.zero_grad();
        Ok(())
    }
}

/// Per-phase hyperparameters; rates/epochs are indexed by phase 0..=3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub rates: [f64; 4],
    pub epochs: [usize; 4],
    pub momentum: Option<f64>,
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            batch_size: 16,
            rates: [0.1, 0.1, 0.05, 0.01],
            epochs: [30, 30, 20, 20],
            momentum: None,
            window: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig {
                reason: "batch_size must be positive".into(),
            });
        }
        if self.window == 0 {
            return Err(TrainError::BadConfig {
                reason: "window must be positive".into(),
            });
        }
        if self.rates.iter().any(|r| *r <= 0.0 || !r.is_finite()) {
            return Err(TrainError::BadConfig {
                reason: format!("learning rates must be positive, got {:?}", self.rates),
            });
        }
        if let Some(m) = self.momentum {
            if !(0.0..1.0).contains(&m) {
                return Err(TrainError::BadConfig {
                    reason: format!("momentum must lie in [0, 1), got {m}"),
                });
            }
        }
        Ok(())
    }
}

/// Loss curve and trainable-set record of one completed phase.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub phase: usize,
    pub epochs: usize,
    pub loss_curve: Vec<f64>,
    pub trainable: Vec<String>,
    pub trainable_digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// sha256 of each parameter's little-endian f64 bytes, keyed by name.
/// The freeze-discipline assertions compare these across phases.
pub fn parameter_digests(model: &HybridModel) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    model.for_each_param_ref(&mut |p| {
        out.insert(p.name.clone(), sha256_hex(&p.value.to_le_bytes()));
    });
    out
}

/// Owns the model and the phase state machine P0 → P1 → P2 → P3.
pub struct Trainer {
    pub model: HybridModel,
    pub config: TrainConfig,
    p1_head: PredictionHead,
    optimizer: Sgd,
    rng: ChaCha8Rng,
    next_phase: usize,
}

impl Trainer {
    pub fn new(
        encoder: EncoderConfig,
        generator: GeneratorConfig,
        fusion_mode: FusionMode,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d_model = encoder.d_model;
        let vocab = encoder.vocab_size;
        let model = HybridModel::new(encoder, generator, fusion_mode, &mut rng)?;
        let p1_head = PredictionHead::new("p1_head", vocab, d_model, &mut rng);
        let momentum = config.momentum;
        Ok(Trainer {
            model,
            config,
            p1_head,
            optimizer: Sgd::new(momentum),
            rng,
            next_phase: 0,
        })
    }

    pub fn phases_completed(&self) -> usize {
        self.next_phase
    }

    /// Runs one phase to completion. Phases must run in order 0,1,2,3.
    pub fn run_phase(
        &mut self,
        phase: usize,
        examples: &[Example],
    ) -> Result<PhaseReport, TrainError> {
        if phase > 3 {
            return Err(TrainError::NoSuchPhase { phase });
        }
        if phase != self.next_phase {
            return Err(TrainError::OutOfOrderPhase {
                requested: phase,
                expected: self.next_phase,
            });
        }
        if examples.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let epochs = self.config.epochs[phase];
        let rate = self.config.rates[phase];
        let mut loss_curve = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..examples.len()).collect();
            order.shuffle(&mut self.rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                epoch_loss += self.train_batch(phase, examples, chunk, rate)?;
            }
            loss_curve.push(epoch_loss / examples.len() as f64);
        }
        if phase == 1 {
            // The shared head enters P2 warm-started from the encoder's
            // temporary head.
            self.model.head = self.p1_head.clone_with_name("head");
        }
        self.next_phase = phase + 1;
        let trainable = self.trainable_names(phase);
        let trainable_digest = sha256_hex(trainable.join("\n").as_bytes());
        Ok(PhaseReport {
            phase,
            epochs,
            loss_curve,
            trainable,
            trainable_digest,
        })
    }

    /// Runs all four phases in order and returns their reports.
    pub fn train_full(&mut self, examples: &[Example]) -> Result<Vec<PhaseReport>, TrainError> {
        (0..4).map(|p| self.run_phase(p, examples)).collect()
    }

    /// Forward/backward over one batch and a single optimizer step over
    /// the phase's trainable set. Returns the summed example loss.
    fn train_batch(
        &mut self,
        phase: usize,
        examples: &[Example],
        indices: &[usize],
        rate: f64,
    ) -> Result<f64, TrainError> {
        let upstream = 1.0 / indices.len() as f64;
        let mut sum = 0.0;
        for &i in indices {
            let ex = &examples[i];
            let label = ex.label as usize;
            let loss = match phase {
                0 => {
                    let (_, state, cache) = self
                        .model
                        .generator
                        .forward(&ex.prefix)
                        .map_err(FusionError::from)?;
                    let dist = next_token_distribution(&state.h_t, &self.model.generator.head);
                    let loss = cross_entropy(&dist, label).map_err(FusionError::from)?;
                    let d_logits = softmax_cross_entropy_backward(&dist, label, upstream);
                    let d_h = self.model.generator.head.backward(&state.h_t, &d_logits);
                    self.model.generator.backward_last(&cache, &d_h);
                    loss
                }
                1 => {
                    let (ctx, cache) = self
                        .model
                        .encoder
                        .encode_context(&ex.prefix)
                        .map_err(FusionError::from)?;
                    let dist = next_token_distribution(&ctx.f_code, &self.p1_head);
                    let loss = cross_entropy(&dist, label).map_err(FusionError::from)?;
                    let d_logits = softmax_cross_entropy_backward(&dist, label, upstream);
                    let d_f = self.p1_head.backward(&ctx.f_code, &d_logits);
                    self.model.encoder.backward_pooled(&cache, &d_f);
                    loss
                }
                _ => {
                    let cache = self.model.forward(&ex.prefix)?;
                    let loss = cross_entropy(&cache.dist, label).map_err(FusionError::from)?;
                    self.model.backward(&cache, label, upstream, phase == 3);
                    loss
                }
            };
            sum += loss;
        }
        self.step_trainable(phase, rate)?;
        Ok(sum)
    }

    fn step_trainable(&mut self, phase: usize, rate: f64) -> Result<(), TrainError> {
        let optimizer = &mut self.optimizer;
        let mut result = Ok(());
        let mut step = |p: &mut Parameter| {
            if result.is_ok() {
                result = optimizer.step_param(p, rate);
            }
        };
        match phase {
            0 => self.model.generator.for_each_param(&mut step),
            1 => {
                self.model.encoder.for_each_param(&mut step);
                self.p1_head.for_each_param(&mut step);
            }
            2 => {
                match self.model.fusion_mode {
                    FusionMode::Static => step(&mut self.model.fusion_weight.rho),
                    FusionMode::Dynamic => {
                        step(&mut self.model.gate.u);
                        step(&mut self.model.gate.c);
                    }
                }
                if let Some(adapter) = &mut self.model.adapter {
                    adapter.for_each_param(&mut step);
                }
                self.model.head.for_each_param(&mut step);
            }
            _ => self.model.for_each_param(&mut step),
        }
        result
    }

    fn trainable_names(&mut self, phase: usize) -> Vec<String> {
        let mut names = Vec::new();
        {
            let mut collect = |p: &mut Parameter| names.push(p.name.clone());
            match phase {
                0 => self.model.generator.for_each_param(&mut collect),
                1 => {
                    self.model.encoder.for_each_param(&mut collect);
                    self.p1_head.for_each_param(&mut collect);
                }
                2 => {
                    match self.model.fusion_mode {
                        FusionMode::Static => collect(&mut self.model.fusion_weight.rho),
                        FusionMode::Dynamic => {
                            collect(&mut self.model.gate.u);
                            collect(&mut self.model.gate.c);
                        }
                    }
                    if let Some(adapter) = &mut self.model.adapter {
                        adapter.for_each_param(&mut collect);
                    }
                    self.model.head.for_each_param(&mut collect);
                }
                _ => self.model.for_each_param(&mut collect),
            }
        }
        names.sort();
        names
    }
}

/// Greedy next-token accuracy of the hybrid path over a set of examples.
pub fn next_token_accuracy(model: &HybridModel, examples: &[Example]) -> Result<f64, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut correct = 0usize;
    for ex in examples {
        let dist = model.next_distribution(&ex.prefix)?;
        if argmax(&dist) as u32 == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
    byte_length: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    encoder: EncoderConfig,
    generator: GeneratorConfig,
    fusion_mode: FusionMode,
    train: TrainConfig,
    seed: u64,
    phases_completed: usize,
    vocabulary: Vec<String>,
    payload_digest: String,
    tensors: Vec<TensorEntry>,
}

/// Everything a checkpoint restores.
pub struct CheckpointBundle {
    pub model: HybridModel,
    pub vocabulary: Vocabulary,
    pub train_config: TrainConfig,
    pub phases_completed: usize,
}

/// Layout: magic "HCC1", little-endian u64 manifest length, UTF-8 JSON
/// manifest, then contiguous row-major little-endian f32 tensor data in
/// manifest order (tensors sorted by name). save→load→save is
/// byte-identical.
pub fn save_checkpoint(
    model: &HybridModel,
    vocabulary: &Vocabulary,
    train_config: &TrainConfig,
    phases_completed: usize,
    path: impl AsRef<Path>,
) -> Result<(), TrainError> {
    let mut tensors: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    model.for_each_param_ref(&mut |p| {
        tensors.push((
            p.name.clone(),
            p.value.shape().to_vec(),
            p.value.data().iter().map(|&v| v as f32).collect(),
        ));
    });
    tensors.sort_by(|a, b| a.0.cmp(&b.0));

    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, shape, data) in &tensors {
        let offset = payload.len() as u64;
        for v in data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry {
            name: name.clone(),
            dtype: "f32".to_string(),
            shape: shape.clone(),
            offset,
            byte_length: (data.len() * 4) as u64,
        });
    }

    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        encoder: model.encoder.config().clone(),
        generator: model.generator.config().clone(),
        fusion_mode: model.fusion_mode,
        train: train_config.clone(),
        seed: train_config.seed,
        phases_completed,
        vocabulary: vocabulary.id_list().to_vec(),
        payload_digest: sha256_hex(&payload),
        tensors: entries,
    };
    let manifest_json = serde_json::to_string(&manifest)?;

    let mut file = std::fs::File::create(path)?;
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
    file.write_all(manifest_json.as_bytes())?;
    file.write_all(&payload)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointBundle, TrainError> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| TrainError::BadMagic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TrainError::BadMagic);
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(|_| TrainError::Corrupted {
        reason: "truncated manifest length".into(),
    })?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    file.read_exact(&mut manifest_bytes)
        .map_err(|_| TrainError::Corrupted {
            reason: "truncated manifest".into(),
        })?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(TrainError::Version {
            found: manifest.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    if sha256_hex(&payload) != manifest.payload_digest {
        return Err(TrainError::Corrupted {
            reason: "payload digest mismatch".into(),
        });
    }

    let mut directory: HashMap<&str, &TensorEntry> = HashMap::new();
    for entry in &manifest.tensors {
        if entry.dtype != "f32" {
            return Err(TrainError::Corrupted {
                reason: format!("tensor {} has unsupported dtype {}", entry.name, entry.dtype),
            });
        }
        if directory.insert(entry.name.as_str(), entry).is_some() {
            return Err(TrainError::Corrupted {
                reason: format!("duplicate tensor {}", entry.name),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut model = HybridModel::new(
        manifest.encoder.clone(),
        manifest.generator.clone(),
        manifest.fusion_mode,
        &mut rng,
    )?;

    let mut error: Option<TrainError> = None;
    let mut consumed = 0usize;
    model.for_each_param(&mut |p| {
        if error.is_some() {
            return;
        }
        let Some(entry) = directory.get(p.name.as_str()) else {
            error = Some(TrainError::Corrupted {
                reason: format!("missing tensor {}", p.name),
            });
            return;
        };
        consumed += 1;
        if entry.shape != p.value.shape() {
            error = Some(TrainError::Corrupted {
                reason: format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name,
                    entry.shape,
                    p.value.shape()
                ),
            });
            return;
        }
        let start = entry.offset as usize;
        let end = start + entry.byte_length as usize;
        if end > payload.len() || entry.byte_length as usize != p.value.len() * 4 {
            error = Some(TrainError::Corrupted {
                reason: format!("tensor {} data out of bounds", p.name),
            });
            return;
        }
        for (i, chunk) in payload[start..end].chunks_exact(4).enumerate() {
            let bits = [chunk[0], chunk[1], chunk[2], chunk[3]];
            p.value.data_mut()[i] = f32::from_le_bytes(bits) as f64;
        }
        p.zero_grad();
    });
    if let Some(e) = error {
        return Err(e);
    }
    if consumed != manifest.tensors.len() {
        return Err(TrainError::Corrupted {
            reason: format!(
                "checkpoint carries {} tensors, model consumes {consumed}",
                manifest.tensors.len()
            ),
        });
    }

    Ok(CheckpointBundle {
        model,
        vocabulary: Vocabulary::from_id_list(manifest.vocabulary),
        train_config: manifest.train,
        phases_completed: manifest.phases_completed,
    })
}
