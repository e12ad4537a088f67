//! Feature fusion: combine the encoder's context feature f_code and the
//! generator's feature f_gpt through a learnable weight α into one fused
//! vector, then predict the next token from it.
//!
//! Two fusion forms exist. Static: α = logistic(ρ) with ρ a single learned
//! scalar. Dynamic: α = logistic(u·[f_code‖f_gpt] + c), a per-input gate.
//! Both keep α strictly inside (0, 1), so the fused vector is a convex
//! combination of the two features.

use crate::encoder::{Encoder, EncoderCache, EncoderConfig};
use crate::generator::{
    generate_with, next_token_distribution, DecodeStrategy, Generator, GeneratorCache,
    GeneratorConfig, GeneratorError, PredictionHead,
};
use crate::layers::{LayerError, Linear, LinearCache};
use crate::tensor::{
    sigmoid, softmax_cross_entropy_backward, Parameter, Tensor, TensorError,
};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("feature width mismatch: f_code has {code} dims, f_gpt has {gpt}")]
    WidthMismatch { code: usize, gpt: usize },
    #[error("gate width {gate} does not match concatenated feature width {expected}")]
    GateWidthMismatch { gate: usize, expected: usize },
    #[error("encoder vocabulary {encoder} differs from generator vocabulary {generator}")]
    VocabMismatch { encoder: usize, generator: usize },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// Which fusion form the hybrid model applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Static,
    Dynamic,
}

/// Static fusion weight: α = logistic(ρ), ρ unconstrained.
#[derive(Debug, Clone)]
pub struct FusionWeight {
    pub rho: Parameter,
}

impl FusionWeight {
    /// ρ starts at 0 so α starts at 0.5: an unbiased split between the
    /// two backbones.
    pub fn new(name: &str) -> Self {
        FusionWeight {
            rho: Parameter::new(format!("{name}.rho"), Tensor::zeros(vec![1])),
        }
    }

    pub fn alpha(&self) -> f64 {
        sigmoid(self.rho.value.data()[0])
    }

    pub fn set_rho(&mut self, rho: f64) {
        self.rho.value.data_mut()[0] = rho;
    }
}

/// Dynamic gate parameters: scalar α from a linear probe over the
/// concatenated features.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub u: Parameter,
    pub c: Parameter,
}

impl GateParams {
    /// Zero init keeps the starting gate at α = 0.5 for every input.
    pub fn new(name: &str, d_model: usize) -> Self {
        GateParams {
            u: Parameter::new(format!("{name}.u"), Tensor::zeros(vec![2 * d_model])),
            c: Parameter::new(format!("{name}.c"), Tensor::zeros(vec![1])),
        }
    }

    pub fn alpha_for(&self, f_code: &[f64], f_gpt: &[f64]) -> f64 {
        let u = self.u.value.data();
        let mut z = self.c.value.data()[0];
        for (ui, v) in u.iter().zip(f_code.iter().chain(f_gpt.iter())) {
            z += ui * v;
        }
        sigmoid(z)
    }
}

/// Fused vector plus the α that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures {
    pub fused: Vec<f64>,
    pub alpha: f64,
}

fn check_widths(f_code: &[f64], f_gpt: &[f64]) -> Result<(), FusionError> {
    if f_code.len() != f_gpt.len() {
        return Err(FusionError::WidthMismatch {
            code: f_code.len(),
            gpt: f_gpt.len(),
        });
    }
    Ok(())
}

fn convex_combine(f_code: &[f64], f_gpt: &[f64], alpha: f64) -> Vec<f64> {
    f_code
        .iter()
        .zip(f_gpt.iter())
        .map(|(&a, &b)| {
            let v = alpha * a + (1.0 - alpha) * b;
            // Rounding can push the combination a few ulps outside the
            // coordinate interval; clamp to keep convexity exact.
            v.clamp(a.min(b), a.max(b))
        })
        .collect()
}

/// α·f_code + (1−α)·f_gpt with the static weight.
pub fn fuse_static(
    f_code: &[f64],
    f_gpt: &[f64],
    weight: &FusionWeight,
) -> Result<FusedFeatures, FusionError> {
    check_widths(f_code, f_gpt)?;
    let alpha = weight.alpha();
    Ok(FusedFeatures {
        fused: convex_combine(f_code, f_gpt, alpha),
        alpha,
    })
}

/// Backward of [`fuse_static`]: accumulates the ρ gradient, returns
/// (d_f_code, d_f_gpt).
pub fn fuse_static_backward(
    f_code: &[f64],
    f_gpt: &[f64],
    weight: &mut FusionWeight,
    alpha: f64,
    d_fused: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut d_alpha = 0.0;
    let mut d_code = vec![0.0; f_code.len()];
    let mut d_gpt = vec![0.0; f_gpt.len()];
    for i in 0..f_code.len() {
        d_alpha += d_fused[i] * (f_code[i] - f_gpt[i]);
        d_code[i] = alpha * d_fused[i];
        d_gpt[i] = (1.0 - alpha) * d_fused[i];
    }
    weight.rho.grad.data_mut()[0] += d_alpha * alpha * (1.0 - alpha);
    (d_code, d_gpt)
}

/// Per-input gate: α = logistic(u·[f_code‖f_gpt] + c), then the convex
/// combination.
pub fn fuse_dynamic(
    f_code: &[f64],
    f_gpt: &[f64],
    gate: &GateParams,
) -> Result<FusedFeatures, FusionError> {
    check_widths(f_code, f_gpt)?;
    let expected = f_code.len() + f_gpt.len();
    if gate.u.value.len() != expected {
        return Err(FusionError::GateWidthMismatch {
            gate: gate.u.value.len(),
            expected,
        });
    }
    let alpha = gate.alpha_for(f_code, f_gpt);
    Ok(FusedFeatures {
        fused: convex_combine(f_code, f_gpt, alpha),
        alpha,
    })
}

/// Backward of [`fuse_dynamic`]: accumulates u and c gradients, returns
/// (d_f_code, d_f_gpt) including the gate's own dependence on the features.
pub fn fuse_dynamic_backward(
    f_code: &[f64],
    f_gpt: &[f64],
    gate: &mut GateParams,
    alpha: f64,
    d_fused: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = f_code.len();
    let mut d_alpha = 0.0;
    let mut d_code = vec![0.0; d];
    let mut d_gpt = vec![0.0; d];
    for i in 0..d {
        d_alpha += d_fused[i] * (f_code[i] - f_gpt[i]);
        d_code[i] = alpha * d_fused[i];
        d_gpt[i] = (1.0 - alpha) * d_fused[i];
    }
    let dz = d_alpha * alpha * (1.0 - alpha);
    gate.c.grad.data_mut()[0] += dz;
    let u = gate.u.value.data().to_vec();
    let du = gate.u.grad.data_mut();
    for i in 0..d {
        du[i] += dz * f_code[i];
        du[d + i] += dz * f_gpt[i];
        d_code[i] += dz * u[i];
        d_gpt[i] += dz * u[d + i];
    }
    (d_code, d_gpt)
}

/// The full hybrid: encoder + generator backbones, fusion parameters for
/// both modes, an optional width adapter on f_gpt, and the shared
/// prediction head over the fused feature.
#[derive(Debug, Clone)]
pub struct HybridModel {
    pub encoder: Encoder,
    pub generator: Generator,
    pub fusion_mode: FusionMode,
    pub fusion_weight: FusionWeight,
    pub gate: GateParams,
    pub adapter: Option<Linear>,
    pub head: PredictionHead,
}

#[derive(Debug)]
pub struct HybridCache {
    enc_cache: EncoderCache,
    gen_cache: GeneratorCache,
    adapter_cache: Option<LinearCache>,
    pub f_code: Vec<f64>,
    pub f_gpt: Vec<f64>,
    pub fused: FusedFeatures,
    pub dist: Vec<f64>,
}

impl HybridModel {
    pub fn new(
        encoder_config: EncoderConfig,
        generator_config: GeneratorConfig,
        fusion_mode: FusionMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, FusionError> {
        if encoder_config.vocab_size != generator_config.vocab_size {
            return Err(FusionError::VocabMismatch {
                encoder: encoder_config.vocab_size,
                generator: generator_config.vocab_size,
            });
        }
        let d_model = encoder_config.d_model;
        let vocab = encoder_config.vocab_size;
        let encoder = Encoder::new(encoder_config, rng)?;
        let gen_width = generator_config.d_model;
        let generator = Generator::new(generator_config, rng)?;
        let adapter = if gen_width != d_model {
            Some(Linear::new("fusion.adapter", gen_width, d_model, rng))
        } else {
            None
        };
        let head = PredictionHead::new("head", vocab, d_model, rng);
        Ok(HybridModel {
            encoder,
            generator,
            fusion_mode,
            fusion_weight: FusionWeight::new("fusion"),
            gate: GateParams::new("fusion.gate", d_model),
            adapter,
            head,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.head.vocab_size()
    }

    fn fuse(&self, f_code: &[f64], f_gpt: &[f64]) -> Result<FusedFeatures, FusionError> {
        match self.fusion_mode {
            FusionMode::Static => fuse_static(f_code, f_gpt, &self.fusion_weight),
            FusionMode::Dynamic => fuse_dynamic(f_code, f_gpt, &self.gate),
        }
    }

    /// Full forward: encode, generate features, fuse, softmax under the
    /// shared head.
    pub fn forward(&self, prefix: &[u32]) -> Result<HybridCache, FusionError> {
        let (ctx, enc_cache) = self.encoder.encode_context(prefix)?;
        let (features, _, gen_cache) = self.generator.forward(prefix)?;
        let (f_gpt, adapter_cache) = match &self.adapter {
            Some(adapter) => {
                let raw = Tensor::matrix(1, features.f_gpt.len(), features.f_gpt.clone())?;
                let (mapped, cache) = adapter.forward(&raw)?;
                (mapped.row(0).to_vec(), Some(cache))
            }
            None => (features.f_gpt, None),
        };
        let fused = self.fuse(&ctx.f_code, &f_gpt)?;
        let dist = next_token_distribution(&fused.fused, &self.head);
        Ok(HybridCache {
            enc_cache,
            gen_cache,
            adapter_cache,
            f_code: ctx.f_code,
            f_gpt,
            fused,
            dist,
        })
    }

    /// The hybrid next-token distribution softmax(W·fused + b).
    pub fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>, FusionError> {
        Ok(self.forward(prefix)?.dist)
    }

    /// Single-path distribution using only f_code under the shared head.
    pub fn encoder_path_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>, FusionError> {
        let (ctx, _) = self.encoder.encode_context(prefix)?;
        Ok(next_token_distribution(&ctx.f_code, &self.head))
    }

    /// Single-path distribution using only (adapted) f_gpt under the
    /// shared head.
    pub fn generator_path_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>, FusionError> {
        let (features, _, _) = self.generator.forward(prefix)?;
        let f_gpt = match &self.adapter {
            Some(adapter) => {
                let raw = Tensor::matrix(1, features.f_gpt.len(), features.f_gpt.clone())?;
                let (mapped, _) = adapter.forward(&raw)?;
                mapped.row(0).to_vec()
            }
            None => features.f_gpt,
        };
        Ok(next_token_distribution(&f_gpt, &self.head))
    }

    /// Cross-entropy backward through head, fusion, adapter, and (when
    /// `train_backbones`) both backbones. `upstream` scales the loss
    /// gradient (1/batch for mean reduction).
    pub fn backward(
        &mut self,
        cache: &HybridCache,
        label: usize,
        upstream: f64,
        train_backbones: bool,
    ) {
        let d_logits = softmax_cross_entropy_backward(&cache.dist, label, upstream);
        let d_fused = self.head.backward(&cache.fused.fused, &d_logits);
        let (d_code, d_gpt) = match self.fusion_mode {
            FusionMode::Static => fuse_static_backward(
                &cache.f_code,
                &cache.f_gpt,
                &mut self.fusion_weight,
                cache.fused.alpha,
                &d_fused,
            ),
            FusionMode::Dynamic => fuse_dynamic_backward(
                &cache.f_code,
                &cache.f_gpt,
                &mut self.gate,
                cache.fused.alpha,
                &d_fused,
            ),
        };
        let d_gpt_raw = match (&mut self.adapter, &cache.adapter_cache) {
            (Some(adapter), Some(adapter_cache)) => {
                let d_mat = Tensor::matrix(1, d_gpt.len(), d_gpt).expect("consistent shape");
                adapter.backward(adapter_cache, &d_mat).row(0).to_vec()
            }
            _ => d_gpt,
        };
        if train_backbones {
            self.encoder.backward_pooled(&cache.enc_cache, &d_code);
            self.generator.backward_last(&cache.gen_cache, &d_gpt_raw);
        }
    }

    /// Greedy/temperature decoding under the hybrid distribution.
    pub fn generate(
        &self,
        prefix: &[u32],
        max_new: usize,
        strategy: DecodeStrategy,
    ) -> Result<Vec<u32>, FusionError> {
        generate_with(|ids| self.next_distribution(ids), prefix, max_new, strategy)
    }

    /// Every parameter of the hybrid, in a fixed deterministic order:
    /// encoder, generator (with its own head), fusion ρ, gate u and c,
    /// adapter, shared head.
    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        self.encoder.for_each_param(visit);
        self.generator.for_each_param(visit);
        visit(&mut self.fusion_weight.rho);
        visit(&mut self.gate.u);
        visit(&mut self.gate.c);
        if let Some(adapter) = &mut self.adapter {
            adapter.for_each_param(visit);
        }
        self.head.for_each_param(visit);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        self.encoder.for_each_param_ref(visit);
        self.generator.for_each_param_ref(visit);
        visit(&self.fusion_weight.rho);
        visit(&self.gate.u);
        visit(&self.gate.c);
        if let Some(adapter) = &self.adapter {
            adapter.for_each_param_ref(visit);
        }
        self.head.for_each_param_ref(visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, ScalarObjective};
    use crate::tensor::cross_entropy;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};

    fn tiny_hybrid(mode: FusionMode, seed: u64) -> HybridModel {
        let cfg = EncoderConfig {
            layers: 1,
            d_model: 8,
            heads: 2,
            d_ff: 16,
            max_seq_len: 10,
            vocab_size: 16,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HybridModel::new(cfg.clone(), cfg, mode, &mut rng).unwrap()
    }

    #[test]
    fn static_fusion_boundaries() {
        let mut w = FusionWeight::new("fusion");
        let f_code = vec![0.3, -1.2, 4.0];
        let f_gpt = vec![-0.5, 2.2, 0.1];

        w.set_rho(40.0);
        let hi = fuse_static(&f_code, &f_gpt, &w).unwrap();
        for (a, b) in hi.fused.iter().zip(f_code.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        w.set_rho(-40.0);
        let lo = fuse_static(&f_code, &f_gpt, &w).unwrap();
        for (a, b) in lo.fused.iter().zip(f_gpt.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_half_fuses_exactly() {
        let w = FusionWeight::new("fusion");
        assert_eq!(w.alpha(), 0.5);
        let fused = fuse_static(&[2.0, 0.0], &[0.0, 2.0], &w).unwrap();
        assert_eq!(fused.fused, vec![1.0, 1.0]);
        assert_eq!(fused.alpha, 0.5);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let w = FusionWeight::new("fusion");
        let err = fuse_static(&[1.0, 2.0], &[1.0], &w).unwrap_err();
        assert!(matches!(
            err,
            FusionError::WidthMismatch { code: 2, gpt: 1 }
        ));
    }

    #[test]
    fn zero_gate_means_elementwise_mean() {
        let gate = GateParams::new("fusion.gate", 2);
        let fused = fuse_dynamic(&[4.0, 0.0], &[0.0, 4.0], &gate).unwrap();
        assert_eq!(fused.alpha, 0.5);
        assert_eq!(fused.fused, vec![2.0, 2.0]);
    }

    #[test]
    fn saturated_gate_bias_selects_f_code() {
        let mut gate = GateParams::new("fusion.gate", 2);
        gate.c.value.data_mut()[0] = 40.0;
        let f_code = vec![1.5, -0.25];
        let fused = fuse_dynamic(&f_code, &[9.0, 9.0], &gate).unwrap();
        for (a, b) in fused.fused.iter().zip(f_code.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dynamic_alpha_is_deterministic() {
        let mut gate = GateParams::new("fusion.gate", 2);
        for (i, v) in [0.3, -0.7, 1.1, 0.2].iter().enumerate() {
            gate.u.value.data_mut()[i] = *v;
        }
        gate.c.value.data_mut()[0] = -0.4;
        let f_code = [0.5, 1.5];
        let f_gpt = [2.5, -3.5];
        let a = fuse_dynamic(&f_code, &f_gpt, &gate).unwrap();
        let b = fuse_dynamic(&f_code, &f_gpt, &gate).unwrap();
        assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
    }

    #[test]
    fn hybrid_boundary_matches_single_paths() {
        let mut model = tiny_hybrid(FusionMode::Static, 7);
        let prefix = [5u32, 9, 12];

        model.fusion_weight.set_rho(40.0);
        let hybrid = model.next_distribution(&prefix).unwrap();
        let encoder_only = model.encoder_path_distribution(&prefix).unwrap();
        for (h, e) in hybrid.iter().zip(encoder_only.iter()) {
            assert!((h - e).abs() < 1e-9);
        }
        assert_eq!(
            crate::generator::argmax(&hybrid),
            crate::generator::argmax(&encoder_only)
        );

        model.fusion_weight.set_rho(-40.0);
        let hybrid = model.next_distribution(&prefix).unwrap();
        let generator_only = model.generator_path_distribution(&prefix).unwrap();
        for (h, g) in hybrid.iter().zip(generator_only.iter()) {
            assert!((h - g).abs() < 1e-9);
        }
        assert_eq!(
            crate::generator::argmax(&hybrid),
            crate::generator::argmax(&generator_only)
        );
    }

    #[test]
    fn hybrid_distribution_is_normalized() {
        for mode in [FusionMode::Static, FusionMode::Dynamic] {
            let model = tiny_hybrid(mode, 8);
            for prefix in [vec![5u32], vec![6, 7, 8, 9], vec![15, 14, 13]] {
                let dist = model.next_distribution(&prefix).unwrap();
                let sum: f64 = dist.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unequal_widths_use_the_adapter() {
        let enc_cfg = EncoderConfig {
            layers: 1,
            d_model: 8,
            heads: 2,
            d_ff: 16,
            max_seq_len: 10,
            vocab_size: 16,
        };
        let gen_cfg = GeneratorConfig {
            d_model: 4,
            heads: 2,
            d_ff: 8,
            ..enc_cfg.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = HybridModel::new(enc_cfg, gen_cfg, FusionMode::Static, &mut rng).unwrap();
        assert!(model.adapter.is_some());
        let dist = model.next_distribution(&[5, 6]).unwrap();
        assert_eq!(dist.len(), 16);
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    struct HybridObjective {
        model: HybridModel,
        prefix: Vec<u32>,
        label: usize,
    }

    impl ScalarObjective for HybridObjective {
        fn eval(&mut self) -> f64 {
            let dist = self.model.next_distribution(&self.prefix).unwrap();
            cross_entropy(&dist, self.label).unwrap()
        }

        fn eval_grads(&mut self) -> f64 {
            let cache = self.model.forward(&self.prefix).unwrap();
            let loss = cross_entropy(&cache.dist, self.label).unwrap();
            self.model.backward(&cache, self.label, 1.0, true);
            loss
        }

        fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
            self.model.for_each_param(visit);
        }
    }

    #[test]
    fn hybrid_gradients_match_finite_differences_both_modes() {
        for (mode, seed) in [(FusionMode::Static, 21), (FusionMode::Dynamic, 22)] {
            let mut obj = HybridObjective {
                model: tiny_hybrid(mode, seed),
                prefix: vec![5, 9, 13],
                label: 7,
            };
            // A neutral gate has exactly-zero analytic u/c gradients only
            // when d_alpha vanishes; nudge ρ and the gate so every fusion
            // parameter is exercised away from special points.
            obj.model.fusion_weight.set_rho(0.3);
            obj.model.gate.c.value.data_mut()[0] = -0.2;
            for (i, v) in obj.model.gate.u.value.data_mut().iter_mut().enumerate() {
                *v = 0.01 * (i as f64 + 1.0);
            }
            let report = check_gradients(&mut obj, 1e-4, 1e-4).unwrap();
            assert!(
                report.passed(),
                "mode {mode:?}: max_rel_err={} flagged={:?}",
                report.max_rel_err,
                report.flagged.first()
            );
        }
    }

    #[test]
    fn hybrid_gradients_with_adapter_pass() {
        let enc_cfg = EncoderConfig {
            layers: 1,
            d_model: 8,
            heads: 2,
            d_ff: 16,
            max_seq_len: 10,
            vocab_size: 16,
        };
        let gen_cfg = GeneratorConfig {
            d_model: 4,
            heads: 2,
            d_ff: 8,
            ..enc_cfg.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let model = HybridModel::new(enc_cfg, gen_cfg, FusionMode::Static, &mut rng).unwrap();
        let mut obj = HybridObjective {
            model,
            prefix: vec![5, 9],
            label: 3,
        };
        obj.model.fusion_weight.set_rho(0.1);
        let report = check_gradients(&mut obj, 1e-4, 1e-4).unwrap();
        assert!(report.passed(), "max_rel_err={}", report.max_rel_err);
    }

    proptest! {
        #[test]
        fn convexity_of_fused_coordinates(
            code in proptest::collection::vec(-10.0f64..10.0, 1..8),
            seedish in 0u64..1000,
            rho in -6.0f64..6.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seedish);
            let gpt: Vec<f64> = code.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
            let mut w = FusionWeight::new("fusion");
            w.set_rho(rho);
            let fused = fuse_static(&code, &gpt, &w).unwrap();
            for i in 0..code.len() {
                let lo = code[i].min(gpt[i]);
                let hi = code[i].max(gpt[i]);
                prop_assert!(fused.fused[i] >= lo && fused.fused[i] <= hi);
            }
        }

        #[test]
        fn alpha_stays_strictly_inside_unit_interval(rho in -30.0f64..30.0) {
            // Beyond |ρ|≈37 the f64 logistic saturates to the closed
            // endpoints; strictness is a real-arithmetic property.
            let mut w = FusionWeight::new("fusion");
            w.set_rho(rho);
            let a = w.alpha();
            prop_assert!(a > 0.0 && a < 1.0);
        }

        #[test]
        fn alpha_never_leaves_unit_interval_even_saturated(rho in -200.0f64..200.0) {
            let mut w = FusionWeight::new("fusion");
            w.set_rho(rho);
            let a = w.alpha();
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
