//! Bidirectional context encoder producing the pooled context feature
//! f_code for the code prefix.
//!
//! Pooling rule: f_code is the top-layer feature at the last non-PAD
//! position (the completion point is the sequence end). An empty prefix is
//! encoded as a BOS-only sequence; an overlength prefix is truncated to the
//! most recent `max_seq_len` tokens.

use crate::corpus::{BOS_ID, PAD_ID};
use crate::layers::{Backbone, BackboneCache, BackboneConfig, LayerError};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

pub type EncoderConfig = BackboneConfig;

/// Per-position features plus the pooled context vector.
#[derive(Debug, Clone)]
pub struct ContextFeatures {
    pub features: Tensor,
    pub f_code: Vec<f64>,
    pub pooled_index: usize,
}

#[derive(Debug)]
pub struct EncoderCache {
    backbone: BackboneCache,
    pub pooled_index: usize,
    pub effective_len: usize,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub backbone: Backbone,
}

impl Encoder {
    pub fn new(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self, LayerError> {
        Ok(Encoder {
            backbone: Backbone::new("encoder", config, false, rng)?,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.backbone.config
    }

    /// The id sequence actually encoded: BOS for empty input, otherwise the
    /// most recent `max_seq_len` ids.
    pub fn effective_prefix(&self, prefix: &[u32]) -> Vec<u32> {
        effective_prefix(prefix, self.backbone.config.max_seq_len)
    }

    pub fn encode_context(
        &self,
        prefix: &[u32],
    ) -> Result<(ContextFeatures, EncoderCache), LayerError> {
        let ids = self.effective_prefix(prefix);
        let (features, backbone) = self.backbone.forward(&ids)?;
        let pooled_index = ids
            .iter()
            .rposition(|&id| id != PAD_ID)
            .unwrap_or(ids.len() - 1);
        let f_code = features.row(pooled_index).to_vec();
        let effective_len = ids.len();
        Ok((
            ContextFeatures {
                features,
                f_code,
                pooled_index,
            },
            EncoderCache {
                backbone,
                pooled_index,
                effective_len,
            },
        ))
    }

    /// Routes a gradient on f_code back through the pooled position into
    /// the backbone parameters.
    pub fn backward_pooled(&mut self, cache: &EncoderCache, d_f_code: &[f64]) {
        let mut d_features =
            Tensor::zeros(vec![cache.effective_len, self.backbone.config.d_model]);
        d_features
            .row_mut(cache.pooled_index)
            .copy_from_slice(d_f_code);
        self.backbone.backward(&cache.backbone, &d_features);
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut crate::tensor::Parameter)) {
        self.backbone.for_each_param(visit);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&crate::tensor::Parameter)) {
        self.backbone.for_each_param_ref(visit);
    }
}

/// Shared prefix-normalization rule for both backbones.
pub fn effective_prefix(prefix: &[u32], max_seq_len: usize) -> Vec<u32> {
    if prefix.is_empty() {
        return vec![BOS_ID];
    }
    if prefix.len() > max_seq_len {
        prefix[prefix.len() - max_seq_len..].to_vec()
    } else {
        prefix.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, ScalarObjective};
    use crate::tensor::Parameter;
    use rand::{Rng, SeedableRng};

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            layers: 1,
            d_model: 8,
            heads: 2,
            d_ff: 16,
            max_seq_len: 10,
            vocab_size: 16,
        }
    }

    fn encoder(seed: u64) -> Encoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Encoder::new(tiny_config(), &mut rng).unwrap()
    }

    #[test]
    fn deterministic_f_code() {
        let enc = encoder(1);
        let (a, _) = enc.encode_context(&[5, 6, 7]).unwrap();
        let (b, _) = enc.encode_context(&[5, 6, 7]).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.f_code), bits(&b.f_code));
    }

    #[test]
    fn f_code_width_is_d_model_for_any_prefix_length() {
        let enc = encoder(2);
        for len in 0..15 {
            let prefix: Vec<u32> = (0..len).map(|i| 5 + (i % 8) as u32).collect();
            let (ctx, _) = enc.encode_context(&prefix).unwrap();
            assert_eq!(ctx.f_code.len(), 8);
        }
    }

    #[test]
    fn empty_prefix_encodes_as_bos_only() {
        let enc = encoder(3);
        let (empty, _) = enc.encode_context(&[]).unwrap();
        let (bos, _) = enc.encode_context(&[BOS_ID]).unwrap();
        assert_eq!(empty.f_code, bos.f_code);
        assert_eq!(empty.features.shape(), &[1, 8]);
    }

    #[test]
    fn overlength_prefix_keeps_most_recent_tokens() {
        let enc = encoder(4);
        let long: Vec<u32> = (0..14).map(|i| 5 + (i % 9) as u32).collect();
        let tail = long[long.len() - 10..].to_vec();
        let (a, _) = enc.encode_context(&long).unwrap();
        let (b, _) = enc.encode_context(&tail).unwrap();
        assert_eq!(a.f_code, b.f_code);
    }

    #[test]
    fn pooling_skips_trailing_pad() {
        let enc = encoder(5);
        let (ctx, _) = enc.encode_context(&[5, 6, PAD_ID, PAD_ID]).unwrap();
        assert_eq!(ctx.pooled_index, 1);
        assert_eq!(ctx.f_code, ctx.features.row(1).to_vec());
    }

    #[test]
    fn permuting_prefix_tokens_changes_f_code() {
        for seed in 0..10 {
            let enc = encoder(100 + seed);
            let (a, _) = enc.encode_context(&[5, 9, 12, 7]).unwrap();
            let (b, _) = enc.encode_context(&[9, 5, 12, 7]).unwrap();
            assert_ne!(a.f_code, b.f_code, "seed {seed}: positions must matter");
        }
    }

    #[test]
    fn f_code_depends_on_every_prefix_position() {
        for seed in 0..10 {
            let enc = encoder(200 + seed);
            let base = [5u32, 6, 7, 8, 9];
            let (reference, _) = enc.encode_context(&base).unwrap();
            for pos in 0..base.len() {
                let mut perturbed = base;
                perturbed[pos] = 14;
                let (changed, _) = enc.encode_context(&perturbed).unwrap();
                assert_ne!(
                    reference.f_code, changed.f_code,
                    "seed {seed}: position {pos} invisible to f_code"
                );
            }
        }
    }

    struct EncoderObjective {
        encoder: Encoder,
        prefix: Vec<u32>,
        readout: Vec<f64>,
    }

    impl EncoderObjective {
        fn loss_of(&self, f_code: &[f64]) -> f64 {
            f_code
                .iter()
                .zip(self.readout.iter())
                .map(|(a, b)| a * b)
                .sum()
        }
    }

    impl ScalarObjective for EncoderObjective {
        fn eval(&mut self) -> f64 {
            let (ctx, _) = self.encoder.encode_context(&self.prefix).unwrap();
            self.loss_of(&ctx.f_code)
        }

        fn eval_grads(&mut self) -> f64 {
            let (ctx, cache) = self.encoder.encode_context(&self.prefix).unwrap();
            self.encoder.backward_pooled(&cache, &self.readout);
            self.loss_of(&ctx.f_code)
        }

        fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
            self.encoder.for_each_param(visit);
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let readout = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut obj = EncoderObjective {
            encoder: encoder(41),
            prefix: vec![5, 9, 13],
            readout,
        };
        let report = check_gradients(&mut obj, 1e-4, 1e-4).unwrap();
        assert!(
            report.passed(),
            "max_rel_err={} flagged={:?}",
            report.max_rel_err,
            report.flagged.first()
        );
    }
}
