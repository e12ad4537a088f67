//! Causal autoregressive generator: a decoder-only transformer whose
//! last-position hidden state h_t doubles as the generator feature f_gpt,
//! plus the prediction head softmax(W·h + b) and the greedy/temperature
//! decode loop.

use crate::corpus::EOS_ID;
use crate::encoder::effective_prefix;
use crate::layers::{Backbone, BackboneCache, BackboneConfig, LayerError};
use crate::tensor::{softmax, Parameter, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type GeneratorConfig = BackboneConfig;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("temperature must be positive, got {tau}")]
    BadTemperature { tau: f64 },
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Prefix plus the hidden state at its final position.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    pub prefix: Vec<u32>,
    pub h_t: Vec<f64>,
}

/// The generator feature; by definition here equal to h_t.
#[derive(Debug, Clone)]
pub struct GeneratorFeatures {
    pub f_gpt: Vec<f64>,
}

/// Token-prediction head: logits = W·h + b with W: [V × d_model], b: [V].
#[derive(Debug, Clone)]
pub struct PredictionHead {
    pub w: Parameter,
    pub b: Parameter,
}

impl PredictionHead {
    pub fn new(name: &str, vocab_size: usize, d_model: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (d_model as f64).sqrt();
        let data = (0..vocab_size * d_model)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        PredictionHead {
            w: Parameter::new(
                format!("{name}.w"),
                Tensor::matrix(vocab_size, d_model, data).expect("consistent shape"),
            ),
            b: Parameter::new(format!("{name}.b"), Tensor::zeros(vec![vocab_size])),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.w.value.rows()
    }

    pub fn d_model(&self) -> usize {
        self.w.value.cols()
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        let v = self.vocab_size();
        let mut out = self.b.value.data().to_vec();
        for i in 0..v {
            let row = self.w.value.row(i);
            let mut acc = 0.0;
            for (wv, hv) in row.iter().zip(h.iter()) {
                acc += wv * hv;
            }
            out[i] += acc;
        }
        out
    }

    /// Accumulates head gradients from d_logits and returns d_h.
    pub fn backward(&mut self, h: &[f64], d_logits: &[f64]) -> Vec<f64> {
        let v = self.vocab_size();
        let mut d_h = vec![0.0; h.len()];
        for i in 0..v {
            let g = d_logits[i];
            self.b.grad.data_mut()[i] += g;
            if g == 0.0 {
                continue;
            }
            let w_row = self.w.value.row(i).to_vec();
            let gw_row = self.w.grad.row_mut(i);
            for j in 0..h.len() {
                gw_row[j] += g * h[j];
                d_h[j] += g * w_row[j];
            }
        }
        d_h
    }

    /// Copy of the parameter values under fresh names; grads start at zero.
    pub fn clone_with_name(&self, name: &str) -> Self {
        PredictionHead {
            w: Parameter::new(format!("{name}.w"), self.w.value.clone()),
            b: Parameter::new(format!("{name}.b"), self.b.value.clone()),
        }
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        visit(&mut self.w);
        visit(&mut self.b);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        visit(&self.w);
        visit(&self.b);
    }
}

/// softmax(W·h_t + b): the conditional next-token distribution.
pub fn next_token_distribution(h_t: &[f64], head: &PredictionHead) -> Vec<f64> {
    softmax(&head.logits(h_t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeStrategy {
    Greedy,
    Temperature { tau: f64, seed: u64 },
}

/// Lowest-index argmax: deterministic under ties.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug)]
pub struct GeneratorCache {
    backbone: BackboneCache,
    pub effective_len: usize,
}

/// Decoder-only transformer with its own language-model head.
#[derive(Debug, Clone)]
pub struct Generator {
    pub backbone: Backbone,
    pub head: PredictionHead,
}

impl Generator {
    pub fn new(config: GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Self, LayerError> {
        let backbone = Backbone::new("generator", config.clone(), true, rng)?;
        let head = PredictionHead::new("generator.head", config.vocab_size, config.d_model, rng);
        Ok(Generator { backbone, head })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.backbone.config
    }

    pub fn effective_prefix(&self, prefix: &[u32]) -> Vec<u32> {
        effective_prefix(prefix, self.backbone.config.max_seq_len)
    }

    /// Runs the causal stack; f_gpt = h_t = top-layer feature at the final
    /// position.
    pub fn forward(
        &self,
        prefix: &[u32],
    ) -> Result<(GeneratorFeatures, GeneratorState, GeneratorCache), LayerError> {
        let ids = self.effective_prefix(prefix);
        let (features, backbone) = self.backbone.forward(&ids)?;
        let h_t = features.row(features.rows() - 1).to_vec();
        let effective_len = ids.len();
        Ok((
            GeneratorFeatures { f_gpt: h_t.clone() },
            GeneratorState {
                prefix: ids,
                h_t,
            },
            GeneratorCache {
                backbone,
                effective_len,
            },
        ))
    }

    /// Routes a gradient on h_t back through the final position.
    pub fn backward_last(&mut self, cache: &GeneratorCache, d_h: &[f64]) {
        let mut d_features = Tensor::zeros(vec![cache.effective_len, self.backbone.config.d_model]);
        d_features
            .row_mut(cache.effective_len - 1)
            .copy_from_slice(d_h);
        self.backbone.backward(&cache.backbone, &d_features);
    }

    /// Next-token distribution under this generator's own head.
    pub fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>, LayerError> {
        let (_, state, _) = self.forward(prefix)?;
        Ok(next_token_distribution(&state.h_t, &self.head))
    }

    /// Autoregressive decode: appends up to `max_new` tokens, stopping
    /// after emitting EOS. Returns only the generated ids.
    pub fn generate(
        &self,
        prefix: &[u32],
        max_new: usize,
        strategy: DecodeStrategy,
    ) -> Result<Vec<u32>, GeneratorError> {
        generate_with(
            |ids| self.next_distribution(ids).map_err(GeneratorError::from),
            prefix,
            max_new,
            strategy,
        )
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        self.backbone.for_each_param(visit);
        self.head.for_each_param(visit);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        self.backbone.for_each_param_ref(visit);
        self.head.for_each_param_ref(visit);
    }
}

/// Decode loop shared by the generator-only and hybrid completion paths;
/// `next_dist` produces the next-token distribution for a full prefix.
pub fn generate_with<E>(
    mut next_dist: impl FnMut(&[u32]) -> Result<Vec<f64>, E>,
    prefix: &[u32],
    max_new: usize,
    strategy: DecodeStrategy,
) -> Result<Vec<u32>, E>
where
    E: From<GeneratorError>,
{
    let mut rng = match strategy {
        DecodeStrategy::Greedy => None,
        DecodeStrategy::Temperature { tau, seed } => {
            if tau <= 0.0 {
                return Err(GeneratorError::BadTemperature { tau }.into());
            }
            Some(ChaCha8Rng::seed_from_u64(seed))
        }
    };
    let mut ids = prefix.to_vec();
    let mut generated = Vec::new();
    for _ in 0..max_new {
        let dist = next_dist(&ids)?;
        let token = match (&strategy, rng.as_mut()) {
            (DecodeStrategy::Greedy, _) => argmax(&dist) as u32,
            (DecodeStrategy::Temperature { tau, .. }, Some(rng)) => {
                sample_with_temperature(&dist, *tau, rng) as u32
            }
            _ => unreachable!("rng present iff temperature strategy"),
        };
        ids.push(token);
        generated.push(token);
        if token == EOS_ID {
            break;
        }
    }
    Ok(generated)
}

/// Samples from p_i ∝ p_i^(1/τ) (equivalent to softmax of logits/τ).
fn sample_with_temperature(dist: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> usize {
    let inv = 1.0 / tau;
    let weights: Vec<f64> = dist
        .iter()
        .map(|&p| if p > 0.0 { p.powf(inv) } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return argmax(dist);
    }
    let draw = rng.gen_range(0.0..1.0) * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, ScalarObjective};
    use crate::tensor::cross_entropy;

    fn tiny_config() -> GeneratorConfig {
        GeneratorConfig {
            layers: 1,
            d_model: 8,
            heads: 2,
            d_ff: 16,
            max_seq_len: 10,
            vocab_size: 16,
        }
    }

    fn generator(seed: u64) -> Generator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Generator::new(tiny_config(), &mut rng).unwrap()
    }

    #[test]
    fn causality_logits_stable_under_suffix_append() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let g = generator(56);
        for _ in 0..100 {
            let prefix_len = rng.gen_range(1..6);
            let suffix_len = rng.gen_range(1..4);
            let prefix: Vec<u32> = (0..prefix_len).map(|_| rng.gen_range(5..16)).collect();
            let mut extended = prefix.clone();
            extended.extend((0..suffix_len).map(|_| rng.gen_range(5..16_u32)));
            let (_, _, _) = g.forward(&prefix).unwrap();
            let (short_features, _) = g.backbone.forward(&prefix).unwrap();
            let (long_features, _) = g.backbone.forward(&extended).unwrap();
            let t = prefix.len() - 1;
            let short_logits = g.head.logits(short_features.row(t));
            let long_logits = g.head.logits(long_features.row(t));
            for (a, b) in short_logits.iter().zip(long_logits.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn next_token_distribution_is_normalized() {
        let g = generator(57);
        let dist = g.next_distribution(&[5, 6, 7]).unwrap();
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(dist.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn zero_head_gives_uniform_distribution() {
        let mut g = generator(58);
        g.head.w.value.fill(0.0);
        g.head.b.value.fill(0.0);
        let dist = g.next_distribution(&[5]).unwrap();
        for p in dist {
            assert!((p - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_head_concentrates_mass() {
        let mut g = generator(59);
        g.head.w.value.fill(0.0);
        g.head.b.value.fill(0.0);
        g.head.b.value.data_mut()[7] = 10.0;
        let dist = g.next_distribution(&[5]).unwrap();
        assert_eq!(argmax(&dist), 7);
        assert!(dist[7] > 0.99);
    }

    #[test]
    fn greedy_generation_is_deterministic() {
        let g = generator(60);
        let a = g.generate(&[5, 6], 8, DecodeStrategy::Greedy).unwrap();
        let b = g.generate(&[5, 6], 8, DecodeStrategy::Greedy).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 8);
    }

    #[test]
    fn max_new_zero_generates_nothing() {
        let g = generator(61);
        assert!(g.generate(&[5], 0, DecodeStrategy::Greedy).unwrap().is_empty());
    }

    #[test]
    fn eos_biased_head_stops_immediately() {
        let mut g = generator(62);
        g.head.w.value.fill(0.0);
        g.head.b.value.fill(0.0);
        g.head.b.value.data_mut()[EOS_ID as usize] = 20.0;
        let out = g.generate(&[5, 6], 10, DecodeStrategy::Greedy).unwrap();
        assert_eq!(out, vec![EOS_ID]);
    }

    #[test]
    fn temperature_sampling_is_seed_deterministic() {
        let g = generator(63);
        let s = DecodeStrategy::Temperature { tau: 0.8, seed: 9 };
        let a = g.generate(&[5, 6], 6, s).unwrap();
        let b = g.generate(&[5, 6], 6, s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        let g = generator(64);
        let err = g
            .generate(&[5], 3, DecodeStrategy::Temperature { tau: 0.0, seed: 1 })
            .unwrap_err();
        assert!(matches!(err, GeneratorError::BadTemperature { .. }));
    }

    #[test]
    fn single_token_prefix_uses_position_zero_only() {
        let g = generator(65);
        let (f1, s1, _) = g.forward(&[5]).unwrap();
        let (f2, s2, _) = g.forward(&[9]).unwrap();
        assert_eq!(s1.h_t, f1.f_gpt);
        assert_ne!(s1.h_t, s2.h_t);
        assert_eq!(f2.f_gpt.len(), 8);
    }

    #[test]
    fn overlength_prefix_truncates_to_most_recent() {
        let g = generator(66);
        let long: Vec<u32> = (0..14).map(|i| 5 + (i % 9) as u32).collect();
        let tail = long[long.len() - 10..].to_vec();
        let (a, _, _) = g.forward(&long).unwrap();
        let (b, _, _) = g.forward(&tail).unwrap();
        assert_eq!(a.f_gpt, b.f_gpt);
    }

    struct GeneratorObjective {
        generator: Generator,
        prefix: Vec<u32>,
        label: usize,
    }

    impl ScalarObjective for GeneratorObjective {
        fn eval(&mut self) -> f64 {
            let dist = self.generator.next_distribution(&self.prefix).unwrap();
            cross_entropy(&dist, self.label).unwrap()
        }

        fn eval_grads(&mut self) -> f64 {
            let (_, state, cache) = self.generator.forward(&self.prefix).unwrap();
            let dist = next_token_distribution(&state.h_t, &self.generator.head);
            let loss = cross_entropy(&dist, self.label).unwrap();
            let d_logits =
                crate::tensor::softmax_cross_entropy_backward(&dist, self.label, 1.0);
            let d_h = self.generator.head.backward(&state.h_t, &d_logits);
            self.generator.backward_last(&cache, &d_h);
            loss
        }

        fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
            self.generator.for_each_param(visit);
        }
    }

    #[test]
    fn generator_with_head_gradients_match_finite_differences() {
        let mut obj = GeneratorObjective {
            generator: generator(70),
            prefix: vec![5, 9, 13],
            label: 6,
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
