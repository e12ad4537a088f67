//! Transformer building blocks shared by the bidirectional encoder and the
//! causal generator: linear projections, layer norm, scaled dot-product
//! attention, multi-head attention, feed-forward, and the full backbone
//! stack (embeddings + post-norm layers).
//!
//! Every block is a forward/backward pair. Forward returns the output plus
//! a cache of whatever the backward needs; backward consumes the cache and
//! an upstream gradient, accumulates into parameter `.grad` buffers, and
//! returns the gradient with respect to the block input.

use crate::tensor::{
    gelu, gelu_derivative, layer_norm, layer_norm_backward, matmul, matmul_backward,
    softmax_into, softmax_row_backward, transpose, Parameter, Tensor, TensorError,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("sequence must be non-empty")]
    EmptySequence,
    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("invalid model config: {reason}")]
    BadConfig { reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Shared extents of a transformer backbone. `vocab_size` is 0 until bound
/// to a built vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            layers: 2,
            d_model: 64,
            heads: 4,
            d_ff: 256,
            max_seq_len: 128,
            vocab_size: 0,
        }
    }
}

impl BackboneConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn with_vocab(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn validate(&self) -> Result<(), LayerError> {
        let positive = [
            ("layers", self.layers),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(LayerError::BadConfig {
                    reason: format!("{name} must be positive"),
                });
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(LayerError::BadConfig {
                reason: format!(
                    "d_model {} not divisible by heads {}",
                    self.d_model, self.heads
                ),
            });
        }
        Ok(())
    }
}

fn uniform_tensor(shape: Vec<usize>, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape, data).expect("shape/data constructed consistently")
}

fn add_rows(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data().iter()) {
        *o += v;
    }
    out
}

/// Affine map y = xW + b with W: [d_in × d_out].
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

#[derive(Debug)]
pub struct LinearCache {
    input: Tensor,
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (d_in as f64).sqrt();
        Linear {
            weight: Parameter::new(
                format!("{name}.weight"),
                uniform_tensor(vec![d_in, d_out], scale, rng),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(vec![d_out])),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LinearCache), TensorError> {
        let mut y = matmul(x, &self.weight.value)?;
        let b = self.bias.value.data();
        for r in 0..y.rows() {
            for (o, bv) in y.row_mut(r).iter_mut().zip(b.iter()) {
                *o += bv;
            }
        }
        Ok((y, LinearCache { input: x.clone() }))
    }

    pub fn backward(&mut self, cache: &LinearCache, d_out: &Tensor) -> Tensor {
        let (d_x, d_w) = matmul_backward(&cache.input, &self.weight.value, d_out);
        self.weight
            .grad
            .add_assign(&d_w)
            .expect("weight grad shape fixed");
        let db = self.bias.grad.data_mut();
        for r in 0..d_out.rows() {
            for (g, d) in db.iter_mut().zip(d_out.row(r).iter()) {
                *g += d;
            }
        }
        d_x
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        visit(&mut self.weight);
        visit(&mut self.bias);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        visit(&self.weight);
        visit(&self.bias);
    }
}

/// Row-wise layer normalization with learned gain/bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Parameter,
    pub bias: Parameter,
    pub eps: f64,
}

#[derive(Debug)]
pub struct LayerNormCache {
    input: Tensor,
}

impl LayerNorm {
    pub fn new(name: &str, d: usize) -> Self {
        let mut gain = Tensor::zeros(vec![d]);
        gain.fill(1.0);
        LayerNorm {
            gain: Parameter::new(format!("{name}.gain"), gain),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(vec![d])),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, LayerNormCache) {
        let mut out = Tensor::zeros(x.shape().to_vec());
        for r in 0..x.rows() {
            let y = layer_norm(x.row(r), self.gain.value.data(), self.bias.value.data(), self.eps);
            out.row_mut(r).copy_from_slice(&y);
        }
        (out, LayerNormCache { input: x.clone() })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, d_out: &Tensor) -> Tensor {
        let x = &cache.input;
        let mut d_x = Tensor::zeros(x.shape().to_vec());
        for r in 0..x.rows() {
            let dr = layer_norm_backward(
                x.row(r),
                self.gain.value.data(),
                self.eps,
                d_out.row(r),
                self.gain.grad.data_mut(),
                self.bias.grad.data_mut(),
            );
            d_x.row_mut(r).copy_from_slice(&dr);
        }
        d_x
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        visit(&mut self.gain);
        visit(&mut self.bias);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        visit(&self.gain);
        visit(&self.bias);
    }
}

/// Boolean attention mask over query/key positions; `true` = attend allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    n: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    /// All positions visible (bidirectional attention).
    pub fn full(n: usize) -> Self {
        AttentionMask {
            n,
            allowed: vec![true; n * n],
        }
    }

    /// Position t attends only to positions ≤ t.
    pub fn causal(n: usize) -> Self {
        let mut allowed = vec![false; n * n];
        for q in 0..n {
            for k in 0..=q {
                allowed[q * n + k] = true;
            }
        }
        AttentionMask { n, allowed }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = vec![false; n * n];
        for q in 0..n {
            for k in 0..n {
                allowed[q * n + k] = f(q, k);
            }
        }
        AttentionMask { n, allowed }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn allows(&self, q: usize, k: usize) -> bool {
        self.allowed[q * self.n + k]
    }
}

#[derive(Debug)]
pub struct AttentionCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Tensor,
}

/// softmax(QKᵀ/√d)V over a single head. Masked positions receive zero
/// weight; a fully masked query row yields a zero output row.
pub fn scaled_dot_product_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: Option<&AttentionMask>,
) -> Result<(Tensor, AttentionCache), TensorError> {
    if q.cols() != k.cols() || k.rows() != v.rows() {
        return Err(TensorError::DimensionMismatch {
            op: "scaled_dot_product_attention",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    let (t_q, t_k, d) = (q.rows(), k.rows(), q.cols());
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut scores = matmul(q, &transpose(k))?;
    scores.scale(inv_sqrt_d);
    if let Some(m) = mask {
        for qi in 0..t_q {
            let row = scores.row_mut(qi);
            for (ki, s) in row.iter_mut().enumerate().take(t_k) {
                if !m.allows(qi, ki) {
                    *s = f64::NEG_INFINITY;
                }
            }
        }
    }
    let mut probs = Tensor::zeros(vec![t_q, t_k]);
    for r in 0..t_q {
        softmax_into(scores.row(r), probs.row_mut(r));
    }
    let out = matmul(&probs, v)?;
    Ok((
        out,
        AttentionCache {
            q: q.clone(),
            k: k.clone(),
            v: v.clone(),
            probs,
        },
    ))
}

/// Backward of [`scaled_dot_product_attention`]; returns (dQ, dK, dV).
/// Masked score entries carry zero probability, so no gradient flows
/// through them.
pub fn scaled_dot_product_attention_backward(
    cache: &AttentionCache,
    d_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = cache.q.cols();
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let d_probs = matmul(d_out, &transpose(&cache.v)).expect("shapes fixed by forward");
    let d_v = matmul(&transpose(&cache.probs), d_out).expect("shapes fixed by forward");
    let mut d_scores = Tensor::zeros(cache.probs.shape().to_vec());
    for r in 0..cache.probs.rows() {
        softmax_row_backward(cache.probs.row(r), d_probs.row(r), d_scores.row_mut(r));
    }
    let mut d_q = matmul(&d_scores, &cache.k).expect("shapes fixed by forward");
    d_q.scale(inv_sqrt_d);
    let mut d_k = matmul(&transpose(&d_scores), &cache.q).expect("shapes fixed by forward");
    d_k.scale(inv_sqrt_d);
    (d_q, d_k, d_v)
}

fn slice_cols(x: &Tensor, start: usize, width: usize) -> Tensor {
    let mut out = Tensor::zeros(vec![x.rows(), width]);
    for r in 0..x.rows() {
        out.row_mut(r).copy_from_slice(&x.row(r)[start..start + width]);
    }
    out
}

fn write_cols(dst: &mut Tensor, src: &Tensor, start: usize) {
    for r in 0..src.rows() {
        dst.row_mut(r)[start..start + src.cols()].copy_from_slice(src.row(r));
    }
}

/// H-way multi-head attention with learned Q/K/V/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub head_dim: usize,
}

#[derive(Debug)]
pub struct MhaCache {
    q_cache: LinearCache,
    k_cache: LinearCache,
    v_cache: LinearCache,
    o_cache: LinearCache,
    per_head: Vec<AttentionCache>,
}

impl MultiHeadAttention {
    pub fn new(name: &str, d_model: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        MultiHeadAttention {
            wq: Linear::new(&format!("{name}.wq"), d_model, d_model, rng),
            wk: Linear::new(&format!("{name}.wk"), d_model, d_model, rng),
            wv: Linear::new(&format!("{name}.wv"), d_model, d_model, rng),
            wo: Linear::new(&format!("{name}.wo"), d_model, d_model, rng),
            heads,
            head_dim: d_model / heads,
        }
    }

    pub fn forward(
        &self,
        x: &Tensor,
        mask: Option<&AttentionMask>,
    ) -> Result<(Tensor, MhaCache), TensorError> {
        let (q, q_cache) = self.wq.forward(x)?;
        let (k, k_cache) = self.wk.forward(x)?;
        let (v, v_cache) = self.wv.forward(x)?;
        let t = x.rows();
        let d_model = x.cols();
        let mut concat = Tensor::zeros(vec![t, d_model]);
        let mut per_head = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let start = h * self.head_dim;
            let qh = slice_cols(&q, start, self.head_dim);
            let kh = slice_cols(&k, start, self.head_dim);
            let vh = slice_cols(&v, start, self.head_dim);
            let (oh, cache) = scaled_dot_product_attention(&qh, &kh, &vh, mask)?;
            write_cols(&mut concat, &oh, start);
            per_head.push(cache);
        }
        let (out, o_cache) = self.wo.forward(&concat)?;
        Ok((
            out,
            MhaCache {
                q_cache,
                k_cache,
                v_cache,
                o_cache,
                per_head,
            },
        ))
    }

    pub fn backward(&mut self, cache: &MhaCache, d_out: &Tensor) -> Tensor {
        let d_concat = self.wo.backward(&cache.o_cache, d_out);
        let t = d_concat.rows();
        let d_model = self.heads * self.head_dim;
        let mut d_q = Tensor::zeros(vec![t, d_model]);
        let mut d_k = Tensor::zeros(vec![t, d_model]);
        let mut d_v = Tensor::zeros(vec![t, d_model]);
        for (h, head_cache) in cache.per_head.iter().enumerate() {
            let start = h * self.head_dim;
            let d_oh = slice_cols(&d_concat, start, self.head_dim);
            let (dqh, dkh, dvh) = scaled_dot_product_attention_backward(head_cache, &d_oh);
            write_cols(&mut d_q, &dqh, start);
            write_cols(&mut d_k, &dkh, start);
            write_cols(&mut d_v, &dvh, start);
        }
        let mut d_x = self.wq.backward(&cache.q_cache, &d_q);
        d_x.add_assign(&self.wk.backward(&cache.k_cache, &d_k))
            .expect("same shape");
        d_x.add_assign(&self.wv.backward(&cache.v_cache, &d_v))
            .expect("same shape");
        d_x
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        self.wq.for_each_param(visit);
        self.wk.for_each_param(visit);
        self.wv.for_each_param(visit);
        self.wo.for_each_param(visit);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        self.wq.for_each_param_ref(visit);
        self.wk.for_each_param_ref(visit);
        self.wv.for_each_param_ref(visit);
        self.wo.for_each_param_ref(visit);
    }
}

/// Two-layer position-wise feed-forward with GELU.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

#[derive(Debug)]
pub struct FfnCache {
    lin1: LinearCache,
    pre_act: Tensor,
    lin2: LinearCache,
}

impl FeedForward {
    pub fn new(name: &str, d_model: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            lin1: Linear::new(&format!("{name}.lin1"), d_model, d_ff, rng),
            lin2: Linear::new(&format!("{name}.lin2"), d_ff, d_model, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, FfnCache), TensorError> {
        let (pre_act, lin1) = self.lin1.forward(x)?;
        let mut hidden = pre_act.clone();
        for v in hidden.data_mut() {
            *v = gelu(*v);
        }
        let (out, lin2) = self.lin2.forward(&hidden)?;
        Ok((
            out,
            FfnCache {
                lin1,
                pre_act,
                lin2,
            },
        ))
    }

    pub fn backward(&mut self, cache: &FfnCache, d_out: &Tensor) -> Tensor {
        let mut d_hidden = self.lin2.backward(&cache.lin2, d_out);
        for (g, &u) in d_hidden.data_mut().iter_mut().zip(cache.pre_act.data()) {
            *g *= gelu_derivative(u);
        }
        self.lin1.backward(&cache.lin1, &d_hidden)
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        self.lin1.for_each_param(visit);
        self.lin2.for_each_param(visit);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        self.lin1.for_each_param_ref(visit);
        self.lin2.for_each_param_ref(visit);
    }
}

/// Post-norm transformer layer:
/// y1 = LN1(x + MHA(x)); y2 = LN2(y1 + FFN(y1)).
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

#[derive(Debug)]
pub struct TransformerLayerCache {
    attn: MhaCache,
    norm1: LayerNormCache,
    ffn: FfnCache,
    norm2: LayerNormCache,
}

impl TransformerLayer {
    pub fn new(name: &str, config: &BackboneConfig, rng: &mut ChaCha8Rng) -> Self {
        TransformerLayer {
            attn: MultiHeadAttention::new(
                &format!("{name}.attn"),
                config.d_model,
                config.heads,
                rng,
            ),
            norm1: LayerNorm::new(&format!("{name}.norm1"), config.d_model),
            ffn: FeedForward::new(&format!("{name}.ffn"), config.d_model, config.d_ff, rng),
            norm2: LayerNorm::new(&format!("{name}.norm2"), config.d_model),
        }
    }

    pub fn forward(
        &self,
        x: &Tensor,
        mask: Option<&AttentionMask>,
    ) -> Result<(Tensor, TransformerLayerCache), TensorError> {
        let (a, attn) = self.attn.forward(x, mask)?;
        let r1 = add_rows(x, &a);
        let (y1, norm1) = self.norm1.forward(&r1);
        let (f, ffn) = self.ffn.forward(&y1)?;
        let r2 = add_rows(&y1, &f);
        let (y2, norm2) = self.norm2.forward(&r2);
        Ok((
            y2,
            TransformerLayerCache {
                attn,
                norm1,
                ffn,
                norm2,
            },
        ))
    }

    pub fn backward(&mut self, cache: &TransformerLayerCache, d_out: &Tensor) -> Tensor {
        let d_r2 = self.norm2.backward(&cache.norm2, d_out);
        let mut d_y1 = self.ffn.backward(&cache.ffn, &d_r2);
        d_y1.add_assign(&d_r2).expect("same shape");
        let d_r1 = self.norm1.backward(&cache.norm1, &d_y1);
        let mut d_x = self.attn.backward(&cache.attn, &d_r1);
        d_x.add_assign(&d_r1).expect("same shape");
        d_x
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        self.attn.for_each_param(visit);
        self.norm1.for_each_param(visit);
        self.ffn.for_each_param(visit);
        self.norm2.for_each_param(visit);
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        self.attn.for_each_param_ref(visit);
        self.norm1.for_each_param_ref(visit);
        self.ffn.for_each_param_ref(visit);
        self.norm2.for_each_param_ref(visit);
    }
}

/// Token + learned positional embeddings feeding a stack of transformer
/// layers. `causal` selects the attention mask (false = bidirectional).
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub causal: bool,
    pub token_embedding: Parameter,
    pub position_embedding: Parameter,
    pub layers: Vec<TransformerLayer>,
}

#[derive(Debug)]
pub struct BackboneCache {
    ids: Vec<u32>,
    layer_caches: Vec<TransformerLayerCache>,
}

impl Backbone {
    pub fn new(
        name: &str,
        config: BackboneConfig,
        causal: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, LayerError> {
        config.validate()?;
        let token_embedding = Parameter::new(
            format!("{name}.tok_emb"),
            uniform_tensor(vec![config.vocab_size, config.d_model], 0.08, rng),
        );
        let position_embedding = Parameter::new(
            format!("{name}.pos_emb"),
            uniform_tensor(vec![config.max_seq_len, config.d_model], 0.08, rng),
        );
        let layers = (0..config.layers)
            .map(|i| TransformerLayer::new(&format!("{name}.layers.{i}"), &config, rng))
            .collect();
        Ok(Backbone {
            config,
            causal,
            token_embedding,
            position_embedding,
            layers,
        })
    }

    fn mask_for(&self, t: usize) -> AttentionMask {
        if self.causal {
            AttentionMask::causal(t)
        } else {
            AttentionMask::full(t)
        }
    }

    /// Embeds `ids` and runs the layer stack. Output is the top-layer
    /// feature matrix [T × d_model].
    pub fn forward(&self, ids: &[u32]) -> Result<(Tensor, BackboneCache), LayerError> {
        let t = ids.len();
        if t == 0 {
            return Err(LayerError::EmptySequence);
        }
        if t > self.config.max_seq_len {
            return Err(LayerError::SequenceTooLong {
                len: t,
                max: self.config.max_seq_len,
            });
        }
        let mut x = Tensor::zeros(vec![t, self.config.d_model]);
        for (pos, &id) in ids.iter().enumerate() {
            if id as usize >= self.config.vocab_size {
                return Err(LayerError::TokenOutOfRange {
                    id,
                    vocab: self.config.vocab_size,
                });
            }
            let tok = self.token_embedding.value.row(id as usize);
            let pe = self.position_embedding.value.row(pos);
            let row = x.row_mut(pos);
            for i in 0..row.len() {
                row[i] = tok[i] + pe[i];
            }
        }
        let mask = self.mask_for(t);
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x, Some(&mask))?;
            layer_caches.push(cache);
            x = y;
        }
        Ok((
            x,
            BackboneCache {
                ids: ids.to_vec(),
                layer_caches,
            },
        ))
    }

    /// Accumulates gradients for all layer and embedding parameters from an
    /// upstream gradient over the top-layer features.
    pub fn backward(&mut self, cache: &BackboneCache, d_hidden: &Tensor) {
        let mut d = d_hidden.clone();
        for (layer, layer_cache) in self.layers.iter_mut().zip(cache.layer_caches.iter()).rev() {
            d = layer.backward(layer_cache, &d);
        }
        for (pos, &id) in cache.ids.iter().enumerate() {
            let src = d.row(pos).to_vec();
            let tok = self.token_embedding.grad.row_mut(id as usize);
            for (g, v) in tok.iter_mut().zip(src.iter()) {
                *g += v;
            }
            let pe = self.position_embedding.grad.row_mut(pos);
            for (g, v) in pe.iter_mut().zip(src.iter()) {
                *g += v;
            }
        }
    }

    pub fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter)) {
        visit(&mut self.token_embedding);
        visit(&mut self.position_embedding);
        for layer in &mut self.layers {
            layer.for_each_param(visit);
        }
    }

    pub fn for_each_param_ref(&self, visit: &mut dyn FnMut(&Parameter)) {
        visit(&self.token_embedding);
        visit(&self.position_embedding);
        for layer in &self.layers {
            layer.for_each_param_ref(visit);
        }
    }
}
