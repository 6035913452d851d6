//! BERT-style cross-encoder: token + position + segment embeddings, a stack
//! of post-norm transformer blocks, a tanh pooler on `[CLS]`, and a two-logit
//! head whose softmax gives the relevance probability.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};
use crate::tokenizer::{EncodedPair, Vocab};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_FORMAT_VERSION};

const INIT_STD: f32 = 0.02;
/// Added to attention scores of `[PAD]` keys; exp underflows to exactly 0.
const MASK_BIAS: f32 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    /// Number of position embeddings.
    pub max_len: usize,
    pub type_vocab_size: usize,
    pub dropout: f32,
}

pub const BERT_VOCAB_SIZE: usize = 30522;

impl ModelConfig {
    /// BERT-family shape with `d_ff = 4 d_model`, two segments and 512 positions.
    pub fn bert(n_layers: usize, d_model: usize, n_heads: usize, vocab_size: usize) -> Self {
        ModelConfig {
            n_layers,
            d_model,
            n_heads,
            d_ff: 4 * d_model,
            vocab_size,
            max_len: 512,
            type_vocab_size: 2,
            dropout: 0.1,
        }
    }

    pub fn tiny() -> Self {
        Self::bert(2, 128, 2, BERT_VOCAB_SIZE)
    }

    pub fn mini() -> Self {
        Self::bert(4, 256, 4, BERT_VOCAB_SIZE)
    }

    pub fn small() -> Self {
        Self::bert(4, 512, 8, BERT_VOCAB_SIZE)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "mini" => Some(Self::mini()),
            "small" => Some(Self::small()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_layers >= 1
            && self.d_model >= 1
            && self.n_heads >= 1
            && self.d_model.is_multiple_of(self.n_heads)
            && self.d_ff >= 1
            && self.vocab_size >= 1
            && self.max_len >= 1
            && self.type_vocab_size >= 1
            && (0.0..1.0).contains(&self.dropout);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid model config {self:?}")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn n_params(&self) -> usize {
        layout(self).iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

const EMBEDDING_PARAMS: usize = 5;
const LAYER_PARAMS: usize = 16;

// Offsets inside one encoder layer.
const Q_W: usize = 0;
const K_W: usize = 2;
const V_W: usize = 4;
const O_W: usize = 6;
const ATTN_LN: usize = 8;
const FF1_W: usize = 10;
const FF2_W: usize = 12;
const OUT_LN: usize = 14;

/// Canonical tensor order and names (HuggingFace BERT naming; weights are
/// stored `[in, out]`).
pub(crate) fn layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (d, ff) = (cfg.d_model, cfg.d_ff);
    let mut specs = Vec::with_capacity(EMBEDDING_PARAMS + LAYER_PARAMS * cfg.n_layers + 4);
    let mut push = |name: String, shape: Vec<usize>, init| specs.push(ParamSpec { name, shape, init });
    push("embeddings.word_embeddings.weight".into(), vec![cfg.vocab_size, d], Init::Normal);
    push("embeddings.position_embeddings.weight".into(), vec![cfg.max_len, d], Init::Normal);
    push("embeddings.token_type_embeddings.weight".into(), vec![cfg.type_vocab_size, d], Init::Normal);
    push("embeddings.LayerNorm.weight".into(), vec![d], Init::Ones);
    push("embeddings.LayerNorm.bias".into(), vec![d], Init::Zeros);
    for l in 0..cfg.n_layers {
        let p = format!("encoder.layer.{l}");
        for (name, din, dout) in [
            ("attention.self.query", d, d),
            ("attention.self.key", d, d),
            ("attention.self.value", d, d),
            ("attention.output.dense", d, d),
        ] {
            push(format!("{p}.{name}.weight"), vec![din, dout], Init::Normal);
            push(format!("{p}.{name}.bias"), vec![dout], Init::Zeros);
        }
        push(format!("{p}.attention.output.LayerNorm.weight"), vec![d], Init::Ones);
        push(format!("{p}.attention.output.LayerNorm.bias"), vec![d], Init::Zeros);
        push(format!("{p}.intermediate.dense.weight"), vec![d, ff], Init::Normal);
        push(format!("{p}.intermediate.dense.bias"), vec![ff], Init::Zeros);
        push(format!("{p}.output.dense.weight"), vec![ff, d], Init::Normal);
        push(format!("{p}.output.dense.bias"), vec![d], Init::Zeros);
        push(format!("{p}.output.LayerNorm.weight"), vec![d], Init::Ones);
        push(format!("{p}.output.LayerNorm.bias"), vec![d], Init::Zeros);
    }
    push("pooler.dense.weight".into(), vec![d, d], Init::Normal);
    push("pooler.dense.bias".into(), vec![d], Init::Zeros);
    push("classifier.weight".into(), vec![d, 2], Init::Normal);
    push("classifier.bias".into(), vec![2], Init::Zeros);
    specs
}

/// All weights of one model, in [`ModelParams::names`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Truncated normal (σ = 0.02, cut at 2σ) weights, zero biases, unit
    /// layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
        let tensors = layout(&config)
            .into_iter()
            .map(|spec| match spec.init {
                Init::Zeros => Tensor::zeros(spec.shape),
                Init::Ones => Tensor::full(spec.shape, 1.0),
                Init::Normal => Tensor::from_fn(spec.shape, |_| loop {
                    let x = normal.sample(&mut rng);
                    if x.abs() <= 2.0 * INIT_STD {
                        break x;
                    }
                }),
            })
            .collect();
        Ok(ModelParams { config, tensors })
    }

    /// Checks that `tensors` matches the layout of `config`.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        if specs.len() != tensors.len() {
            return Err(Error::invalid(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if s.shape != t.shape() {
                return Err(Error::Shape {
                    op: "model params",
                    lhs: s.shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(ModelParams { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> Vec<String> {
        layout(&self.config).into_iter().map(|s| s.name).collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Weight decay applies to every `.weight` tensor except layer-norm gains.
    pub fn decay_mask(&self) -> Vec<bool> {
        layout(&self.config)
            .iter()
            .map(|s| s.name.ends_with(".weight") && !s.name.contains("LayerNorm"))
            .collect()
    }

    fn layer(&self, l: usize, offset: usize) -> usize {
        EMBEDDING_PARAMS + l * LAYER_PARAMS + offset
    }

    fn head(&self) -> usize {
        EMBEDDING_PARAMS + self.config.n_layers * LAYER_PARAMS
    }
}

/// Head output for one pair. `p_plus` is the softmax probability of the
/// relevant class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub s_plus: f32,
    pub s_minus: f32,
    pub p_plus: f64,
}

impl ScorePair {
    pub fn from_logits(s_minus: f32, s_plus: f32) -> Self {
        ScorePair {
            s_plus,
            s_minus,
            p_plus: sigmoid(s_plus as f64 - s_minus as f64),
        }
    }
}

/// exp(z) / (1 + exp(z)) without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logit column of the non-relevant class; column 1 is the relevant one.
pub const NEG_COLUMN: usize = 0;
pub const POS_COLUMN: usize = 1;

/// Graph handles produced by [`forward_graph`].
pub struct Forward {
    /// `[N, 2]` logits.
    pub logits: NodeId,
    /// One node per parameter tensor, in layout order.
    pub params: Vec<NodeId>,
}

fn split_seed(seed: u64, site: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ site.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Records the full forward pass. Trailing positions that are padding in
/// every row are dropped before the encoder runs; masked positions never
/// influence unmasked ones, so this does not change any output.
pub fn forward_graph<'a>(
    g: &mut Graph<'a>,
    params: &'a ModelParams,
    batch: &[EncodedPair],
    train: bool,
    seed: u64,
    trainable: bool,
) -> Result<Forward> {
    let cfg = &params.config;
    if batch.is_empty() {
        return Err(Error::invalid("forward: empty batch"));
    }
    let padded = batch[0].len();
    if batch.iter().any(|p| p.len() != padded || p.segment_ids.len() != padded || p.attention_mask.len() != padded) {
        return Err(Error::invalid("forward: rows of unequal length"));
    }
    let seq = batch.iter().map(EncodedPair::real_len).max().unwrap_or(0).max(1);
    if seq > cfg.max_len {
        return Err(Error::invalid(format!(
            "forward: sequence of {seq} tokens exceeds {} positions",
            cfg.max_len
        )));
    }
    let n = batch.len();
    let (d, heads, dh) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let mut ids = Vec::with_capacity(n * seq);
    let mut segs = Vec::with_capacity(n * seq);
    let mut mask = Vec::with_capacity(n * seq);
    for p in batch {
        for j in 0..seq {
            let (t, s) = (p.token_ids[j], p.segment_ids[j] as u32);
            if t as usize >= cfg.vocab_size {
                return Err(Error::invalid(format!("token id {t} out of range for vocab {}", cfg.vocab_size)));
            }
            if s as usize >= cfg.type_vocab_size {
                return Err(Error::invalid(format!("segment id {s} out of range")));
            }
            ids.push(t);
            segs.push(s);
            mask.push(if p.attention_mask[j] == 1 { 0.0 } else { MASK_BIAS });
        }
    }
    let positions: Vec<u32> = (0..n).flat_map(|_| 0..seq as u32).collect();

    let nodes: Vec<NodeId> = params
        .tensors
        .iter()
        .map(|t| if trainable { g.param(t) } else { g.frozen(t) })
        .collect();
    let p = |i: usize| nodes[i];
    let rate = cfg.dropout;
    let mut site = 0u64;
    let mut drop = |g: &mut Graph<'a>, x: NodeId| {
        site += 1;
        g.dropout(x, rate, train, split_seed(seed, site))
    };

    let word = g.embedding(p(0), ids)?;
    let pos = g.embedding(p(1), positions)?;
    let seg = g.embedding(p(2), segs)?;
    let x = g.add(word, pos)?;
    let x = g.add(x, seg)?;
    let x = g.layer_norm(x, p(3), p(4))?;
    let mut x = drop(g, x);
    let mask = g.constant(Tensor::new([n, 1, 1, seq], mask)?);
    let scale = 1.0 / (dh as f32).sqrt();

    for l in 0..cfg.n_layers {
        let w = |off: usize| p(params.layer(l, off));
        let split_heads = |g: &mut Graph<'a>, t: NodeId| -> Result<NodeId> {
            let t = g.reshape(t, &[n, seq, heads, dh])?;
            g.permute(t, &[0, 2, 1, 3])
        };
        let q = g.linear(x, w(Q_W), w(Q_W + 1))?;
        let k = g.linear(x, w(K_W), w(K_W + 1))?;
        let v = g.linear(x, w(V_W), w(V_W + 1))?;
        let (q, k, v) = (split_heads(g, q)?, split_heads(g, k)?, split_heads(g, v)?);
        let scores = g.matmul(q, k, false, true)?;
        let scores = g.scale(scores, scale);
        let scores = g.add(scores, mask)?;
        let probs = g.softmax(scores, 3)?;
        let probs = drop(g, probs);
        let ctx = g.matmul(probs, v, false, false)?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[n * seq, d])?;
        let attn = g.linear(ctx, w(O_W), w(O_W + 1))?;
        let attn = drop(g, attn);
        let h = g.add(x, attn)?;
        let h = g.layer_norm(h, w(ATTN_LN), w(ATTN_LN + 1))?;
        let ff = g.linear(h, w(FF1_W), w(FF1_W + 1))?;
        let ff = g.gelu(ff);
        let ff = g.linear(ff, w(FF2_W), w(FF2_W + 1))?;
        let ff = drop(g, ff);
        let out = g.add(h, ff)?;
        x = g.layer_norm(out, w(OUT_LN), w(OUT_LN + 1))?;
    }

    let head = params.head();
    let cls_rows: Vec<u32> = (0..n).map(|i| (i * seq) as u32).collect();
    let cls = g.embedding(x, cls_rows)?;
    let pooled = g.linear(cls, p(head), p(head + 1))?;
    let pooled = g.tanh(pooled);
    let pooled = drop(g, pooled);
    let logits = g.linear(pooled, p(head + 2), p(head + 3))?;
    Ok(Forward {
        logits,
        params: nodes,
    })
}

/// Eval-mode (or seeded train-mode) forward returning one [`ScorePair`] per row.
pub fn forward(
    params: &ModelParams,
    batch: &[EncodedPair],
    train: bool,
    seed: u64,
) -> Result<Vec<ScorePair>> {
    let mut g = Graph::new();
    let out = forward_graph(&mut g, params, batch, train, seed, false)?;
    Ok(g
        .value(out.logits)
        .data()
        .chunks(2)
        .map(|c| ScorePair::from_logits(c[NEG_COLUMN], c[POS_COLUMN]))
        .collect())
}

/// A model bundled with everything needed to score raw text.
#[derive(Debug, Clone)]
pub struct CrossEncoder {
    pub params: ModelParams,
    pub vocab: Vocab,
    /// Tokenizer sequence length.
    pub max_len: usize,
    pub batch_size: usize,
}

impl CrossEncoder {
    pub fn new(params: ModelParams, vocab: Vocab, max_len: usize, batch_size: usize) -> Result<Self> {
        if vocab.len() > params.config().vocab_size {
            return Err(Error::invalid(format!(
                "vocabulary has {} tokens, model embeds {}",
                vocab.len(),
                params.config().vocab_size
            )));
        }
        if max_len < 8 || batch_size == 0 {
            return Err(Error::invalid("max_len must be >= 8 and batch_size >= 1"));
        }
        Ok(CrossEncoder {
            params,
            vocab,
            max_len,
            batch_size,
        })
    }

    pub fn encode(&self, query: &str, docs: &[&str]) -> Vec<EncodedPair> {
        let q = self.vocab.wordpiece(query);
        docs.iter()
            .map(|d| self.vocab.encode_ids(&q, &self.vocab.wordpiece(d), self.max_len))
            .collect()
    }

    /// Eval-mode scores of pre-encoded pairs, `batch_size` rows at a time.
    pub fn score_encoded(&self, pairs: &[EncodedPair]) -> Result<Vec<ScorePair>> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.batch_size) {
            out.extend(forward(&self.params, chunk, false, 0)?);
        }
        Ok(out)
    }

    /// Relevance probabilities in input order.
    pub fn score_pairs(&self, query: &str, docs: &[&str]) -> Result<Vec<f64>> {
        if docs.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self
            .score_encoded(&self.encode(query, docs))?
            .into_iter()
            .map(|s| s.p_plus)
            .collect())
    }
}
