//! Sampled-negative training of the cross-encoder with BCE or gBCE, early
//! stopped on validation NDCG@10.

mod loss;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::InvertedIndex;
use crate::corpus::{Corpus, Qrels, QuerySet};
use crate::error::{Error, Result};
use crate::eval::ndcg_of_ranking;
use crate::model::{forward, forward_graph, save_checkpoint, ModelConfig, ModelParams};
use crate::tensor::{AdamW, AdamWConfig, Graph};
use crate::tokenizer::{EncodedPair, Vocab};

pub use loss::{batch_loss, bce, beta_of_t, loss, LossKind, SamplingRate, P_CLAMP};

/// Training hyper-parameters. JSON keys are the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Queries (and therefore positives) per batch.
    pub batch_positives: usize,
    pub negatives_per_positive: usize,
    pub candidate_pool_size: usize,
    pub calibration_t: f64,
    pub loss_kind: LossKind,
    pub lr: f32,
    pub weight_decay: f32,
    pub validation_every: usize,
    /// Validations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub max_len: usize,
    /// Hard cap on training batches.
    pub max_batches: Option<usize>,
    /// BM25 depth reranked for validation.
    pub validation_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_positives: 8,
            negatives_per_positive: 128,
            candidate_pool_size: 1000,
            calibration_t: 0.75,
            loss_kind: LossKind::Gbce,
            lr: 3e-4,
            weight_decay: 0.01,
            validation_every: 600,
            patience: 200,
            seed: 0,
            max_len: crate::tokenizer::DEFAULT_MAX_LEN,
            max_batches: None,
            validation_depth: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("train config: {m}")));
        if self.batch_positives == 0 {
            return bad("batch_positives must be >= 1");
        }
        if self.negatives_per_positive == 0 || self.negatives_per_positive > self.candidate_pool_size {
            return bad("need 1 <= negatives_per_positive <= candidate_pool_size");
        }
        if !(0.0..=1.0).contains(&self.calibration_t) {
            return bad("calibration_t must be in [0, 1]");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("lr and weight_decay must be finite and >= 0");
        }
        if self.validation_every == 0 || self.patience == 0 || self.validation_depth == 0 {
            return bad("validation_every, patience and validation_depth must be >= 1");
        }
        if self.max_len < 8 {
            return bad("max_len must be >= 8");
        }
        Ok(())
    }

    pub fn sampling_rate(&self) -> Result<SamplingRate> {
        SamplingRate::new(self.negatives_per_positive, self.candidate_pool_size, self.calibration_t)
    }

    /// Exponent on the positive term: 1 for BCE, `beta(t)` for gBCE.
    pub fn beta(&self) -> Result<f64> {
        match self.loss_kind {
            LossKind::Bce => Ok(1.0),
            LossKind::Gbce => Ok(self.sampling_rate()?.beta),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A training query with its relevant docs and its negative pool.
#[derive(Debug, Clone)]
pub struct TrainQuery {
    pub query_id: String,
    pub tokens: Vec<u32>,
    pub positives: Vec<usize>,
    /// BM25 top candidates minus every judged-relevant doc.
    pub negatives: Vec<usize>,
}

/// Retrieves each query's candidate pool and keeps queries that have a
/// relevant document inside it. Returns the kept queries and the ids of
/// the dropped ones.
pub fn prepare_training_queries(
    corpus: &Corpus,
    index: &InvertedIndex,
    vocab: &Vocab,
    queries: &QuerySet,
    qrels: &Qrels,
    pool_size: usize,
) -> Result<(Vec<TrainQuery>, Vec<String>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for q in queries.iter() {
        let cands = index.retrieve(&q.query_id, &q.text, pool_size)?;
        let relevant: Vec<usize> = qrels
            .relevant(&q.query_id)
            .filter_map(|d| corpus.ordinal(d))
            .collect();
        let in_pool = cands.entries.iter().any(|c| relevant.contains(&c.ordinal));
        if !in_pool {
            dropped.push(q.query_id.clone());
            continue;
        }
        let negatives = cands
            .entries
            .iter()
            .map(|c| c.ordinal)
            .filter(|o| !relevant.contains(o))
            .collect();
        kept.push(TrainQuery {
            query_id: q.query_id.clone(),
            tokens: vocab.wordpiece(&q.text),
            positives: relevant,
            negatives,
        });
    }
    if !dropped.is_empty() {
        log::info!(
            "{} of {} training queries have no relevant document in the top {pool_size}",
            dropped.len(),
            queries.len()
        );
    }
    Ok((kept, dropped))
}

#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub pairs: Vec<EncodedPair>,
    pub labels: Vec<bool>,
    /// `(query_id, doc ordinal)` per pair, for diagnostics.
    pub sources: Vec<(String, usize)>,
}

/// For each query: one uniformly chosen positive followed by `k` negatives
/// drawn without replacement from its pool (with replacement, and a
/// warning, when the pool is smaller than `k`).
pub fn build_batch<R: Rng + ?Sized>(
    queries: &[&TrainQuery],
    corpus: &Corpus,
    vocab: &Vocab,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainBatch> {
    let k = cfg.negatives_per_positive;
    let mut batch = TrainBatch {
        pairs: Vec::with_capacity(queries.len() * (k + 1)),
        labels: Vec::with_capacity(queries.len() * (k + 1)),
        sources: Vec::with_capacity(queries.len() * (k + 1)),
    };
    for q in queries {
        let Some(&pos) = q.positives.choose(rng) else {
            return Err(Error::invalid(format!("query {} has no positive", q.query_id)));
        };
        if q.negatives.is_empty() {
            return Err(Error::invalid(format!("query {} has no negative candidates", q.query_id)));
        }
        let negs: Vec<usize> = if q.negatives.len() >= k {
            q.negatives.choose_multiple(rng, k).copied().collect()
        } else {
            log::warn!(
                "query {}: only {} negatives for k = {k}; sampling with replacement",
                q.query_id,
                q.negatives.len()
            );
            (0..k).map(|_| *q.negatives.choose(rng).unwrap()).collect()
        };
        for (ord, y) in std::iter::once((pos, true)).chain(negs.into_iter().map(|o| (o, false))) {
            let doc = vocab.wordpiece(&corpus.get(ord).text);
            batch.pairs.push(vocab.encode_ids(&q.tokens, &doc, cfg.max_len));
            batch.labels.push(y);
            batch.sources.push((q.query_id.clone(), ord));
        }
    }
    Ok(batch)
}

/// Pre-encoded BM25 candidates of a query set, reranked to compute NDCG@10.
#[derive(Debug, Clone)]
pub struct RerankSet {
    pub queries: Vec<RerankQuery>,
}

#[derive(Debug, Clone)]
pub struct RerankQuery {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub pairs: Vec<EncodedPair>,
    pub judged: BTreeMap<String, u32>,
}

const EVAL_CHUNK: usize = 64;

impl RerankSet {
    /// Queries without any relevant judgment are left out.
    pub fn build(
        corpus: &Corpus,
        index: &InvertedIndex,
        vocab: &Vocab,
        queries: &QuerySet,
        qrels: &Qrels,
        depth: usize,
        max_len: usize,
    ) -> Result<Self> {
        let mut out = Vec::new();
        for q in queries.iter() {
            let Some(judged) = qrels.for_query(&q.query_id) else { continue };
            if !judged.values().any(|&g| g > 0) {
                continue;
            }
            let cands = index.retrieve(&q.query_id, &q.text, depth)?;
            let qt = vocab.wordpiece(&q.text);
            out.push(RerankQuery {
                query_id: q.query_id.clone(),
                doc_ids: cands.entries.iter().map(|c| c.doc_id.clone()).collect(),
                pairs: cands
                    .entries
                    .iter()
                    .map(|c| vocab.encode_ids(&qt, &vocab.wordpiece(&corpus.get(c.ordinal).text), max_len))
                    .collect(),
                judged: judged.clone(),
            });
        }
        Ok(RerankSet { queries: out })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Candidate doc ids per query, by descending relevance probability
    /// (ties by ascending doc id), with the probabilities.
    pub fn rankings(&self, params: &ModelParams) -> Result<Vec<Vec<(String, f64)>>> {
        self.queries
            .iter()
            .map(|q| {
                let mut scores = Vec::with_capacity(q.pairs.len());
                for chunk in q.pairs.chunks(EVAL_CHUNK) {
                    scores.extend(forward(params, chunk, false, 0)?.into_iter().map(|s| s.p_plus));
                }
                let mut ranked: Vec<(String, f64)> = q.doc_ids.iter().cloned().zip(scores).collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                Ok(ranked)
            })
            .collect()
    }

    /// Mean reranked NDCG@10 (0 for an empty set).
    pub fn ndcg10(&self, params: &ModelParams) -> Result<f64> {
        if self.queries.is_empty() {
            return Ok(0.0);
        }
        let rankings = self.rankings(params)?;
        let total: f64 = self
            .queries
            .iter()
            .zip(&rankings)
            .map(|(q, r)| {
                let ids: Vec<&str> = r.iter().map(|(d, _)| d.as_str()).collect();
                ndcg_of_ranking(&ids, &q.judged, 10).unwrap_or(0.0)
            })
            .sum();
        Ok(total / self.queries.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    /// Mean batch loss since the previous validation.
    pub train_loss: f64,
    pub val_ndcg10: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxBatches,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation.
    pub params: ModelParams,
    pub log: Vec<LogRow>,
    pub best_step: usize,
    pub best_ndcg10: f64,
    pub steps: usize,
    pub stop: StopReason,
}

pub fn write_log_csv(log: &[LogRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "step,train_loss,val_ndcg10")?;
    for r in log {
        writeln!(w, "{},{:.6},{:.6}", r.step, r.train_loss, r.val_ndcg10)?;
    }
    Ok(())
}

pub fn save_log_csv(log: &[LogRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_log_csv(log, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

/// Everything the loop reads besides the two configs.
pub struct TrainInputs<'a> {
    pub corpus: &'a Corpus,
    pub vocab: &'a Vocab,
    pub train: &'a [TrainQuery],
    pub validation: &'a RerankSet,
}

fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

fn batch_dump(batch: &TrainBatch, logits: &[f32]) -> String {
    let rows: Vec<String> = batch
        .sources
        .iter()
        .zip(&batch.labels)
        .enumerate()
        .map(|(i, ((q, d), y))| match logits.get(2 * i..2 * i + 2) {
            Some(l) => format!("{q}/{d} y={} logits={l:?}", *y as u8),
            None => format!("{q}/{d} y={}", *y as u8),
        })
        .collect();
    rows.join("; ")
}

/// Runs the training loop. `checkpoint` receives the best parameters each
/// time validation improves.
pub fn train(
    inputs: &TrainInputs<'_>,
    model: ModelConfig,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.train.is_empty() {
        return Err(Error::invalid("no training queries"));
    }
    if inputs.validation.is_empty() {
        return Err(Error::invalid("no validation queries"));
    }
    if inputs.vocab.len() > model.vocab_size {
        return Err(Error::invalid("vocabulary larger than the model's embedding table"));
    }
    let beta = cfg.beta()?;
    let mut params = ModelParams::init(model, cfg.seed)?;
    let decay = params.decay_mask();
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        params.tensors(),
    );
    log::info!(
        "training {} params on {} queries: loss {}, k {}, beta {beta:.4}",
        params.n_params(),
        inputs.train.len(),
        cfg.loss_kind,
        cfg.negatives_per_positive
    );

    let mut log_rows = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut since_best = 0;
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    let mut step = 0;
    let b = cfg.batch_positives;
    let stop = loop {
        if cfg.max_batches.is_some_and(|m| step >= m) {
            break StopReason::MaxBatches;
        }
        step += 1;
        let mut rng = step_rng(cfg.seed, step);
        let chosen: Vec<&TrainQuery> = if inputs.train.len() >= b {
            inputs.train.choose_multiple(&mut rng, b).collect()
        } else {
            (0..b).map(|_| inputs.train.choose(&mut rng).unwrap()).collect()
        };
        let batch = build_batch(&chosen, inputs.corpus, inputs.vocab, cfg, &mut rng)?;
        let grads = {
            let mut g = Graph::new();
            let fwd = forward_graph(&mut g, &params, &batch.pairs, true, rng.random(), true)?;
            let logits = g.value(fwd.logits);
            let (value, dlogits) = batch_loss(logits, &batch.labels, beta)?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    detail: batch_dump(&batch, logits.data()),
                });
            }
            loss_sum += value;
            loss_n += 1;
            let node = g.custom_loss(fwd.logits, value as f32, dlogits)?;
            let mut grads = g.backward(node)?;
            fwd.params
                .iter()
                .map(|&id| grads.take(id).expect("parameter gradient"))
                .collect::<Vec<_>>()
        };
        if let Some(i) = grads.iter().position(|t| !t.all_finite()) {
            return Err(Error::NonFinite {
                step,
                detail: format!("gradient of {} not finite; batch: {}", params.names()[i], batch_dump(&batch, &[])),
            });
        }
        opt.step(params.tensors_mut(), &grads, &decay)?;

        let last = cfg.max_batches == Some(step);
        if step % cfg.validation_every == 0 || last {
            let ndcg = inputs.validation.ndcg10(&params)?;
            let train_loss = if loss_n == 0 { 0.0 } else { loss_sum / loss_n as f64 };
            log_rows.push(LogRow {
                step,
                train_loss,
                val_ndcg10: ndcg,
            });
            log::info!("step {step}: train loss {train_loss:.4}, validation ndcg@10 {ndcg:.4}");
            loss_sum = 0.0;
            loss_n = 0;
            if ndcg > best.0 {
                best = (ndcg, step, params.clone());
                since_best = 0;
                if let Some(path) = checkpoint {
                    save_checkpoint(&params, path)?;
                }
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break StopReason::Patience;
                }
            }
        }
    };
    let (best_ndcg10, best_step, params) = best;
    Ok(TrainOutcome {
        params,
        log: log_rows,
        best_step,
        best_ndcg10,
        steps: step,
        stop,
    })
}

/// One trained cell of a loss x negatives grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub loss: LossKind,
    pub negatives: usize,
    pub ndcg10: f64,
    pub best_step: usize,
}

/// Trains one model per `(loss, k)` with `base`'s seed and scores each on
/// `test`.
pub fn ablation_grid(
    inputs: &TrainInputs<'_>,
    test: &RerankSet,
    model: ModelConfig,
    base: &TrainConfig,
    losses: &[LossKind],
    negatives: &[usize],
) -> Result<Vec<AblationCell>> {
    if losses.is_empty() || negatives.is_empty() {
        return Err(Error::invalid("ablation grid is empty"));
    }
    let mut cells = Vec::with_capacity(losses.len() * negatives.len());
    for &loss_kind in losses {
        for &k in negatives {
            let cfg = TrainConfig {
                loss_kind,
                negatives_per_positive: k,
                ..base.clone()
            };
            let out = train(inputs, model, &cfg, None)?;
            let ndcg10 = test.ndcg10(&out.params)?;
            log::info!("ablation {loss_kind} k={k}: test ndcg@10 {ndcg10:.4}");
            cells.push(AblationCell {
                loss: loss_kind,
                negatives: k,
                ndcg10,
                best_step: out.best_step,
            });
        }
    }
    Ok(cells)
}

/// Rows are losses, columns are negative counts, in first-seen order.
pub fn write_ablation_csv(cells: &[AblationCell], mut w: impl Write) -> std::io::Result<()> {
    let mut losses = Vec::new();
    let mut ks = Vec::new();
    for c in cells {
        if !losses.contains(&c.loss) {
            losses.push(c.loss);
        }
        if !ks.contains(&c.negatives) {
            ks.push(c.negatives);
        }
    }
    write!(w, "loss")?;
    for k in &ks {
        write!(w, ",{k}")?;
    }
    writeln!(w)?;
    for l in &losses {
        write!(w, "{l}")?;
        for k in &ks {
            match cells.iter().find(|c| c.loss == *l && c.negatives == *k) {
                Some(c) => write!(w, ",{:.6}", c.ndcg10)?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{term_vocabulary, SyntheticConfig};

    struct Fixture {
        corpus: Corpus,
        vocab: Vocab,
        train: Vec<TrainQuery>,
        val: RerankSet,
    }

    fn fixture() -> Fixture {
        let (corpus, queries, qrels) = SyntheticConfig::new(3, 120, 6, 40, 1).generate().unwrap();
        let index = InvertedIndex::build(&corpus).unwrap();
        let vocab = Vocab::with_terms(term_vocabulary(40));
        let (train, _) = prepare_training_queries(&corpus, &index, &vocab, &queries, &qrels, 50).unwrap();
        let val = RerankSet::build(&corpus, &index, &vocab, &queries, &qrels, 20, 32).unwrap();
        Fixture {
            corpus,
            vocab,
            train,
            val,
        }
    }

    fn model(vocab: &Vocab) -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: vocab.len(),
            max_len: 32,
            type_vocab_size: 2,
            dropout: 0.0,
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_positives: 2,
            negatives_per_positive: 3,
            candidate_pool_size: 50,
            max_len: 32,
            validation_every: 2,
            patience: 2,
            max_batches: Some(20),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batch_shape_and_labels() {
        let f = fixture();
        let qs: Vec<&TrainQuery> = f.train.iter().take(2).collect();
        let b = build_batch(&qs, &f.corpus, &f.vocab, &cfg(), &mut step_rng(1, 1)).unwrap();
        assert_eq!(b.pairs.len(), 8);
        assert_eq!(b.labels.iter().filter(|&&y| y).count(), 2);
        let again = build_batch(&qs, &f.corpus, &f.vocab, &cfg(), &mut step_rng(1, 1)).unwrap();
        assert_eq!(b.sources, again.sources);
        for (i, q) in qs.iter().enumerate() {
            let (_, pos) = b.sources[4 * i];
            assert!(q.positives.contains(&pos));
            for (_, neg) in &b.sources[4 * i + 1..4 * i + 4] {
                assert!(q.negatives.contains(neg));
            }
        }
    }

    #[test]
    fn exhaustive_pool_uses_every_negative_once() {
        let f = fixture();
        let q = TrainQuery {
            negatives: f.train[0].negatives[..5].to_vec(),
            ..f.train[0].clone()
        };
        let c = TrainConfig {
            negatives_per_positive: 5,
            ..cfg()
        };
        let b = build_batch(&[&q], &f.corpus, &f.vocab, &c, &mut step_rng(9, 3)).unwrap();
        let mut negs: Vec<usize> = b.sources[1..].iter().map(|s| s.1).collect();
        negs.sort_unstable();
        let mut want = q.negatives.clone();
        want.sort_unstable();
        assert_eq!(negs, want);
    }

    #[test]
    fn small_pool_falls_back_to_replacement() {
        let f = fixture();
        let q = TrainQuery {
            negatives: f.train[0].negatives[..2].to_vec(),
            ..f.train[0].clone()
        };
        let b = build_batch(&[&q], &f.corpus, &f.vocab, &cfg(), &mut step_rng(9, 3)).unwrap();
        assert_eq!(b.pairs.len(), 4);
        let empty = TrainQuery {
            negatives: vec![],
            ..q
        };
        assert!(build_batch(&[&empty], &f.corpus, &f.vocab, &cfg(), &mut step_rng(9, 3)).is_err());
    }

    #[test]
    fn frozen_metric_stops_after_patience() {
        let f = fixture();
        let inputs = TrainInputs {
            corpus: &f.corpus,
            vocab: &f.vocab,
            train: &f.train,
            validation: &f.val,
        };
        let c = TrainConfig {
            lr: 0.0,
            weight_decay: 0.0,
            patience: 1,
            ..cfg()
        };
        let out = train(&inputs, model(&f.vocab), &c, None).unwrap();
        assert_eq!(out.stop, StopReason::Patience);
        assert_eq!(out.log.len(), 2);
        assert_eq!(out.steps, 4);
        assert_eq!(out.best_step, 2);
        assert_eq!(out.params, ModelParams::init(model(&f.vocab), c.seed).unwrap());
    }

    #[test]
    fn returns_best_not_last() {
        let f = fixture();
        let inputs = TrainInputs {
            corpus: &f.corpus,
            vocab: &f.vocab,
            train: &f.train,
            validation: &f.val,
        };
        let c = TrainConfig {
            lr: 1e-2,
            patience: 100,
            validation_every: 1,
            max_batches: Some(12),
            ..cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("best.ckpt");
        let out = train(&inputs, model(&f.vocab), &c, Some(&ckpt)).unwrap();
        assert_eq!(out.log.len(), 12);
        let best = out.log.iter().map(|r| r.val_ndcg10).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best_ndcg10, best);
        let first_best = out.log.iter().find(|r| r.val_ndcg10 == best).unwrap().step;
        assert_eq!(out.best_step, first_best);
        assert_eq!((f.val.ndcg10(&out.params).unwrap() - best).abs(), 0.0);
        assert_eq!(crate::model::load_checkpoint(&ckpt).unwrap(), out.params);
        let mut csv = Vec::new();
        write_log_csv(&out.log, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("step,train_loss,val_ndcg10\n1,"));
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn gbce_at_t_zero_equals_bce() {
        let f = fixture();
        let inputs = TrainInputs {
            corpus: &f.corpus,
            vocab: &f.vocab,
            train: &f.train,
            validation: &f.val,
        };
        let base = TrainConfig {
            calibration_t: 0.0,
            max_batches: Some(4),
            ..cfg()
        };
        let cells = ablation_grid(&inputs, &f.val, model(&f.vocab), &base, &[LossKind::Bce, LossKind::Gbce], &[1, 3])
            .unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].ndcg10, cells[2].ndcg10);
        let mut csv = Vec::new();
        write_ablation_csv(&cells, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next(), Some("loss,1,3"));
        assert!(text.lines().nth(2).unwrap().starts_with("gbce,"));
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let c: TrainConfig = serde_json::from_str(r#"{"loss_kind":"bce","negatives_per_positive":4}"#).unwrap();
        assert_eq!(c.loss_kind, LossKind::Bce);
        assert_eq!(c.validation_every, 600);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"negatives":4}"#).is_err());
        let bad = TrainConfig {
            calibration_t: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::default().beta().unwrap(), beta_of_t(0.128, 0.75).unwrap());
    }
}
