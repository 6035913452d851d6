//! Latency calibration and rerank-depth control under a per-query budget.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::InvertedIndex;
use crate::corpus::{Corpus, Query, QuerySet, RunFile};
use crate::error::{Error, Result};
use crate::model::CrossEncoder;

pub const DEFAULT_SERVING_BATCH: usize = 8;
pub const DEFAULT_WARMUP_RUNS: usize = 5;
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 30;
/// Times below this are reported as this, keeping profile fields positive.
const MIN_MS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyProfile {
    /// Median model time per pair at `batch_size`.
    pub lambda_ms: f64,
    /// Median BM25 retrieval time per query.
    pub first_stage_ms: f64,
    pub tokenize_ms_per_pair: f64,
    pub n_samples: usize,
    pub batch_size: usize,
    /// Retrieval depth used while timing the first stage.
    pub n_retrieve: usize,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl LatencyProfile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn per_pair_ms(&self) -> f64 {
        self.lambda_ms + self.tokenize_ms_per_pair
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationOptions {
    pub batch_size: usize,
    pub warmup: usize,
    pub samples: usize,
    pub n_retrieve: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            batch_size: DEFAULT_SERVING_BATCH,
            warmup: DEFAULT_WARMUP_RUNS,
            samples: DEFAULT_CALIBRATION_SAMPLES,
            n_retrieve: 1000,
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Smallest observable step of the monotonic clock, in ms.
fn timer_resolution_ms() -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min((b - a).as_secs_f64() * 1e3);
    }
    best
}

/// Times retrieval, tokenization and one serving batch per sample, cycling
/// through `queries`; the first `warmup` rounds are discarded.
pub fn calibrate(
    encoder: &CrossEncoder,
    corpus: &Corpus,
    index: &InvertedIndex,
    queries: &QuerySet,
    opts: CalibrationOptions,
) -> Result<LatencyProfile> {
    if queries.len() < 10 {
        return Err(Error::invalid(format!("calibration needs >= 10 queries, got {}", queries.len())));
    }
    if opts.samples < DEFAULT_CALIBRATION_SAMPLES || opts.warmup < DEFAULT_WARMUP_RUNS {
        return Err(Error::invalid(format!(
            "calibration needs >= {DEFAULT_CALIBRATION_SAMPLES} samples after >= {DEFAULT_WARMUP_RUNS} warm-up runs"
        )));
    }
    if opts.batch_size == 0 || opts.n_retrieve == 0 {
        return Err(Error::invalid("batch_size and n_retrieve must be >= 1"));
    }
    let enc = CrossEncoder {
        batch_size: opts.batch_size,
        ..encoder.clone()
    };
    let mut warnings = Vec::new();
    let resolution = timer_resolution_ms();
    if resolution > 0.1 {
        warnings.push(format!("timer resolution {resolution:.3} ms is coarser than 0.1 ms"));
    }
    let mut first = Vec::with_capacity(opts.samples);
    let mut tok = Vec::with_capacity(opts.samples);
    let mut lam = Vec::with_capacity(opts.samples);
    let qs = queries.as_slice();
    let mut skipped = 0;
    let mut round = 0;
    while first.len() < opts.samples {
        let q = &qs[round % qs.len()];
        round += 1;
        let t = Instant::now();
        let cands = index.retrieve(&q.query_id, &q.text, opts.n_retrieve)?;
        let first_ms = ms_since(t);
        if cands.is_empty() {
            skipped += 1;
            if skipped > 10 * qs.len() {
                return Err(Error::invalid("calibration queries retrieve no candidates"));
            }
            continue;
        }
        let docs: Vec<&str> = cands
            .entries
            .iter()
            .cycle()
            .take(opts.batch_size)
            .map(|c| corpus.get(c.ordinal).text.as_str())
            .collect();
        let t = Instant::now();
        let pairs = enc.encode(&q.text, &docs);
        let tok_ms = ms_since(t);
        let t = Instant::now();
        std::hint::black_box(enc.score_encoded(&pairs)?);
        let score_ms = ms_since(t);
        if round > opts.warmup {
            first.push(first_ms);
            tok.push(tok_ms / docs.len() as f64);
            lam.push(score_ms / docs.len() as f64);
        }
    }
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    Ok(LatencyProfile {
        lambda_ms: median(&mut lam).max(MIN_MS),
        first_stage_ms: median(&mut first).max(MIN_MS),
        tokenize_ms_per_pair: median(&mut tok).max(MIN_MS),
        n_samples: opts.samples,
        batch_size: opts.batch_size,
        n_retrieve: opts.n_retrieve,
        timestamp,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Rerank the top `k_max` candidates.
    Rerank,
    /// Budget too small for one pair: return first-stage order.
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub omega_ms: f64,
    pub k_max: usize,
    pub fallback: Fallback,
}

impl BudgetPlan {
    /// A plan that reranks exactly `k` candidates regardless of timing.
    pub fn fixed(k: usize) -> Self {
        BudgetPlan {
            omega_ms: f64::INFINITY,
            k_max: k,
            fallback: if k == 0 { Fallback::Passthrough } else { Fallback::Rerank },
        }
    }
}

/// `k_max = floor((omega - first_stage) / (lambda + tokenize))`, at least 0.
pub fn plan_budget(profile: &LatencyProfile, omega_ms: f64) -> BudgetPlan {
    let k = ((omega_ms - profile.first_stage_ms) / profile.per_pair_ms()).floor();
    // `as` saturates: NaN and negatives go to 0, huge values to usize::MAX.
    let k_max = k as usize;
    BudgetPlan {
        omega_ms,
        k_max,
        fallback: if k_max == 0 { Fallback::Passthrough } else { Fallback::Rerank },
    }
}

/// Final ranking of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    /// `(doc_id, score)` by descending score.
    pub entries: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub qid: String,
    pub first_stage_ms: f64,
    pub tokenize_ms: f64,
    pub score_ms: f64,
    pub total_ms: f64,
    pub k_used: usize,
}

#[derive(Debug, Clone)]
pub struct Reranked {
    pub list: RankedList,
    pub latency: LatencyRecord,
}

/// Reranked head scored by relevance probability (in (0, 1)); the tail
/// keeps BM25 order with scores squashed into (-1, 0) so the combined
/// list stays sorted.
fn merge(head: Vec<(String, f64)>, tail: Vec<(String, f64)>) -> Vec<(String, f64)> {
    let mut head = head;
    head.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top = tail.first().map_or(0.0, |t| t.1.max(0.0));
    head.into_iter()
        .chain(tail.into_iter().map(|(d, s)| (d, s / (1.0 + top) - 1.0)))
        .collect()
}

/// Retrieves `n_retrieve` candidates, scores the top `min(k_max, n)` with
/// the model and merges.
pub fn rerank(
    encoder: &CrossEncoder,
    corpus: &Corpus,
    index: &InvertedIndex,
    query: &Query,
    plan: &BudgetPlan,
    n_retrieve: usize,
) -> Result<Reranked> {
    let start = Instant::now();
    let cands = index.retrieve(&query.query_id, &query.text, n_retrieve)?;
    let first_stage_ms = ms_since(start);
    let k = match plan.fallback {
        Fallback::Passthrough => 0,
        Fallback::Rerank => plan.k_max.min(cands.len()),
    };
    let (head, tail) = cands.entries.split_at(k);
    let mut tokenize_ms = 0.0;
    let mut score_ms = 0.0;
    let mut scored = Vec::with_capacity(k);
    if k > 0 {
        let docs: Vec<&str> = head.iter().map(|c| corpus.get(c.ordinal).text.as_str()).collect();
        let t = Instant::now();
        let pairs = encoder.encode(&query.text, &docs);
        tokenize_ms = ms_since(t);
        let t = Instant::now();
        let scores = encoder.score_encoded(&pairs)?;
        score_ms = ms_since(t);
        scored = head.iter().zip(scores).map(|(c, s)| (c.doc_id.clone(), s.p_plus)).collect();
    }
    let entries = merge(
        scored,
        tail.iter().map(|c| (c.doc_id.clone(), c.score)).collect(),
    );
    let total_ms = ms_since(start);
    Ok(Reranked {
        list: RankedList {
            query_id: query.query_id.clone(),
            entries,
        },
        latency: LatencyRecord {
            qid: query.query_id.clone(),
            first_stage_ms,
            tokenize_ms,
            score_ms,
            total_ms,
            k_used: k,
        },
    })
}

fn push(run: &mut RunFile, list: &RankedList, tag: &str) -> Result<()> {
    run.push_ranking(&list.query_id, list.entries.iter().map(|(d, s)| (d.as_str(), *s)), tag)
}

/// Timed, sequential reranking of every query.
pub fn run_queries(
    encoder: &CrossEncoder,
    corpus: &Corpus,
    index: &InvertedIndex,
    queries: &QuerySet,
    plan: &BudgetPlan,
    n_retrieve: usize,
    tag: &str,
) -> Result<(RunFile, Vec<LatencyRecord>)> {
    let mut run = RunFile::empty();
    let mut records = Vec::with_capacity(queries.len());
    for q in queries.iter() {
        let r = rerank(encoder, corpus, index, q, plan, n_retrieve)?;
        push(&mut run, &r.list, tag)?;
        records.push(r.latency);
    }
    Ok((run, records))
}

/// Throughput mode: queries in parallel on the current rayon pool, no
/// latency records.
pub fn run_queries_parallel(
    encoder: &CrossEncoder,
    corpus: &Corpus,
    index: &InvertedIndex,
    queries: &QuerySet,
    plan: &BudgetPlan,
    n_retrieve: usize,
    tag: &str,
) -> Result<RunFile> {
    let lists: Vec<RankedList> = queries
        .as_slice()
        .par_iter()
        .map(|q| rerank(encoder, corpus, index, q, plan, n_retrieve).map(|r| r.list))
        .collect::<Result<_>>()?;
    let mut run = RunFile::empty();
    for l in &lists {
        push(&mut run, l, tag)?;
    }
    Ok(run)
}

pub fn write_latency_csv(records: &[LatencyRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "qid,first_stage_ms,tokenize_ms,score_ms,total_ms,k_used")?;
    for r in records {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{}",
            r.qid, r.first_stage_ms, r.tokenize_ms, r.score_ms, r.total_ms, r.k_used
        )?;
    }
    Ok(())
}

pub fn save_latency_csv(records: &[LatencyRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_latency_csv(records, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SyntheticConfig;
    use crate::model::{ModelConfig, ModelParams};
    use crate::tokenizer::Vocab;
    use proptest::prelude::*;

    fn profile(lambda: f64, first: f64, tok: f64) -> LatencyProfile {
        LatencyProfile {
            lambda_ms: lambda,
            first_stage_ms: first,
            tokenize_ms_per_pair: tok,
            n_samples: 30,
            batch_size: 8,
            n_retrieve: 1000,
            timestamp: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn plan_arithmetic() {
        assert_eq!(plan_budget(&profile(0.5, 0.0, 0.0), 50.0).k_max, 100);
        let p = plan_budget(&profile(20.0, 0.0, 0.0), 10.0);
        assert_eq!((p.k_max, p.fallback), (0, Fallback::Passthrough));
        assert_eq!(plan_budget(&profile(1.0, 30.0, 0.0), 25.0).k_max, 0);
        assert_eq!(plan_budget(&profile(0.4, 5.0, 0.1), 25.0).k_max, 40);
    }

    fn encoder(vocab_terms: usize, zero: bool) -> CrossEncoder {
        let vocab = Vocab::with_terms(crate::corpus::term_vocabulary(vocab_terms));
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: vocab.len(),
            max_len: 64,
            type_vocab_size: 2,
            dropout: 0.0,
        };
        let mut params = ModelParams::init(cfg, 4).unwrap();
        if zero {
            for t in params.tensors_mut() {
                t.data_mut().fill(0.0);
            }
        }
        CrossEncoder::new(params, vocab, 64, 8).unwrap()
    }

    fn setup() -> (Corpus, InvertedIndex, QuerySet) {
        let (corpus, queries, _) = SyntheticConfig::new(5, 200, 12, 60, 2).generate().unwrap();
        let index = InvertedIndex::build(&corpus).unwrap();
        (corpus, index, queries)
    }

    #[test]
    fn passthrough_keeps_bm25_order() {
        let (corpus, index, queries) = setup();
        let enc = encoder(60, false);
        let q = &queries.as_slice()[0];
        let r = rerank(&enc, &corpus, &index, q, &BudgetPlan::fixed(0), 50).unwrap();
        let bm25 = index.retrieve(&q.query_id, &q.text, 50).unwrap();
        let ids: Vec<&str> = r.list.entries.iter().map(|e| e.0.as_str()).collect();
        let want: Vec<&str> = bm25.entries.iter().map(|c| c.doc_id.as_str()).collect();
        assert_eq!(ids, want);
        assert_eq!(r.latency.k_used, 0);
        assert!(r.list.entries.iter().all(|e| e.1 > -1.0 && e.1 < 0.0));
    }

    #[test]
    fn equal_scores_fall_back_to_doc_id() {
        let (corpus, index, queries) = setup();
        let enc = encoder(60, true);
        let q = &queries.as_slice()[1];
        let n = index.retrieve(&q.query_id, &q.text, 30).unwrap().len();
        let r = rerank(&enc, &corpus, &index, q, &BudgetPlan::fixed(n), 30).unwrap();
        let ids: Vec<&String> = r.list.entries.iter().map(|e| &e.0).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(r.list.entries.iter().all(|e| e.1 == 0.5));
    }

    #[test]
    fn merge_definition() {
        let head = vec![("d1".to_string(), 0.2), ("d2".to_string(), 0.9)];
        let tail = vec![("d3".to_string(), 4.0), ("d4".to_string(), 1.5)];
        let m = merge(head, tail);
        let ids: Vec<&str> = m.iter().map(|e| e.0.as_str()).collect();
        assert_eq!(ids, ["d2", "d1", "d3", "d4"]);
        assert!(m.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    proptest! {
        #[test]
        fn merge_preserves_set(
            head in proptest::collection::vec(0.0f64..1.0, 0..12),
            tail in proptest::collection::vec(0.0f64..50.0, 0..12),
        ) {
            let mut tail = tail;
            tail.sort_by(|a, b| b.total_cmp(a));
            let h: Vec<(String, f64)> = head.iter().enumerate().map(|(i, &s)| (format!("h{i}"), s)).collect();
            let t: Vec<(String, f64)> = tail.iter().enumerate().map(|(i, &s)| (format!("t{i:02}"), s)).collect();
            let mut want: Vec<String> = h.iter().chain(&t).map(|e| e.0.clone()).collect();
            let m = merge(h, t);
            let mut got: Vec<String> = m.iter().map(|e| e.0.clone()).collect();
            prop_assert!(m.windows(2).all(|w| w[0].1 >= w[1].1));
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn plan_matches_formula(lambda in 1e-4f64..50.0, first in 0.0f64..30.0, tok in 0.0f64..2.0, omega in 0.1f64..200.0) {
            let p = plan_budget(&profile(lambda, first, tok), omega);
            let raw = ((omega - first) / (lambda + tok)).floor();
            prop_assert_eq!(p.k_max, if raw < 0.0 { 0 } else { raw as usize });
            prop_assert_eq!(p.fallback == Fallback::Passthrough, p.k_max == 0);
        }
    }

    #[test]
    fn run_queries_respects_cap_and_is_deterministic() {
        let (corpus, index, queries) = setup();
        let enc = encoder(60, false);
        let plan = BudgetPlan::fixed(7);
        let (run, lat) = run_queries(&enc, &corpus, &index, &queries, &plan, 20, "t").unwrap();
        assert_eq!(lat.len(), queries.len());
        assert!(lat.iter().all(|r| r.k_used <= 7));
        let (again, _) = run_queries(&enc, &corpus, &index, &queries, &plan, 20, "t").unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run.write(&mut a).unwrap();
        again.write(&mut b).unwrap();
        assert_eq!(a, b);
        let par = run_queries_parallel(&enc, &corpus, &index, &queries, &plan, 20, "t").unwrap();
        assert_eq!(par, run);
        let empty = QuerySet::new(vec![]).unwrap();
        let (r, l) = run_queries(&enc, &corpus, &index, &empty, &plan, 20, "t").unwrap();
        assert!(r.is_empty() && l.is_empty());
        let mut csv = Vec::new();
        write_latency_csv(&lat, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("qid,first_stage_ms,tokenize_ms,score_ms,total_ms,k_used\n"));
    }

    #[test]
    fn calibration_profile() {
        let (corpus, index, queries) = setup();
        let enc = encoder(60, false);
        let p = calibrate(&enc, &corpus, &index, &queries, CalibrationOptions::default()).unwrap();
        assert!(p.lambda_ms > 0.0 && p.first_stage_ms > 0.0 && p.tokenize_ms_per_pair > 0.0);
        assert_eq!(p.n_samples, 30);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.json");
        p.save(&path).unwrap();
        assert_eq!(LatencyProfile::load(&path).unwrap(), p);
        let few = QuerySet::new(queries.as_slice()[..5].to_vec()).unwrap();
        assert!(calibrate(&enc, &corpus, &index, &few, CalibrationOptions::default()).is_err());
    }
}
