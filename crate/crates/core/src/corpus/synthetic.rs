//! Deterministic synthetic collections for desk-scale experiments.
//!
//! Background text is drawn from a Zipf distribution over the whole term
//! vocabulary. Each query is a few tail ("rare") terms; queries use
//! disjoint term sets as long as the rare pool allows.
//!
//! A query's relevant passages contain every query term once, and their
//! remaining text is drawn uniformly from the head of the vocabulary rather
//! than from the Zipf law: a property of the passage that term matching
//! cannot see. Its hard distractors are short Zipf passages that also
//! contain every query term once; BM25's length normalization ranks them
//! above the relevant passages.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::{Corpus, Document, Qrels, Query, QuerySet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_docs: usize,
    pub n_queries: usize,
    pub vocab_size: usize,
    pub relevant_per_query: usize,
    /// Hard distractors per query; capped by the documents left over.
    pub distractors_per_query: usize,
    pub terms_per_query: usize,
    /// Size of the tail of the vocabulary that query terms come from.
    pub rare_terms: usize,
    pub zipf_exponent: f64,
    /// Passage length range in tokens, inclusive.
    pub doc_len: (usize, usize),
}

impl SyntheticConfig {
    pub fn new(
        seed: u64,
        n_docs: usize,
        n_queries: usize,
        vocab_size: usize,
        relevant_per_query: usize,
    ) -> Self {
        SyntheticConfig {
            seed,
            n_docs,
            n_queries,
            vocab_size,
            relevant_per_query,
            distractors_per_query: 2 * relevant_per_query,
            terms_per_query: 3,
            rare_terms: vocab_size * 3 / 4,
            zipf_exponent: 1.0,
            doc_len: (12, 20),
        }
    }

    pub fn generate(&self) -> Result<(Corpus, QuerySet, Qrels)> {
        generate(self)
    }
}

/// Name of the i-th vocabulary term.
pub fn term(i: usize) -> String {
    format!("w{i}")
}

/// Every term the generator can emit, in id order.
pub fn term_vocabulary(vocab_size: usize) -> Vec<String> {
    (0..vocab_size).map(term).collect()
}

pub fn generate_synthetic(
    seed: u64,
    n_docs: usize,
    n_queries: usize,
    vocab_size: usize,
    relevant_per_query: usize,
) -> Result<(Corpus, QuerySet, Qrels)> {
    SyntheticConfig::new(seed, n_docs, n_queries, vocab_size, relevant_per_query).generate()
}

fn generate(cfg: &SyntheticConfig) -> Result<(Corpus, QuerySet, Qrels)> {
    if cfg.n_docs == 0 || cfg.n_queries == 0 || cfg.relevant_per_query == 0 {
        return Err(Error::invalid("n_docs, n_queries and relevant_per_query must be >= 1"));
    }
    if cfg.vocab_size < 10 {
        return Err(Error::invalid("vocab_size must be >= 10 to plant rare terms"));
    }
    let planted = cfg.n_queries * cfg.relevant_per_query;
    if planted > cfg.n_docs {
        return Err(Error::invalid(format!(
            "{} queries x {} relevant docs exceed n_docs = {}",
            cfg.n_queries, cfg.relevant_per_query, cfg.n_docs
        )));
    }
    let (len_lo, len_hi) = cfg.doc_len;
    if len_lo == 0 || len_lo > len_hi {
        return Err(Error::invalid("doc_len must be a non-empty range"));
    }
    let rare_start = cfg.vocab_size - cfg.rare_terms.clamp(2, cfg.vocab_size - 1);
    let rare: Vec<usize> = (rare_start..cfg.vocab_size).collect();
    let terms_per_query = cfg.terms_per_query.clamp(2, rare.len());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zipf = Zipf::new(cfg.vocab_size as f64, cfg.zipf_exponent)
        .map_err(|e| Error::invalid(format!("zipf: {e}")))?;
    let background = |rng: &mut ChaCha8Rng, n: usize, avoid: &[usize]| -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let t = zipf.sample(rng) as usize - 1;
            if !avoid.contains(&t) {
                out.push(t);
            }
        }
        out
    };
    // Filler of relevant passages: flat over the head of the vocabulary.
    let answer_style = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..rare_start)).collect()
    };
    let insert_all = |rng: &mut ChaCha8Rng, toks: &mut Vec<usize>, planted: &[usize]| {
        for &t in planted {
            let at = rng.random_range(0..=toks.len());
            toks.insert(at, t);
        }
    };

    let spare = cfg.n_docs - planted;
    let distractors = cfg.distractors_per_query.min(spare / cfg.n_queries);

    // (token ids, owning query when relevant)
    let mut docs: Vec<(Vec<usize>, Option<usize>)> = Vec::with_capacity(cfg.n_docs);
    let mut query_terms: Vec<Vec<usize>> = Vec::with_capacity(cfg.n_queries);
    // Disjoint term sets while the rare pool lasts, then fresh draws.
    let mut deck: Vec<usize> = Vec::new();
    for q in 0..cfg.n_queries {
        if deck.len() < terms_per_query {
            deck = rare.clone();
            deck.shuffle(&mut rng);
        }
        let terms = deck.split_off(deck.len() - terms_per_query);
        for _ in 0..cfg.relevant_per_query {
            let len = rng.random_range(len_lo..=len_hi).max(terms.len());
            let mut toks = answer_style(&mut rng, len - terms.len());
            insert_all(&mut rng, &mut toks, &terms);
            docs.push((toks, Some(q)));
        }
        for _ in 0..distractors {
            let len = rng.random_range(len_lo / 2..=len_lo).max(terms.len() + 1);
            let mut toks = background(&mut rng, len - terms.len(), &terms);
            insert_all(&mut rng, &mut toks, &terms);
            docs.push((toks, None));
        }
        query_terms.push(terms);
    }
    while docs.len() < cfg.n_docs {
        let len = rng.random_range(len_lo..=len_hi);
        docs.push((background(&mut rng, len, &[]), None));
    }
    docs.shuffle(&mut rng);

    let doc_width = digits(cfg.n_docs - 1);
    let query_width = digits(cfg.n_queries - 1);
    let qid = |q: usize| format!("q{q:0query_width$}");
    let mut qrels = Qrels::new();
    let mut documents = Vec::with_capacity(docs.len());
    for (i, (toks, owner)) in docs.into_iter().enumerate() {
        let doc_id = format!("d{i:0doc_width$}");
        if let Some(q) = owner {
            qrels.insert(&qid(q), &doc_id, 1);
        }
        documents.push(Document {
            doc_id,
            text: join_terms(&toks),
        });
    }
    let queries = query_terms
        .iter()
        .enumerate()
        .map(|(q, terms)| Query {
            query_id: qid(q),
            text: join_terms(terms),
        })
        .collect();
    Ok((Corpus::new(documents)?, QuerySet::new(queries)?, qrels))
}

fn join_terms(ids: &[usize]) -> String {
    ids.iter().map(|&t| term(t)).collect::<Vec<_>>().join(" ")
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

#[derive(Debug, Clone)]
pub struct QuerySplit {
    pub train: QuerySet,
    pub validation: QuerySet,
    pub test: QuerySet,
}

/// Deterministic shuffle-and-cut into disjoint train / validation / test sets.
pub fn split_queries(
    queries: &QuerySet,
    n_validation: usize,
    n_test: usize,
    seed: u64,
) -> Result<QuerySplit> {
    if n_validation + n_test >= queries.len() {
        return Err(Error::invalid(format!(
            "cannot hold out {n_validation} + {n_test} of {} queries",
            queries.len()
        )));
    }
    let mut all = queries.as_slice().to_vec();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = all.split_off(all.len() - n_test);
    let validation = all.split_off(all.len() - n_validation);
    Ok(QuerySplit {
        train: QuerySet::new(all)?,
        validation: QuerySet::new(validation)?,
        test: QuerySet::new(test)?,
    })
}
