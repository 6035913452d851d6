//! Fixtures shared by the benchmarks.

use latrank::bm25::InvertedIndex;
use latrank::corpus::{term_vocabulary, Corpus, QuerySet, SyntheticConfig};
use latrank::model::{CrossEncoder, ModelConfig, ModelParams};
use latrank::tokenizer::Vocab;

pub struct Fixture {
    pub corpus: Corpus,
    pub queries: QuerySet,
    pub index: InvertedIndex,
    pub encoder: CrossEncoder,
}

/// Synthetic collection plus an untrained 2-layer, d=64 encoder.
pub fn fixture(n_docs: usize) -> Fixture {
    let (corpus, queries, _) = SyntheticConfig::new(7, n_docs, 50, 200, 3).generate().expect("synthetic task");
    let index = InvertedIndex::build(&corpus).expect("index");
    let vocab = Vocab::with_terms(term_vocabulary(200));
    let model = ModelConfig {
        n_layers: 2,
        d_model: 64,
        n_heads: 2,
        d_ff: 256,
        vocab_size: vocab.len(),
        max_len: 64,
        type_vocab_size: 2,
        dropout: 0.1,
    };
    let params = ModelParams::init(model, 7).expect("params");
    let encoder = CrossEncoder::new(params, vocab, 64, 8).expect("encoder");
    Fixture {
        corpus,
        queries,
        index,
        encoder,
    }
}
