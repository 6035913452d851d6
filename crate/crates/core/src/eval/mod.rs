//! Ranking metrics, the rerank-depth sweep, the confidence probe and the
//! tradeoff plot.

mod metrics;
mod plot;
mod sweep;

pub use metrics::{mrr_at, ndcg_at, ndcg_of_ranking, rr_of_ranking, MetricReport};
pub use plot::{plot_tradeoff, PlotLayout, Series};
pub use sweep::{
    probe_confidence, save_tradeoff_csv, sweep, write_confidence_csv, write_tradeoff_csv, ConfidenceProbe,
    ConfidenceRow, Metric, TradeoffPoint, DEFAULT_K_GRID, LOW_LATENCY_CUTOFF_MS,
};
