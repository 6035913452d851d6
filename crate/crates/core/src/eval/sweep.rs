use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{mrr_at, ndcg_at};
use crate::bm25::InvertedIndex;
use crate::budget::{rerank, run_queries, BudgetPlan};
use crate::corpus::{Corpus, Qrels, QuerySet};
use crate::error::{Error, Result};
use crate::model::CrossEncoder;

pub const DEFAULT_K_GRID: [usize; 10] = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000];
pub const LOW_LATENCY_CUTOFF_MS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "ndcg@10")]
    Ndcg10,
    #[serde(rename = "mrr@10")]
    Mrr10,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ndcg10 => "ndcg@10",
            Metric::Mrr10 => "mrr@10",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ndcg" | "ndcg@10" | "ndcg10" => Ok(Metric::Ndcg10),
            "mrr" | "mrr@10" | "mrr10" => Ok(Metric::Mrr10),
            _ => Err(Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub k: usize,
    pub mean_latency_ms: f64,
    pub metric_value: f64,
    pub metric_name: String,
}

/// Depth-`k` reranking of every query, timed end to end. The first
/// `warmup` queries are run once beforehand and not recorded.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    encoder: &CrossEncoder,
    corpus: &Corpus,
    index: &InvertedIndex,
    queries: &QuerySet,
    qrels: &Qrels,
    k_grid: &[usize],
    metric: Metric,
    warmup: usize,
) -> Result<Vec<TradeoffPoint>> {
    if k_grid.is_empty() || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("k grid must be non-empty and strictly ascending"));
    }
    if k_grid[0] < 1 || *k_grid.last().unwrap() > 1000 {
        return Err(Error::invalid("k grid values must lie in [1, 1000]"));
    }
    if queries.is_empty() {
        return Err(Error::invalid("sweep needs at least one query"));
    }
    let warm_plan = BudgetPlan::fixed(k_grid[k_grid.len() - 1]);
    for q in queries.iter().take(warmup) {
        rerank(encoder, corpus, index, q, &warm_plan, warm_plan.k_max.max(10))?;
    }
    let mut points = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let (run, lat) = run_queries(encoder, corpus, index, queries, &BudgetPlan::fixed(k), k.max(10), "sweep")?;
        let mean_latency_ms = lat.iter().map(|r| r.total_ms).sum::<f64>() / lat.len() as f64;
        let report = match metric {
            Metric::Ndcg10 => ndcg_at(&run, qrels, 10)?,
            Metric::Mrr10 => mrr_at(&run, qrels, 10)?,
        };
        log::info!("sweep k={k}: {:.3} ms, {} {:.4}", mean_latency_ms, metric.name(), report.mean);
        points.push(TradeoffPoint {
            k,
            mean_latency_ms,
            metric_value: report.mean,
            metric_name: metric.name().to_string(),
        });
    }
    Ok(points)
}

pub fn write_tradeoff_csv(points: &[TradeoffPoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "k,mean_latency_ms,metric")?;
    for p in points {
        writeln!(w, "{},{:.6},{:.6}", p.k, p.mean_latency_ms, p.metric_value)?;
    }
    Ok(())
}

pub fn save_tradeoff_csv(points: &[TradeoffPoint], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_tradeoff_csv(points, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub rank: usize,
    pub mean_p: f64,
    pub min_p: f64,
    pub max_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceProbe {
    pub rows: Vec<ConfidenceRow>,
    /// Queries with at least `depth` candidates; the others are skipped.
    pub n_queries: usize,
}

/// Relevance probability by rank after reranking the top `depth` BM25
/// candidates of each query.
pub fn probe_confidence(
    encoder: &CrossEncoder,
    corpus: &Corpus,
    index: &InvertedIndex,
    queries: &QuerySet,
    depth: usize,
) -> Result<ConfidenceProbe> {
    if depth == 0 {
        return Err(Error::invalid("probe depth must be >= 1"));
    }
    let mut per_rank: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut n_queries = 0;
    for q in queries.iter() {
        let cands = index.retrieve(&q.query_id, &q.text, depth)?;
        if cands.len() < depth {
            continue;
        }
        let docs: Vec<&str> = cands.entries.iter().map(|c| corpus.get(c.ordinal).text.as_str()).collect();
        let mut p = encoder.score_pairs(&q.text, &docs)?;
        p.sort_by(|a, b| b.total_cmp(a));
        for (r, v) in p.into_iter().enumerate() {
            per_rank[r].push(v);
        }
        n_queries += 1;
    }
    if n_queries == 0 {
        return Err(Error::invalid(format!("no query has {depth} candidates")));
    }
    let rows = per_rank
        .into_iter()
        .enumerate()
        .map(|(r, v)| ConfidenceRow {
            rank: r + 1,
            mean_p: v.iter().sum::<f64>() / v.len() as f64,
            min_p: v.iter().copied().fold(f64::INFINITY, f64::min),
            max_p: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    Ok(ConfidenceProbe { rows, n_queries })
}

pub fn write_confidence_csv(rows: &[ConfidenceRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "rank,mean_p,min_p,max_p")?;
    for r in rows {
        writeln!(w, "{},{:.6},{:.6},{:.6}", r.rank, r.mean_p, r.min_p, r.max_p)?;
    }
    Ok(())
}
