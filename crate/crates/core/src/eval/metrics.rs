use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::{Qrels, RunFile};
use crate::error::{Error, Result};

/// Per-query values and their mean over the evaluated queries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub cutoff: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Run queries whose judgments contain no relevant document.
    pub no_relevant: Vec<String>,
    /// Run queries missing from the qrels entirely.
    pub unjudged: Vec<String>,
}

impl MetricReport {
    pub fn n_queries(&self) -> usize {
        self.per_query.len()
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

/// NDCG of one ranked list; `None` when `judged` has no relevant document.
pub fn ndcg_of_ranking<S: AsRef<str>>(
    ranking: &[S],
    judged: &BTreeMap<String, u32>,
    cutoff: usize,
) -> Option<f64> {
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(cutoff).enumerate().map(|(i, &g)| gain(g) / discount(i + 1)).sum();
    let dcg: f64 = ranking
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, d)| gain(judged.get(d.as_ref()).copied().unwrap_or(0)) / discount(i + 1))
        .sum();
    Some(dcg / idcg)
}

/// Reciprocal rank of the first relevant document within `cutoff`.
pub fn rr_of_ranking<S: AsRef<str>>(
    ranking: &[S],
    judged: &BTreeMap<String, u32>,
    cutoff: usize,
) -> Option<f64> {
    if !judged.values().any(|&g| g > 0) {
        return None;
    }
    Some(
        ranking
            .iter()
            .take(cutoff)
            .position(|d| judged.get(d.as_ref()).is_some_and(|&g| g > 0))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64),
    )
}

type PerList = fn(&[&str], &BTreeMap<String, u32>, usize) -> Option<f64>;

fn evaluate(name: &str, run: &RunFile, qrels: &Qrels, cutoff: usize, f: PerList) -> Result<MetricReport> {
    if cutoff == 0 {
        return Err(Error::invalid("metric cutoff must be >= 1"));
    }
    let mut per_query = BTreeMap::new();
    let mut no_relevant = Vec::new();
    let mut unjudged = Vec::new();
    for (qid, rows) in run.by_query() {
        let Some(judged) = qrels.for_query(qid) else {
            log::warn!("query {qid} has no judgments; excluded from {name}");
            unjudged.push(qid.to_string());
            continue;
        };
        let ranking: Vec<&str> = rows.iter().map(|r| r.doc_id.as_str()).collect();
        match f(&ranking, judged, cutoff) {
            Some(v) => {
                per_query.insert(qid.to_string(), v);
            }
            None => no_relevant.push(qid.to_string()),
        }
    }
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    Ok(MetricReport {
        name: format!("{name}@{cutoff}"),
        cutoff,
        per_query,
        mean,
        no_relevant,
        unjudged,
    })
}

/// Exponential-gain NDCG over each query's run order.
pub fn ndcg_at(run: &RunFile, qrels: &Qrels, cutoff: usize) -> Result<MetricReport> {
    evaluate("ndcg", run, qrels, cutoff, |r, j, c| ndcg_of_ranking(r, j, c))
}

pub fn mrr_at(run: &RunFile, qrels: &Qrels, cutoff: usize) -> Result<MetricReport> {
    evaluate("mrr", run, qrels, cutoff, |r, j, c| rr_of_ranking(r, j, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judged(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ndcg_hand_values() {
        let j = judged(&[("a", 1)]);
        assert_eq!(ndcg_of_ranking(&["a", "b"], &j, 10), Some(1.0));
        let v = ndcg_of_ranking(&["b", "a"], &j, 10).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert_eq!(ndcg_of_ranking(&["b", "a"], &j, 1), Some(0.0));
        assert_eq!(ndcg_of_ranking(&["a"], &judged(&[("a", 0)]), 10), None);
    }

    #[test]
    fn rr_hand_values() {
        let j = judged(&[("c", 2)]);
        assert_eq!(rr_of_ranking(&["a", "b", "c"], &j, 10), Some(1.0 / 3.0));
        assert_eq!(rr_of_ranking(&["a", "b", "c"], &j, 2), Some(0.0));
        assert_eq!(rr_of_ranking(&["c"], &j, 10), Some(1.0));
    }

    #[test]
    fn report_excludes_queries() {
        let mut run = RunFile::empty();
        run.push_ranking("q1", [("a", 2.0), ("b", 1.0)], "t").unwrap();
        run.push_ranking("q2", [("a", 1.0)], "t").unwrap();
        run.push_ranking("q3", [("x", 1.0)], "t").unwrap();
        let mut qrels = Qrels::new();
        qrels.insert("q1", "b", 1);
        qrels.insert("q2", "a", 0);
        let r = ndcg_at(&run, &qrels, 10).unwrap();
        assert_eq!(r.n_queries(), 1);
        assert_eq!(r.no_relevant, vec!["q2".to_string()]);
        assert_eq!(r.unjudged, vec!["q3".to_string()]);
        assert!((r.mean - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!(ndcg_at(&run, &qrels, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn ndcg_bounded_and_ideal_order_scores_one(grades in proptest::collection::vec(0u32..4, 1..12)) {
            let j: BTreeMap<String, u32> = grades.iter().enumerate().map(|(i, &g)| (format!("d{i}"), g)).collect();
            let ids: Vec<String> = j.keys().cloned().collect();
            let mut ideal = ids.clone();
            ideal.sort_by_key(|d| std::cmp::Reverse(j[d]));
            match ndcg_of_ranking(&ids, &j, 10) {
                None => proptest::prop_assert!(grades.iter().all(|&g| g == 0)),
                Some(v) => {
                    proptest::prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
                    let best = ndcg_of_ranking(&ideal, &j, 10).unwrap();
                    proptest::prop_assert!((best - 1.0).abs() < 1e-12);
                    let rr = rr_of_ranking(&ids, &j, 10).unwrap();
                    proptest::prop_assert!((0.0..=1.0).contains(&rr));
                }
            }
        }
    }
}
