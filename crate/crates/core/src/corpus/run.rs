use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub query_id: String,
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

/// A TREC run. Within a query, ranks are 1..n in file order and scores do
/// not increase with rank.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    rows: Vec<RunRow>,
}

impl RunFile {
    pub fn new(rows: Vec<RunRow>) -> Result<Self> {
        let run = RunFile { rows };
        run.check()?;
        Ok(run)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[RunRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends one query's ranked list; ranks are assigned 1..n from the
    /// entry order.
    pub fn push_ranking<'a>(
        &mut self,
        query_id: &str,
        entries: impl IntoIterator<Item = (&'a str, f64)>,
        tag: &str,
    ) -> Result<()> {
        if self.rows.iter().any(|r| r.query_id == query_id) {
            return Err(Error::invalid(format!("query {query_id} already in run")));
        }
        let mut prev = f64::INFINITY;
        for (i, (doc_id, score)) in entries.into_iter().enumerate() {
            if score > prev {
                return Err(Error::invalid(format!(
                    "query {query_id}: score increases at rank {}",
                    i + 1
                )));
            }
            prev = score;
            self.rows.push(RunRow {
                query_id: query_id.to_owned(),
                doc_id: doc_id.to_owned(),
                rank: i as u32 + 1,
                score,
                tag: tag.to_owned(),
            });
        }
        Ok(())
    }

    /// Rows grouped per query, each group in rank order.
    pub fn by_query(&self) -> BTreeMap<&str, Vec<&RunRow>> {
        let mut map: BTreeMap<&str, Vec<&RunRow>> = BTreeMap::new();
        for r in &self.rows {
            map.entry(r.query_id.as_str()).or_default().push(r);
        }
        for rows in map.values_mut() {
            rows.sort_by_key(|r| r.rank);
        }
        map
    }

    fn check(&self) -> Result<()> {
        let mut next_rank: BTreeMap<&str, (u32, f64)> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            let (expected, prev_score) = next_rank
                .entry(r.query_id.as_str())
                .or_insert((1, f64::INFINITY));
            if r.rank != *expected {
                return Err(Error::parse(
                    "run",
                    i + 1,
                    format!("query {} expected rank {expected}, found {}", r.query_id, r.rank),
                ));
            }
            if r.score > *prev_score {
                return Err(Error::parse(
                    "run",
                    i + 1,
                    format!("query {}: score increases at rank {}", r.query_id, r.rank),
                ));
            }
            *expected += 1;
            *prev_score = r.score;
        }
        Ok(())
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.rows {
            writeln!(
                w,
                "{} Q0 {} {} {:.6} {}",
                r.query_id, r.doc_id, r.rank, r.score, r.tag
            )?;
        }
        Ok(())
    }

    pub fn read(reader: impl Read) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::parse("run", i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [qid, _, docid, rank, score, tag] = f[..] else {
                return Err(Error::parse("run", i + 1, "expected 6 whitespace-separated fields"));
            };
            let rank = rank
                .parse()
                .map_err(|_| Error::parse("run", i + 1, format!("bad rank {rank:?}")))?;
            let score: f64 = score
                .parse()
                .map_err(|_| Error::parse("run", i + 1, format!("bad score {score:?}")))?;
            rows.push(RunRow {
                query_id: qid.to_owned(),
                doc_id: docid.to_owned(),
                rank,
                score,
                tag: tag.to_owned(),
            });
        }
        RunFile::new(rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = File::create(path)
            .map(BufWriter::new)
            .map_err(|e| Error::io(path, e))?;
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(q: &str, d: &str, rank: u32, score: f64) -> RunRow {
        RunRow {
            query_id: q.into(),
            doc_id: d.into(),
            rank,
            score,
            tag: "tag".into(),
        }
    }

    #[test]
    fn single_row_format() {
        let run = RunFile::new(vec![row("q1", "d1", 1, 2.5)]).unwrap();
        let mut out = Vec::new();
        run.write(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "q1 Q0 d1 1 2.500000 tag\n");
    }

    #[test]
    fn three_row_round_trip() {
        let run = RunFile::new(vec![
            row("q1", "d1", 1, 2.5),
            row("q1", "d2", 2, 1.25),
            row("q2", "d1", 1, -0.125),
        ])
        .unwrap();
        let mut out = Vec::new();
        run.write(&mut out).unwrap();
        assert_eq!(RunFile::read(&out[..]).unwrap(), run);
    }

    #[test]
    fn rank_gap_is_rejected() {
        let text = "q1 Q0 d1 1 2.0 t\nq1 Q0 d2 3 1.0 t\n";
        assert!(RunFile::read(text.as_bytes()).is_err());
    }

    #[test]
    fn increasing_score_is_rejected() {
        assert!(RunFile::new(vec![row("q1", "a", 1, 1.0), row("q1", "b", 2, 2.0)]).is_err());
    }

    proptest! {
        // write . read . write is a fixed point at six-decimal precision.
        #[test]
        fn write_read_write_is_stable(scores in proptest::collection::vec(-1e4f64..1e4, 1..20)) {
            let mut scores = scores;
            scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut run = RunFile::empty();
            let ids: Vec<String> = (0..scores.len()).map(|i| format!("d{i}")).collect();
            run.push_ranking("q", ids.iter().map(String::as_str).zip(scores.iter().copied()), "t").unwrap();
            let mut a = Vec::new();
            run.write(&mut a).unwrap();
            let back = RunFile::read(&a[..]).unwrap();
            let mut b = Vec::new();
            back.write(&mut b).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
