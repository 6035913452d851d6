//! Collections, queries, relevance judgments and TREC run files.
//!
//! All on-disk formats are the MSMARCO / TREC ones:
//!
//! * collection and queries: `id<TAB>text\n`
//! * qrels: `qid 0 docid grade`
//! * runs: `qid Q0 docid rank score tag`, six-decimal scores

mod run;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use run::{RunFile, RunRow};
pub use synthetic::{generate_synthetic, split_queries, term, term_vocabulary, QuerySplit, SyntheticConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

/// An ordered, id-unique set of passages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.doc_id.is_empty() {
                return Err(Error::invalid(format!("document {i} has an empty id")));
            }
            if d.text.is_empty() {
                return Err(Error::invalid(format!("document {} has empty text", d.doc_id)));
            }
            if by_id.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate doc_id {}", d.doc_id)));
            }
        }
        Ok(Corpus { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, ordinal: usize) -> &Document {
        &self.docs[ordinal]
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn by_id(&self, doc_id: &str) -> Option<&Document> {
        self.ordinal(doc_id).map(|i| &self.docs[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySet {
    queries: Vec<Query>,
}

impl QuerySet {
    pub fn new(queries: Vec<Query>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for q in &queries {
            if q.query_id.is_empty() {
                return Err(Error::invalid("query with empty id"));
            }
            if !seen.insert(q.query_id.as_str()) {
                return Err(Error::invalid(format!("duplicate query_id {}", q.query_id)));
            }
        }
        Ok(QuerySet { queries })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Query> {
        self.queries.iter()
    }

    pub fn as_slice(&self) -> &[Query] {
        &self.queries
    }
}

impl<'a> IntoIterator for &'a QuerySet {
    type Item = &'a Query;
    type IntoIter = std::slice::Iter<'a, Query>;
    fn into_iter(self) -> Self::IntoIter {
        self.queries.iter()
    }
}

/// Graded judgments. A pair that is not present has grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous grade when the pair was already judged.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(query_id.to_owned())
            .or_default()
            .insert(doc_id.to_owned(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    /// All judgments for one query, in doc_id order.
    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    /// Doc ids with grade >= 1 for the query.
    pub fn relevant(&self, query_id: &str) -> impl Iterator<Item = &str> {
        self.judgments
            .get(query_id)
            .into_iter()
            .flat_map(|m| m.iter().filter(|(_, &g)| g >= 1).map(|(d, _)| d.as_str()))
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, m)| m.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Judgments that point at queries or documents the loaded data lacks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub missing_docs: Vec<(String, String)>,
    pub missing_queries: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.missing_docs.is_empty() && self.missing_queries.is_empty()
    }
}

pub fn validate(corpus: &Corpus, queries: &QuerySet, qrels: &Qrels) -> ValidationReport {
    let known: std::collections::HashSet<&str> =
        queries.iter().map(|q| q.query_id.as_str()).collect();
    let mut report = ValidationReport::default();
    for qid in qrels.query_ids() {
        if !known.contains(qid) {
            report.missing_queries.push(qid.to_owned());
        }
    }
    for (q, d, _) in qrels.iter() {
        if corpus.ordinal(d).is_none() {
            report.missing_docs.push((q.to_owned(), d.to_owned()));
        }
    }
    report
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses `id<TAB>text` lines. Exactly one TAB per line.
fn parse_tsv_pairs(reader: impl Read, what: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::parse(what, i + 1, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let mut fields = line.split('\t');
        let (Some(id), Some(text), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(what, i + 1, "expected exactly two TAB-separated fields"));
        };
        out.push((id.to_owned(), text.to_owned()));
    }
    Ok(out)
}

pub fn read_collection(reader: impl Read) -> Result<Corpus> {
    let docs = parse_tsv_pairs(reader, "collection")?
        .into_iter()
        .map(|(doc_id, text)| Document { doc_id, text })
        .collect();
    Corpus::new(docs)
}

pub fn load_collection(path: &Path) -> Result<Corpus> {
    read_collection(open(path)?)
}

pub fn write_collection(corpus: &Corpus, mut w: impl Write) -> std::io::Result<()> {
    for d in corpus.docs() {
        writeln!(w, "{}\t{}", d.doc_id, d.text)?;
    }
    Ok(())
}

pub fn save_collection(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_collection(corpus, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_queries(reader: impl Read) -> Result<QuerySet> {
    let queries = parse_tsv_pairs(reader, "queries")?
        .into_iter()
        .map(|(query_id, text)| Query { query_id, text })
        .collect();
    QuerySet::new(queries)
}

pub fn load_queries(path: &Path) -> Result<QuerySet> {
    read_queries(open(path)?)
}

pub fn save_queries(queries: &QuerySet, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    (|| {
        for q in queries {
            writeln!(w, "{}\t{}", q.query_id, q.text)?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Result of parsing a qrels stream. `overwritten` lists the 1-based line
/// numbers whose (qid, docid) pair repeated an earlier line.
#[derive(Debug, Clone, Default)]
pub struct ParsedQrels {
    pub qrels: Qrels,
    pub overwritten: Vec<usize>,
}

pub fn parse_qrels(reader: impl Read) -> Result<ParsedQrels> {
    let mut parsed = ParsedQrels::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse("qrels", lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [qid, _, docid, grade] = fields[..] else {
            return Err(Error::parse("qrels", lineno, "expected `qid 0 docid grade`"));
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| Error::parse("qrels", lineno, format!("non-integer grade {grade:?}")))?;
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse("qrels", lineno, format!("negative grade {grade}")))?;
        if parsed.qrels.insert(qid, docid, grade).is_some() {
            log::warn!("qrels line {lineno}: duplicate judgment for ({qid}, {docid}), keeping the later one");
            parsed.overwritten.push(lineno);
        }
    }
    Ok(parsed)
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    Ok(parse_qrels(open(path)?)?.qrels)
}

pub fn write_qrels(qrels: &Qrels, mut w: impl Write) -> std::io::Result<()> {
    for (q, d, g) in qrels.iter() {
        writeln!(w, "{q} 0 {d} {g}")?;
    }
    Ok(())
}

pub fn save_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_qrels(qrels, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collection_two_lines() {
        let c = read_collection("d1\tfirst passage\nd2\tsecond one\n".as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(1).doc_id, "d2");
        assert_eq!(c.by_id("d1").unwrap().text, "first passage");
    }

    #[test]
    fn collection_missing_tab_names_line() {
        let err = read_collection("d1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = read_collection("d1\tok\nd2\ta\tb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn collection_duplicate_id() {
        assert!(read_collection("d1\ta\nd1\tb\n".as_bytes()).is_err());
    }

    #[test]
    fn collection_reserializes_bytes() {
        let src = "0\tThe first passage.\n1\tSecond, with punctuation!\n";
        let c = read_collection(src.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_collection(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), src);
        // CRLF input normalizes to LF.
        let c2 = read_collection(src.replace('\n', "\r\n").as_bytes()).unwrap();
        assert_eq!(c, c2);
    }

    #[test]
    fn qrels_basic() {
        let p = parse_qrels("q1 0 d1 3\n".as_bytes()).unwrap();
        assert_eq!(p.qrels.grade("q1", "d1"), 3);
        assert_eq!(p.qrels.grade("q1", "d9"), 0);
        assert!(parse_qrels("".as_bytes()).unwrap().qrels.is_empty());
    }

    #[test]
    fn qrels_rejects_bad_grades() {
        assert!(parse_qrels("q1 0 d1 -1\n".as_bytes()).is_err());
        assert!(parse_qrels("q1 0 d1 x\n".as_bytes()).is_err());
        assert!(parse_qrels("q1 0 d1\n".as_bytes()).is_err());
    }

    #[test]
    fn qrels_last_duplicate_wins() {
        let p = parse_qrels("q1 0 d1 1\nq1 0 d2 0\nq1 0 d1 2\n".as_bytes()).unwrap();
        assert_eq!(p.qrels.grade("q1", "d1"), 2);
        assert_eq!(p.overwritten, vec![3]);
        assert_eq!(p.qrels.relevant("q1").collect::<Vec<_>>(), ["d1"]);
    }

    #[test]
    fn validate_reports_dangling_judgments() {
        let c = read_collection("d1\ta\n".as_bytes()).unwrap();
        let q = read_queries("q1\tx\n".as_bytes()).unwrap();
        let qrels = parse_qrels("q1 0 d1 1\nq1 0 d7 1\nq2 0 d1 1\n".as_bytes())
            .unwrap()
            .qrels;
        let r = validate(&c, &q, &qrels);
        assert_eq!(r.missing_docs, vec![("q1".to_owned(), "d7".to_owned())]);
        assert_eq!(r.missing_queries, vec!["q2".to_owned()]);
    }
}
