//! Exact top-k Okapi BM25 over an in-memory inverted index.
//!
//! Scoring uses the non-negative idf `ln((N - df + 0.5) / (df + 0.5) + 1)`
//! with `k1 = 1.2`, `b = 0.75`. Repeated query terms contribute once per
//! occurrence. Ranking ties are broken by ascending doc_id.
//!
//! # On-disk layout
//!
//! All integers little-endian.
//!
//! ```text
//! magic        8 bytes  "LRBM25\0\0"
//! header_len   u32
//! header       JSON {"format_version", "n_docs", "n_terms", "analyzer", "k1", "b"}
//! docs         n_docs x { id_len u32, id bytes, doc_len u32 }
//! terms        n_terms x { term_len u32, term bytes, n u32, n x { ordinal u32, tf u32 } }
//! ```
//!
//! Terms are stored in byte order, so equal corpora give equal files.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::{analyze, ANALYZER_ID};

pub const INDEX_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"LRBM25\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    doc_ids: Vec<String>,
    params: Bm25Params,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub doc_id: String,
    pub ordinal: usize,
    pub score: f64,
}

/// First-stage results for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub query_id: String,
    pub entries: Vec<Candidate>,
}

impl Candidates {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    n_docs: u32,
    n_terms: u32,
    analyzer: String,
    k1: f64,
    b: f64,
}

/// Heap entry ordered by "goodness": higher score, then smaller doc id.
struct Ranked<'a> {
    score: f64,
    doc_id: &'a str,
    ordinal: u32,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.doc_id.cmp(self.doc_id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Result<Self> {
        Self::build_with(corpus, Bm25Params::default())
    }

    pub fn build_with(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("cannot index an empty corpus"));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        for (ord, doc) in corpus.docs().iter().enumerate() {
            let terms = analyze(&doc.text);
            if terms.is_empty() {
                log::warn!("document {} has no indexable terms", doc.doc_id);
            }
            doc_lengths.push(terms.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push(Posting {
                    ordinal: ord as u32,
                    tf: n,
                });
            }
        }
        let doc_ids = corpus.docs().iter().map(|d| d.doc_id.clone()).collect();
        Ok(Self::assemble(postings, doc_lengths, doc_ids, params))
    }

    fn assemble(
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lengths: Vec<u32>,
        doc_ids: Vec<String>,
        params: Bm25Params,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        InvertedIndex {
            postings,
            doc_lengths,
            avg_doc_length,
            doc_ids,
            params,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn doc_id(&self, ordinal: usize) -> &str {
        &self.doc_ids[ordinal]
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn n_terms(&self) -> usize {
        self.postings.len()
    }

    /// Ordinals of documents that analyzed to zero terms.
    pub fn zero_length_docs(&self) -> Vec<usize> {
        (0..self.n_docs())
            .filter(|&i| self.doc_lengths[i] == 0)
            .collect()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.n_docs() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * doc_len as f64 / self.avg_doc_length;
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    pub fn retrieve(&self, query_id: &str, query_text: &str, k: usize) -> Result<Candidates> {
        if k == 0 {
            return Err(Error::invalid("retrieve: k must be >= 1"));
        }
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in analyze(query_text) {
            let list = self.postings(&term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for p in list {
                let w = idf * self.term_weight(p.tf, self.doc_lengths[p.ordinal as usize]);
                *acc.entry(p.ordinal).or_default() += w;
            }
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for (ordinal, score) in acc {
            if score <= 0.0 {
                continue;
            }
            heap.push(Reverse(Ranked {
                score,
                doc_id: &self.doc_ids[ordinal as usize],
                ordinal,
            }));
            if heap.len() > k {
                heap.pop();
            }
        }
        // Ascending order of Reverse(goodness) is best first.
        let entries = heap
            .into_sorted_vec()
            .into_iter()
            .map(|Reverse(r)| Candidate {
                doc_id: r.doc_id.to_owned(),
                ordinal: r.ordinal as usize,
                score: r.score,
            })
            .collect();
        Ok(Candidates {
            query_id: query_id.to_owned(),
            entries,
        })
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = serde_json::to_vec(&Header {
            format_version: INDEX_FORMAT_VERSION,
            n_docs: self.n_docs() as u32,
            n_terms: self.postings.len() as u32,
            analyzer: ANALYZER_ID.to_owned(),
            k1: self.params.k1,
            b: self.params.b,
        })?;
        w.write_all(MAGIC)?;
        write_u32(&mut w, header.len() as u32)?;
        w.write_all(&header)?;
        for (id, &len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            write_bytes(&mut w, id.as_bytes())?;
            write_u32(&mut w, len)?;
        }
        for (term, list) in &self.postings {
            write_bytes(&mut w, term.as_bytes())?;
            write_u32(&mut w, list.len() as u32)?;
            for p in list {
                write_u32(&mut w, p.ordinal)?;
                write_u32(&mut w, p.tf)?;
            }
        }
        Ok(())
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let fmt = |e: std::io::Error| Error::Format(format!("index: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MAGIC {
            return Err(Error::Format("index: bad magic".into()));
        }
        let hlen = read_u32(&mut r).map_err(fmt)? as usize;
        let mut hbytes = vec![0u8; hlen];
        r.read_exact(&mut hbytes).map_err(fmt)?;
        let header: Header = serde_json::from_slice(&hbytes)?;
        if header.format_version != INDEX_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "index format version {} (expected {INDEX_FORMAT_VERSION})",
                header.format_version
            )));
        }
        if header.analyzer != ANALYZER_ID {
            return Err(Error::Format(format!("index built with analyzer {}", header.analyzer)));
        }
        if header.n_docs == 0 {
            return Err(Error::Format("index has no documents".into()));
        }
        let n_docs = header.n_docs as usize;
        let mut doc_ids = Vec::with_capacity(n_docs);
        let mut doc_lengths = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_ids.push(read_string(&mut r).map_err(fmt)?);
            doc_lengths.push(read_u32(&mut r).map_err(fmt)?);
        }
        let mut postings = BTreeMap::new();
        for _ in 0..header.n_terms {
            let term = read_string(&mut r).map_err(fmt)?;
            let n = read_u32(&mut r).map_err(fmt)? as usize;
            let mut list = Vec::with_capacity(n.min(n_docs));
            let mut prev = None;
            for _ in 0..n {
                let ordinal = read_u32(&mut r).map_err(fmt)?;
                let tf = read_u32(&mut r).map_err(fmt)?;
                if ordinal as usize >= n_docs || prev.is_some_and(|p| p >= ordinal) {
                    return Err(Error::Format(format!("index: bad posting for {term:?}")));
                }
                prev = Some(ordinal);
                list.push(Posting { ordinal, tf });
            }
            postings.insert(term, list);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(fmt)? != 0 {
            return Err(Error::Format("index: trailing bytes".into()));
        }
        let params = Bm25Params {
            k1: header.k1,
            b: header.b,
        };
        Ok(Self::assemble(postings, doc_lengths, doc_ids, params))
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
        Self::read(File::open(path).map_err(|e| Error::io(path, e))?)
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_bytes(w: &mut impl Write, b: &[u8]) -> std::io::Result<()> {
    write_u32(w, b.len() as u32)?;
    w.write_all(b)
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut impl Read) -> std::io::Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "string too long"));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_collection, Document};

    fn corpus(docs: &[(&str, &str)]) -> Corpus {
        Corpus::new(
            docs.iter()
                .map(|(id, t)| Document {
                    doc_id: id.to_string(),
                    text: t.to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn postings_for_shared_term() {
        let idx = InvertedIndex::build(&corpus(&[("d1", "a b"), ("d2", "b c")])).unwrap();
        assert_eq!(idx.postings("b").len(), 2);
        assert_eq!(idx.postings("a"), &[Posting { ordinal: 0, tf: 1 }]);
        assert_eq!(idx.avg_doc_length(), 2.0);
    }

    #[test]
    fn termless_doc_is_indexed_with_zero_length() {
        let idx = InvertedIndex::build(&corpus(&[("d1", "a"), ("d2", "-- !!"), ("d3", "b")])).unwrap();
        assert_eq!(idx.n_docs(), 3);
        assert_eq!(idx.zero_length_docs(), vec![1]);
    }

    #[test]
    fn single_doc_hand_score() {
        let idx = InvertedIndex::build(&corpus(&[("d1", "apple")])).unwrap();
        let c = idx.retrieve("q", "apple", 10).unwrap();
        // N=1, df=1: idf = ln(0.5/1.5 + 1) = ln(4/3); tf part = 2.2/(1+1.2) = 1.
        let expected = (4.0f64 / 3.0).ln();
        assert_eq!(c.entries.len(), 1);
        assert_eq!(c.entries[0].doc_id, "d1");
        assert!((c.entries[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_or_empty_query_is_empty() {
        let idx = InvertedIndex::build(&corpus(&[("d1", "apple pie")])).unwrap();
        assert!(idx.retrieve("q", "zzz", 10).unwrap().is_empty());
        assert!(idx.retrieve("q", "?!", 10).unwrap().is_empty());
        assert!(idx.retrieve("q", "apple", 0).is_err());
    }

    #[test]
    fn ties_by_ascending_doc_id() {
        let idx = InvertedIndex::build(&corpus(&[("z", "x y"), ("a", "x y"), ("m", "x y")])).unwrap();
        let ids: Vec<_> = idx
            .retrieve("q", "x", 3)
            .unwrap()
            .entries
            .into_iter()
            .map(|c| c.doc_id)
            .collect();
        assert_eq!(ids, ["a", "m", "z"]);
    }

    #[test]
    fn serialization_round_trip_and_version_check() {
        let c = read_collection("d1\tthe cat sat\nd2\tthe dog ran far\n".as_bytes()).unwrap();
        let idx = InvertedIndex::build(&c).unwrap();
        let mut a = Vec::new();
        idx.write(&mut a).unwrap();
        let back = InvertedIndex::read(&a[..]).unwrap();
        assert_eq!(back, idx);
        let mut b = Vec::new();
        InvertedIndex::build(&c).unwrap().write(&mut b).unwrap();
        assert_eq!(a, b);

        let mut bad = a.clone();
        let hlen = u32::from_le_bytes(bad[8..12].try_into().unwrap()) as usize;
        let header = String::from_utf8(bad[12..12 + hlen].to_vec()).unwrap();
        let patched = header.replace("\"format_version\":1", "\"format_version\":9");
        bad.splice(12..12 + hlen, patched.into_bytes());
        assert!(matches!(InvertedIndex::read(&bad[..]), Err(Error::Format(_))));
        assert!(InvertedIndex::read(&a[..a.len() - 3]).is_err());
    }
}
