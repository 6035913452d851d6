//! WordPiece tokenization and `[CLS] query [SEP] doc [SEP] [PAD]...` assembly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::words;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const MASK: &str = "[MASK]";
pub const CONTINUATION: &str = "##";

pub const DEFAULT_MAX_LEN: usize = 256;
const MAX_WORD_CHARS: usize = 100;

/// BERT-style vocabulary; a token's id is its zero-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    cls: u32,
    sep: u32,
    pad: u32,
    unk: u32,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            // Keeps the first id of a repeated token, like the reference BERT loader.
            ids.entry(t.clone()).or_insert(i as u32);
        }
        let special = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("vocabulary is missing {name}")))
        };
        Ok(Vocab {
            cls: special(CLS)?,
            sep: special(SEP)?,
            pad: special(PAD)?,
            unk: special(UNK)?,
            tokens,
            ids,
        })
    }

    /// Special tokens followed by the given whole-word terms.
    pub fn with_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].map(String::from).to_vec();
        tokens.extend(terms.into_iter().map(Into::into));
        Self::from_tokens(tokens).expect("specials present")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(
            text.lines()
                .map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.cls || id == self.sep || id == self.pad || id == self.unk
    }

    /// Greedy longest-match-first WordPiece. The pre-split is the shared
    /// analyzer (lowercase, split on non-alphanumerics); a word with any
    /// unmatchable remainder becomes a single `[UNK]`.
    pub fn wordpiece(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        let mut piece = String::new();
        for word in words(text) {
            let word = word.to_lowercase();
            if word.chars().count() > MAX_WORD_CHARS {
                out.push(self.unk);
                continue;
            }
            let mark = out.len();
            let mut start = 0;
            while start < word.len() {
                let mut end = word.len();
                let mut found = None;
                while end > start {
                    if !word.is_char_boundary(end) {
                        end -= 1;
                        continue;
                    }
                    piece.clear();
                    if start > 0 {
                        piece.push_str(CONTINUATION);
                    }
                    piece.push_str(&word[start..end]);
                    if let Some(id) = self.id(&piece) {
                        found = Some(id);
                        break;
                    }
                    end -= 1;
                }
                match found {
                    Some(id) => {
                        out.push(id);
                        start = end;
                    }
                    None => {
                        out.truncate(mark);
                        out.push(self.unk);
                        break;
                    }
                }
            }
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> Vec<&str> {
        self.wordpiece(text).into_iter().map(|id| self.token(id)).collect()
    }

    pub fn encode_pair(&self, query: &str, doc: &str, max_len: usize) -> EncodedPair {
        self.encode_ids(&self.wordpiece(query), &self.wordpiece(doc), max_len)
    }

    /// Assembles a pair from already-tokenized query and document ids.
    pub fn encode_ids(&self, query: &[u32], doc: &[u32], max_len: usize) -> EncodedPair {
        assert!(max_len >= 8, "max_len must be >= 8");
        let (q_keep, d_keep) = truncation(query.len(), doc.len(), max_len);
        let real = 3 + q_keep + d_keep;
        let mut token_ids = Vec::with_capacity(max_len);
        let mut segment_ids = Vec::with_capacity(max_len);
        token_ids.push(self.cls);
        token_ids.extend_from_slice(&query[..q_keep]);
        token_ids.push(self.sep);
        segment_ids.resize(token_ids.len(), 0);
        token_ids.extend_from_slice(&doc[..d_keep]);
        token_ids.push(self.sep);
        segment_ids.resize(token_ids.len(), 1);
        token_ids.resize(max_len, self.pad);
        segment_ids.resize(max_len, 0);
        let mut attention_mask = vec![1u8; real];
        attention_mask.resize(max_len, 0);
        EncodedPair {
            token_ids,
            segment_ids,
            attention_mask,
        }
    }
}

/// Kept (query, doc) token counts: document tokens go first, the query is
/// cut only when it alone overflows `max_len - 3`.
fn truncation(q: usize, d: usize, max_len: usize) -> (usize, usize) {
    let budget = max_len - 3;
    let q_keep = q.min(budget);
    (q_keep, d.min(budget - q_keep))
}

/// One model input row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of unmasked positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m == 1).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(extra: &[&str]) -> Vocab {
        Vocab::with_terms(extra.iter().copied())
    }

    #[test]
    fn load_six_line_vocab() {
        let v = Vocab::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\na\n##b\n").unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("##b"), Some(5));
        assert_eq!(v.cls_id(), 2);
    }

    #[test]
    fn vocab_missing_pad_fails() {
        assert!(Vocab::parse("[UNK]\n[CLS]\n[SEP]\na\n").is_err());
    }

    #[test]
    fn large_vocab_size() {
        let v = Vocab::with_terms((0..30522 - 5).map(|i| format!("t{i}")));
        assert_eq!(v.len(), 30522);
    }

    #[test]
    fn greedy_wordpiece() {
        let v = vocab(&["play", "##ing", "##in"]);
        assert_eq!(v.tokenize("playing"), ["play", "##ing"]);
        assert_eq!(v.tokenize("PLAYING, play!"), ["play", "##ing", "play"]);
        assert!(v.wordpiece("").is_empty());
    }

    #[test]
    fn unmatchable_word_is_single_unk() {
        let v = vocab(&["a", "play"]);
        assert_eq!(v.tokenize("qqq"), [UNK]);
        assert_eq!(v.tokenize("playx a"), [UNK, "a"]);
    }

    #[test]
    fn pair_layout() {
        let v = vocab(&["a", "b"]);
        let e = v.encode_pair("a", "b", 8);
        let (a, b) = (v.id("a").unwrap(), v.id("b").unwrap());
        let (cls, sep, pad) = (v.cls_id(), v.sep_id(), v.pad_id());
        assert_eq!(e.token_ids, vec![cls, a, sep, b, sep, pad, pad, pad]);
        assert_eq!(e.attention_mask, vec![1, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(e.segment_ids, vec![0, 0, 0, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn long_doc_is_truncated() {
        let v = vocab(&["a", "b"]);
        let doc = vec!["b"; 1000].join(" ");
        let e = v.encode_pair("a a", &doc, 128);
        assert_eq!(e.real_len(), 128);
        assert_eq!(e.token_ids[127], v.sep_id());
        assert_eq!(e.len(), 128);
    }

    #[test]
    fn doc_is_cut_before_query() {
        let v = vocab(&["a", "b"]);
        let count = |e: &EncodedPair, t: &str| {
            e.token_ids.iter().filter(|&&x| x == v.id(t).unwrap()).count()
        };
        let e = v.encode_pair(&vec!["a"; 20].join(" "), &vec!["b"; 100].join(" "), 64);
        assert_eq!((count(&e, "a"), count(&e, "b")), (20, 41));
        let e = v.encode_pair(&vec!["a"; 300].join(" "), "b b", 64);
        assert_eq!((count(&e, "a"), count(&e, "b")), (61, 0));
        assert_eq!(e.real_len(), 64);
    }

    proptest! {
        #[test]
        fn encoded_pair_invariants(
            q in proptest::collection::vec(0usize..4, 0..40),
            d in proptest::collection::vec(0usize..4, 0..300),
            max_len in 8usize..200,
        ) {
            let words = ["alpha", "beta", "gamma", "delta"];
            let v = Vocab::with_terms(["alpha", "beta", "gam", "##ma"]);
            let qs: Vec<&str> = q.iter().map(|&i| words[i]).collect();
            let ds: Vec<&str> = d.iter().map(|&i| words[i]).collect();
            let (qt, dt) = (v.wordpiece(&qs.join(" ")), v.wordpiece(&ds.join(" ")));
            let e = v.encode_pair(&qs.join(" "), &ds.join(" "), max_len);
            prop_assert_eq!(e.token_ids.len(), max_len);
            prop_assert_eq!(e.segment_ids.len(), max_len);
            prop_assert_eq!(e.attention_mask.len(), max_len);
            prop_assert_eq!(e.token_ids[0], v.cls_id());
            let real = e.real_len();
            prop_assert!(e.attention_mask[real..].iter().all(|&m| m == 0));
            let seps = e.token_ids[..real].iter().filter(|&&t| t == v.sep_id()).count();
            prop_assert_eq!(seps, 2);
            prop_assert_eq!(e.token_ids[real - 1], v.sep_id());
            // Kept tokens are prefixes of the query and doc token streams.
            let first_sep = e.token_ids.iter().position(|&t| t == v.sep_id()).unwrap();
            let kept_q = &e.token_ids[1..first_sep];
            let kept_d = &e.token_ids[first_sep + 1..real - 1];
            prop_assert_eq!(real, 3 + kept_q.len() + kept_d.len());
            prop_assert!(qt.starts_with(kept_q));
            prop_assert!(dt.starts_with(kept_d));
            prop_assert!(e.segment_ids[..=first_sep].iter().all(|&s| s == 0));
            prop_assert!(e.segment_ids[first_sep + 1..real].iter().all(|&s| s == 1));
        }

        #[test]
        fn decoding_reproduces_word_prefix(ws in proptest::collection::vec(0usize..4, 1..30)) {
            let words = ["alpha", "beta", "gamma", "delta"];
            let v = Vocab::with_terms(["alpha", "beta", "gam", "##ma", "del", "##ta"]);
            let text = ws.iter().map(|&i| words[i]).collect::<Vec<_>>().join(" ");
            let e = v.encode_pair("", &text, 20);
            let real = e.real_len();
            let mut words_out: Vec<String> = Vec::new();
            for &id in &e.token_ids[2..real - 1] {
                let t = v.token(id);
                match t.strip_prefix(CONTINUATION) {
                    Some(rest) => words_out.last_mut().unwrap().push_str(rest),
                    None => words_out.push(t.to_owned()),
                }
            }
            let input: Vec<String> = crate::text::analyze(&text);
            // The last word may have been cut mid-piece.
            let n = words_out.len();
            if n > 0 {
                prop_assert_eq!(&words_out[..n - 1], &input[..n - 1]);
                prop_assert!(input[n - 1].starts_with(&words_out[n - 1]));
            }
        }
    }
}
