//! The analyzer shared by the BM25 index, the WordPiece pre-splitter and the
//! synthetic corpus generator.

/// Identifier stored in index headers so a reader can refuse an index built
/// with a different analyzer.
pub const ANALYZER_ID: &str = "lowercase-alnum-v1";

/// Lowercase and split on every non-alphanumeric character. No stemming, no
/// stopwords.
pub fn analyze(text: &str) -> Vec<String> {
    words(text).map(str::to_lowercase).collect()
}

pub(crate) fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
}
