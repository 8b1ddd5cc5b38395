//! A small bundled corpus of restaurant-review-style sentences.

use crate::corpus::Corpus;

const REVIEWS: &str = include_str!("../../data/reviews.txt");

/// Line index of a document with 30 distinct words that contains "food",
/// "about", "Everything", "bad", "character" and "came".
pub const REFERENCE_DOCUMENT: usize = 0;

/// Line index of a document with 18 distinct words, each occurring once.
pub const EIGHTEEN_WORD_DOCUMENT: usize = 1;

pub fn bundled_text() -> &'static str {
    REVIEWS
}

pub fn bundled_corpus() -> Corpus {
    Corpus::read_plain(REVIEWS.as_bytes()).expect("bundled corpus is valid UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::local_dictionary;

    #[test]
    fn documented_shapes() {
        let corpus = bundled_corpus();
        assert_eq!(corpus.len(), 40);
        let reference = local_dictionary(&corpus.documents[REFERENCE_DOCUMENT]);
        assert_eq!(reference.len(), 30);
        for w in ["food", "about", "Everything", "bad", "character", "came"] {
            assert!(reference.index_of(w).is_some(), "{w}");
        }
        let small = local_dictionary(&corpus.documents[EIGHTEEN_WORD_DOCUMENT]);
        assert_eq!(small.len(), 18);
        assert!(small.counts().iter().all(|&m| m == 1));
    }
}
