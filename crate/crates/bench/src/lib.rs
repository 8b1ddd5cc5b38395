//! Shared fixtures for the benchmarks.

use textlime::verify::data::{bundled_corpus, REFERENCE_DOCUMENT};
use textlime::{fit_idf, LocalTfIdf, Model};

pub const TREE: &str = "\"food\" + (1 - \"food\") * \"about\" * \"Everything\"";

/// Local embedding of the bundled 30-word reference document.
pub fn reference_document() -> LocalTfIdf {
    let corpus = bundled_corpus();
    let idf = fit_idf(&corpus).expect("bundled corpus is not empty");
    LocalTfIdf::new(&corpus.documents[REFERENCE_DOCUMENT], &idf).expect("reference document is not empty")
}

pub fn reference_tree(local: &LocalTfIdf) -> Model {
    Model::parse_tree(TREE, local.dictionary()).expect("valid expression")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let local = reference_document();
        assert_eq!(local.d(), 30);
        assert!(reference_tree(&local).indicator_terms().is_some());
    }
}
