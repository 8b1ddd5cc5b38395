//! Tokenization, corpus statistics and the normalized TF-IDF embedding.
//!
//! IDF values use the smoothed form `v_j = ln((N + 1) / (N_j + 1)) + 1`, and a
//! document's embedding is `m_j v_j` rescaled to unit Euclidean norm. Words
//! that never occur in the fitting corpus get `N_j = 0`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tokenized document.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl Document {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens, source_id: None }
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces. Re-tokenizing the result yields the
    /// same token sequence.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Splits text into maximal runs of alphanumeric characters. Case is
/// preserved and everything else acts as a separator.
pub fn tokenize(raw_text: &str) -> Document {
    let tokens = raw_text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_owned).collect();
    Document::new(tokens)
}

/// The document collection used to fit IDF values.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

#[derive(Deserialize)]
struct JsonLine {
    text: String,
    #[serde(default)]
    id: Option<serde_json::Value>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Self { documents }
    }

    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::new(texts.into_iter().map(|t| tokenize(t.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Document> {
        self.documents.get(index)
    }

    /// One document per line. Blank lines are kept as empty documents so
    /// that line indices stay stable.
    pub fn read_plain<R: Read>(reader: R) -> Result<Self> {
        let mut documents = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            documents.push(tokenize(&line?).with_source_id(format!("line:{i}")));
        }
        Ok(Self::new(documents))
    }

    /// JSON lines, each an object with a `"text"` field (and an optional
    /// `"id"`). Blank lines are skipped.
    pub fn read_jsonl<R: Read>(reader: R) -> Result<Self> {
        let mut documents = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: JsonLine = serde_json::from_str(&line)?;
            let id = match parsed.id {
                Some(serde_json::Value::String(s)) => s,
                Some(other) => other.to_string(),
                None => format!("line:{i}"),
            };
            documents.push(tokenize(&parsed.text).with_source_id(id));
        }
        Ok(Self::new(documents))
    }

    /// Loads a corpus file, choosing JSON lines for `.jsonl`/`.ndjson`
    /// extensions and plain text otherwise.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Self::read_jsonl(file),
            _ => Self::read_plain(file),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct IdfEntry {
    doc_count: usize,
    idf: f64,
}

/// Per-word document counts and smoothed IDF values.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    n_documents: usize,
    entries: BTreeMap<String, IdfEntry>,
}

/// Row of the serialized IDF table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfRecord {
    pub word: String,
    pub doc_count: usize,
    pub idf: f64,
}

#[derive(Serialize, Deserialize)]
struct IdfFile {
    n_documents: usize,
    entries: Vec<IdfRecord>,
}

pub fn smoothed_idf(n_documents: usize, doc_count: usize) -> f64 {
    ((n_documents as f64 + 1.0) / (doc_count as f64 + 1.0)).ln() + 1.0
}

/// Fits IDF values on a corpus. The vocabulary is the union of the distinct
/// words over all documents.
pub fn fit_idf(corpus: &Corpus) -> Result<IdfTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &corpus.documents {
        let mut seen: Vec<&str> = doc.tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            *counts.entry(w.to_owned()).or_default() += 1;
        }
    }
    let n = corpus.len();
    let entries = counts.into_iter().map(|(w, c)| (w, IdfEntry { doc_count: c, idf: smoothed_idf(n, c) })).collect();
    Ok(IdfTable { n_documents: n, entries })
}

impl IdfTable {
    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    pub fn vocabulary_size(&self) -> usize {
        self.entries.len()
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn doc_count(&self, word: &str) -> usize {
        self.entries.get(word).map_or(0, |e| e.doc_count)
    }

    /// IDF value of `word`; out-of-corpus words are treated as `N_j = 0`.
    pub fn idf(&self, word: &str) -> f64 {
        self.entries.get(word).map_or_else(|| smoothed_idf(self.n_documents, 0), |e| e.idf)
    }

    pub fn records(&self) -> Vec<IdfRecord> {
        self.entries.iter().map(|(w, e)| IdfRecord { word: w.clone(), doc_count: e.doc_count, idf: e.idf }).collect()
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let file = IdfFile { n_documents: self.n_documents, entries: self.records() };
        crate::report::write_json(writer, &file)
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let file: IdfFile = serde_json::from_reader(reader)?;
        if file.n_documents == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut entries = BTreeMap::new();
        for r in file.entries {
            if r.doc_count > file.n_documents {
                return Err(Error::invalid(format!(
                    "doc_count {} of `{}` exceeds n_documents {}",
                    r.doc_count, r.word, file.n_documents
                )));
            }
            entries.insert(r.word, IdfEntry { doc_count: r.doc_count, idf: r.idf });
        }
        Ok(Self { n_documents: file.n_documents, entries })
    }
}

/// The distinct words of a document in first-occurrence order, with their
/// multiplicities.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LocalDictionary {
    words: Vec<String>,
    counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub fn local_dictionary(doc: &Document) -> LocalDictionary {
    let mut words: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for t in &doc.tokens {
        match index.get(t) {
            Some(&i) => counts[i] += 1,
            None => {
                index.insert(t.clone(), words.len());
                words.push(t.clone());
                counts.push(1);
            }
        }
    }
    LocalDictionary { words, counts, index }
}

impl LocalDictionary {
    /// Number of distinct words `d`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Dense local coordinates of a sparse embedding. Coordinates of words
    /// outside the local dictionary are dropped.
    pub fn project(&self, v: &TfIdfVector) -> Vec<f64> {
        self.words.iter().map(|w| v.get(w)).collect()
    }
}

/// Normalized TF-IDF embedding, stored sparsely (absent words are 0).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfIdfVector {
    coords: BTreeMap<String, f64>,
}

impl TfIdfVector {
    pub fn get(&self, word: &str) -> f64 {
        self.coords.get(word).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.coords.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.coords.iter().map(|(w, v)| (w.as_str(), *v))
    }
}

/// `phi(doc)_j = m_j v_j / sqrt(sum_k m_k^2 v_k^2)`; the empty document maps
/// to the zero vector.
pub fn normalized_tfidf(doc: &Document, idf: &IdfTable) -> TfIdfVector {
    let local = local_dictionary(doc);
    let raw: Vec<f64> = local.words.iter().zip(&local.counts).map(|(w, &m)| m as f64 * idf.idf(w)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return TfIdfVector::default();
    }
    let coords = local.words.into_iter().zip(raw).map(|(w, x)| (w, x / norm)).collect();
    TfIdfVector { coords }
}

/// TF-IDF of one explained document restricted to its local dictionary.
///
/// Perturbed samples only ever contain words of the explained document, each
/// with its original multiplicity, so their embeddings are recovered from the
/// per-word masses `m_j v_j` and the set of surviving words.
#[derive(Debug, Clone)]
pub struct LocalTfIdf {
    dictionary: LocalDictionary,
    idf: Vec<f64>,
    mass: Vec<f64>,
    phi: Vec<f64>,
}

impl LocalTfIdf {
    pub fn new(doc: &Document, idf: &IdfTable) -> Result<Self> {
        if doc.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let dictionary = local_dictionary(doc);
        let idf_values: Vec<f64> = dictionary.words.iter().map(|w| idf.idf(w)).collect();
        let mass: Vec<f64> = dictionary.counts.iter().zip(&idf_values).map(|(&m, v)| m as f64 * v).collect();
        let norm = mass.iter().map(|x| x * x).sum::<f64>().sqrt();
        let phi = mass.iter().map(|x| x / norm).collect();
        Ok(Self { dictionary, idf: idf_values, mass, phi })
    }

    pub fn dictionary(&self) -> &LocalDictionary {
        &self.dictionary
    }

    pub fn d(&self) -> usize {
        self.dictionary.len()
    }

    pub fn words(&self) -> &[String] {
        self.dictionary.words()
    }

    pub fn idf_values(&self) -> &[f64] {
        &self.idf
    }

    /// `m_j v_j` for each local word.
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// `phi(xi)` in local coordinates.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Embedding of the sample whose surviving words are flagged in
    /// `present`, written into `out`. All-absent yields the zero vector.
    pub fn embed_into(&self, present: &[bool], out: &mut [f64]) {
        debug_assert_eq!(present.len(), self.d());
        debug_assert_eq!(out.len(), self.d());
        let sq: f64 = self.mass.iter().zip(present).filter(|(_, &p)| p).map(|(m, _)| m * m).sum();
        if sq == 0.0 {
            out.fill(0.0);
            return;
        }
        let inv = sq.sqrt().recip();
        for ((o, m), &p) in out.iter_mut().zip(&self.mass).zip(present) {
            *o = if p { m * inv } else { 0.0 };
        }
    }

    pub fn embed(&self, present: &[bool]) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        self.embed_into(present, &mut out);
        out
    }
}
