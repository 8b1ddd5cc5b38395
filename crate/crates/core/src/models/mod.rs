//! Black-box models evaluated on normalized TF-IDF vectors.
//!
//! Models are bound to the local dictionary of the explained document:
//! inputs are dense TF-IDF coordinates in local dictionary order. Words
//! outside the local dictionary never occur in perturbed samples, so their
//! coordinates are always zero and need no slot.

pub mod dsl;

use std::collections::BTreeMap;
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::corpus::LocalDictionary;
use crate::error::{Error, Result};

/// A deterministic function of the local TF-IDF coordinates.
pub trait BlackBox: Sync {
    fn evaluate(&self, phi: &[f64]) -> f64;

    /// Known bound on `|f|` over the unit sphere, if any.
    fn bound(&self) -> Option<f64>;
}

/// `coefficient * prod_{j in J} 1{phi_j > 0}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorProduct {
    indices: Vec<usize>,
    pub coefficient: f64,
}

impl IndicatorProduct {
    pub fn new(mut indices: Vec<usize>, coefficient: f64) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices, coefficient }
    }

    pub fn constant(coefficient: f64) -> Self {
        Self::new(Vec::new(), coefficient)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `p = |J|`.
    pub fn order(&self) -> usize {
        self.indices.len()
    }

    pub fn eval_presence(&self, present: &[bool]) -> f64 {
        if self.indices.iter().all(|&j| present[j]) {
            self.coefficient
        } else {
            0.0
        }
    }
}

impl BlackBox for IndicatorProduct {
    fn evaluate(&self, phi: &[f64]) -> f64 {
        if self.indices.iter().all(|&j| phi[j] > 0.0) {
            self.coefficient
        } else {
            0.0
        }
    }

    fn bound(&self) -> Option<f64> {
        Some(self.coefficient.abs())
    }
}

/// A presence-based tree stored as its signed indicator expansion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeModel {
    pub terms: Vec<IndicatorProduct>,
}

impl TreeModel {
    /// Merges terms with equal index sets and drops zero coefficients.
    pub fn new(terms: impl IntoIterator<Item = IndicatorProduct>) -> Self {
        let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for t in terms {
            *merged.entry(t.indices).or_default() += t.coefficient;
        }
        let terms = merged.into_iter().filter(|(_, c)| *c != 0.0).map(|(j, c)| IndicatorProduct::new(j, c)).collect();
        Self { terms }
    }

    /// Parses a tree expression and binds it to `local`. Monomials mentioning
    /// a word outside the local dictionary are identically zero and dropped.
    pub fn from_spec(text: &str, local: &LocalDictionary) -> Result<Self> {
        let poly = dsl::parse(text)?.expand();
        let terms = poly.into_iter().filter_map(|(words, c)| {
            let idx: Option<Vec<usize>> = words.iter().map(|w| local.index_of(w)).collect();
            idx.map(|idx| IndicatorProduct::new(idx, c))
        });
        Ok(Self::new(terms))
    }

    pub fn eval_presence(&self, present: &[bool]) -> f64 {
        self.terms.iter().map(|t| t.eval_presence(present)).sum()
    }
}

impl BlackBox for TreeModel {
    fn evaluate(&self, phi: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.evaluate(phi)).sum()
    }

    fn bound(&self) -> Option<f64> {
        Some(self.terms.iter().map(|t| t.coefficient.abs()).sum())
    }
}

/// `sum_j lambda_j phi_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    /// Binds a `{word: coefficient}` map to `local`; words outside it are
    /// ignored, missing words get 0.
    pub fn from_word_map(map: &BTreeMap<String, f64>, local: &LocalDictionary) -> Self {
        Self::new(local.words().iter().map(|w| map.get(w).copied().unwrap_or(0.0)).collect())
    }

    pub fn read_json<R: Read>(reader: R, local: &LocalDictionary) -> Result<Self> {
        let map: BTreeMap<String, f64> = serde_json::from_reader(reader)?;
        Ok(Self::from_word_map(&map, local))
    }

    /// Coefficients drawn i.i.d. from `N(0, scale^2)`.
    pub fn gaussian(d: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(
            (0..d)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    scale * x
                })
                .collect::<Vec<f64>>(),
        )
    }

    pub fn word_map(&self, local: &LocalDictionary) -> BTreeMap<String, f64> {
        local.words().iter().cloned().zip(self.coefficients.iter().copied()).collect()
    }
}

impl BlackBox for LinearModel {
    fn evaluate(&self, phi: &[f64]) -> f64 {
        self.coefficients.iter().zip(phi).map(|(l, p)| l * p).sum()
    }

    fn bound(&self) -> Option<f64> {
        Some(self.coefficients.iter().map(|l| l * l).sum::<f64>().sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Indicator(IndicatorProduct),
    Tree(TreeModel),
    Linear(LinearModel),
    Combination { parts: Vec<(f64, Model)> },
}

impl Model {
    pub fn constant(value: f64) -> Self {
        Model::Indicator(IndicatorProduct::constant(value))
    }

    pub fn indicator(indices: Vec<usize>) -> Self {
        Model::Indicator(IndicatorProduct::new(indices, 1.0))
    }

    pub fn parse_tree(text: &str, local: &LocalDictionary) -> Result<Self> {
        Ok(Model::Tree(TreeModel::from_spec(text, local)?))
    }

    /// Indicator index of `word`, or an error naming it.
    pub fn word_indicator(word: &str, local: &LocalDictionary) -> Result<Self> {
        let j = local.index_of(word).ok_or_else(|| Error::UnknownWord(word.to_owned()))?;
        Ok(Self::indicator(vec![j]))
    }

    /// Signed indicator expansion, if the model is presence-based.
    pub fn indicator_terms(&self) -> Option<Vec<IndicatorProduct>> {
        match self {
            Model::Indicator(t) => Some(vec![t.clone()]),
            Model::Tree(t) => Some(t.terms.clone()),
            Model::Linear(_) => None,
            Model::Combination { parts } => {
                let mut out = Vec::new();
                for (a, m) in parts {
                    for mut t in m.indicator_terms()? {
                        t.coefficient *= a;
                        out.push(t);
                    }
                }
                Some(out)
            }
        }
    }

    /// Linear coefficients, if the model is linear in the TF-IDF vector.
    pub fn linear_coefficients(&self, d: usize) -> Option<Vec<f64>> {
        match self {
            Model::Linear(l) => Some(l.coefficients.clone()),
            Model::Indicator(_) | Model::Tree(_) => None,
            Model::Combination { parts } => {
                let mut out = vec![0.0; d];
                for (a, m) in parts {
                    for (o, l) in out.iter_mut().zip(m.linear_coefficients(d)?) {
                        *o += a * l;
                    }
                }
                Some(out)
            }
        }
    }
}

impl BlackBox for Model {
    fn evaluate(&self, phi: &[f64]) -> f64 {
        match self {
            Model::Indicator(m) => m.evaluate(phi),
            Model::Tree(m) => m.evaluate(phi),
            Model::Linear(m) => m.evaluate(phi),
            Model::Combination { parts } => parts.iter().map(|(a, m)| a * m.evaluate(phi)).sum(),
        }
    }

    fn bound(&self) -> Option<f64> {
        match self {
            Model::Indicator(m) => m.bound(),
            Model::Tree(m) => m.bound(),
            Model::Linear(m) => m.bound(),
            Model::Combination { parts } => parts.iter().map(|(a, m)| m.bound().map(|b| a.abs() * b)).sum(),
        }
    }
}

/// `sum_i a_i f_i`.
pub fn combine(models: impl IntoIterator<Item = (f64, Model)>) -> Model {
    Model::Combination { parts: models.into_iter().collect() }
}
