//! Text LIME from scratch: TF-IDF embedding, perturbation sampling, kernel
//! weighting and the weighted least-squares surrogate, together with the
//! closed-form limit explanations the surrogate concentrates on and a
//! harness that compares the two.
//!
//! ```
//! use textlime::{explain, fit_idf, tokenize, Bandwidth, Corpus, ExplainConfig, LocalTfIdf, Model};
//!
//! let corpus = Corpus::from_texts(["the food was good", "bad service", "good food"]);
//! let idf = fit_idf(&corpus).unwrap();
//! let doc = tokenize("the food was good");
//! let local = LocalTfIdf::new(&doc, &idf).unwrap();
//! let model = Model::parse_tree("\"food\"", local.dictionary()).unwrap();
//! let config = ExplainConfig { n: 2000, nu: Bandwidth::new(0.25).unwrap(), ridge: 0.0, seed: 7 };
//! let explanation = explain(&model, &local, &config).unwrap();
//! assert!((explanation.coefficient("food").unwrap() - 1.0).abs() < 1e-9);
//! ```

pub mod corpus;
pub mod error;
pub mod models;
pub mod numeric;
pub mod report;
pub mod sampler;
pub mod surrogate;
pub mod theory;
pub mod verify;

pub use corpus::{
    fit_idf, local_dictionary, normalized_tfidf, tokenize, Corpus, Document, IdfTable, LocalDictionary, LocalTfIdf,
    TfIdfVector,
};
pub use error::{Error, Result};
pub use models::{BlackBox, IndicatorProduct, LinearModel, Model, TreeModel};
pub use sampler::{
    apply_removal, cosine_distance, draw_removal, psi, sample_batch, stream_rng, weight, Bandwidth, PerturbedSample,
    RemovalDraw, SampleBatch,
};
pub use surrogate::{explain, explain_batch, fit_weighted_ridge, ExplainConfig, Explanation};
pub use theory::{
    alpha, beta_general_mc, beta_indicator_product, beta_large_bandwidth, beta_linear, beta_tree, sigma_set,
    AlphaCoefficients, LinearMode, Provenance, SigmaSet, TheoryExplanation,
};
pub use verify::{compare, run_repeated, ComparisonReport, RunConfig, RunStatistics};
