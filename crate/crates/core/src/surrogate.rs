//! Weighted ridge least squares and the end-to-end explanation pipeline.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, IdfTable, LocalTfIdf};
use crate::error::{Error, Result};
use crate::models::BlackBox;
use crate::report::csv_number;
use crate::sampler::{sample_batch_stream, Bandwidth, SampleBatch};

/// Relative pivot size below which the normal equations are treated as
/// singular.
const SINGULAR_RTOL: f64 = 1e-12;

/// Accumulated `Z^T W Z` and `Z^T W y` for a design with an implicit leading
/// column of ones.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    total_weight: f64,
    rows: usize,
}

impl NormalEquations {
    /// Empty system for `d` features (`d + 1` unknowns).
    pub fn new(d: usize) -> Self {
        Self { gram: DMatrix::zeros(d + 1, d + 1), rhs: DVector::zeros(d + 1), total_weight: 0.0, rows: 0 }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Adds one binary row `(1, z)` with weight `w` and response `y`. Only the
    /// upper triangle is accumulated.
    pub fn add_binary(&mut self, z: &[bool], w: f64, y: f64) -> Result<()> {
        check_weight(w)?;
        let mut idx = Vec::with_capacity(z.len() + 1);
        idx.push(0);
        idx.extend(z.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j + 1));
        for (a, &i) in idx.iter().enumerate() {
            for &k in &idx[a..] {
                self.gram[(i, k)] += w;
            }
            self.rhs[i] += w * y;
        }
        self.total_weight += w;
        self.rows += 1;
        Ok(())
    }

    /// Adds one general row; `x` excludes the leading one.
    pub fn add_row(&mut self, x: &[f64], w: f64, y: f64) -> Result<()> {
        check_weight(w)?;
        let n = self.dim();
        let row = |i: usize| if i == 0 { 1.0 } else { x[i - 1] };
        for i in 0..n {
            let xi = row(i);
            if xi == 0.0 {
                continue;
            }
            for k in i..n {
                self.gram[(i, k)] += w * xi * row(k);
            }
            self.rhs[i] += w * xi * y;
        }
        self.total_weight += w;
        self.rows += 1;
        Ok(())
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = self.gram.clone();
        g.fill_lower_triangle_with_upper_triangle();
        g
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// Solves `(Z^T W Z + ridge I) beta = Z^T W y`.
    pub fn solve(&self, ridge: f64) -> Result<DVector<f64>> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge penalty must be >= 0, got {ridge}")));
        }
        if self.rows == 0 {
            return Err(Error::invalid("no samples"));
        }
        if self.total_weight <= 0.0 {
            return Err(Error::DegenerateWeights);
        }
        let mut a = self.gram();
        for i in 0..a.nrows() {
            a[(i, i)] += ridge;
        }
        Ok(solve_spd_or_min_norm(a, &self.rhs))
    }
}

fn check_weight(w: f64) -> Result<()> {
    if w >= 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("weights must be finite and >= 0, got {w}")))
    }
}

/// Cholesky solve of a symmetric positive semi-definite system, falling back
/// to the pseudo-inverse when the factorization fails or is numerically
/// singular.
fn solve_spd_or_min_norm(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = a.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo > 0.0 && (lo * lo) / (hi * hi) > SINGULAR_RTOL {
            return chol.solve(b);
        }
    }
    let eig = SymmetricEigen::new(a);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = top * SINGULAR_RTOL;
    let qtb = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_iterator(
        qtb.len(),
        qtb.iter().zip(eig.eigenvalues.iter()).map(|(c, &l)| if l > cutoff { c / l } else { 0.0 }),
    );
    &eig.eigenvectors * scaled
}

/// Weighted ridge regression on an explicit design `z` (`n x (d + 1)`,
/// leading column of ones included). Returns the `d + 1` coefficients.
pub fn fit_weighted_ridge(z: &DMatrix<f64>, weights: &[f64], y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = z.nrows();
    if weights.len() != n || y.len() != n {
        return Err(Error::invalid(format!(
            "design has {n} rows but {} weights and {} responses",
            weights.len(),
            y.len()
        )));
    }
    if z.ncols() == 0 {
        return Err(Error::invalid("design has no columns"));
    }
    let mut ne = NormalEquations::new(z.ncols() - 1);
    let mut row = vec![0.0; z.ncols()];
    for i in 0..n {
        for (k, r) in row.iter_mut().enumerate() {
            *r = z[(i, k)];
        }
        if row[0] != 1.0 {
            return Err(Error::invalid("first design column must be all ones"));
        }
        ne.add_row(&row[1..], weights[i], y[i])?;
    }
    Ok(ne.solve(ridge)?.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub n: usize,
    pub nu: Bandwidth,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { n: 5000, nu: Bandwidth::new(0.25).expect("positive"), ridge: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMeta {
    pub n: usize,
    pub nu: f64,
    pub ridge: f64,
    pub seed: u64,
    pub stream: u64,
}

/// Surrogate coefficients of one LIME run.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub words: Vec<String>,
    pub meta: ExplanationMeta,
}

#[derive(Serialize)]
struct WordCoefficient<'a> {
    word: &'a str,
    coefficient: f64,
}

#[derive(Serialize)]
struct ExplanationJson<'a> {
    intercept: f64,
    coefficients: Vec<WordCoefficient<'a>>,
    meta: &'a ExplanationMeta,
}

impl Explanation {
    pub fn d(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient(&self, word: &str) -> Option<f64> {
        self.words.iter().position(|w| w == word).map(|j| self.coefficients[j])
    }

    /// Word indices ordered by decreasing `|coefficient|`; ties keep
    /// dictionary order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.d()).collect();
        order.sort_by(|&a, &b| self.coefficients[b].abs().total_cmp(&self.coefficients[a].abs()));
        order
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let coefficients = self
            .ranking()
            .into_iter()
            .map(|j| WordCoefficient { word: &self.words[j], coefficient: self.coefficients[j] })
            .collect();
        crate::report::write_json(
            writer,
            &ExplanationJson { intercept: self.intercept, coefficients, meta: &self.meta },
        )
    }

    /// Columns `word,coefficient,rank`; the intercept is written first with
    /// rank 0.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["word", "coefficient", "rank"])?;
        w.write_record(["(intercept)", &csv_number(self.intercept), "0"])?;
        for (rank, j) in self.ranking().into_iter().enumerate() {
            w.write_record([self.words[j].as_str(), &csv_number(self.coefficients[j]), &(rank + 1).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Responses `f(phi(x_i))` of a batch, computed on the renormalized
/// embedding of each perturbed document.
pub fn responses<M: BlackBox + ?Sized>(model: &M, local: &LocalTfIdf, batch: &SampleBatch) -> Vec<f64> {
    let mut phi = vec![0.0; local.d()];
    batch
        .samples
        .iter()
        .map(|s| {
            local.embed_into(&s.z, &mut phi);
            model.evaluate(&phi)
        })
        .collect()
}

/// Fits the surrogate on an existing batch.
pub fn explain_batch<M: BlackBox + ?Sized>(
    model: &M,
    local: &LocalTfIdf,
    batch: &SampleBatch,
    ridge: f64,
) -> Result<Explanation> {
    let y = responses(model, local, batch);
    fit_batch(local, batch, &y, ridge)
}

/// Fits the surrogate on a batch with precomputed responses.
pub fn fit_batch(local: &LocalTfIdf, batch: &SampleBatch, y: &[f64], ridge: f64) -> Result<Explanation> {
    if batch.d != local.d() {
        return Err(Error::DictionaryMismatch(format!("batch has d = {}, document has d = {}", batch.d, local.d())));
    }
    let mut ne = NormalEquations::new(local.d());
    for (s, &yi) in batch.samples.iter().zip(y) {
        ne.add_binary(&s.z, s.weight, yi)?;
    }
    let beta = ne.solve(ridge)?;
    Ok(Explanation {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        words: local.words().to_vec(),
        meta: ExplanationMeta { n: batch.len(), nu: batch.nu.value(), ridge, seed: batch.seed, stream: batch.stream },
    })
}

/// One LIME run on stream `stream` of `config.seed`.
pub fn explain_stream<M: BlackBox + ?Sized>(
    model: &M,
    local: &LocalTfIdf,
    config: &ExplainConfig,
    stream: u64,
) -> Result<Explanation> {
    if config.n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let batch = sample_batch_stream(local.dictionary(), config.n, config.nu, config.seed, stream)?;
    explain_batch(model, local, &batch, config.ridge)
}

pub fn explain<M: BlackBox + ?Sized>(model: &M, local: &LocalTfIdf, config: &ExplainConfig) -> Result<Explanation> {
    explain_stream(model, local, config, 0)
}

/// Convenience wrapper building the local embedding from `xi` and `idf`.
pub fn explain_document<M: BlackBox + ?Sized>(
    model: &M,
    xi: &Document,
    idf: &IdfTable,
    config: &ExplainConfig,
) -> Result<Explanation> {
    explain(model, &LocalTfIdf::new(xi, idf)?, config)
}
