//! Closed-form limits of the surrogate coefficients.
//!
//! As `n` grows the surrogate concentrates on `beta^f = Sigma^{-1} Gamma^f`,
//! where `Gamma^f_l = E[pi z_l f(phi(x))]` (with `z_0 = 1`). For
//! presence-based models everything reduces to the `alpha` coefficients; for
//! linear models to conditional expectations of the TF-IDF renormalization
//! factor; anything else is handled by Monte Carlo.

pub mod alpha;
pub mod linear;
pub mod sigma;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LocalTfIdf;
use crate::error::{Error, Result};
use crate::models::{BlackBox, IndicatorProduct, Model, TreeModel};
use crate::numeric::binomial;
use crate::report::csv_number;
use crate::sampler::{draw_removal, psi, stream_rng, Bandwidth};
use crate::theory::alpha::alpha_unchecked;

pub use alpha::{alpha, alpha_limit, alpha_lower_bound, AlphaCoefficients};
pub use linear::{
    beta_linear, beta_linear_with_table, e_term, expected_h, omega_weights, simplified_gain, ETerm, ETermMethod,
    ETermTable, Exclusion, LinearMode, OmegaWeights,
};
pub use sigma::{sigma_inverse, sigma_matrix, sigma_set, symmetric_operator_norm, LargeBandwidthLimits, SigmaSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactClosedForm,
    LargeBandwidthApprox,
    MonteCarlo,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ExactClosedForm => "exact-closed-form",
            Provenance::LargeBandwidthApprox => "large-bandwidth-approx",
            Provenance::MonteCarlo => "monte-carlo",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A predicted explanation. `words` may be empty when the prediction was
/// computed from `d` alone; [`TheoryExplanation::with_words`] attaches them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryExplanation {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub words: Vec<String>,
    pub provenance: Provenance,
    pub intercept_stderr: Option<f64>,
    pub stderr: Option<Vec<f64>>,
    pub nu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Serialize)]
struct TheoryCoefficientJson<'a> {
    word: &'a str,
    coefficient: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<f64>,
}

#[derive(Serialize)]
struct TheoryJson<'a> {
    intercept: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    intercept_stderr: Option<f64>,
    provenance: Provenance,
    coefficients: Vec<TheoryCoefficientJson<'a>>,
    meta: TheoryMetaJson<'a>,
}

#[derive(Serialize)]
struct TheoryMetaJson<'a> {
    d: usize,
    nu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

impl TheoryExplanation {
    fn new(intercept: f64, coefficients: Vec<f64>, provenance: Provenance, nu: f64) -> Self {
        Self {
            intercept,
            coefficients,
            words: Vec::new(),
            provenance,
            intercept_stderr: None,
            stderr: None,
            nu,
            note: None,
        }
    }

    pub fn d(&self) -> usize {
        self.coefficients.len()
    }

    pub fn with_words(mut self, words: &[String]) -> Self {
        assert_eq!(words.len(), self.d(), "word count must equal d");
        self.words = words.to_vec();
        self
    }

    pub fn coefficient(&self, word: &str) -> Option<f64> {
        self.words.iter().position(|w| w == word).map(|j| self.coefficients[j])
    }

    /// `a * self + b * other`, coordinatewise. Standard errors are dropped
    /// and the weaker provenance is kept.
    pub fn linear_combination(&self, a: f64, other: &TheoryExplanation, b: f64) -> Result<Self> {
        if self.d() != other.d() {
            return Err(Error::DictionaryMismatch(format!("d = {} vs d = {}", self.d(), other.d())));
        }
        let provenance =
            if self.provenance.rank() >= other.provenance.rank() { self.provenance } else { other.provenance };
        let mut out = Self::new(
            a * self.intercept + b * other.intercept,
            self.coefficients.iter().zip(&other.coefficients).map(|(x, y)| a * x + b * y).collect(),
            provenance,
            self.nu,
        );
        out.words = if self.words.is_empty() { other.words.clone() } else { self.words.clone() };
        Ok(out)
    }

    fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.d()).collect();
        order.sort_by(|&a, &b| self.coefficients[b].abs().total_cmp(&self.coefficients[a].abs()));
        order
    }

    fn word(&self, j: usize) -> String {
        self.words.get(j).cloned().unwrap_or_else(|| format!("w{}", j + 1))
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let names: Vec<String> = (0..self.d()).map(|j| self.word(j)).collect();
        let coefficients = self
            .ranking()
            .into_iter()
            .map(|j| TheoryCoefficientJson {
                word: &names[j],
                coefficient: self.coefficients[j],
                stderr: self.stderr.as_ref().map(|s| s[j]),
            })
            .collect();
        crate::report::write_json(
            writer,
            &TheoryJson {
                intercept: self.intercept,
                intercept_stderr: self.intercept_stderr,
                provenance: self.provenance,
                coefficients,
                meta: TheoryMetaJson { d: self.d(), nu: self.nu, note: self.note.as_deref() },
            },
        )
    }

    /// Columns `word,coefficient,rank,stderr,provenance`; the intercept comes
    /// first with rank 0.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["word", "coefficient", "rank", "stderr", "provenance"])?;
        let se = |v: Option<f64>| v.map(csv_number).unwrap_or_default();
        w.write_record([
            "(intercept)".to_owned(),
            csv_number(self.intercept),
            "0".into(),
            se(self.intercept_stderr),
            self.provenance.to_string(),
        ])?;
        for (rank, j) in self.ranking().into_iter().enumerate() {
            w.write_record([
                self.word(j),
                csv_number(self.coefficients[j]),
                (rank + 1).to_string(),
                se(self.stderr.as_ref().map(|s| s[j])),
                self.provenance.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Provenance {
    fn rank(self) -> u8 {
        match self {
            Provenance::ExactClosedForm => 0,
            Provenance::LargeBandwidthApprox => 1,
            Provenance::MonteCarlo => 2,
        }
    }
}

/// `beta = Sigma^{-1} Gamma` using the closed-form inverse:
/// `beta_0 = (sigma_0 Gamma_0 + sigma_1 sum_k Gamma_k) / c_d` and
/// `beta_j = (sigma_1 Gamma_0 + sigma_2 Gamma_j + sigma_3 sum_{k != j} Gamma_k) / c_d`.
pub fn beta_from_gamma(sigma: &SigmaSet, gamma: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(gamma.len(), sigma.d + 1);
    let total: f64 = gamma[1..].iter().sum();
    let intercept = (sigma.sigma0 * gamma[0] + sigma.sigma1 * total) / sigma.c;
    let coefficients = gamma[1..]
        .iter()
        .map(|&g| (sigma.sigma1 * gamma[0] + (sigma.sigma2 - sigma.sigma3) * g + sigma.sigma3 * total) / sigma.c)
        .collect();
    (intercept, coefficients)
}

/// `Gamma` of `prod_{j in J} z_j`: `alpha_p` on `{0} u J`, `alpha_{p+1}`
/// elsewhere.
pub fn gamma_indicator_product(indices: &[usize], d: usize, nu: Bandwidth) -> Result<Vec<f64>> {
    let mut member = vec![false; d];
    for &j in indices {
        if j >= d {
            return Err(Error::invalid(format!("index {j} out of range for d = {d}")));
        }
        member[j] = true;
    }
    let p = member.iter().filter(|&&b| b).count();
    let inside = alpha_unchecked(p, d, nu);
    let outside = alpha_unchecked(p + 1, d, nu);
    let mut gamma = Vec::with_capacity(d + 1);
    gamma.push(inside);
    gamma.extend(member.iter().map(|&m| if m { inside } else { outside }));
    Ok(gamma)
}

/// Exact limit explanation of `prod_{j in J} z_j` (indices into the local
/// dictionary).
pub fn beta_indicator_product(indices: &[usize], d: usize, nu: Bandwidth) -> Result<TheoryExplanation> {
    let sigma = sigma_set(d, nu)?;
    let gamma = gamma_indicator_product(indices, d, nu)?;
    let (intercept, coefficients) = beta_from_gamma(&sigma, &gamma);
    Ok(TheoryExplanation::new(intercept, coefficients, Provenance::ExactClosedForm, nu.value()))
}

fn beta_terms(terms: &[IndicatorProduct], d: usize, nu: Bandwidth) -> Result<TheoryExplanation> {
    let sigma = sigma_set(d, nu)?;
    let mut gamma = vec![0.0; d + 1];
    for t in terms {
        for (g, v) in gamma.iter_mut().zip(gamma_indicator_product(t.indices(), d, nu)?) {
            *g += t.coefficient * v;
        }
    }
    let (intercept, coefficients) = beta_from_gamma(&sigma, &gamma);
    Ok(TheoryExplanation::new(intercept, coefficients, Provenance::ExactClosedForm, nu.value()))
}

/// Exact limit explanation of a tree, by linearity over its indicator terms.
pub fn beta_tree(tree: &TreeModel, d: usize, nu: Bandwidth) -> Result<TheoryExplanation> {
    beta_terms(&tree.terms, d, nu)
}

/// Per-coordinate sums of values and squares, merged across chunks.
#[derive(Clone)]
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self { n: 0, sum: vec![0.0; k], sum_sq: vec![0.0; k] }
    }

    fn push(&mut self, values: &[f64]) {
        self.n += 1;
        for ((s, q), v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(values) {
            *s += v;
            *q += v * v;
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        self.n += other.n;
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self
    }

    /// Means and standard errors of the means.
    fn finish(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let mean = s / n;
                let var = if self.n > 1 { ((q - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
                (mean, (var / n).sqrt())
            })
            .unzip()
    }
}

const MC_CHUNK: usize = 1 << 14;

/// Runs `n_mc` sampler draws split into fixed chunks (one RNG stream each),
/// feeding `(z, s, phi)` to `visit`, which writes per-sample values into its
/// output slice. Results do not depend on the thread count.
fn mc_moments<F>(local: &LocalTfIdf, n_mc: usize, seed: u64, width: usize, visit: F) -> Result<Moments>
where
    F: Fn(&[bool], usize, &[f64], &mut [f64]) + Sync,
{
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be >= 1"));
    }
    let d = local.d();
    let chunks = n_mc.div_ceil(MC_CHUNK);
    let parts: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = MC_CHUNK.min(n_mc - c * MC_CHUNK);
            let mut m = Moments::new(width);
            let mut phi = vec![0.0; d];
            let mut out = vec![0.0; width];
            for _ in 0..count {
                let draw = draw_removal(d, &mut rng)?;
                let z = draw.presence(d);
                local.embed_into(&z, &mut phi);
                visit(&z, draw.s, &phi, &mut out);
                m.push(&out);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::new(width);
    for p in parts {
        total = total.merge(&p?);
    }
    Ok(total)
}

/// Monte Carlo estimate of `Gamma^f` (index 0 is `E[pi f]`) with standard
/// errors.
pub fn gamma_mc<M: BlackBox + ?Sized>(
    model: &M,
    local: &LocalTfIdf,
    nu: Bandwidth,
    n_mc: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = local.d();
    let m = mc_moments(local, n_mc, seed, d + 1, |z, s, phi, out| {
        let pf = psi(s as f64 / d as f64, nu) * model.evaluate(phi);
        out[0] = pf;
        for (o, &b) in out[1..].iter_mut().zip(z) {
            *o = if b { pf } else { 0.0 };
        }
    })?;
    Ok(m.finish())
}

/// Limit explanation of any bounded model with `Gamma^f` estimated by Monte
/// Carlo and the exact `Sigma^{-1}`. Each coordinate is a per-sample mean, so
/// the reported standard errors are those of the means.
pub fn beta_general_mc<M: BlackBox + ?Sized>(
    model: &M,
    local: &LocalTfIdf,
    nu: Bandwidth,
    n_mc: usize,
    seed: u64,
) -> Result<TheoryExplanation> {
    let d = local.d();
    let sig = sigma_set(d, nu)?;
    let m = mc_moments(local, n_mc, seed, d + 1, |z, s, phi, out| {
        let pf = psi(s as f64 / d as f64, nu) * model.evaluate(phi) / sig.c;
        let present = z.iter().filter(|&&b| b).count() as f64;
        out[0] = pf * (sig.sigma0 + sig.sigma1 * present);
        let base = sig.sigma1 + sig.sigma3 * present;
        let gap = sig.sigma2 - sig.sigma3;
        for (o, &b) in out[1..].iter_mut().zip(z) {
            *o = pf * (base + if b { gap } else { 0.0 });
        }
    })?;
    let (mean, se) = m.finish();
    let mut out = TheoryExplanation::new(mean[0], mean[1..].to_vec(), Provenance::MonteCarlo, nu.value());
    out.intercept_stderr = Some(se[0]);
    out.stderr = Some(se[1..].to_vec());
    Ok(out.with_words(local.words()))
}

/// Number of independent batches used for the large-bandwidth estimator's
/// standard errors.
const LB_BATCHES: usize = 32;

/// Large-bandwidth approximation
/// `beta_j ~ 3 E[f | w_j in x] - (3/d) sum_k E[f | w_k in x]`, with intercept
/// `4 E[f] - (3/d) sum_k E[f | w_k in x]`, all expectations taken under the
/// unweighted sampler. Standard errors come from batch means.
pub fn beta_large_bandwidth<M: BlackBox + ?Sized>(
    model: &M,
    local: &LocalTfIdf,
    n_mc: usize,
    seed: u64,
) -> Result<TheoryExplanation> {
    let d = local.d();
    if d < 2 {
        return Err(Error::OutOfClosedFormDomain { d, min: 2 });
    }
    if n_mc < LB_BATCHES {
        return Err(Error::invalid(format!("n_mc must be >= {LB_BATCHES}")));
    }
    let per_batch = n_mc / LB_BATCHES;
    let batches: Vec<Result<Vec<f64>>> = (0..LB_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut sum_f = 0.0;
            let mut sum_present = vec![0.0; d];
            let mut hits = vec![0usize; d];
            let mut phi = vec![0.0; d];
            for _ in 0..per_batch {
                let z = draw_removal(d, &mut rng)?.presence(d);
                local.embed_into(&z, &mut phi);
                let f = model.evaluate(&phi);
                sum_f += f;
                for j in 0..d {
                    if z[j] {
                        sum_present[j] += f;
                        hits[j] += 1;
                    }
                }
            }
            let cond: Vec<f64> =
                sum_present.iter().zip(&hits).map(|(s, &h)| if h > 0 { s / h as f64 } else { 0.0 }).collect();
            Ok(large_bandwidth_assemble(sum_f / per_batch as f64, &cond))
        })
        .collect();
    let mut est = Moments::new(d + 1);
    for b in batches {
        est.push(&b?);
    }
    let (mean, se) = est.finish();
    let mut out = TheoryExplanation::new(mean[0], mean[1..].to_vec(), Provenance::LargeBandwidthApprox, f64::INFINITY);
    out.intercept_stderr = Some(se[0]);
    out.stderr = Some(se[1..].to_vec());
    Ok(out.with_words(local.words()))
}

fn large_bandwidth_assemble(mean_f: f64, cond: &[f64]) -> Vec<f64> {
    let d = cond.len() as f64;
    let avg = 3.0 * cond.iter().sum::<f64>() / d;
    std::iter::once(4.0 * mean_f - avg).chain(cond.iter().map(|c| 3.0 * c - avg)).collect()
}

/// Probability that `p` given words all survive: `(d - p) / ((p + 1) d)`.
pub fn word_presence_probability(d: usize, p: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::EmptyLocalDictionary);
    }
    if p > d {
        return Err(Error::OrderOutOfRange { p, d });
    }
    Ok(alpha_limit(p, d))
}

/// The same probability by summing over `s`: `(1/d) sum_s C(d-p, s) / C(d, s)`.
pub fn word_presence_probability_by_sum(d: usize, p: usize) -> f64 {
    (1..=d).map(|s| binomial(d - p.min(d), s) / binomial(d, s)).sum::<f64>() / d as f64
}

/// Sample-size bound of the concentration theorem, with both branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSizeBound {
    pub first_branch: f64,
    pub second_branch: f64,
    pub value: f64,
}

/// `max{2^9 70^4 M^2 d^9 e^{10/nu^2}, 2^9 70^2 M d^5 e^{5/nu^2}} log(8d/eta) / eps^2`.
pub fn sample_size_bound(m: f64, d: usize, nu: Bandwidth, eps: f64, eta: f64) -> Result<SampleSizeBound> {
    if !(eps > 0.0 && eps < m) {
        return Err(Error::invalid(format!("need 0 < eps < M, got eps = {eps}, M = {m}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!("need 0 < eta < 1, got {eta}")));
    }
    if d == 0 {
        return Err(Error::EmptyLocalDictionary);
    }
    let df = d as f64;
    let inv_nu2 = 1.0 / (nu.value() * nu.value());
    let tail = (8.0 * df / eta).ln() / (eps * eps);
    let first = 512.0 * 70f64.powi(4) * m * m * df.powi(9) * (10.0 * inv_nu2).exp() * tail;
    let second = 512.0 * 70f64.powi(2) * m * df.powi(5) * (5.0 * inv_nu2).exp() * tail;
    Ok(SampleSizeBound { first_branch: first, second_branch: second, value: first.max(second) })
}

/// Options for [`theory_for_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchOptions {
    pub linear_mode: LinearMode,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        Self { linear_mode: LinearMode::Simplified, n_mc: 200_000, seed: 0 }
    }
}

/// Picks the most exact available route: closed forms for presence-based
/// models, the large-bandwidth linear formulas for linear models, Monte Carlo
/// for everything else.
pub fn theory_for_model(
    model: &Model,
    local: &LocalTfIdf,
    nu: Bandwidth,
    opts: &DispatchOptions,
) -> Result<TheoryExplanation> {
    let d = local.d();
    if let Some(terms) = model.indicator_terms() {
        return Ok(beta_terms(&terms, d, nu)?.with_words(local.words()));
    }
    if let Some(lambda) = model.linear_coefficients(d) {
        return beta_linear(&lambda, local, opts.linear_mode);
    }
    beta_general_mc(model, local, nu, opts.n_mc, opts.seed)
}
