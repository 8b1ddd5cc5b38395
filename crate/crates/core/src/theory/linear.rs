//! Limit explanations of linear models `f(x) = sum_j lambda_j phi(x)_j` in
//! the large-bandwidth regime.
//!
//! Removing the words of `S` rescales every surviving TF-IDF coordinate by
//! `(1 - H_S)^{-1/2}`, where `H_S = sum_{k in S} omega_k` is the removed share
//! of the squared TF-IDF mass. The limit explanation therefore depends on
//! `E_j = E[(1 - H_S)^{-1/2} | S does not contain j]` and its two-word
//! analogue `E_{j,k}`.

use serde::Serialize;

use crate::corpus::LocalTfIdf;
use crate::error::{Error, Result};
use crate::numeric::{binomial, CompensatedSum};
use crate::sampler::{draw_removal, stream_rng, Bandwidth};
use crate::theory::{beta_from_gamma, sigma_set, Provenance, TheoryExplanation};

/// Largest `d` for which E-terms are computed by full enumeration.
pub const MAX_EXACT_D: usize = 20;

/// `omega_k = m_k^2 v_k^2 / sum_l m_l^2 v_l^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaWeights {
    values: Vec<f64>,
}

impl OmegaWeights {
    /// Normalizes nonnegative TF-IDF masses `m_k v_k` into squared shares.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::EmptyDocument);
        }
        if masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::invalid("TF-IDF masses must be positive and finite"));
        }
        let total: f64 = masses.iter().map(|m| m * m).sum();
        Ok(Self { values: masses.iter().map(|m| m * m / total).collect() })
    }

    /// Uses `values` directly after rescaling them to sum to one.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::from_masses(&values.iter().map(|v| v.sqrt()).collect::<Vec<_>>())
    }

    pub fn uniform(d: usize) -> Result<Self> {
        Self::from_masses(&vec![1.0; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn d(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }
}

pub fn omega_weights(local: &LocalTfIdf) -> Result<OmegaWeights> {
    OmegaWeights::from_masses(local.masses())
}

/// Words conditioned to survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Exclusion {
    Single(usize),
    Pair(usize, usize),
}

impl Exclusion {
    fn indices(self) -> Vec<usize> {
        match self {
            Exclusion::Single(j) => vec![j],
            Exclusion::Pair(j, k) => vec![j, k],
        }
    }

    fn validate(self, d: usize) -> Result<()> {
        match self {
            Exclusion::Single(j) => {
                if d < 2 {
                    return Err(Error::OutOfClosedFormDomain { d, min: 2 });
                }
                if j >= d {
                    return Err(Error::invalid(format!("index {j} out of range for d = {d}")));
                }
            }
            Exclusion::Pair(j, k) => {
                if d < 3 {
                    return Err(Error::DegeneratePairExclusion);
                }
                if j >= d || k >= d || j == k {
                    return Err(Error::invalid(format!("need two distinct indices below d = {d}, got ({j}, {k})")));
                }
            }
        }
        Ok(())
    }
}

/// `E[H_S | S does not contain j] = (1 - omega_j)(d + 1) / (3(d - 1))` and
/// `E[H_S | S contains neither j nor k] = (1 - omega_j - omega_k)(d + 1) / (4(d - 2))`.
pub fn expected_h(omega: &OmegaWeights, exclusion: Exclusion) -> Result<f64> {
    let d = omega.d();
    exclusion.validate(d)?;
    let df = d as f64;
    Ok(match exclusion {
        Exclusion::Single(j) => (1.0 - omega.get(j)) * (df + 1.0) / (3.0 * (df - 1.0)),
        Exclusion::Pair(j, k) => (1.0 - omega.get(j) - omega.get(k)) * (df + 1.0) / (4.0 * (df - 2.0)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ETermMethod {
    /// Enumeration of every admissible removal set (`d <= 20`).
    Exact,
    /// `(1 - E[H_S | ...])^{-1/2}`.
    Approx,
    /// Conditional Monte Carlo with `n` accepted draws.
    MonteCarlo { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ETerm {
    pub value: f64,
    pub stderr: Option<f64>,
    pub method: ETermMethod,
}

/// `E[(1 - H_S)^{-1/2} | S avoids the excluded words]`.
pub fn e_term(omega: &OmegaWeights, exclusion: Exclusion, method: ETermMethod) -> Result<ETerm> {
    let d = omega.d();
    exclusion.validate(d)?;
    let (value, stderr) = match method {
        ETermMethod::Exact => (e_term_exact(omega, &exclusion.indices())?, None),
        ETermMethod::Approx => ((1.0 - expected_h(omega, exclusion)?).powf(-0.5), None),
        ETermMethod::MonteCarlo { n, seed } => {
            let (v, se) = e_term_mc(omega, &exclusion.indices(), n, seed)?;
            (v, Some(se))
        }
    };
    Ok(ETerm { value, stderr, method })
}

/// Enumerates every nonempty removal set avoiding `excluded`. A set of size
/// `s` has probability `1 / (d C(d, s))`.
fn e_term_exact(omega: &OmegaWeights, excluded: &[usize]) -> Result<f64> {
    let d = omega.d();
    if d > MAX_EXACT_D {
        return Err(Error::EnumerationTooLarge(d));
    }
    let allowed: Vec<f64> = (0..d).filter(|j| !excluded.contains(j)).map(|j| omega.get(j)).collect();
    let prob: Vec<f64> = (0..=d).map(|s| 1.0 / (d as f64 * binomial(d, s))).collect();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    fn walk(allowed: &[f64], prob: &[f64], h: f64, size: usize, num: &mut CompensatedSum, den: &mut CompensatedSum) {
        match allowed.split_first() {
            None => {
                if size > 0 {
                    num.add(prob[size] / (1.0 - h).sqrt());
                    den.add(prob[size]);
                }
            }
            Some((&w, rest)) => {
                walk(rest, prob, h, size, num, den);
                walk(rest, prob, h + w, size + 1, num, den);
            }
        }
    }
    walk(&allowed, &prob, 0.0, 0, &mut num, &mut den);
    Ok(num.value() / den.value())
}

fn e_term_mc(omega: &OmegaWeights, excluded: &[usize], n: usize, seed: u64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::invalid("Monte Carlo E-terms need n >= 2"));
    }
    let d = omega.d();
    let mut rng = stream_rng(seed, 0);
    let (mut sum, mut sum_sq, mut accepted) = (0.0, 0.0, 0usize);
    while accepted < n {
        let draw = draw_removal(d, &mut rng)?;
        if excluded.iter().any(|&j| draw.contains(j)) {
            continue;
        }
        let h: f64 = draw.removed.iter().map(|&k| omega.get(k)).sum();
        let v = (1.0 - h).powf(-0.5);
        sum += v;
        sum_sq += v * v;
        accepted += 1;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

/// `E_j` for every word and `E_{j,k}` for every pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ETermTable {
    pub d: usize,
    pub method: ETermMethod,
    single: Vec<f64>,
    /// Row-major `d x d`; the diagonal is unused and set to NaN.
    pair: Vec<f64>,
}

impl ETermTable {
    pub fn compute(omega: &OmegaWeights, method: ETermMethod) -> Result<Self> {
        let d = omega.d();
        if d < 3 {
            return Err(Error::OutOfClosedFormDomain { d, min: 3 });
        }
        if let ETermMethod::MonteCarlo { n, seed } = method {
            return Self::monte_carlo(omega, n, seed);
        }
        if method == ETermMethod::Exact && d > MAX_EXACT_D {
            return Err(Error::EnumerationTooLarge(d));
        }
        let single =
            (0..d).map(|j| e_term(omega, Exclusion::Single(j), method).map(|e| e.value)).collect::<Result<Vec<_>>>()?;
        let mut pair = vec![f64::NAN; d * d];
        for j in 0..d {
            for k in j + 1..d {
                let v = e_term(omega, Exclusion::Pair(j, k), method)?.value;
                pair[j * d + k] = v;
                pair[k * d + j] = v;
            }
        }
        Ok(Self { d, method, single, pair })
    }

    /// Shares one unconditional sample stream across every conditioning
    /// event; each entry is the mean over the draws that avoid its words.
    fn monte_carlo(omega: &OmegaWeights, n: usize, seed: u64) -> Result<Self> {
        let d = omega.d();
        if n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        let mut rng = stream_rng(seed, 0);
        let mut single = vec![(0.0, 0usize); d];
        let mut pair = vec![(0.0, 0usize); d * d];
        for _ in 0..n {
            let draw = draw_removal(d, &mut rng)?;
            let z = draw.presence(d);
            let h: f64 = draw.removed.iter().map(|&k| omega.get(k)).sum();
            let v = (1.0 - h).powf(-0.5);
            let kept: Vec<usize> = (0..d).filter(|&j| z[j]).collect();
            for (a, &j) in kept.iter().enumerate() {
                single[j].0 += v;
                single[j].1 += 1;
                for &k in &kept[a + 1..] {
                    pair[j * d + k].0 += v;
                    pair[j * d + k].1 += 1;
                }
            }
        }
        let mean = |(s, c): (f64, usize)| if c > 0 { s / c as f64 } else { f64::NAN };
        let mut pair_mean = vec![f64::NAN; d * d];
        for j in 0..d {
            for k in j + 1..d {
                let v = mean(pair[j * d + k]);
                pair_mean[j * d + k] = v;
                pair_mean[k * d + j] = v;
            }
        }
        Ok(Self {
            d,
            method: ETermMethod::MonteCarlo { n, seed },
            single: single.into_iter().map(mean).collect(),
            pair: pair_mean,
        })
    }

    pub fn single(&self, j: usize) -> f64 {
        self.single[j]
    }

    pub fn pair(&self, j: usize, k: usize) -> f64 {
        assert_ne!(j, k);
        self.pair[j * self.d + k]
    }
}

/// `3 E_j - 2 E_{j,k}` with `E_j = (1 - 1/3)^{-1/2}` and
/// `E_{j,k} = (1 - 1/4)^{-1/2}`, about 1.36.
pub fn simplified_gain() -> f64 {
    3.0 * simplified_e_single() - 2.0 * simplified_e_pair()
}

fn simplified_e_single() -> f64 {
    (1.0f64 - 1.0 / 3.0).powf(-0.5)
}

fn simplified_e_pair() -> f64 {
    (1.0f64 - 1.0 / 4.0).powf(-0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinearMode {
    /// `beta_j = 1.36 lambda_j phi_j`, other words at 0.
    Simplified,
    /// `Sigma^{-1} Gamma` at infinite bandwidth with `Gamma` built from the
    /// E-terms; no further approximation.
    Full(ETermMethod),
    /// Leading-order expansion in `1/d` of the full assembly.
    Leading(ETermMethod),
}

fn check_lambda(lambda: &[f64], local: &LocalTfIdf) -> Result<usize> {
    let d = local.d();
    if lambda.len() != d {
        return Err(Error::DictionaryMismatch(format!("{} coefficients for d = {d}", lambda.len())));
    }
    if d < 3 {
        return Err(Error::OutOfClosedFormDomain { d, min: 3 });
    }
    Ok(d)
}

/// Limit explanation of `sum_j lambda_j phi_j`, treating the bandwidth as
/// infinite.
pub fn beta_linear(lambda: &[f64], local: &LocalTfIdf, mode: LinearMode) -> Result<TheoryExplanation> {
    check_lambda(lambda, local)?;
    let phi = local.phi();
    match mode {
        LinearMode::Simplified => {
            let gain = simplified_gain();
            let coefficients: Vec<f64> = lambda.iter().zip(phi).map(|(l, p)| gain * l * p).collect();
            let total: f64 = lambda.iter().zip(phi).map(|(l, p)| l * p).sum();
            let intercept = 2.0 * (simplified_e_single() - simplified_e_pair()) * total;
            let mut out =
                TheoryExplanation::new(intercept, coefficients, Provenance::LargeBandwidthApprox, f64::INFINITY);
            out.note = Some(format!(
                "simplified: beta_j = (3 E_j - 2 E_jk) lambda_j phi_j with E_j = (2/3)^(-1/2), E_jk = (3/4)^(-1/2), gain = {gain:.6}"
            ));
            Ok(out.with_words(local.words()))
        }
        LinearMode::Full(method) | LinearMode::Leading(method) => {
            let omega = omega_weights(local)?;
            let table = ETermTable::compute(&omega, method)?;
            let leading = matches!(mode, LinearMode::Leading(_));
            beta_linear_with_table(lambda, local, &table, leading)
        }
    }
}

/// Full (or leading-order) linear explanation from precomputed E-terms.
pub fn beta_linear_with_table(
    lambda: &[f64],
    local: &LocalTfIdf,
    table: &ETermTable,
    leading: bool,
) -> Result<TheoryExplanation> {
    let d = check_lambda(lambda, local)?;
    if table.d != d {
        return Err(Error::DictionaryMismatch(format!("E-term table for d = {}, document has d = {d}", table.d)));
    }
    let phi = local.phi();
    let df = d as f64;
    let (intercept, coefficients) = if leading {
        // Row sums sum_{k != i} E_{i,k}.
        let row: Vec<f64> = (0..d).map(|i| (0..d).filter(|&k| k != i).map(|k| table.pair(i, k)).sum()).collect();
        let intercept = (0..d).map(|i| lambda[i] * phi[i] * (2.0 * table.single(i) - 2.0 / df * row[i])).sum();
        let coefficients = (0..d)
            .map(|l| {
                let own = lambda[l] * phi[l] * (3.0 * table.single(l) - 2.0 / df * row[l]);
                let cross: f64 = (0..d)
                    .filter(|&i| i != l)
                    .map(|i| {
                        let rest = row[i] - table.pair(i, l);
                        lambda[i] * phi[i] * (2.0 * table.pair(i, l) - 2.0 / df * rest)
                    })
                    .sum();
                own + cross
            })
            .collect();
        (intercept, coefficients)
    } else {
        let sigma = sigma_set(d, Bandwidth::INFINITE)?;
        let a = (df - 1.0) / (2.0 * df);
        let b = (df - 2.0) / (3.0 * df);
        let mut gamma = vec![0.0; d + 1];
        for i in 0..d {
            let li = lambda[i] * phi[i];
            if li == 0.0 {
                continue;
            }
            gamma[0] += a * table.single(i) * li;
            gamma[i + 1] += a * table.single(i) * li;
            for l in (0..d).filter(|&l| l != i) {
                gamma[l + 1] += b * table.pair(i, l) * li;
            }
        }
        beta_from_gamma(&sigma, &gamma)
    };
    let mut out = TheoryExplanation::new(intercept, coefficients, Provenance::LargeBandwidthApprox, f64::INFINITY);
    out.note = Some(format!(
        "{} assembly at infinite bandwidth, E-terms: {:?}",
        if leading { "leading-order" } else { "full" },
        table.method
    ));
    Ok(out.with_words(local.words()))
}
