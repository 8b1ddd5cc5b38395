//! Repeated-run experiments: whisker statistics over independent LIME runs
//! and their comparison with the limit explanations.

pub mod data;
pub mod experiments;

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LocalTfIdf;
use crate::error::{Error, Result};
use crate::models::BlackBox;
use crate::numeric::{mean_std, quantile_sorted};
use crate::report::csv_number;
use crate::sampler::Bandwidth;
use crate::surrogate::{explain_stream, ExplainConfig, Explanation};
use crate::theory::TheoryExplanation;

pub use experiments::{
    concentration_check, default_sweep_grid, linearity_check, mc_alpha, sweep_bandwidth, write_sweep_csv,
    AlphaEstimate, ConcentrationReport, ConcentrationRow, LinearityReport, LinearityRow, SweepPoint,
    DEFAULT_SWEEP_POINTS,
};

/// Settings of a repeated experiment. Run `i` uses stream `i` of `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub nu: Bandwidth,
    pub ridge: f64,
    pub n_exp: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { n: 5000, nu: Bandwidth::new(0.25).expect("positive"), ridge: 0.0, n_exp: 100, seed: 0 }
    }
}

impl RunConfig {
    pub fn explain_config(&self) -> ExplainConfig {
        ExplainConfig { n: self.n, nu: self.nu, ridge: self.ridge, seed: self.seed }
    }
}

/// Order statistics of one coefficient over the runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Whisker {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation; absent with a single run.
    pub std: Option<f64>,
}

impl Whisker {
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, std) = mean_std(values);
        Self {
            median: quantile_sorted(&sorted, 0.5),
            q1: quantile_sorted(&sorted, 0.25),
            q3: quantile_sorted(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            mean,
            std,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    pub fn iqr_contains(&self, x: f64) -> bool {
        self.q1 <= x && x <= self.q3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStatistics {
    pub words: Vec<String>,
    pub intercept: Whisker,
    pub coefficients: Vec<Whisker>,
    pub config: RunConfig,
    /// Raw intercepts, one per run.
    pub intercept_values: Vec<f64>,
    /// Raw coefficients, `values[run][word]`.
    pub values: Vec<Vec<f64>>,
}

impl RunStatistics {
    pub fn from_runs(runs: &[Explanation], config: RunConfig) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::invalid("no runs"))?;
        let d = first.d();
        let values: Vec<Vec<f64>> = runs.iter().map(|r| r.coefficients.clone()).collect();
        let intercept_values: Vec<f64> = runs.iter().map(|r| r.intercept).collect();
        let coefficients =
            (0..d).map(|j| Whisker::from_values(&values.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
        Ok(Self {
            words: first.words.clone(),
            intercept: Whisker::from_values(&intercept_values),
            coefficients,
            config,
            intercept_values,
            values,
        })
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    pub fn medians(&self) -> Vec<f64> {
        self.coefficients.iter().map(|w| w.median).collect()
    }

    /// Per-word standard deviations; needs at least two runs.
    pub fn stds(&self) -> Result<Vec<f64>> {
        self.coefficients.iter().map(|w| w.std.ok_or(Error::NeedTwoRuns)).collect()
    }

    /// Columns `word,median,q1,q3,min,max,mean,std`; the intercept first.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["word", "median", "q1", "q3", "min", "max", "mean", "std"])?;
        let row = |name: &str, s: &Whisker| {
            vec![
                name.to_owned(),
                csv_number(s.median),
                csv_number(s.q1),
                csv_number(s.q3),
                csv_number(s.min),
                csv_number(s.max),
                csv_number(s.mean),
                s.std.map(csv_number).unwrap_or_default(),
            ]
        };
        w.write_record(row("(intercept)", &self.intercept))?;
        for (word, s) in self.words.iter().zip(&self.coefficients) {
            w.write_record(row(word, s))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n_exp` independent LIME runs, run `i` on stream `i` of the master seed.
/// Runs execute in parallel; the result does not depend on scheduling.
pub fn run_repeated<M: BlackBox + ?Sized>(model: &M, local: &LocalTfIdf, config: &RunConfig) -> Result<RunStatistics> {
    if config.n_exp == 0 {
        return Err(Error::invalid("n_exp must be >= 1"));
    }
    let explain_config = config.explain_config();
    let runs: Vec<Explanation> = (0..config.n_exp as u64)
        .into_par_iter()
        .map(|run| explain_stream(model, local, &explain_config, run))
        .collect::<Result<_>>()?;
    RunStatistics::from_runs(&runs, *config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub word: String,
    pub empirical_median: f64,
    pub theory: f64,
    pub abs_deviation: f64,
    /// `abs_deviation / |theory|`; absent when the theory value is 0.
    pub rel_deviation: Option<f64>,
    pub inside_iqr: bool,
    pub inside_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub intercept: ComparisonRow,
    pub rows: Vec<ComparisonRow>,
    pub max_abs_deviation: f64,
    pub mean_abs_deviation: f64,
    pub all_inside_range: bool,
}

fn comparison_row(word: &str, w: &Whisker, theory: f64) -> ComparisonRow {
    let abs_deviation = (w.median - theory).abs();
    ComparisonRow {
        word: word.to_owned(),
        empirical_median: w.median,
        theory,
        abs_deviation,
        rel_deviation: (theory != 0.0).then(|| abs_deviation / theory.abs()),
        inside_iqr: w.iqr_contains(theory),
        inside_range: w.contains(theory),
    }
}

/// Matches theory values to empirical whiskers by word. A theory without
/// word labels is matched by position.
pub fn compare(stats: &RunStatistics, theory: &TheoryExplanation) -> Result<ComparisonReport> {
    let d = stats.words.len();
    if theory.d() != d {
        return Err(Error::DictionaryMismatch(format!("empirical d = {d}, theory d = {}", theory.d())));
    }
    let rows = stats
        .words
        .iter()
        .enumerate()
        .map(|(j, word)| {
            let value = if theory.words.is_empty() {
                theory.coefficients[j]
            } else {
                theory
                    .coefficient(word)
                    .ok_or_else(|| Error::DictionaryMismatch(format!("word `{word}` missing from theory")))?
            };
            Ok(comparison_row(word, &stats.coefficients[j], value))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_abs_deviation = rows.iter().map(|r| r.abs_deviation).fold(0.0, f64::max);
    let mean_abs_deviation = rows.iter().map(|r| r.abs_deviation).sum::<f64>() / d.max(1) as f64;
    Ok(ComparisonReport {
        intercept: comparison_row("(intercept)", &stats.intercept, theory.intercept),
        all_inside_range: rows.iter().all(|r| r.inside_range),
        rows,
        max_abs_deviation,
        mean_abs_deviation,
    })
}

impl ComparisonReport {
    pub fn row(&self, word: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.word == word)
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.word.chars().count()).max().unwrap_or(4).max(11);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>12}  {:>12}  {:>10}  {:>5}  {:>5}",
            "word", "median", "theory", "|dev|", "IQR", "range"
        );
        let flag = |b: bool| if b { "yes" } else { "no" };
        for r in std::iter::once(&self.intercept).chain(&self.rows) {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.6}  {:>12.6}  {:>10.6}  {:>5}  {:>5}",
                r.word,
                r.empirical_median,
                r.theory,
                r.abs_deviation,
                flag(r.inside_iqr),
                flag(r.inside_range)
            );
        }
        let _ = writeln!(
            out,
            "max |dev| = {:.6}, mean |dev| = {:.6}, all inside range: {}",
            self.max_abs_deviation,
            self.mean_abs_deviation,
            flag(self.all_inside_range)
        );
        out
    }

    /// Columns `word,median,theory,abs_deviation,rel_deviation,inside_iqr,inside_range`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["word", "median", "theory", "abs_deviation", "rel_deviation", "inside_iqr", "inside_range"])?;
        for r in std::iter::once(&self.intercept).chain(&self.rows) {
            w.write_record([
                r.word.clone(),
                csv_number(r.empirical_median),
                csv_number(r.theory),
                csv_number(r.abs_deviation),
                r.rel_deviation.map(csv_number).unwrap_or_default(),
                r.inside_iqr.to_string(),
                r.inside_range.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
