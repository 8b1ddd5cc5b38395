//! Bandwidth sweeps, linearity and concentration checks, and the Monte Carlo
//! oracle for the `alpha` coefficients.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::LocalTfIdf;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::numeric::{log_space, ols_slope};
use crate::report::csv_number;
use crate::sampler::{draw_removal, stream_rng, weight, Bandwidth};
use crate::theory::{theory_for_model, DispatchOptions, TheoryExplanation};

use super::{compare, run_repeated, ComparisonReport, RunConfig, RunStatistics, Whisker};

pub const DEFAULT_SWEEP_POINTS: usize = 24;

/// `DEFAULT_SWEEP_POINTS` log-spaced bandwidths in `[0.03, 3]`.
pub fn default_sweep_grid() -> Vec<f64> {
    log_space(0.03, 3.0, DEFAULT_SWEEP_POINTS)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub nu: f64,
    pub stats: Whisker,
    /// Closed-form value, available for presence-based models.
    pub theory: Option<f64>,
}

/// Empirical coefficient of `word` at every bandwidth of `nu_grid`. Every
/// bandwidth reuses the same master seed.
pub fn sweep_bandwidth(
    model: &Model,
    local: &LocalTfIdf,
    word: &str,
    nu_grid: &[f64],
    base: &RunConfig,
) -> Result<Vec<SweepPoint>> {
    let j = local.dictionary().index_of(word).ok_or_else(|| Error::UnknownWord(word.to_owned()))?;
    let closed_form = model.indicator_terms().is_some();
    nu_grid
        .iter()
        .map(|&v| {
            let nu = Bandwidth::new(v)?;
            let stats = run_repeated(model, local, &RunConfig { nu, ..*base })?;
            let theory = if closed_form {
                Some(theory_for_model(model, local, nu, &DispatchOptions::default())?.coefficients[j])
            } else {
                None
            };
            Ok(SweepPoint { nu: v, stats: stats.coefficients[j], theory })
        })
        .collect()
}

/// Columns `nu,median,q1,q3,min,max,theory`.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["nu", "median", "q1", "q3", "min", "max", "theory"])?;
    for p in points {
        w.write_record([
            csv_number(p.nu),
            csv_number(p.stats.median),
            csv_number(p.stats.q1),
            csv_number(p.stats.q3),
            csv_number(p.stats.min),
            csv_number(p.stats.max),
            p.theory.map(csv_number).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityRow {
    pub word: String,
    /// `median(f+g) - median(f) - median(g)`.
    pub deviation: f64,
    /// `3 sqrt(s_f^2 + s_g^2 + s_{f+g}^2)`.
    pub envelope: f64,
    /// `|beta^{f+g} - beta^f - beta^g|` for the limit explanations.
    pub theory_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityReport {
    pub rows: Vec<LinearityRow>,
    pub max_theory_deviation: f64,
    /// Every empirical deviation lies inside its envelope.
    pub within_envelope: bool,
    /// Empirical runs of `f+g` against `beta^f + beta^g`.
    pub comparison: ComparisonReport,
}

/// Runs `f`, `g` and `f+g` on independent seeds (`seed`, `seed+1`,
/// `seed+2`) and checks additivity of both the empirical and the limit
/// explanations.
pub fn linearity_check(f: &Model, g: &Model, local: &LocalTfIdf, config: &RunConfig) -> Result<LinearityReport> {
    let sum = crate::models::combine([(1.0, f.clone()), (1.0, g.clone())]);
    let with_seed = |offset: u64| RunConfig { seed: config.seed.wrapping_add(offset), ..*config };
    let sf = run_repeated(f, local, &with_seed(0))?;
    let sg = run_repeated(g, local, &with_seed(1))?;
    let ssum = run_repeated(&sum, local, &with_seed(2))?;
    let (std_f, std_g, std_sum) = (sf.stds()?, sg.stds()?, ssum.stds()?);

    let opts = DispatchOptions { seed: config.seed, ..DispatchOptions::default() };
    let tf = theory_for_model(f, local, config.nu, &opts)?;
    let tg = theory_for_model(g, local, config.nu, &opts)?;
    let tsum = theory_for_model(&sum, local, config.nu, &opts)?;
    let tadd: TheoryExplanation = tf.linear_combination(1.0, &tg, 1.0)?;

    let rows: Vec<LinearityRow> = (0..local.d())
        .map(|j| {
            let deviation = ssum.coefficients[j].median - sf.coefficients[j].median - sg.coefficients[j].median;
            let envelope = 3.0 * (std_f[j].powi(2) + std_g[j].powi(2) + std_sum[j].powi(2)).sqrt();
            LinearityRow {
                word: local.words()[j].clone(),
                deviation,
                envelope,
                theory_deviation: (tsum.coefficients[j] - tadd.coefficients[j]).abs(),
            }
        })
        .collect();
    let max_theory_deviation =
        rows.iter().map(|r| r.theory_deviation).fold((tsum.intercept - tadd.intercept).abs(), f64::max);
    Ok(LinearityReport {
        within_envelope: rows.iter().all(|r| r.deviation.abs() <= r.envelope),
        max_theory_deviation,
        comparison: compare(&ssum, &tadd)?,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub stds: Vec<f64>,
    pub mean_std: f64,
    /// `mean_std` relative to the previous row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub words: Vec<String>,
    pub rows: Vec<ConcentrationRow>,
    /// Slope of `log std` against `log n`, per word; `None` for words whose
    /// coefficient is recovered exactly.
    pub slopes: Vec<Option<f64>>,
    /// Mean of the per-word slopes.
    pub pooled_slope: f64,
}

/// Spreads below this are rounding noise of an exactly fitted coefficient.
const EXACT_FIT_STD: f64 = 1e-10;

/// Per-word standard deviation of the coefficients as `n` grows. Grid point
/// `i` uses master seed `seed + i`.
pub fn concentration_check(
    model: &Model,
    local: &LocalTfIdf,
    n_grid: &[usize],
    base: &RunConfig,
) -> Result<ConcentrationReport> {
    if base.n_exp < 2 {
        return Err(Error::NeedTwoRuns);
    }
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("n_grid must be strictly increasing with at least two points"));
    }
    let mut rows: Vec<ConcentrationRow> = Vec::with_capacity(n_grid.len());
    let mut words = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let stats: RunStatistics =
            run_repeated(model, local, &RunConfig { n, seed: base.seed.wrapping_add(i as u64), ..*base })?;
        let stds = stats.stds()?;
        let mean_std = stds.iter().sum::<f64>() / stds.len() as f64;
        let ratio = rows.last().map(|r| mean_std / r.mean_std);
        words = stats.words;
        rows.push(ConcentrationRow { n, stds, mean_std, ratio });
    }
    let log_n: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let slopes: Vec<Option<f64>> = (0..words.len())
        .map(|j| {
            let s: Vec<f64> = rows.iter().map(|r| r.stds[j]).collect();
            s.iter()
                .all(|&v| v > EXACT_FIT_STD)
                .then(|| ols_slope(&log_n, &s.iter().map(|v| v.ln()).collect::<Vec<_>>()))
        })
        .collect();
    let fitted: Vec<f64> = slopes.iter().flatten().copied().collect();
    if fitted.is_empty() {
        return Err(Error::invalid("no coefficient varies across runs"));
    }
    Ok(ConcentrationReport { words, rows, slopes, pooled_slope: fitted.iter().sum::<f64>() / fitted.len() as f64 })
}

impl ConcentrationReport {
    /// Columns `n,mean_std,ratio` followed by one column per word.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["n".to_owned(), "mean_std".to_owned(), "ratio".to_owned()];
        header.extend(self.words.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.n.to_string(), csv_number(r.mean_std), r.ratio.map(csv_number).unwrap_or_default()];
            rec.extend(r.stds.iter().map(|&s| csv_number(s)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub p: usize,
    pub estimate: f64,
    pub stderr: f64,
}

const ALPHA_CHUNK: usize = 1 << 14;

/// Monte Carlo estimates of `alpha_0 .. alpha_{p_max}`: sample a removal,
/// weight it through the cosine distance of the presence vector, and average
/// `pi z_1 ... z_p`.
pub fn mc_alpha(d: usize, nu: Bandwidth, n_mc: usize, p_max: usize, seed: u64) -> Result<Vec<AlphaEstimate>> {
    if p_max > d {
        return Err(Error::OrderOutOfRange { p: p_max, d });
    }
    if n_mc < 2 {
        return Err(Error::invalid("n_mc must be >= 2"));
    }
    let width = p_max + 1;
    let chunks = n_mc.div_ceil(ALPHA_CHUNK);
    let parts: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let mut sum = vec![0.0; width];
            let mut sum_sq = vec![0.0; width];
            for _ in 0..ALPHA_CHUNK.min(n_mc - c * ALPHA_CHUNK) {
                let z = draw_removal(d, &mut rng)?.presence(d);
                let pi = weight(&z, nu);
                let leading = z.iter().take_while(|&&b| b).count();
                for p in 0..=p_max.min(leading) {
                    sum[p] += pi;
                    sum_sq[p] += pi * pi;
                }
            }
            Ok((sum, sum_sq))
        })
        .collect();
    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    for part in parts {
        let (s, q) = part?;
        for p in 0..width {
            sum[p] += s[p];
            sum_sq[p] += q[p];
        }
    }
    let n = n_mc as f64;
    Ok((0..width)
        .map(|p| {
            let mean = sum[p] / n;
            let var = ((sum_sq[p] - n * mean * mean) / (n - 1.0)).max(0.0);
            AlphaEstimate { p, estimate: mean, stderr: (var / n).sqrt() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fit_idf;
    use crate::theory::{alpha, alpha_limit};
    use crate::verify::data::{bundled_corpus, REFERENCE_DOCUMENT};

    fn fixture() -> LocalTfIdf {
        let corpus = bundled_corpus();
        let idf = fit_idf(&corpus).unwrap();
        LocalTfIdf::new(&corpus.documents[REFERENCE_DOCUMENT], &idf).unwrap()
    }

    fn quick() -> RunConfig {
        RunConfig { n: 600, n_exp: 12, seed: 11, ..RunConfig::default() }
    }

    #[test]
    fn mc_alpha_matches_closed_form() {
        let nu = Bandwidth::new(0.25).unwrap();
        let est = mc_alpha(15, nu, 200_000, 3, 5).unwrap();
        for e in &est {
            let exact = alpha(e.p, 15, nu).unwrap();
            assert!((e.estimate - exact).abs() <= (3.0 * e.stderr).max(5e-3), "p={} {} {exact}", e.p, e.estimate);
        }
        let wide = mc_alpha(12, Bandwidth::new(1e3).unwrap(), 100_000, 12, 6).unwrap();
        for e in &wide[..4] {
            assert!((e.estimate - alpha_limit(e.p, 12)).abs() < 5e-3);
        }
        assert_eq!(wide[12].estimate, 0.0);
        assert!(mc_alpha(3, nu, 100, 4, 0).is_err());
    }

    #[test]
    fn mc_alpha_is_reproducible() {
        let nu = Bandwidth::new(0.5).unwrap();
        assert_eq!(mc_alpha(8, nu, 40_000, 2, 9).unwrap(), mc_alpha(8, nu, 40_000, 2, 9).unwrap());
    }

    #[test]
    fn constant_sweep_is_flat() {
        let local = fixture();
        let pts = sweep_bandwidth(&Model::constant(1.0), &local, "food", &[0.1, 1.0], &quick()).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            assert!(p.stats.median.abs() < 1e-9 && p.theory.unwrap().abs() < 1e-9);
        }
        assert!(matches!(
            sweep_bandwidth(&Model::constant(1.0), &local, "zzz", &[0.1], &quick()),
            Err(Error::UnknownWord(_))
        ));
        let mut buf = Vec::new();
        write_sweep_csv(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        assert_eq!(default_sweep_grid().len(), 24);
    }

    #[test]
    fn linearity_with_zero_model() {
        let local = fixture();
        let f = Model::parse_tree("\"food\" & \"bad\"", local.dictionary()).unwrap();
        let report = linearity_check(&f, &Model::constant(0.0), &local, &quick()).unwrap();
        assert!(report.max_theory_deviation <= 1e-12);
        assert!(report.rows.iter().all(|r| r.envelope > 0.0));
    }

    #[test]
    fn concentration_errors_and_shape() {
        let local = fixture();
        let exact = Model::parse_tree("\"food\"", local.dictionary()).unwrap();
        assert!(concentration_check(&exact, &local, &[200, 800], &quick()).is_err());
        let f = Model::parse_tree("\"food\" & \"bad\" + \"about\"", local.dictionary()).unwrap();
        let one = RunConfig { n_exp: 1, ..quick() };
        assert!(matches!(concentration_check(&f, &local, &[200, 800], &one), Err(Error::NeedTwoRuns)));
        assert!(concentration_check(&f, &local, &[800, 200], &quick()).is_err());
        let report = concentration_check(&f, &local, &[250, 1000, 4000], &RunConfig { n_exp: 24, ..quick() }).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.rows[0].ratio.is_none());
        assert!((report.pooled_slope + 0.5).abs() < 0.2, "{}", report.pooled_slope);
    }
}
