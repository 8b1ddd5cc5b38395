//! Command-line flags, the optional TOML config file and their resolution
//! into one validated [`Settings`] value.
//!
//! Precedence: flags, then `TEXTLIME_*` environment variables, then the
//! config file, then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use textlime::theory::linear::MAX_EXACT_D;
use textlime::theory::{ETermMethod, LinearMode};
use textlime::Bandwidth;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "textlime", version, about = "LIME for text: explanations, their closed-form limits and experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one document with a single LIME run.
    Explain {
        /// Also write the fitted IDF table to this path.
        #[arg(long)]
        save_idf: Option<PathBuf>,
        /// Also write every perturbed sample (s, z, weight) as CSV.
        #[arg(long)]
        dump_samples: bool,
    },
    /// Closed-form (or Monte Carlo) limit explanation.
    Theory(TheoryArgs),
    /// Repeated runs compared against the limit explanation.
    Verify(TheoryArgs),
    /// Coefficient of one word across a grid of bandwidths.
    Sweep {
        #[arg(long, env = "TEXTLIME_WORD")]
        word: Option<String>,
        /// Comma-separated bandwidths; defaults to 24 log-spaced points in [0.03, 3].
        #[arg(long, env = "TEXTLIME_NU_GRID", value_delimiter = ',', allow_negative_numbers = true)]
        nu_grid: Option<Vec<f64>>,
    },
    /// Table of the alpha coefficients with their bounds and a Monte Carlo check.
    AlphaTable {
        #[arg(long, env = "TEXTLIME_D")]
        d: Option<usize>,
        #[arg(long, env = "TEXTLIME_P_MAX")]
        p_max: Option<usize>,
        #[arg(long, env = "TEXTLIME_N_MC")]
        n_mc: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, env = "TEXTLIME_LINEAR_MODE", value_enum)]
    pub linear_mode: Option<LinearModeArg>,
    /// Draws for Monte Carlo routes.
    #[arg(long, env = "TEXTLIME_N_MC")]
    pub n_mc: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML file supplying any of the options below.
    #[arg(long, global = true, env = "TEXTLIME_CONFIG")]
    pub config: Option<PathBuf>,
    /// Plain-text (one document per line) or JSONL corpus; the bundled sample corpus if omitted.
    #[arg(long, global = true, env = "TEXTLIME_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Load the IDF table from JSON instead of fitting it on the corpus.
    #[arg(long, global = true, env = "TEXTLIME_IDF")]
    pub idf: Option<PathBuf>,
    /// Document to explain: a line index into the corpus, or `text:<inline text>`.
    #[arg(long, global = true, env = "TEXTLIME_DOC")]
    pub doc: Option<String>,
    /// `constant[:c]`, `tree:<expr>`, `linear:<coefficients.json>` or
    /// `gaussian-linear[:seed]`; repeat to add models together.
    #[arg(long, global = true, env = "TEXTLIME_MODEL")]
    pub model: Vec<String>,
    #[arg(long, global = true, env = "TEXTLIME_N")]
    pub n: Option<usize>,
    #[arg(long, global = true, env = "TEXTLIME_NU", conflicts_with = "nu_lime", allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// Bandwidth on the LIME scale (`nu = nu_lime / 100`).
    #[arg(long, global = true, env = "TEXTLIME_NU_LIME", allow_negative_numbers = true)]
    pub nu_lime: Option<f64>,
    #[arg(long, global = true, env = "TEXTLIME_RIDGE", allow_negative_numbers = true)]
    pub ridge: Option<f64>,
    #[arg(long, global = true, env = "TEXTLIME_N_EXP")]
    pub n_exp: Option<usize>,
    #[arg(long, global = true, env = "TEXTLIME_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "TEXTLIME_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "TEXTLIME_FORMAT", value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, env = "TEXTLIME_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearModeArg {
    Simplified,
    Full,
    Leading,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

/// Keys accepted in the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    idf: Option<PathBuf>,
    doc: Option<String>,
    model: Option<OneOrMany>,
    n: Option<usize>,
    nu: Option<f64>,
    nu_lime: Option<f64>,
    ridge: Option<f64>,
    n_exp: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    threads: Option<usize>,
    linear_mode: Option<LinearModeArg>,
    n_mc: Option<usize>,
    word: Option<String>,
    nu_grid: Option<Vec<f64>>,
    d: Option<usize>,
    p_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DocSelector {
    Index(usize),
    Text(String),
}

/// Fully resolved and validated options.
#[derive(Debug, Clone)]
pub struct Settings {
    pub corpus: Option<PathBuf>,
    pub idf: Option<PathBuf>,
    pub doc: DocSelector,
    pub models: Vec<String>,
    pub n: usize,
    pub nu: Bandwidth,
    pub ridge: f64,
    pub n_exp: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    pub linear_mode: LinearModeArg,
    pub n_mc: usize,
    pub word: Option<String>,
    pub nu_grid: Option<Vec<f64>>,
    pub d: Option<usize>,
    pub p_max: usize,
}

impl Settings {
    /// The linear-model route for `d` local words. Exact E-terms are used up
    /// to `MAX_EXACT_D` words, Monte Carlo beyond.
    pub fn linear_mode(&self, d: usize) -> LinearMode {
        let method = if d <= MAX_EXACT_D {
            ETermMethod::Exact
        } else {
            ETermMethod::MonteCarlo { n: self.n_mc, seed: self.seed }
        };
        match self.linear_mode {
            LinearModeArg::Simplified => LinearMode::Simplified,
            LinearModeArg::Full => LinearMode::Full(method),
            LinearModeArg::Leading => LinearMode::Leading(method),
        }
    }
}

fn config_error(field: &'static str, message: impl Into<String>) -> CliError {
    CliError::Config { field, message: message.into() }
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_error("config", format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_error("config", format!("{}: {}", path.display(), e.message())))
}

fn parse_doc(raw: &str) -> Result<DocSelector, CliError> {
    if let Some(text) = raw.strip_prefix("text:") {
        return Ok(DocSelector::Text(text.to_owned()));
    }
    raw.trim()
        .parse()
        .map(DocSelector::Index)
        .map_err(|_| config_error("doc", format!("expected a line index or `text:<document>`, got `{raw}`")))
}

fn positive(field: &'static str, value: usize) -> Result<usize, CliError> {
    if value == 0 {
        return Err(config_error(field, "must be >= 1"));
    }
    Ok(value)
}

pub fn resolve(cli: &Cli) -> Result<Settings, CliError> {
    let a = &cli.common;
    let file = match &a.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };

    let nu = match (a.nu, a.nu_lime) {
        (Some(v), _) => bandwidth("nu", v, false)?,
        (None, Some(v)) => bandwidth("nu_lime", v, true)?,
        (None, None) => match (file.nu, file.nu_lime) {
            (Some(_), Some(_)) => return Err(config_error("nu", "give either nu or nu_lime, not both")),
            (Some(v), None) => bandwidth("nu", v, false)?,
            (None, Some(v)) => bandwidth("nu_lime", v, true)?,
            (None, None) => Bandwidth::new(0.25).expect("positive"),
        },
    };

    let corpus = a.corpus.clone().or(file.corpus);
    if let Some(path) = &corpus {
        if !path.is_file() {
            return Err(config_error("corpus", format!("no such file: {}", path.display())));
        }
    }
    let idf = a.idf.clone().or(file.idf);
    if let Some(path) = &idf {
        if !path.is_file() {
            return Err(config_error("idf", format!("no such file: {}", path.display())));
        }
    }
    let doc = match a.doc.clone().or(file.doc) {
        Some(raw) => parse_doc(&raw)?,
        None => DocSelector::Index(0),
    };
    let models = if !a.model.is_empty() {
        a.model.clone()
    } else {
        match file.model {
            Some(OneOrMany::One(m)) => vec![m],
            Some(OneOrMany::Many(ms)) => ms,
            None => Vec::new(),
        }
    };

    let ridge = a.ridge.or(file.ridge).unwrap_or(0.0);
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(config_error("ridge", format!("must be finite and >= 0, got {ridge}")));
    }
    let threads = match a.threads.or(file.threads) {
        Some(t) => Some(positive("threads", t)?),
        None => None,
    };

    let (mut linear_mode, mut n_mc) = (file.linear_mode, file.n_mc);
    let (mut word, mut nu_grid, mut d, mut p_max) = (file.word, file.nu_grid, file.d, file.p_max);
    match &cli.command {
        Command::Theory(t) | Command::Verify(t) => {
            linear_mode = t.linear_mode.or(linear_mode);
            n_mc = t.n_mc.or(n_mc);
        }
        Command::Sweep { word: w, nu_grid: g } => {
            word = w.clone().or(word);
            nu_grid = g.clone().or(nu_grid);
        }
        Command::AlphaTable { d: dd, p_max: pm, n_mc: nm } => {
            d = dd.or(d);
            p_max = pm.or(p_max);
            n_mc = nm.or(n_mc);
        }
        Command::Explain { .. } => {}
    }
    if let Some(grid) = &nu_grid {
        if grid.is_empty() {
            return Err(config_error("nu_grid", "must not be empty"));
        }
        if let Some(bad) = grid.iter().find(|v| !(**v > 0.0)) {
            return Err(config_error("nu_grid", format!("bandwidths must be positive, got {bad}")));
        }
    }

    Ok(Settings {
        corpus,
        idf,
        doc,
        models,
        n: positive("n", a.n.or(file.n).unwrap_or(5000))?,
        nu,
        ridge,
        n_exp: positive("n_exp", a.n_exp.or(file.n_exp).unwrap_or(100))?,
        seed: a.seed.or(file.seed).unwrap_or(0),
        out: a.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
        format: a.format.or(file.format).unwrap_or(Format::Csv),
        threads,
        linear_mode: linear_mode.unwrap_or(LinearModeArg::Simplified),
        n_mc: positive("n_mc", n_mc.unwrap_or(200_000))?,
        word,
        nu_grid,
        d,
        p_max: p_max.unwrap_or(4),
    })
}

fn bandwidth(field: &'static str, value: f64, lime_scale: bool) -> Result<Bandwidth, CliError> {
    let nu = if lime_scale { Bandwidth::from_lime(value) } else { Bandwidth::new(value) };
    nu.map_err(|e| config_error(field, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("textlime").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults() {
        let s = resolve(&parse(&["explain"])).unwrap();
        assert_eq!((s.n, s.n_exp, s.seed, s.ridge), (5000, 100, 0, 0.0));
        assert_eq!(s.nu.value(), 0.25);
        assert_eq!(s.doc, DocSelector::Index(0));
        assert_eq!(s.format, Format::Csv);
    }

    #[test]
    fn lime_scale_bandwidth() {
        let s = resolve(&parse(&["explain", "--nu-lime", "25"])).unwrap();
        assert_eq!(s.nu.value(), 0.25);
        assert!(Cli::try_parse_from(["textlime", "explain", "--nu", "1", "--nu-lime", "25"]).is_err());
    }

    #[test]
    fn field_named_in_errors() {
        let err = resolve(&parse(&["explain", "--n", "0"])).unwrap_err();
        assert!(matches!(err, CliError::Config { field: "n", .. }));
        let err = resolve(&parse(&["explain", "--nu", "-1"])).unwrap_err();
        assert!(matches!(err, CliError::Config { field: "nu", .. }));
        let err = resolve(&parse(&["explain", "--doc", "first"])).unwrap_err();
        assert!(matches!(err, CliError::Config { field: "doc", .. }));
        assert_eq!(parse_doc("text:12").unwrap(), DocSelector::Text("12".into()));
    }

    #[test]
    fn config_file_fills_gaps_only() {
        let dir = std::env::temp_dir().join(format!("textlime-settings-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        fs::write(&path, "n = 123\nseed = 9\nmodel = [\"constant\", \"tree:\\\"food\\\"\"]\nnu_lime = 50\n").unwrap();
        let p = path.to_str().unwrap();
        let s = resolve(&parse(&["explain", "--config", p, "--seed", "4"])).unwrap();
        assert_eq!((s.n, s.seed, s.models.len()), (123, 4, 2));
        assert_eq!(s.nu.value(), 0.5);
        fs::write(&path, "bogus = 1\n").unwrap();
        assert!(matches!(
            resolve(&parse(&["explain", "--config", p])).unwrap_err(),
            CliError::Config { field: "config", .. }
        ));
        fs::write(&path, "nu = 1.0\nnu_lime = 25\n").unwrap();
        assert!(matches!(
            resolve(&parse(&["explain", "--config", p])).unwrap_err(),
            CliError::Config { field: "nu", .. }
        ));
        fs::remove_dir_all(&dir).unwrap();
    }
}
