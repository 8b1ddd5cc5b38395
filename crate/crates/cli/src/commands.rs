use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use textlime::report::{csv_number, output_file_name, write_json};
use textlime::theory::{alpha, alpha_limit, alpha_lower_bound, theory_for_model, DispatchOptions, TheoryExplanation};
use textlime::verify::data::bundled_corpus;
use textlime::verify::{default_sweep_grid, mc_alpha, sweep_bandwidth, write_sweep_csv};
use textlime::{
    compare, explain, fit_idf, run_repeated, sample_batch, tokenize, Corpus, Document, ExplainConfig, IdfTable,
    LinearModel, LocalTfIdf, Model, RunConfig,
};

use crate::settings::{Command, DocSelector, Format, Settings};
use crate::CliError;

pub fn dispatch(command: &Command, s: &Settings) -> Result<(), CliError> {
    match command {
        Command::Explain { save_idf, dump_samples } => cmd_explain(s, save_idf.as_deref(), *dump_samples),
        Command::Theory(_) => cmd_theory(s),
        Command::Verify(_) => cmd_verify(s),
        Command::Sweep { .. } => cmd_sweep(s),
        Command::AlphaTable { .. } => cmd_alpha_table(s),
    }
}

fn config(field: &'static str, message: impl ToString) -> CliError {
    CliError::Config { field, message: message.to_string() }
}

/// Everything derived from the corpus, document and model options.
struct Context {
    idf: IdfTable,
    local: LocalTfIdf,
    model: Model,
    label: String,
}

fn load_context(s: &Settings) -> Result<Context, CliError> {
    let corpus = match &s.corpus {
        Some(path) => Corpus::load(path).map_err(|e| config("corpus", format!("{}: {e}", path.display())))?,
        None => bundled_corpus(),
    };
    let idf = match &s.idf {
        Some(path) => {
            let file = File::open(path).map_err(|e| config("idf", format!("{}: {e}", path.display())))?;
            IdfTable::read_json(file).map_err(|e| config("idf", format!("{}: {e}", path.display())))?
        }
        None => fit_idf(&corpus).map_err(|e| config("corpus", e))?,
    };
    let doc: Document = match &s.doc {
        DocSelector::Index(i) => corpus.get(*i).cloned().ok_or_else(|| {
            config("doc", format!("index {i} out of range for a corpus of {} documents", corpus.len()))
        })?,
        DocSelector::Text(text) => tokenize(text),
    };
    let local = LocalTfIdf::new(&doc, &idf).map_err(|e| config("doc", e))?;
    let model = build_model(s, &local)?;
    let label: String = s.models.join("+").chars().take(48).collect();
    Ok(Context { idf, local, model, label })
}

fn parse_model(spec: &str, s: &Settings, local: &LocalTfIdf) -> Result<Model, CliError> {
    let bad = |e: &dyn ToString| config("model", format!("`{spec}`: {}", e.to_string()));
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (spec, None),
    };
    match (kind, arg) {
        ("constant", None) => Ok(Model::constant(1.0)),
        ("constant", Some(c)) => Ok(Model::constant(c.trim().parse::<f64>().map_err(|e| bad(&e))?)),
        ("tree", Some(expr)) => Model::parse_tree(expr, local.dictionary()).map_err(|e| bad(&e)),
        ("linear", Some(path)) => {
            let file = File::open(path).map_err(|e| bad(&e))?;
            Ok(Model::Linear(LinearModel::read_json(file, local.dictionary()).map_err(|e| bad(&e))?))
        }
        ("gaussian-linear", seed) => {
            let seed = match seed {
                Some(v) => v.trim().parse::<u64>().map_err(|e| bad(&e))?,
                None => s.seed,
            };
            Ok(Model::Linear(LinearModel::gaussian(local.d(), 1.0, seed)))
        }
        _ => Err(bad(&"expected constant[:c], tree:<expr>, linear:<path> or gaussian-linear[:seed]")),
    }
}

fn build_model(s: &Settings, local: &LocalTfIdf) -> Result<Model, CliError> {
    if s.models.is_empty() {
        return Err(config("model", "a model is required"));
    }
    let mut models = s.models.iter().map(|spec| parse_model(spec, s, local)).collect::<Result<Vec<_>, _>>()?;
    if models.len() == 1 {
        return Ok(models.pop().expect("one model"));
    }
    Ok(textlime::models::combine(models.into_iter().map(|m| (1.0, m))))
}

fn output_path(s: &Settings, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&s.out).map_err(|e| config("out", format!("{}: {e}", s.out.display())))?;
    Ok(s.out.join(name))
}

fn write_with<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(BufWriter<File>) -> textlime::Result<()>,
{
    let file = File::create(path)?;
    write(BufWriter::new(file))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch_options(s: &Settings, d: usize) -> DispatchOptions {
    DispatchOptions { linear_mode: s.linear_mode(d), n_mc: s.n_mc, seed: s.seed }
}

fn limit_explanation(s: &Settings, ctx: &Context) -> Result<TheoryExplanation, CliError> {
    Ok(theory_for_model(&ctx.model, &ctx.local, s.nu, &dispatch_options(s, ctx.local.d()))?)
}

fn run_config(s: &Settings) -> RunConfig {
    RunConfig { n: s.n, nu: s.nu, ridge: s.ridge, n_exp: s.n_exp, seed: s.seed }
}

fn cmd_explain(s: &Settings, save_idf: Option<&Path>, dump_samples: bool) -> Result<(), CliError> {
    let ctx = load_context(s)?;
    let cfg = ExplainConfig { n: s.n, nu: s.nu, ridge: s.ridge, seed: s.seed };
    let e = explain(&ctx.model, &ctx.local, &cfg)?;
    let ext = s.format.extension();
    let path = output_path(s, &output_file_name("explain", &ctx.label, s.nu.value(), s.n, ext))?;
    write_with(&path, |w| match s.format {
        Format::Csv => e.write_csv(w),
        Format::Json => e.write_json(w),
    })?;
    if dump_samples {
        let batch = sample_batch(ctx.local.dictionary(), s.n, s.nu, s.seed)?;
        let path = output_path(s, &output_file_name("samples", &ctx.label, s.nu.value(), s.n, "csv"))?;
        write_with(&path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            batch.write_csv(&mut csv, 0, true)?;
            csv.flush()?;
            Ok(())
        })?;
    }
    if let Some(path) = save_idf {
        write_with(path, |w| ctx.idf.write_json(w))?;
    }
    Ok(())
}

fn cmd_theory(s: &Settings) -> Result<(), CliError> {
    let ctx = load_context(s)?;
    let theory = limit_explanation(s, &ctx)?;
    let path = output_path(s, &output_file_name("theory", &ctx.label, s.nu.value(), s.n_mc, s.format.extension()))?;
    write_with(&path, |w| match s.format {
        Format::Csv => theory.write_csv(w),
        Format::Json => theory.write_json(w),
    })?;
    println!("provenance: {}", theory.provenance);
    Ok(())
}

fn cmd_verify(s: &Settings) -> Result<(), CliError> {
    let ctx = load_context(s)?;
    let stats = run_repeated(&ctx.model, &ctx.local, &run_config(s))?;
    let theory = limit_explanation(s, &ctx)?;
    let report = compare(&stats, &theory)?;
    let ext = s.format.extension();
    let nu = s.nu.value();
    let path = output_path(s, &output_file_name("runs", &ctx.label, nu, s.n, ext))?;
    write_with(&path, |w| match s.format {
        Format::Csv => stats.write_csv(w),
        Format::Json => write_json(w, &stats),
    })?;
    let path = output_path(s, &output_file_name("verify", &ctx.label, nu, s.n, ext))?;
    write_with(&path, |w| match s.format {
        Format::Csv => report.write_csv(w),
        Format::Json => write_json(w, &report),
    })?;
    println!("theory provenance: {}", theory.provenance);
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_sweep(s: &Settings) -> Result<(), CliError> {
    let ctx = load_context(s)?;
    let word = s.word.as_deref().ok_or_else(|| config("word", "sweep needs the word whose coefficient is tracked"))?;
    if ctx.local.dictionary().index_of(word).is_none() {
        return Err(config("word", format!("`{word}` does not occur in the document")));
    }
    let grid = s.nu_grid.clone().unwrap_or_else(default_sweep_grid);
    let points = sweep_bandwidth(&ctx.model, &ctx.local, word, &grid, &run_config(s))?;
    // The bandwidth slot of the file name holds the lower end of the grid.
    let low = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let label = format!("{}_{word}", ctx.label);
    let path = output_path(s, &output_file_name("sweep", &label, low, s.n, s.format.extension()))?;
    write_with(&path, |w| match s.format {
        Format::Csv => write_sweep_csv(&points, w),
        Format::Json => write_json(w, &points),
    })
}

#[derive(Serialize)]
struct AlphaRow {
    p: usize,
    alpha: f64,
    lower_bound: f64,
    upper_bound: f64,
    mc_estimate: f64,
    mc_stderr: f64,
}

fn cmd_alpha_table(s: &Settings) -> Result<(), CliError> {
    let d = s.d.ok_or_else(|| config("d", "alpha-table needs the number of distinct words"))?;
    if d == 0 {
        return Err(config("d", "must be >= 1"));
    }
    if s.p_max > d {
        return Err(config("p_max", format!("must not exceed d = {d}")));
    }
    let mc = mc_alpha(d, s.nu, s.n_mc, s.p_max, s.seed)?;
    let rows = mc
        .iter()
        .map(|e| {
            Ok(AlphaRow {
                p: e.p,
                alpha: alpha(e.p, d, s.nu)?,
                lower_bound: alpha_lower_bound(e.p, d, s.nu),
                upper_bound: alpha_limit(e.p, d),
                mc_estimate: e.estimate,
                mc_stderr: e.stderr,
            })
        })
        .collect::<textlime::Result<Vec<_>>>()?;
    let name = output_file_name("alpha-table", &format!("d{d}"), s.nu.value(), s.n_mc, s.format.extension());
    let path = output_path(s, &name)?;
    write_with(&path, |w| match s.format {
        Format::Json => write_json(w, &rows),
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["p", "alpha", "lower_bound", "upper_bound", "mc_estimate", "mc_stderr"])?;
            for r in &rows {
                csv.write_record([
                    r.p.to_string(),
                    csv_number(r.alpha),
                    csv_number(r.lower_bound),
                    csv_number(r.upper_bound),
                    csv_number(r.mc_estimate),
                    csv_number(r.mc_stderr),
                ])?;
            }
            csv.flush()?;
            Ok(())
        }
    })
}
