//! Batch front-end: run configurations and CSV/JSON reports.
//!
//! A configuration is a line-oriented `key = value` file with `[section]`
//! headers; `#` starts a comment.
//!
//! ```text
//! [problem]
//! name = test2           # test1 | test2 | test3
//! epsilon = 1e-6         # test2 only
//! bc = nearly-neumann    # dirichlet | mixed | nearly-neumann
//!
//! [mesh]
//! family = distorted     # cartesian | distorted | concave
//! nx = 5
//! ny = 5
//! amplitude = 0.3
//! refinements = 1, 2, 3
//!
//! [discretization]
//! degrees = 0, 1
//! variants = Mon(a), Ortho(b)
//! stabilization = catalog    # or e.g. dofi-dofi(1e6), d-recipe(1), edge-normal
//!
//! [output]
//! dir = results
//! format = csv
//! condition_number = true
//! wall_time = false
//! seed = 0
//! ```

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::benchmarks::{
    run_convergence_study, BcMode, MeshFamily, ProblemId, RunRecord, RunReport, StabilizationChoice, StudyConfig,
    DEFAULT_DISTORTION,
};
use crate::vem::{DofVariant, Stabilization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub study: StudyConfig,
    pub output_dir: PathBuf,
    pub format: ReportFormat,
    /// Recorded with the experiment; the sweep itself draws no random numbers.
    pub seed: u64,
}

impl RunConfig {
    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join(format!("report.{}", self.format.extension()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, `None` for problems with the file as a whole.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid thread count: {0}")]
    Threads(String),
    #[error(transparent)]
    Run(#[from] crate::Error),
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("problem", &["name", "epsilon", "d_par", "bc"]),
    ("mesh", &["family", "nx", "ny", "amplitude", "refinements"]),
    ("discretization", &["degrees", "variants", "stabilization"]),
    ("output", &["dir", "format", "condition_number", "wall_time", "seed"]),
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

/// Entries keyed by (section, key).
type RawConfig = HashMap<(&'static str, &'static str), Entry>;

fn read_entries(text: &str, errors: &mut Vec<ConfigError>) -> RawConfig {
    let mut raw = RawConfig::new();
    let mut section: Option<(&'static str, &'static [&'static str])> = None;
    let mut seen_sections: HashMap<&str, usize> = HashMap::new();
    for (i, full) in text.lines().enumerate() {
        let line = i + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError { line: Some(line), message };
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                errors.push(err(format!("malformed section header `{content}`")));
                section = None;
                continue;
            };
            let name = name.trim();
            match SECTIONS.iter().find(|(s, _)| *s == name) {
                Some(&(s, keys)) => {
                    if let Some(first) = seen_sections.insert(s, line) {
                        errors.push(err(format!("duplicate section [{s}] (first on line {first})")));
                    }
                    section = Some((s, keys));
                }
                None => {
                    errors.push(err(format!("unknown section [{name}]")));
                    section = None;
                }
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(err(format!("expected `key = value`, found `{content}`")));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some((sname, keys)) = section else {
            errors.push(err(format!("key `{key}` outside a known section")));
            continue;
        };
        let Some(&k) = keys.iter().find(|k| **k == key) else {
            errors.push(err(format!("unknown key `{key}` in [{sname}]")));
            continue;
        };
        if let Some(prev) = raw.get(&(sname, k)) {
            errors.push(err(format!("duplicate key `{key}` (first set on line {})", prev.line)));
            continue;
        }
        raw.insert((sname, k), Entry { line, value: value.to_string() });
    }
    raw
}

/// Typed access to the raw entries; every failure is recorded with its line.
struct Fields<'a> {
    raw: &'a RawConfig,
    errors: &'a mut Vec<ConfigError>,
}

impl Fields<'_> {
    fn entry(&self, section: &'static str, key: &'static str) -> Option<&Entry> {
        self.raw.get(&(section, key))
    }

    fn fail(&mut self, line: Option<usize>, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn get<T>(&mut self, section: &'static str, key: &'static str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let e = self.entry(section, key)?.clone();
        match parse(&e.value) {
            Ok(v) => Some(v),
            Err(m) => {
                self.fail(Some(e.line), format!("malformed `{key}`: {m}"));
                None
            }
        }
    }

    fn list<T: PartialEq + fmt::Debug>(
        &mut self,
        section: &'static str,
        key: &'static str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Option<Vec<T>> {
        let Some(e) = self.entry(section, key).cloned() else {
            self.fail(None, format!("missing `{key}` in [{section}]"));
            return None;
        };
        if e.value.is_empty() {
            self.fail(Some(e.line), format!("`{key}` is empty"));
            return None;
        }
        let mut out = Vec::new();
        for item in e.value.split(',').map(str::trim) {
            if item.is_empty() {
                self.fail(Some(e.line), format!("empty item in `{key}`"));
                return None;
            }
            match parse(item) {
                Ok(v) if out.contains(&v) => {
                    self.fail(Some(e.line), format!("repeated item `{item}` in `{key}`"));
                    return None;
                }
                Ok(v) => out.push(v),
                Err(m) => {
                    self.fail(Some(e.line), format!("malformed `{key}` item `{item}`: {m}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    /// Reports `key` as not applicable if present.
    fn reject(&mut self, section: &'static str, key: &'static str, why: &str) {
        if let Some(e) = self.entry(section, key).cloned() {
            self.fail(Some(e.line), format!("`{key}` is not valid {why}"));
        }
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(_) => Err("must be a positive finite number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(_) => Err("must be a non-negative finite number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse().map_err(|e: std::num::ParseIntError| e.to_string())
}

fn parse_level(s: &str) -> Result<usize, String> {
    match parse_usize(s)? {
        0 => Err("refinement levels start at 1".into()),
        v if v > 12 => Err("refinement level above 12".into()),
        v => Ok(v),
    }
}

fn parse_cells(s: &str) -> Result<usize, String> {
    match parse_usize(s)? {
        0 => Err("must be at least 1".into()),
        v => Ok(v),
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, found `{s}`")),
    }
}

fn normalized(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

/// `dofi-dofi(C)`, `d-recipe(C)` or `edge-normal`; case and punctuation in
/// the name are ignored (`DofiDofi(1e6)`, `EdgeNormalDRecipe` also parse).
pub fn parse_stabilization(s: &str) -> Result<Stabilization, String> {
    let (name, arg) = match s.split_once('(') {
        Some((n, rest)) => {
            let arg = rest.strip_suffix(')').ok_or_else(|| format!("unclosed parenthesis in `{s}`"))?;
            (n, Some(arg.trim()))
        }
        None => (s, None),
    };
    let c = arg.map(parse_positive).transpose()?;
    match (normalized(name).as_str(), c) {
        ("dofidofi", Some(c)) => Ok(Stabilization::DofiDofi { c }),
        ("drecipe", Some(c)) => Ok(Stabilization::DRecipe { c }),
        ("dofidofi" | "drecipe", None) => Err(format!("`{name}` needs a constant, e.g. `{name}(1)`")),
        ("edgenormal" | "edgenormaldrecipe", None) => Ok(Stabilization::EdgeNormalDRecipe),
        ("edgenormal" | "edgenormaldrecipe", Some(_)) => Err("edge-normal takes no constant".into()),
        _ => Err(format!("unknown stabilization `{name}`")),
    }
}

/// Parses and validates a configuration. All errors found are reported
/// together, each with its line where one applies.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let raw = read_entries(text, &mut errors);
    let mut f = Fields { raw: &raw, errors: &mut errors };

    // problem
    let name_line = f.entry("problem", "name").map(|e| e.line);
    let name = f.get("problem", "name", |s| match s.to_ascii_lowercase().as_str() {
        n @ ("test1" | "test2" | "test3") => Ok(n.to_string()),
        _ => Err(format!("unknown problem `{s}` (test1, test2 or test3)")),
    });
    if name_line.is_none() {
        f.fail(None, "missing `name` in [problem]".into());
    }
    let bc = f.get("problem", "bc", |s| BcMode::parse(s).ok_or_else(|| format!("unknown boundary mode `{s}`")));
    let problem = match name.as_deref() {
        Some("test1") => {
            f.reject("problem", "epsilon", "for test1");
            f.reject("problem", "d_par", "for test1");
            if bc.is_some_and(|b| b != BcMode::Dirichlet) {
                let line = f.entry("problem", "bc").map(|e| e.line);
                f.fail(line, "test1 only supports `bc = dirichlet`".into());
            }
            Some(ProblemId::Test1)
        }
        Some("test2") => {
            f.reject("problem", "d_par", "for test2");
            let epsilon = f.get("problem", "epsilon", parse_positive);
            if f.entry("problem", "epsilon").is_none() {
                f.fail(None, "test2 requires `epsilon` in [problem]".into());
            }
            epsilon.map(|epsilon| ProblemId::Test2 { epsilon, bc: bc.unwrap_or(BcMode::Dirichlet) })
        }
        Some("test3") => {
            f.reject("problem", "epsilon", "for test3");
            let d_par = f.get("problem", "d_par", parse_positive);
            if f.entry("problem", "d_par").is_none() {
                f.fail(None, "test3 requires `d_par` in [problem]".into());
            }
            d_par.map(|d_par| ProblemId::Test3 { d_par, bc: bc.unwrap_or(BcMode::Dirichlet) })
        }
        _ => None,
    };
    if let Some(id) = problem {
        if let Err(e) = id.validate() {
            f.fail(name_line, e.to_string());
        }
    }

    // mesh
    let family_name = f.get("mesh", "family", |s| match normalized(s).as_str() {
        n @ ("cartesian" | "distorted" | "concave") => Ok(n.to_string()),
        _ => Err(format!("unknown mesh family `{s}`")),
    });
    let family = problem.and_then(|id| {
        let default = MeshFamily::default_for(id);
        let (dnx, dny) = match default {
            MeshFamily::Cartesian { nx, ny } | MeshFamily::Distorted { nx, ny, .. } => (nx, ny),
            MeshFamily::Concave => (4, 4),
        };
        let kind = family_name.clone().unwrap_or_else(|| {
            match default {
                MeshFamily::Cartesian { .. } => "cartesian",
                MeshFamily::Distorted { .. } => "distorted",
                MeshFamily::Concave => "concave",
            }
            .to_string()
        });
        if f.entry("mesh", "family").is_some() && family_name.is_none() {
            return None;
        }
        if kind != "distorted" {
            f.reject("mesh", "amplitude", "for this mesh family");
        }
        if kind == "concave" {
            f.reject("mesh", "nx", "for the concave family");
            f.reject("mesh", "ny", "for the concave family");
            return Some(MeshFamily::Concave);
        }
        let nx = f.get("mesh", "nx", parse_cells).unwrap_or(dnx);
        let ny = f.get("mesh", "ny", parse_cells).unwrap_or(dny);
        Some(match kind.as_str() {
            "cartesian" => MeshFamily::Cartesian { nx, ny },
            _ => MeshFamily::Distorted {
                nx,
                ny,
                amplitude: f.get("mesh", "amplitude", parse_nonneg).unwrap_or(DEFAULT_DISTORTION),
            },
        })
    });
    let refinements = f.list("mesh", "refinements", parse_level);

    // discretization
    let degrees = f.list("discretization", "degrees", |s| match parse_usize(s)? {
        k if k > 10 => Err("degree above 10".into()),
        k => Ok(k),
    });
    let variants = f.list("discretization", "variants", |s| s.parse::<DofVariant>().map_err(|e| e.to_string()));
    let stabilizations = match f.entry("discretization", "stabilization") {
        Some(e) if normalized(&e.value) == "catalog" => Some(StabilizationChoice::Catalog),
        Some(_) => f.list("discretization", "stabilization", parse_stabilization).map(StabilizationChoice::Explicit),
        None => Some(StabilizationChoice::Catalog),
    };

    // output
    let output_dir = f.get("output", "dir", |s| Ok(PathBuf::from(s))).unwrap_or_else(|| PathBuf::from("."));
    let format = f
        .get("output", "format", |s| ReportFormat::from_str(s, true).map_err(|_| format!("unknown format `{s}`")))
        .unwrap_or(ReportFormat::Csv);
    let condition_number = f.get("output", "condition_number", parse_bool).unwrap_or(false);
    let wall_time = f.get("output", "wall_time", parse_bool).unwrap_or(false);
    let seed = f.get("output", "seed", |s| s.parse::<u64>().map_err(|e| e.to_string())).unwrap_or(0);

    if let (Some(ProblemId::Test2 { bc: BcMode::NearlyNeumann, .. }), Some(MeshFamily::Concave)) = (problem, family) {
        let line = f.entry("mesh", "family").map(|e| e.line);
        f.fail(line, "nearly-neumann boundaries need the cartesian or distorted family".into());
    }

    match (problem, family, refinements, degrees, variants, stabilizations) {
        (Some(problem), Some(family), Some(refinements), Some(degrees), Some(variants), Some(stabilizations))
            if errors.is_empty() =>
        {
            Ok(RunConfig {
                study: StudyConfig {
                    problem,
                    family,
                    refinements,
                    degrees,
                    variants,
                    stabilizations,
                    condition_number,
                    wall_time,
                },
                output_dir,
                format,
                seed,
            })
        }
        _ => {
            errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
            Err(ConfigErrors(errors))
        }
    }
}

/// One report row; CSV uses the first twelve fields, JSON all of them.
#[derive(Debug, Clone, Serialize)]
struct ReportRow<'a> {
    problem: &'a str,
    mesh: &'a str,
    h: Option<f64>,
    k: usize,
    variant: String,
    stabilization: String,
    err_p: Option<f64>,
    err_u: Option<f64>,
    #[serde(rename = "cond_K")]
    cond_k: Option<f64>,
    rate_p: Option<f64>,
    rate_u: Option<f64>,
    wall_ms: Option<f64>,
    error: Option<&'a str>,
}

impl<'a> From<&'a RunRecord> for ReportRow<'a> {
    fn from(r: &'a RunRecord) -> Self {
        Self {
            problem: &r.problem,
            mesh: &r.mesh,
            h: r.h,
            k: r.k,
            variant: r.variant.to_string(),
            stabilization: r.stabilization.to_string(),
            err_p: r.err_p,
            err_u: r.err_u,
            cond_k: r.cond_k,
            rate_p: r.rate_p,
            rate_u: r.rate_u,
            wall_ms: r.wall_ms,
            error: r.error.as_deref(),
        }
    }
}

pub const CSV_HEADER: [&str; 12] =
    ["problem", "mesh", "h", "k", "variant", "stabilization", "err_p", "err_u", "cond_K", "rate_p", "rate_u", "wall_ms"];

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

pub fn report_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = "writing to memory cannot fail";
    w.write_record(CSV_HEADER).expect(io_err);
    for r in &report.records {
        w.write_record([
            r.problem.clone(),
            r.mesh.clone(),
            sci(r.h),
            r.k.to_string(),
            r.variant.to_string(),
            r.stabilization.to_string(),
            sci(r.err_p),
            sci(r.err_u),
            sci(r.cond_k),
            fixed(r.rate_p, 4),
            fixed(r.rate_u, 4),
            fixed(r.wall_ms, 3),
        ])
        .expect(io_err);
    }
    String::from_utf8(w.into_inner().expect(io_err)).expect("csv output is UTF-8")
}

pub fn report_json(report: &RunReport) -> String {
    let rows: Vec<ReportRow> = report.records.iter().map(ReportRow::from).collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("report rows serialize");
    s.push('\n');
    s
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Creates the report file up front so an unwritable path fails before any
/// solve.
fn open_report(path: &Path) -> Result<File, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    File::create(path).map_err(io_error(path))
}

/// Runs the study and writes the report. Per-run failures are part of the
/// report; only configuration and I/O problems are errors.
pub fn run_and_emit(config: &RunConfig) -> Result<(RunReport, PathBuf), CliError> {
    let path = config.report_path();
    let mut file = open_report(&path)?;
    let report = run_convergence_study(&config.study)?;
    let text = match config.format {
        ReportFormat::Csv => report_csv(&report),
        ReportFormat::Json => report_json(&report),
    };
    file.write_all(text.as_bytes()).map_err(io_error(&path))?;
    Ok((report, path))
}

#[derive(Debug, Parser)]
#[command(name = "mvem", version, about = "Mixed virtual element convergence studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the study described by a configuration file
    Run {
        config: PathBuf,
        /// Output directory (overrides `dir` in [output])
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format (overrides `format` in [output])
        #[arg(long, value_enum)]
        format: Option<ReportFormat>,
        /// Worker threads for the sweep
        #[arg(long, env = "MVEM_THREADS")]
        threads: Option<usize>,
    },
}

/// Exit codes: 0 all runs succeeded, 1 some runs failed, 2 usage,
/// configuration or I/O error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(report) if report.all_succeeded() => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<RunReport, CliError> {
    let Command::Run { config, out, format, threads } = cli.command;
    let text = fs::read_to_string(&config).map_err(io_error(&config))?;
    let mut run = parse_config(&text)?;
    if let Some(out) = out {
        run.output_dir = out;
    }
    if let Some(format) = format {
        run.format = format;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Threads("must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Threads(e.to_string()))?;
    let (report, path) = pool.install(|| run_and_emit(&run))?;
    for r in &report.records {
        let tag = format!("{} {} k={} {} {}", r.problem, r.mesh, r.k, r.variant, r.stabilization);
        if let Some(e) = &r.error {
            eprintln!("run failed: {tag}: {e}");
        }
        if let Some(w) = &r.warning {
            eprintln!("warning: {tag}: {w}");
        }
        if r.absolute_errors {
            eprintln!("note: {tag}: exact solution norm below floor, absolute errors reported");
        }
    }
    let failed = report.records.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} runs, {failed} failed; report written to {}", report.records.len(), path.display());
    Ok(report)
}

#[cfg(test)]
mod tests;
