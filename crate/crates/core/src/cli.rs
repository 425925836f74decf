//! Command-line front end: argument model, command dispatch and report
//! formatting. Every command writes its primary output to `out` (or the
//! `--out` file) and a human summary to `err`, and returns an exit code.

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analytic::{Eigenvalue, Engine};
use crate::boundary::Admissibility;
use crate::config::{ConfigError, Problem, ProblemConfig};
use crate::directsum::{self, aggregate_spectrum, counterexample_norms, CounterexampleSpec};
use crate::discrete::{self, MATCH_RADIUS};
use crate::error::OpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    PropertyFailure = 1,
    Validation = 2,
    Resource = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Check,
    Spectrum,
    Normality,
    Counterexample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum EngineChoice {
    #[default]
    Analytic,
    Discrete,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "opspec", version, about = "Spectra and normality of multipoint operators -u'' + iAu")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Problem configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub engine: EngineChoice,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Write the primary output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid nodes per block; overrides the config.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Counterexample: number of blocks.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Counterexample: α_n = n^alpha_exp.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub alpha_exp: f64,
    /// Counterexample: c_n = (4/(3ℓ))^{1/2}·n^c_exp.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub c_exp: f64,
    /// Counterexample: block length ℓ.
    #[arg(long, default_value_t = 1.0)]
    pub length: f64,
    /// Counterexample: two-column plot data (N, partial sum).
    #[arg(long, default_value = "partial_sums.dat")]
    pub plot: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Op(OpError::SizeCap { .. } | OpError::NoConvergence { .. }) => ExitStatus::Resource,
            _ => ExitStatus::Validation,
        }
    }
}

/// Fifteen significant digits in scientific notation.
pub fn sig15(x: f64) -> String {
    format!("{x:.14e}")
}

pub const SPECTRUM_HEADER: &str = "block,engine,re_lambda,im_lambda,multiplicity,residual";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    /// Block index, or `union` for the aggregated spectrum.
    pub block: String,
    pub engine: Engine,
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub block: usize,
    pub re_analytic: f64,
    pub im_analytic: f64,
    pub re_discrete: Option<f64>,
    pub im_discrete: Option<f64>,
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub engines: Vec<Engine>,
    pub m: Option<usize>,
    pub rows: Vec<SpectrumRow>,
    pub pairs: Vec<PairRow>,
}

impl SpectrumReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SPECTRUM_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.block,
                r.engine,
                sig15(r.re_lambda),
                sig15(r.im_lambda),
                r.multiplicity,
                sig15(r.residual)
            ));
        }
        s
    }

    pub fn pairs_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(sig15).unwrap_or_default();
        let mut s = String::from("block,re_analytic,im_analytic,re_discrete,im_discrete,deviation\n");
        for p in &self.pairs {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.block,
                sig15(p.re_analytic),
                sig15(p.im_analytic),
                opt(p.re_discrete),
                opt(p.im_discrete),
                opt(p.deviation)
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub block: usize,
    #[serde(flatten)]
    pub admissibility: Admissibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityRow {
    pub block: usize,
    pub normality_residual: f64,
    pub scaled_commutator: f64,
    pub identity_gap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub spec: CounterexampleSpec,
    pub norms: directsum::CounterexampleNorms,
    pub membership: Option<directsum::MembershipReport>,
}

fn load(cli: &Cli) -> Result<Problem, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("{:?} requires --config FILE", cli.command).to_lowercase()))?;
    let mut cfg = ProblemConfig::from_path(path)?;
    if let Some(m) = cli.m {
        cfg.grid.m = m;
    }
    Ok(cfg.validate()?)
}

fn emit(cli: &Cli, out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_check(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let p = load(cli)?;
    let rows: Vec<CheckRow> = p
        .problem
        .admissibility()
        .iter()
        .enumerate()
        .map(|(i, a)| CheckRow { block: i + 1, admissibility: *a })
        .collect();
    let text = match cli.format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut s = String::from("block,unitarity_residual,v_unitarity_residual,commutator_norm,verdict\n");
            for r in &rows {
                let a = &r.admissibility;
                let verdict = if a.admissible { "admissible" } else { "not-admissible" };
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.block,
                    sig15(a.w_residual),
                    sig15(a.v_residual),
                    sig15(a.commutator_norm),
                    verdict
                ));
            }
            s
        }
    };
    emit(cli, out, &text)?;
    let bad: Vec<usize> = rows.iter().filter(|r| !r.admissibility.admissible).map(|r| r.block).collect();
    if bad.is_empty() {
        writeln!(err, "all {} blocks admissible", rows.len())?;
        Ok(ExitStatus::Success)
    } else {
        writeln!(err, "not admissible: blocks {bad:?}")?;
        Ok(ExitStatus::PropertyFailure)
    }
}

fn block_rows(per_block: &[Vec<Eigenvalue>], rows: &mut Vec<SpectrumRow>) {
    let row = |block: String, e: &Eigenvalue| SpectrumRow {
        block,
        engine: e.engine,
        re_lambda: e.lambda.re,
        im_lambda: e.lambda.im,
        multiplicity: e.multiplicity,
        residual: e.residual,
    };
    for list in per_block {
        rows.extend(list.iter().map(|e| row(e.block_index.to_string(), e)));
    }
    rows.extend(aggregate_spectrum(per_block).iter().map(|e| row("union".into(), e)));
}

fn row_order(r: &SpectrumRow) -> (usize, f64, f64, Engine) {
    (r.block.parse().unwrap_or(usize::MAX), r.re_lambda, r.im_lambda, r.engine)
}

/// Runs the requested engines; the discrete spectra are restricted to the
/// search region and clustered so multiplicities are comparable.
pub fn spectrum_report(p: &Problem, engine: EngineChoice) -> Result<SpectrumReport, CliError> {
    let tol = p.config.tolerances;
    let mut rows = Vec::new();
    let mut engines = Vec::new();
    let mut analytic = None;
    let mut discrete_lists = None;
    if engine != EngineChoice::Discrete {
        let lists = p.problem.analytic_spectra(&p.region, tol.root)?;
        block_rows(&lists, &mut rows);
        engines.push(Engine::Analytic);
        analytic = Some(lists);
    }
    if engine != EngineChoice::Analytic {
        let spectra = p.problem.discrete_spectra(p.config.grid.m, tol.eigen_cap)?;
        let lists: Vec<Vec<Eigenvalue>> = spectra
            .iter()
            .map(|s| {
                let inside: Vec<Eigenvalue> = s.eigenvalues.iter().filter(|e| p.region.contains(e.lambda, 0.0)).cloned().collect();
                discrete::cluster(&inside, 1e-10 * s.matrix_norm)
            })
            .collect();
        block_rows(&lists, &mut rows);
        engines.push(Engine::Discrete);
        discrete_lists = Some(lists);
    }
    rows.sort_by(|a, b| {
        let (ka, kb) = (row_order(a), row_order(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
    });
    let mut pairs = Vec::new();
    if let (Some(an), Some(di)) = (&analytic, &discrete_lists) {
        for (a_list, d_list) in an.iter().zip(di) {
            for a in a_list {
                let nearest = d_list
                    .iter()
                    .map(|d| (d.lambda, (d.lambda - a.lambda).norm()))
                    .filter(|(_, dist)| *dist <= MATCH_RADIUS)
                    .min_by(|x, y| x.1.total_cmp(&y.1));
                pairs.push(PairRow {
                    block: a.block_index,
                    re_analytic: a.lambda.re,
                    im_analytic: a.lambda.im,
                    re_discrete: nearest.map(|n| n.0.re),
                    im_discrete: nearest.map(|n| n.0.im),
                    deviation: nearest.map(|n| n.1),
                });
            }
        }
    }
    Ok(SpectrumReport {
        engines,
        m: discrete_lists.as_ref().map(|_| p.config.grid.m),
        rows,
        pairs,
    })
}

fn cmd_spectrum(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let p = load(cli)?;
    let report = spectrum_report(&p, cli.engine)?;
    match cli.format {
        Format::Json => emit(cli, out, &json(&report))?,
        Format::Csv => {
            emit(cli, out, &report.to_csv())?;
            if cli.engine == EngineChoice::Both {
                let pairs = report.pairs_csv();
                match &cli.out {
                    Some(path) => std::fs::write(sibling(path, ".pairs.csv"), &pairs)?,
                    None => err.write_all(pairs.as_bytes())?,
                }
            }
        }
    }
    let count = report.rows.iter().filter(|r| r.block != "union").count();
    writeln!(err, "{count} eigenvalues over {} blocks", p.problem.len())?;
    Ok(ExitStatus::Success)
}

fn cmd_normality(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let p = load(cli)?;
    let tol = p.config.tolerances;
    let mut rows = Vec::new();
    for (b, w) in p.problem.blocks().iter().zip(p.problem.extensions()) {
        let size = discrete::discretized_size(b, w, p.config.grid.m)?;
        if size > tol.eigen_cap {
            return Err(OpError::SizeCap { size, cap: tol.eigen_cap }.into());
        }
        let op = discrete::discretize(b, w, p.config.grid.m)?;
        let residual = discrete::normality_residual(&op);
        let gap = discrete::normality_identity_on_domain(b, w, tol.identity_samples, tol.identity_m, cli.seed)?;
        rows.push(NormalityRow {
            block: b.index,
            normality_residual: residual,
            scaled_commutator: discrete::scaled_commutator(&op),
            identity_gap: gap,
            pass: residual <= tol.normality && gap <= tol.identity,
        });
    }
    let text = match cli.format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut s = String::from("block,normality_residual,scaled_commutator,identity_gap,verdict\n");
            for r in &rows {
                let verdict = if r.pass { "normal" } else { "not-normal" };
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.block,
                    sig15(r.normality_residual),
                    sig15(r.scaled_commutator),
                    sig15(r.identity_gap),
                    verdict
                ));
            }
            s
        }
    };
    emit(cli, out, &text)?;
    let bad: Vec<usize> = rows.iter().filter(|r| !r.pass).map(|r| r.block).collect();
    if bad.is_empty() {
        writeln!(err, "normal on all {} blocks (m = {})", rows.len(), p.config.grid.m)?;
        Ok(ExitStatus::Success)
    } else {
        writeln!(err, "normality thresholds exceeded on blocks {bad:?}")?;
        Ok(ExitStatus::PropertyFailure)
    }
}

fn cmd_counterexample(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let spec = CounterexampleSpec {
        n: cli.n,
        lengths: vec![cli.length],
        alpha_exponent: cli.alpha_exp,
        c_exponent: cli.c_exp,
        dim: 1,
    };
    let norms = counterexample_norms(&spec)?;
    let membership = if spec.n >= 2 {
        let levels: Vec<usize> = (1..=spec.n).collect();
        Some(directsum::direct_sum_membership(&norms.per_block, &levels)?)
    } else {
        None
    };
    let mut partial = 0.0;
    let sums: Vec<f64> = norms
        .per_block
        .iter()
        .map(|x| {
            partial += x;
            partial
        })
        .collect();
    let plot: String = sums.iter().enumerate().map(|(i, s)| format!("{} {}\n", i + 1, sig15(*s))).collect();
    std::fs::write(&cli.plot, plot)?;
    let report = CounterexampleReport { spec, norms, membership };
    let text = match cli.format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut s = String::from("n,closed_form,quadrature,partial_sum\n");
            for (i, (cf, q)) in report.norms.per_block.iter().zip(&report.norms.quadrature).enumerate() {
                s.push_str(&format!("{},{},{},{}\n", i + 1, sig15(*cf), sig15(*q), sig15(sums[i])));
            }
            s
        }
    };
    emit(cli, out, &text)?;
    writeln!(err, "partial sum at N = {}: {}", report.spec.n, sig15(report.norms.partial_sum))?;
    if let Some(m) = &report.membership {
        let verdict = if m.divergent { "divergent" } else { "convergent" };
        writeln!(err, "growth exponent {:.4}: {verdict}", m.exponent)?;
    }
    if !report.norms.consistent {
        writeln!(
            err,
            "quadrature differs from the closed form by {:.3e} (relative)",
            report.norms.max_relative_discrepancy
        )?;
    }
    Ok(ExitStatus::Success)
}

/// Dispatches `cli`, reporting failures on `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    let result = match cli.command {
        Command::Check => cmd_check(cli, out, err),
        Command::Spectrum => cmd_spectrum(cli, out, err),
        Command::Normality => cmd_normality(cli, out, err),
        Command::Counterexample => cmd_counterexample(cli, out, err),
    };
    match result {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.status()
        }
    }
}

/// Applies `OPSPEC_THREADS` to the global thread pool.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("OPSPEC_THREADS must be a positive integer, got \"{v}\"")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}
