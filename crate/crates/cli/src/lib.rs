//! Command-line front end: every operation as a subcommand emitting a JSON report.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use k3lattice::TruncationConfig;

pub use output::{emit_series_csv, fixed15, read_series_csv, write_series_csv, ErrorReport, RunReport, VERSION};

/// Environment variable naming a JSON truncation config used when `--config` is absent.
pub const CONFIG_ENV: &str = "K3LAT_CONFIG";

/// Lattice used when `--lattice` is omitted.
pub const K3_SPEC: &str = "U^3 + E8(-1)^2";

/// Exit status and the text written to each stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Parser)]
#[command(name = "k3lat", version, about = "Lattice, period domain and discriminant computations for K3 moduli")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// JSON report on standard output (default).
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// CSV on standard output (roots, count).
    #[arg(long, global = true)]
    csv: bool,
    /// JSON truncation config; falls back to $K3LAT_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for commands that sample roots.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `shell_cutoff` of the config.
    #[arg(long, global = true)]
    shell_cutoff: Option<f64>,
    /// Overrides `product_cutoff` of the config.
    #[arg(long, global = true)]
    product_cutoff: Option<u64>,
    /// Overrides `tail_tol` of the config.
    #[arg(long, global = true)]
    tail_tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roots with a given pairing against a polarization.
    Roots(commands::RootsArgs),
    /// Counting series `a_n` for `n <= n_max`.
    Count(commands::CountArgs),
    /// Reduce a root to `e1 - e` and print the word.
    Canonize(commands::CanonizeArgs),
    /// Gram determinant of a flat point in the standard frame.
    GramDet(commands::GramDetArgs),
    /// Action of an integral isometry on a flat point.
    Act(commands::ActArgs),
    /// Siegel theta kernel at a flat point.
    Theta(commands::ThetaArgs),
    /// Truncated line product `prod (1 - e^{-2 pi n t})^{a_n}`.
    Qproduct(commands::SeriesArgs),
    /// Logarithmic derivative of the line product.
    Lambert(commands::LambertArgs),
    /// `gram_det |Phi|^2` at a tube point.
    ModelDet(commands::ModelDetArgs),
    /// Projection of a root onto the polarized `U`.
    Project(commands::ProjectArgs),
    /// Wall label of a root for the degree `2n` polarization.
    Classify(commands::ProjectArgs),
    /// `M1` and `T_Y` for a sublattice and a hyperbolic pair.
    Mirror(commands::MirrorArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Roots(_) => "roots",
            Command::Count(_) => "count",
            Command::Canonize(_) => "canonize",
            Command::GramDet(_) => "gram-det",
            Command::Act(_) => "act",
            Command::Theta(_) => "theta",
            Command::Qproduct(_) => "qproduct",
            Command::Lambert(_) => "lambert",
            Command::ModelDet(_) => "model-det",
            Command::Project(_) => "project",
            Command::Classify(_) => "classify",
            Command::Mirror(_) => "mirror",
        }
    }
}

/// Truncation settings after merging the config file and flags.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub cfg: TruncationConfig,
    pub product_cutoff_given: bool,
    pub seed: Option<u64>,
    pub csv: bool,
}

/// Failure of a run: bad invocation (exit 2) or a domain error (exit 1).
#[derive(Debug)]
pub(crate) enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn settings(g: &Global) -> Result<Settings, Failure> {
    let path = g.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let (mut cfg, mut given) = (TruncationConfig::default(), false);
    if let Some(p) = path {
        let text = std::fs::read_to_string(&p)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("bad config {}: {e}", p.display())))?;
        given = v.get("product_cutoff").is_some();
        cfg = serde_json::from_value(v).map_err(|e| Failure::Usage(format!("bad config {}: {e}", p.display())))?;
    }
    if let Some(x) = g.shell_cutoff {
        cfg.shell_cutoff = x;
    }
    if let Some(x) = g.product_cutoff {
        cfg.product_cutoff = x;
        given = true;
    }
    if let Some(x) = g.tail_tol {
        cfg.tail_tol = x;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Settings { cfg, product_cutoff_given: given, seed: g.seed, csv: g.csv })
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn dispatch<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    if argv.len() <= 1 {
        let mut cmd = <Cli as clap::CommandFactory>::command();
        return Outcome { code: 2, stdout: String::new(), stderr: cmd.render_help().to_string() };
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let name = cli.command.name();
    let run = settings(&cli.global).and_then(|s| commands::run(&cli.command, &s));
    match run {
        Ok(stdout) => Outcome { code: 0, stdout, stderr: String::new() },
        Err(Failure::Usage(msg)) => {
            let mut cmd = <Cli as clap::CommandFactory>::command();
            let usage = cmd.render_usage().to_string();
            Outcome { code: 2, stdout: String::new(), stderr: format!("error: {msg}\n\n{usage}\n") }
        }
        Err(Failure::Domain(e)) => {
            let rep = ErrorReport { command: name.to_string(), error: format!("{e:#}"), version: VERSION.to_string() };
            let text = serde_json::to_string(&rep).expect("report serializes") + "\n";
            Outcome { code: 1, stdout: String::new(), stderr: text }
        }
    }
}
