//! `extremo` command-line front end.
//!
//! Every command reads CSV inputs, runs one estimator pipeline and writes JSON
//! Lines (curves, fits) or CSV (datasets) to `--out` or stdout. Exit status is
//! 0 on success, 2 for invalid input or flags and 3 when an estimator fails.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "extremo", version, about = "Extremal dependence estimation for spatial data")]
pub struct Cli {
    /// Worker threads (count); 0 uses every available core. Output does not depend on it.
    #[arg(long, global = true, env = "EXTREMO_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a GEV margin per site by probability-weighted moments (JSONL, one record per site).
    FitMargins(FitMarginsArgs),
    /// Transform observations to a standard margin (CSV rep_id,site_id,value).
    Transform(TransformArgs),
    /// Empirical madogram per distance bin (JSONL curve).
    Madogram(MadogramArgs),
    /// Pairwise extremal coefficient from the madogram (JSONL curve).
    ExtremalCoeff(MadogramArgs),
    /// Empirical extremogram per distance bin (JSONL curve).
    Extremogram(ExtremogramArgs),
    /// Extremogram matrix of two variables on the same sites (JSONL, four curves).
    CrossExtremogram(CrossArgs),
    /// Tail-dependence coefficient, scale and extremal variogram per bin (JSONL).
    Taildep(TaildepArgs),
    /// Partition discordance degree (one JSON record).
    Discordance(DiscordanceArgs),
    /// Simulate a field with known dependence (CSV rep_id,site_id,value).
    Simulate(SimulateArgs),
    /// Extremal coefficient and tail limits of a parametric copula (one JSON record).
    ThetaCopula(ThetaCopulaArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Site table, CSV with header site_id,x,y (coordinates in any planar length unit).
    #[arg(long)]
    pub sites: PathBuf,
    /// Observation table, CSV with header rep_id,site_id,value (long format).
    #[arg(long)]
    pub obs: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How observations reach the unit-Fréchet scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarginMode {
    /// Fit a GEV per site and apply −1/log G.
    Fit,
    /// Observations are already unit Fréchet.
    Frechet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// Standard Gumbel margins (log of unit Fréchet).
    Gumbel,
    /// Standard Weibull margins (−1 / unit Fréchet).
    Weibull,
    /// Untransformed data sharing the common GEV margin given by --gev.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformTarget {
    Frechet,
    Gumbel,
    Weibull,
    Uniform,
    /// Ranks / (n + 1) per site, no margin fit.
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Hill estimate from log(W/u) and the censored likelihood
    Standard,
    /// Averages of log((W − u)/u) and the alternative likelihood form
    ExcessRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    #[value(alias = "iid-frechet")]
    Iid,
    #[value(alias = "gaussian-copula-field")]
    Gaussian,
    #[value(alias = "smith-storm")]
    Smith,
    #[value(alias = "logistic-pairs")]
    Logistic,
}

#[derive(Debug, Args)]
pub struct FitMarginsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Target margin.
    #[arg(long, value_enum, default_value_t = TransformTarget::Frechet)]
    pub to: TransformTarget,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct MadogramArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Distance bin edges, comma separated, strictly increasing (site coordinate units).
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub bins: Vec<f64>,
    /// Margin on which the madogram is computed.
    #[arg(long, value_enum, default_value_t = Scale::Gumbel)]
    pub scale: Scale,
    /// How observations reach unit Fréchet before --scale gumbel|weibull.
    #[arg(long, value_enum, default_value_t = MarginMode::Fit)]
    pub margins: MarginMode,
    /// Common GEV margin mu,sigma,xi (data units; xi dimensionless) for --scale raw.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_negative_numbers = true)]
    pub gev: Option<Vec<f64>>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ExtremogramArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Distance bin edges, comma separated, strictly increasing (site coordinate units).
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub bins: Vec<f64>,
    /// Per-site exceedance level as a probability in (0.5, 1); the lower side uses 1 − q.
    #[arg(long, default_value_t = 0.95)]
    pub q: f64,
    /// Tail to examine.
    #[arg(long, value_enum, default_value_t = Side::Upper)]
    pub side: Side,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CrossArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Observation table of the second variable, same sites and replications (CSV rep_id,site_id,value).
    #[arg(long)]
    pub obs2: PathBuf,
    /// Distance bin edges, comma separated, strictly increasing (site coordinate units).
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub bins: Vec<f64>,
    /// Per-site upper exceedance level as a probability in (0.5, 1).
    #[arg(long, default_value_t = 0.95)]
    pub q: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TaildepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Distance bin edges, comma separated, strictly increasing (site coordinate units).
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub bins: Vec<f64>,
    /// Threshold as a probability level of the pairwise minimum W (converted to the unit-Fréchet scale internally).
    #[arg(long, default_value_t = 0.95)]
    pub threshold_q: f64,
    /// Estimator variant.
    #[arg(long, value_enum, default_value_t = Mode::Standard)]
    pub mode: Mode,
    /// How observations reach unit Fréchet.
    #[arg(long, value_enum, default_value_t = MarginMode::Fit)]
    pub margins: MarginMode,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DiscordanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Target block as comma-separated site ids.
    #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
    pub subset: Vec<String>,
    /// Upper: targets above, others at or below. Lower: mirrored.
    #[arg(long, value_enum, default_value_t = Side::Upper)]
    pub direction: Side,
    /// Per-site thresholds, CSV with header site_id,threshold (data units).
    #[arg(long, conflicts_with = "median", required_unless_present = "median")]
    pub thresholds: Option<PathBuf>,
    /// Use per-site empirical medians as thresholds.
    #[arg(long)]
    pub median: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Field model.
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Site table, CSV with header site_id,x,y (planar length unit).
    #[arg(long)]
    pub sites: PathBuf,
    /// Number of replications (count).
    #[arg(long)]
    pub reps: usize,
    /// Random seed (unsigned integer); required, there is no ambient randomness.
    #[arg(long)]
    pub seed: u64,
    /// Storm scale for --kind smith (site coordinate units).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Storm window padding for --kind smith (site coordinate units); default 5 × sigma.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Correlation range r of exp(−d/r) for --kind gaussian (site coordinate units).
    #[arg(long)]
    pub range: Option<f64>,
    /// Logistic dependence parameter for --kind logistic (dimensionless, >= 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ThetaCopulaArgs {
    /// Copula: independence, comonotone, gumbel:alpha=A, gaussian:rho=R or clayton:theta=T.
    #[arg(long)]
    pub copula: String,
    /// Diagonal probes, comma separated probabilities in (0,1); at least 3.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.5,0.9,0.99")]
    pub probes: Vec<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Collapse a clap diagnostic to its first meaningful line(s) before the usage block.
fn one_line(rendered: &str) -> String {
    rendered
        .lines()
        .take_while(|l| !l.starts_with("Usage:"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<extremo::Error>() {
        Some(e) if !e.is_validation() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", one_line(&e.render().to_string()));
            return ExitCode::from(2);
        }
    };
    match extremo::par::with_threads(cli.threads, || commands::run(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn clap_errors_fit_on_one_line() {
        let err = Cli::try_parse_from(["extremo", "madogram", "--sites", "a", "--obs", "b"]).unwrap_err();
        let line = one_line(&err.render().to_string());
        assert!(!line.contains('\n'));
        assert!(line.contains("--bins"), "{line}");
    }

    #[test]
    fn every_flag_has_help() {
        for sub in Cli::command().get_subcommands() {
            for arg in sub.get_arguments() {
                if arg.get_id() == "help" || arg.get_id() == "version" {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{} --{} lacks help", sub.get_name(), arg.get_id());
            }
        }
    }
}
