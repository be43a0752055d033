//! Command line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;

use crate::config::{parse_config, parse_config_str, SuiteConfig, DEFAULT_SUITE};
use crate::suite::{format_report, run_suite, ReportFormat};

/// Runs a suite of simulated environments and reports how each ended.
#[derive(Debug, Parser)]
#[command(name = "hybridnav", version)]
pub struct Cli {
    /// Suite configuration (TOML). Defaults to the built-in six-environment suite.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for logs, map dumps and the report.
    #[arg(long, default_value = "hybridnav-out")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only run environments whose name matches this glob.
    #[arg(long)]
    pub filter: Option<String>,
    /// Print the environment names and exit.
    #[arg(long)]
    pub list_envs: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub report_format: ReportFormat,
    /// Environments simulated in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Applies `--seed` and `--filter` to a parsed suite.
pub fn apply_overrides(cfg: &mut SuiteConfig, seed: Option<u64>, filter: Option<&glob::Pattern>) {
    if let Some(seed) = seed {
        cfg.sim.seed = seed;
    }
    if let Some(pat) = filter {
        for env in &mut cfg.envs {
            env.enabled &= pat.matches(&env.name);
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(stderr, "{}", e.render()) } else { write!(stdout, "{}", e.render()) };
            return code;
        }
    };
    let parsed = match &cli.config {
        Some(path) => parse_config(path),
        None => parse_config_str(DEFAULT_SUITE),
    };
    let mut cfg = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "config error: {e}");
            return 2;
        }
    };
    let filter = match cli.filter.as_deref().map(glob::Pattern::new).transpose() {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(stderr, "bad --filter: {e}");
            return 2;
        }
    };
    apply_overrides(&mut cfg, cli.seed, filter.as_ref());
    if cli.list_envs {
        for env in cfg.envs.iter().filter(|e| e.enabled) {
            let _ = writeln!(stdout, "{}", env.name);
        }
        return 0;
    }
    let outcome = match run_suite(&cfg, &cli.out, cli.jobs) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "io error: {e}");
            return 2;
        }
    };
    let report = format_report(&cfg, &outcome.results, cli.report_format);
    if let Err(e) = std::fs::write(cli.out.join("report.txt"), &report) {
        let _ = writeln!(stderr, "io error: {e}");
        return 2;
    }
    let _ = stdout.write_all(report.as_bytes());
    outcome.exit_code
}
