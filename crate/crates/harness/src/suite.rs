//! Suite execution through the environment manager, artifacts and reports.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use hybridnav_core::sim::{EnvAction, EnvEvent, EnvManager, EnvResult, EnvStatus};

use crate::config::SuiteConfig;
use crate::runner::{run_all, run_environment, EnvRun, EnvSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    /// Config echo, one line per environment and a summary table.
    Text,
    /// One line per environment.
    Lines,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub results: Vec<EnvResult>,
    pub exit_code: i32,
}

/// Zero exactly when every enabled environment succeeded.
pub fn exit_code(results: &[EnvResult]) -> i32 {
    let ok = results.iter().all(|r| matches!(r.status, EnvStatus::NotTesting | EnvStatus::Successful));
    if ok {
        0
    } else {
        1
    }
}

fn event_for(run: &EnvRun, now: f64) -> EnvEvent {
    match run.status {
        EnvStatus::Collided => EnvEvent::Collided,
        EnvStatus::Stuck => EnvEvent::StuckReported,
        EnvStatus::Successful => EnvEvent::ReachedEnd(run.final_pose),
        _ => EnvEvent::Tick(now),
    }
}

fn write_env_artifacts(out: &Path, setup: &EnvSetup, run: &EnvRun) -> io::Result<()> {
    File::create(out.join(format!("{}.ticks.log", setup.name)))?.write_all(run.ticks_log.as_bytes())?;
    File::create(out.join(format!("{}.map.txt", setup.name)))?.write_all(run.map_dump.as_bytes())
}

/// Runs the suite into `out`. With `jobs > 1` environments are simulated
/// in parallel first and then replayed through the manager in order, so the
/// report does not depend on `jobs`.
pub fn run_suite(cfg: &SuiteConfig, out: &Path, jobs: usize) -> io::Result<SuiteOutcome> {
    fs::create_dir_all(out)?;
    let setups = cfg.setups();
    let sim = cfg.sim_settings();
    let planner = cfg.planner_config();
    let mut pre = if jobs > 1 { run_all(&setups, &sim, &planner, jobs) } else { vec![None; setups.len()] };

    let mut suite_log = OpenOptions::new().create(true).append(true).open(out.join("suite.log"))?;
    writeln!(suite_log, "suite seed={} envs={}", cfg.sim.seed, setups.len())?;
    suite_log.flush()?;

    let mut mgr = EnvManager::new(setups.iter().map(EnvSetup::environment).collect(), sim.timeout);
    let mut action = mgr.start(0.0);
    let mut now = 0.0;
    let results = loop {
        match action {
            EnvAction::Finished(report) => break report,
            EnvAction::Continue => unreachable!("every run ends in a terminal event"),
            EnvAction::AdvanceTo { index, .. } => {
                let setup = &setups[index];
                let run = pre[index].take().unwrap_or_else(|| run_environment(setup, &sim, &planner));
                write_env_artifacts(out, setup, &run)?;
                now += run.elapsed;
                action = match mgr.step(EnvEvent::Tick(now)) {
                    EnvAction::Continue => mgr.step(event_for(&run, now)),
                    other => other,
                };
                let env = &mgr.environments()[index];
                let line = EnvResult { name: env.name.clone(), status: env.status, elapsed: env.elapsed };
                writeln!(suite_log, "{line}")?;
                suite_log.flush()?;
            }
        }
    };
    let exit_code = exit_code(&results);
    Ok(SuiteOutcome { results, exit_code })
}

pub fn format_report(cfg: &SuiteConfig, results: &[EnvResult], format: ReportFormat) -> String {
    let mut s = String::new();
    if format == ReportFormat::Text {
        s.push_str("# hybridnav suite report\n# resolved configuration:\n");
        for line in cfg.to_toml().lines() {
            let _ = if line.is_empty() { writeln!(s, "#") } else { writeln!(s, "#   {line}") };
        }
    }
    for r in results {
        let _ = writeln!(s, "{r}");
    }
    if format == ReportFormat::Text {
        let width = results.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(s, "\n{:<width$}  {:<12}  {:>8}", "name", "status", "time");
        for r in results {
            let t = r.elapsed.map_or_else(|| "-".to_string(), |t| format!("{t:.2}"));
            let _ = writeln!(s, "{:<width$}  {:<12}  {:>8}", r.name, r.status.as_str(), t);
        }
        let count = |st: EnvStatus| results.iter().filter(|r| r.status == st).count();
        let enabled = results.len() - count(EnvStatus::NotTesting);
        let _ = writeln!(
            s,
            "\nenabled={enabled} successful={} stuck={} collided={} timeout={}",
            count(EnvStatus::Successful),
            count(EnvStatus::Stuck),
            count(EnvStatus::Collided),
            count(EnvStatus::Timeout)
        );
    }
    s
}
