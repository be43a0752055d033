use core::fmt;
use core::str::FromStr;

use crate::cloud::Pose;
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvStatus {
    /// Disabled in the configuration.
    NotTesting,
    /// Enabled but not run yet.
    Incomplete,
    InProgress,
    Stuck,
    Collided,
    Successful,
    Timeout,
}

impl EnvStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvStatus::NotTesting => "NOT_TESTING",
            EnvStatus::Incomplete => "INCOMPLETE",
            EnvStatus::InProgress => "IN_PROGRESS",
            EnvStatus::Stuck => "STUCK",
            EnvStatus::Collided => "COLLIDED",
            EnvStatus::Successful => "SUCCESSFUL",
            EnvStatus::Timeout => "TIMEOUT",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, EnvStatus::Stuck | EnvStatus::Collided | EnvStatus::Successful | EnvStatus::Timeout)
    }
}

impl fmt::Display for EnvStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            EnvStatus::NotTesting,
            EnvStatus::Incomplete,
            EnvStatus::InProgress,
            EnvStatus::Stuck,
            EnvStatus::Collided,
            EnvStatus::Successful,
            EnvStatus::Timeout,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub name: String,
    pub start: Pose,
    pub end_x_range: (f64, f64),
    pub end_y_range: (f64, f64),
    pub status: EnvStatus,
    pub start_time: f64,
    pub ceiling_height: f64,
    /// Time from the environment's start to its terminal event.
    pub elapsed: Option<f64>,
}

impl Environment {
    pub fn new(
        name: impl Into<String>,
        start: Pose,
        end_x_range: (f64, f64),
        end_y_range: (f64, f64),
        ceiling_height: f64,
    ) -> Self {
        Self {
            name: name.into(),
            start,
            end_x_range,
            end_y_range,
            status: EnvStatus::Incomplete,
            start_time: 0.0,
            ceiling_height,
            elapsed: None,
        }
    }

    pub fn disabled(mut self) -> Self {
        self.status = EnvStatus::NotTesting;
        self
    }

    pub fn contains_end(&self, pose: &Pose) -> bool {
        let p = &pose.position;
        (self.end_x_range.0..=self.end_x_range.1).contains(&p.x)
            && (self.end_y_range.0..=self.end_y_range.1).contains(&p.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvEvent {
    StuckReported,
    Collided,
    /// Current pose, checked against the end ranges.
    ReachedEnd(Pose),
    Tick(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvResult {
    pub name: String,
    pub status: EnvStatus,
    pub elapsed: Option<f64>,
}

impl fmt::Display for EnvResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.elapsed {
            Some(t) => write!(f, "env {} status={} t={:.2}", self.name, self.status, t),
            None => write!(f, "env {} status={} t=-", self.name, self.status),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvAction {
    Continue,
    /// Teleport the vehicle to `start` and reset the stack for environment
    /// `index`.
    AdvanceTo {
        index: usize,
        start: Pose,
    },
    Finished(Vec<EnvResult>),
}

/// Runs environments one after another on a shared clock.
#[derive(Debug, Clone)]
pub struct EnvManager {
    envs: Vec<Environment>,
    current: Option<usize>,
    timeout: f64,
    now: f64,
    stuck_flag: bool,
    collided_flag: bool,
}

impl EnvManager {
    pub fn new(envs: Vec<Environment>, timeout: f64) -> Self {
        Self { envs, current: None, timeout, now: 0.0, stuck_flag: false, collided_flag: false }
    }

    pub fn environments(&self) -> &[Environment] {
        &self.envs
    }

    pub fn current(&self) -> Option<usize> {
        self.current
    }

    /// Selects the first incomplete environment, or finishes.
    pub fn start(&mut self, now: f64) -> EnvAction {
        self.now = now;
        self.advance()
    }

    fn advance(&mut self) -> EnvAction {
        match self.envs.iter().position(|e| e.status == EnvStatus::Incomplete) {
            Some(index) => {
                let env = &mut self.envs[index];
                env.status = EnvStatus::InProgress;
                env.start_time = self.now;
                self.stuck_flag = false;
                self.collided_flag = false;
                self.current = Some(index);
                EnvAction::AdvanceTo { index, start: env.start }
            }
            None => {
                self.current = None;
                EnvAction::Finished(self.report())
            }
        }
    }

    fn finish_current(&mut self, status: EnvStatus) -> EnvAction {
        let Some(i) = self.current else { return EnvAction::Finished(self.report()) };
        let env = &mut self.envs[i];
        env.status = status;
        env.elapsed = Some(self.now - env.start_time);
        self.advance()
    }

    pub fn step(&mut self, event: EnvEvent) -> EnvAction {
        let Some(i) = self.current else {
            return EnvAction::Finished(self.report());
        };
        match event {
            EnvEvent::StuckReported => {
                self.stuck_flag = true;
                self.finish_current(EnvStatus::Stuck)
            }
            EnvEvent::Collided => {
                self.collided_flag = true;
                self.finish_current(EnvStatus::Collided)
            }
            EnvEvent::ReachedEnd(pose) => {
                if self.envs[i].contains_end(&pose) {
                    self.finish_current(EnvStatus::Successful)
                } else {
                    EnvAction::Continue
                }
            }
            EnvEvent::Tick(t) => {
                self.now = t;
                if t - self.envs[i].start_time > self.timeout {
                    self.finish_current(EnvStatus::Timeout)
                } else {
                    EnvAction::Continue
                }
            }
        }
    }

    pub fn report(&self) -> Vec<EnvResult> {
        self.envs.iter().map(|e| EnvResult { name: e.name.clone(), status: e.status, elapsed: e.elapsed }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    fn env(name: &str) -> Environment {
        Environment::new(name, Pose::planar(0.0, 0.0, 0.15, 0.0), (9.0, 11.0), (-1.0, 1.0), 2.5)
    }

    #[test]
    fn runs_first_incomplete_and_reports() {
        let mut m = EnvManager::new(vec![env("a").disabled(), env("b"), env("c")], 60.0);
        assert!(matches!(m.start(0.0), EnvAction::AdvanceTo { index: 1, .. }));
        assert_eq!(m.step(EnvEvent::ReachedEnd(Pose::planar(3.0, 0.0, 0.15, 0.0))), EnvAction::Continue);
        m.step(EnvEvent::Tick(12.5));
        assert!(matches!(
            m.step(EnvEvent::ReachedEnd(Pose::planar(9.5, 0.0, 0.15, 0.0))),
            EnvAction::AdvanceTo { index: 2, .. }
        ));
        assert_eq!(m.environments()[2].start_time, 12.5);
        m.step(EnvEvent::Tick(20.0));
        let EnvAction::Finished(report) = m.step(EnvEvent::Collided) else { panic!("expected finish") };
        let lines: Vec<String> = report.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            lines,
            ["env a status=NOT_TESTING t=-", "env b status=SUCCESSFUL t=12.50", "env c status=COLLIDED t=7.50"]
        );
    }

    #[test]
    fn one_minute_timeout() {
        let mut m = EnvManager::new(vec![env("a")], 60.0);
        m.start(5.0);
        assert_eq!(m.step(EnvEvent::Tick(64.0)), EnvAction::Continue);
        let EnvAction::Finished(r) = m.step(EnvEvent::Tick(66.0)) else { panic!("expected finish") };
        assert_eq!(r[0].status, EnvStatus::Timeout);
    }

    #[test]
    fn status_names_round_trip() {
        for s in ["NOT_TESTING", "INCOMPLETE", "IN_PROGRESS", "STUCK", "COLLIDED", "SUCCESSFUL", "TIMEOUT"] {
            assert_eq!(s.parse::<EnvStatus>().unwrap().as_str(), s);
        }
        assert!("DONE".parse::<EnvStatus>().is_err());
    }

    proptest! {
        #[test]
        fn every_enabled_env_ends_terminal(events in proptest::collection::vec(0u8..4, 0..200), n in 1usize..6) {
            let mut m = EnvManager::new((0..n).map(|i| env(&format!("e{i}"))).collect(), 60.0);
            m.start(0.0);
            let mut t = 0.0;
            for e in events {
                let in_progress = m.environments().iter().filter(|e| e.status == EnvStatus::InProgress).count();
                prop_assert!(in_progress <= 1);
                t += 7.0;
                let ev = match e {
                    0 => EnvEvent::StuckReported,
                    1 => EnvEvent::Collided,
                    2 => EnvEvent::ReachedEnd(Pose::planar(10.0, 0.0, 0.15, 0.0)),
                    _ => EnvEvent::Tick(t),
                };
                if let EnvAction::Finished(_) = m.step(ev) {
                    break;
                }
            }
            while m.current().is_some() {
                t += 100.0;
                m.step(EnvEvent::Tick(t));
            }
            prop_assert_eq!(m.report().len(), n);
            prop_assert!(m.report().iter().all(|r| r.status.is_terminal() && r.elapsed.is_some()));
        }
    }
}
