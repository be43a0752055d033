//! Suite configuration: TOML text with one `[sim]` table, one `[planner]`
//! table and an `[[env]]` array. Parsing fills every default, so the
//! serialized form of a parsed config parses back to the same value.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use hybridnav_core::cloud::{Point3, Pose};
use hybridnav_core::planner::{DustConfig, LocalMapConfig, Mobility, PlannerConfig};
use hybridnav_core::primitives::CostConfig;
use hybridnav_core::sim::{generate_environment, EnvKind, GenParams, Turn};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::runner::{EnvSetup, GoalChoice, SimSettings};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("{0}")]
    Io(String),
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Invalid { line, .. } => Some(*line),
            ConfigError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Corridor,
    HorizontalSine,
    VerticalSine,
    TJunction,
    Doorway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalName {
    /// Centre of the end ranges.
    Seek,
    /// Wall following.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityName {
    Ground,
    Aerial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnName {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub timeout: f64,
    pub seed: u64,
    pub base_hz: u32,
    pub sim_hz: u32,
    pub planner_hz: u32,
    pub lidar_hz: u32,
    pub stuck_grace: f64,
    pub lidar_noise: f64,
    pub vehicle_radius: f64,
    pub takeoff_height: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimSettings::default();
        Self {
            timeout: s.timeout,
            seed: s.seed,
            base_hz: s.base_hz,
            sim_hz: s.sim_hz,
            planner_hz: s.planner_hz,
            lidar_hz: s.lidar_hz,
            stuck_grace: s.stuck_grace,
            lidar_noise: s.lidar_noise,
            vehicle_radius: s.vehicle_radius,
            takeoff_height: s.takeoff_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub collision_buffer: f64,
    pub near_buffer: f64,
    pub goal_weight: f64,
    pub horizon: f64,
    pub duration: f64,
    pub fov_deg: f64,
    pub n_azimuth: usize,
    pub elevation_deg: f64,
    pub voxel_size: f64,
    pub dust: bool,
    pub local_map: bool,
    pub map_resolution: f64,
    pub memory_radius: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let p = PlannerConfig::default();
        Self {
            collision_buffer: 0.45,
            near_buffer: 0.6,
            goal_weight: p.cost.c_gw,
            horizon: p.horizon,
            duration: p.duration,
            fov_deg: 85.0,
            n_azimuth: p.n_azimuth,
            elevation_deg: 15.0,
            voxel_size: p.voxel_size,
            dust: false,
            local_map: true,
            map_resolution: LocalMapConfig::default().resolution,
            memory_radius: 3.0,
        }
    }
}

/// One environment with every field resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub name: String,
    pub kind: KindName,
    pub enabled: bool,
    pub mobility: MobilityName,
    pub goal: GoalName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bay_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bay_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pillar: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turn: Option<TurnName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub room_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub door_width: Option<f64>,
    /// `x, y, z, yaw`.
    pub start: [f64; 4],
    pub end_x: [f64; 2],
    pub end_y: [f64; 2],
    pub ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub sim: SimSection,
    pub planner: PlannerSection,
    #[serde(rename = "env")]
    pub envs: Vec<EnvSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    sim: Option<Spanned<SimSection>>,
    planner: Option<Spanned<PlannerSection>>,
    #[serde(default)]
    env: Vec<Spanned<RawEnv>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    name: Spanned<String>,
    kind: KindName,
    enabled: Option<bool>,
    mobility: Option<MobilityName>,
    goal: Option<GoalName>,
    width: Option<Spanned<f64>>,
    length: Option<Spanned<f64>>,
    bay_width: Option<Spanned<f64>>,
    bay_length: Option<Spanned<f64>>,
    amplitude: Option<Spanned<f64>>,
    period: Option<Spanned<f64>>,
    pillar: Option<bool>,
    stem_length: Option<Spanned<f64>>,
    arm_length: Option<Spanned<f64>>,
    turn: Option<TurnName>,
    room_width: Option<Spanned<f64>>,
    door_width: Option<Spanned<f64>>,
    start: Option<Spanned<[f64; 4]>>,
    end_x: Option<Spanned<[f64; 2]>>,
    end_y: Option<Spanned<[f64; 2]>>,
    ceiling: Option<Spanned<f64>>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn at(&self, span: Range<usize>) -> usize {
        self.0[..span.start.min(self.0.len())].matches('\n').count() + 1
    }

    fn err(&self, span: Range<usize>, msg: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { line: self.at(span), msg: msg.into() }
    }
}

fn positive(lines: &Lines, v: &Option<Spanned<f64>>, key: &str, default: f64) -> Result<f64, ConfigError> {
    match v {
        None => Ok(default),
        Some(s) if *s.get_ref() > 0.0 && s.get_ref().is_finite() => Ok(*s.get_ref()),
        Some(s) => Err(lines.err(s.span(), format!("`{key}` must be positive"))),
    }
}

fn range(
    lines: &Lines,
    v: &Option<Spanned<[f64; 2]>>,
    key: &str,
    default: (f64, f64),
) -> Result<[f64; 2], ConfigError> {
    match v {
        None => Ok([default.0, default.1]),
        Some(s) => {
            let [lo, hi] = *s.get_ref();
            if !(lo.is_finite() && hi.is_finite()) {
                Err(lines.err(s.span(), format!("`{key}` must be finite")))
            } else if lo > hi {
                Err(lines.err(s.span(), format!("`{key}` has min {lo} greater than max {hi}")))
            } else {
                Ok([lo, hi])
            }
        }
    }
}

fn resolve_env(lines: &Lines, raw: &Spanned<RawEnv>) -> Result<EnvSpec, ConfigError> {
    let r = raw.get_ref();
    let here = || raw.span();
    let name = r.name.get_ref().clone();
    if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == '/') {
        return Err(lines.err(r.name.span(), "environment names must be non-empty without spaces or slashes"));
    }
    let given: Vec<(&str, bool)> = vec![
        ("width", r.width.is_some()),
        ("length", r.length.is_some()),
        ("bay_width", r.bay_width.is_some()),
        ("bay_length", r.bay_length.is_some()),
        ("amplitude", r.amplitude.is_some()),
        ("period", r.period.is_some()),
        ("pillar", r.pillar.is_some()),
        ("stem_length", r.stem_length.is_some()),
        ("arm_length", r.arm_length.is_some()),
        ("turn", r.turn.is_some()),
        ("room_width", r.room_width.is_some()),
        ("door_width", r.door_width.is_some()),
    ];
    let allowed: &[&str] = match r.kind {
        KindName::Corridor => &["width", "length", "bay_width", "bay_length"],
        KindName::HorizontalSine => &["width", "length", "amplitude", "period", "pillar"],
        KindName::VerticalSine => &["width", "length", "amplitude", "period"],
        KindName::TJunction => &["width", "stem_length", "arm_length", "turn"],
        KindName::Doorway => &["room_width", "length", "door_width"],
    };
    if let Some((key, _)) = given.iter().find(|(k, g)| *g && !allowed.contains(k)) {
        return Err(lines.err(here(), format!("`{key}` does not apply to {:?} environments", r.kind)));
    }
    let p = |v: &Option<Spanned<f64>>, key: &str, d: f64| positive(lines, v, key, d);
    let mut spec = EnvSpec {
        name,
        kind: r.kind,
        enabled: r.enabled.unwrap_or(true),
        mobility: r.mobility.unwrap_or(match r.kind {
            KindName::VerticalSine => MobilityName::Aerial,
            _ => MobilityName::Ground,
        }),
        goal: r.goal.unwrap_or(GoalName::Seek),
        width: None,
        length: None,
        bay_width: None,
        bay_length: None,
        amplitude: None,
        period: None,
        pillar: None,
        stem_length: None,
        arm_length: None,
        turn: None,
        room_width: None,
        door_width: None,
        start: [0.0; 4],
        end_x: [0.0; 2],
        end_y: [0.0; 2],
        ceiling: 0.0,
    };
    match r.kind {
        KindName::Corridor => {
            let width = p(&r.width, "width", 2.0)?;
            spec.width = Some(width);
            spec.length = Some(p(&r.length, "length", 10.0)?);
            spec.bay_width = Some(p(&r.bay_width, "bay_width", width)?);
            spec.bay_length = Some(match &r.bay_length {
                Some(s) if *s.get_ref() < 0.0 => return Err(lines.err(s.span(), "`bay_length` must not be negative")),
                Some(s) => *s.get_ref(),
                None => 0.0,
            });
        }
        KindName::HorizontalSine => {
            spec.width = Some(p(&r.width, "width", 2.0)?);
            spec.length = Some(p(&r.length, "length", 12.0)?);
            spec.amplitude = Some(p(&r.amplitude, "amplitude", 1.0)?);
            spec.period = Some(p(&r.period, "period", 8.0)?);
            spec.pillar = Some(r.pillar.unwrap_or(true));
        }
        KindName::VerticalSine => {
            spec.width = Some(p(&r.width, "width", 2.0)?);
            spec.length = Some(p(&r.length, "length", 12.0)?);
            spec.amplitude = Some(p(&r.amplitude, "amplitude", 0.9)?);
            spec.period = Some(p(&r.period, "period", 6.0)?);
        }
        KindName::TJunction => {
            spec.width = Some(p(&r.width, "width", 2.0)?);
            spec.stem_length = Some(p(&r.stem_length, "stem_length", 6.0)?);
            spec.arm_length = Some(p(&r.arm_length, "arm_length", 5.0)?);
            spec.turn = Some(r.turn.unwrap_or(TurnName::Left));
        }
        KindName::Doorway => {
            spec.room_width = Some(p(&r.room_width, "room_width", 4.0)?);
            spec.length = Some(p(&r.length, "length", 10.0)?);
            spec.door_width = Some(p(&r.door_width, "door_width", 1.2)?);
        }
    }
    spec.ceiling = p(&r.ceiling, "ceiling", GenParams::default().ceiling_height)?;
    let gen_start = GenParams::default().start_z;
    spec.start = match &r.start {
        Some(s) if s.get_ref().iter().all(|v| v.is_finite()) => *s.get_ref(),
        Some(s) => return Err(lines.err(s.span(), "`start` must be finite")),
        None => [0.0, 0.0, gen_start, 0.0],
    };
    let course =
        generate_environment(&spec.env_kind(), &GenParams { ceiling_height: spec.ceiling, ..GenParams::default() });
    spec.end_x = range(lines, &r.end_x, "end_x", course.end_x_range)?;
    spec.end_y = range(lines, &r.end_y, "end_y", course.end_y_range)?;
    Ok(spec)
}

impl EnvSpec {
    pub fn env_kind(&self) -> EnvKind {
        let f = |v: Option<f64>| v.unwrap_or(0.0);
        match self.kind {
            KindName::Corridor => EnvKind::Corridor {
                width: f(self.width),
                length: f(self.length),
                bay_width: f(self.bay_width),
                bay_length: f(self.bay_length),
            },
            KindName::HorizontalSine => EnvKind::HorizontalSine {
                width: f(self.width),
                length: f(self.length),
                amplitude: f(self.amplitude),
                period: f(self.period),
                pillar: self.pillar.unwrap_or(false),
            },
            KindName::VerticalSine => EnvKind::VerticalSine {
                width: f(self.width),
                length: f(self.length),
                amplitude: f(self.amplitude),
                period: f(self.period),
            },
            KindName::TJunction => EnvKind::TJunction {
                width: f(self.width),
                stem_length: f(self.stem_length),
                arm_length: f(self.arm_length),
                turn: match self.turn {
                    Some(TurnName::Right) => Turn::Right,
                    _ => Turn::Left,
                },
            },
            KindName::Doorway => EnvKind::Doorway {
                room_width: f(self.room_width),
                length: f(self.length),
                door_width: f(self.door_width),
            },
        }
    }

    pub fn setup(&self) -> EnvSetup {
        let [x, y, z, yaw] = self.start;
        let goal = match self.goal {
            GoalName::Seek => GoalChoice::Seek(Point3::new(
                (self.end_x[0] + self.end_x[1]) / 2.0,
                (self.end_y[0] + self.end_y[1]) / 2.0,
                z,
            )),
            GoalName::Forward => GoalChoice::Forward,
        };
        EnvSetup {
            name: self.name.clone(),
            kind: self.env_kind(),
            enabled: self.enabled,
            mobility: match self.mobility {
                MobilityName::Ground => Mobility::Ground,
                MobilityName::Aerial => Mobility::Aerial,
            },
            goal,
            start: Pose::planar(x, y, z, yaw),
            end_x_range: (self.end_x[0], self.end_x[1]),
            end_y_range: (self.end_y[0], self.end_y[1]),
            ceiling_height: self.ceiling,
        }
    }
}

fn check_sim(lines: &Lines, s: &Spanned<SimSection>) -> Result<(), ConfigError> {
    let v = s.get_ref();
    let bad = |msg: &str| Err(lines.err(s.span(), msg.to_string()));
    if !(v.timeout > 0.0 && v.stuck_grace > 0.0 && v.vehicle_radius > 0.0 && v.takeoff_height > 0.0) {
        return bad("sim times and sizes must be positive");
    }
    if !(v.lidar_noise >= 0.0 && v.lidar_noise.is_finite()) {
        return bad("`lidar_noise` must be a non-negative number");
    }
    for (key, hz) in [("sim_hz", v.sim_hz), ("planner_hz", v.planner_hz), ("lidar_hz", v.lidar_hz)] {
        if hz == 0 || !v.base_hz.is_multiple_of(hz) {
            return bad(&format!("`{key}` must divide `base_hz`"));
        }
    }
    Ok(())
}

fn check_planner(lines: &Lines, s: &Spanned<PlannerSection>) -> Result<(), ConfigError> {
    let v = s.get_ref();
    let bad = |msg: &str| Err(lines.err(s.span(), msg.to_string()));
    if !(v.collision_buffer > 0.0 && v.near_buffer >= v.collision_buffer) {
        return bad("buffers must satisfy 0 < collision_buffer <= near_buffer");
    }
    let positive = [v.goal_weight, v.horizon, v.duration, v.fov_deg, v.voxel_size, v.map_resolution];
    if !positive.iter().all(|x| *x > 0.0 && x.is_finite()) || v.n_azimuth == 0 {
        return bad("planner weights, sizes and counts must be positive");
    }
    if !(v.elevation_deg >= 0.0 && v.elevation_deg < 90.0 && v.memory_radius >= 0.0) {
        return bad("`elevation_deg` must be in [0, 90) and `memory_radius` non-negative");
    }
    Ok(())
}

pub fn parse_config_str(text: &str) -> Result<SuiteConfig, ConfigError> {
    let lines = Lines(text);
    let raw: RawSuite = toml::from_str(text).map_err(|e| ConfigError::Invalid {
        line: e.span().map_or(1, |s| lines.at(s)),
        msg: e.message().to_string(),
    })?;
    if let Some(s) = &raw.sim {
        check_sim(&lines, s)?;
    }
    if let Some(p) = &raw.planner {
        check_planner(&lines, p)?;
    }
    let mut seen = BTreeSet::new();
    let mut envs = Vec::with_capacity(raw.env.len());
    for e in &raw.env {
        let spec = resolve_env(&lines, e)?;
        if !seen.insert(spec.name.clone()) {
            return Err(lines.err(e.get_ref().name.span(), format!("duplicate environment name `{}`", spec.name)));
        }
        envs.push(spec);
    }
    Ok(SuiteConfig {
        sim: raw.sim.map(Spanned::into_inner).unwrap_or_default(),
        planner: raw.planner.map(Spanned::into_inner).unwrap_or_default(),
        envs,
    })
}

pub fn parse_config(path: &Path) -> Result<SuiteConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

impl SuiteConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("suite config always serializes")
    }

    pub fn sim_settings(&self) -> SimSettings {
        let s = &self.sim;
        SimSettings {
            timeout: s.timeout,
            seed: s.seed,
            base_hz: s.base_hz,
            sim_hz: s.sim_hz,
            planner_hz: s.planner_hz,
            lidar_hz: s.lidar_hz,
            stuck_grace: s.stuck_grace,
            lidar_noise: s.lidar_noise,
            vehicle_radius: s.vehicle_radius,
            takeoff_height: s.takeoff_height,
            ..SimSettings::default()
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        let p = &self.planner;
        let base = PlannerConfig::default();
        PlannerConfig {
            voxel_size: p.voxel_size,
            dust: if p.dust { base.dust.or(Some(DustConfig { window: 11, variance_threshold: 0.05 })) } else { None },
            horizon: p.horizon,
            duration: p.duration,
            fov: p.fov_deg.to_radians(),
            n_azimuth: p.n_azimuth,
            elevation: p.elevation_deg.to_radians(),
            cost: CostConfig { c_gw: p.goal_weight, collision_buffer: p.collision_buffer, near_buffer: p.near_buffer },
            local_map: p
                .local_map
                .then(|| LocalMapConfig { resolution: p.map_resolution, ..LocalMapConfig::default() }),
            memory_radius: (p.memory_radius > 0.0).then_some(p.memory_radius),
            ..base
        }
    }

    pub fn setups(&self) -> Vec<EnvSetup> {
        self.envs.iter().map(EnvSpec::setup).collect()
    }
}

/// The standard six-environment suite.
pub const DEFAULT_SUITE: &str = include_str!("../suites/default.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[[env]]\nname = \"c\"\nkind = \"corridor\"\n").unwrap();
        assert_eq!(c.sim, SimSection::default());
        assert_eq!(c.planner, PlannerSection::default());
        let e = &c.envs[0];
        assert_eq!((e.width, e.length, e.bay_length), (Some(2.0), Some(10.0), Some(0.0)));
        assert_eq!(e.end_x, [9.0, 11.0]);
        assert_eq!(e.end_y, [-1.0, 1.0]);
        assert_eq!(e.mobility, MobilityName::Ground);
        assert!(e.enabled);
        assert_eq!(c.sim.timeout, 60.0);
    }

    #[test]
    fn reversed_range_is_reported_on_its_line() {
        let text = "[[env]]\nname = \"c\"\nkind = \"corridor\"\nend_x = [11.0, 9.0]\n";
        let e = parse_config_str(text).unwrap_err();
        assert_eq!(e.line(), Some(4), "{e}");
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected_with_lines() {
        let e = parse_config_str("[sim]\ntimeout = 5.0\nspeed = 3\n").unwrap_err();
        assert_eq!(e.line(), Some(3), "{e}");
        let e = parse_config_str("[[env]]\nname = \"c\"\nkind = \"maze\"\n").unwrap_err();
        assert_eq!(e.line(), Some(3), "{e}");
        let e = parse_config_str("[[env]]\nname = \"c\"\nkind = \"doorway\"\nwidth = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("width"), "{e}");
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let text = "[[env]]\nname = \"a\"\nkind = \"corridor\"\n\n[[env]]\nname = \"a\"\nkind = \"doorway\"\n";
        assert_eq!(parse_config_str(text).unwrap_err().line(), Some(6));
    }

    #[test]
    fn rates_must_divide_the_base_clock() {
        assert!(parse_config_str("[sim]\nplanner_hz = 40\n").is_err());
        assert!(parse_config_str("[planner]\nnear_buffer = 0.1\n").is_err());
    }

    #[test]
    fn default_suite_round_trips() {
        let c = parse_config_str(DEFAULT_SUITE).unwrap();
        assert_eq!(c.envs.len(), 6);
        let again = parse_config_str(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_toml(), c.to_toml());
    }
}
