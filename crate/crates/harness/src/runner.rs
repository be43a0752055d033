//! Runs the planner, mobility services and simulator together over one or
//! more generated environments.

use std::fmt::Write as _;

use hybridnav_core::cloud::{Point3, PointCloud, Pose};
use hybridnav_core::mobility::{GoalKind, MobilityMode, Service, ServiceGoal, ServiceInputs, ServiceParams};
use hybridnav_core::planner::{GoalFrame, Mobility, Planner, PlannerConfig, PlannerStatus, PositionTarget};
use hybridnav_core::sim::{
    clearances, collision_check, generate_environment, sense_lidar, step_aerial, step_ground, step_z, Course,
    DynamicsParams, EnvKind, EnvStatus, Environment, GenParams, LidarParams, SonarParams, VehicleState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formats::write_map;

/// Where the vehicle is sent in an environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalChoice {
    /// Drive or fly to this odometry-frame point.
    Seek(Point3),
    /// Follow the walls forward.
    Forward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSetup {
    pub name: String,
    pub kind: EnvKind,
    pub enabled: bool,
    pub mobility: Mobility,
    pub goal: GoalChoice,
    pub start: Pose,
    pub end_x_range: (f64, f64),
    pub end_y_range: (f64, f64),
    pub ceiling_height: f64,
}

impl EnvSetup {
    pub fn environment(&self) -> Environment {
        let env =
            Environment::new(self.name.clone(), self.start, self.end_x_range, self.end_y_range, self.ceiling_height);
        if self.enabled {
            env
        } else {
            env.disabled()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub timeout: f64,
    pub seed: u64,
    /// Base clock rate; the other rates must divide it.
    pub base_hz: u32,
    pub sim_hz: u32,
    pub planner_hz: u32,
    pub lidar_hz: u32,
    /// Continuous planner stuck time before the run is declared stuck.
    pub stuck_grace: f64,
    /// Half-width of the uniform LIDAR range noise.
    pub lidar_noise: f64,
    pub vehicle_radius: f64,
    pub takeoff_height: f64,
    pub lidar: LidarParams,
    pub sonar: SonarParams,
    pub dynamics: DynamicsParams,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            timeout: 60.0,
            seed: 0,
            base_hz: 150,
            sim_hz: 50,
            planner_hz: 30,
            lidar_hz: 10,
            stuck_grace: 5.0,
            lidar_noise: 0.005,
            vehicle_radius: 0.35,
            takeoff_height: 1.0,
            lidar: LidarParams::default(),
            sonar: SonarParams::default(),
            dynamics: DynamicsParams::default(),
        }
    }
}

/// Outcome of one environment run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvRun {
    pub status: EnvStatus,
    /// Time from the environment start to the terminal event.
    pub elapsed: f64,
    pub final_pose: Pose,
    pub ticks_log: String,
    pub map_dump: String,
}

/// FNV-1a, used to give every environment its own noise stream.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn noisy(cloud: PointCloud, rng: &mut ChaCha8Rng, amplitude: f64) -> PointCloud {
    if amplitude <= 0.0 {
        return cloud;
    }
    let points = cloud
        .points
        .into_iter()
        .map(|p| {
            let r = p.norm();
            let scale = if r > 0.0 { 1.0 + rng.random_range(-amplitude..=amplitude) / r } else { 1.0 };
            p.with_xyz(p * scale)
        })
        .collect();
    PointCloud { points, ..cloud }
}

fn target_from_goal(goal: &ServiceGoal, mobility: Mobility) -> PositionTarget {
    PositionTarget {
        z_mode: goal.z_mode,
        z_frame: goal.z_frame,
        velocity: Point3::new(0.0, 0.0, goal.z_rate),
        ..PositionTarget::hold(mobility, goal.position, goal.yaw)
    }
}

fn cruise_service(setup: &EnvSetup) -> Service {
    let mode = match (setup.mobility, setup.goal) {
        (Mobility::Ground, GoalChoice::Seek(_)) => MobilityMode::DriveTo,
        (Mobility::Ground, GoalChoice::Forward) => MobilityMode::DriveForward,
        (Mobility::Aerial, GoalChoice::Seek(_)) => MobilityMode::FlyTo,
        (Mobility::Aerial, GoalChoice::Forward) => MobilityMode::FlyForward,
    };
    let desired = match setup.goal {
        GoalChoice::Seek(p) => p,
        GoalChoice::Forward => Point3::ORIGIN,
    };
    Service::new(mode, desired, ServiceParams::default())
}

fn apply_goal(planner: &mut Planner, goal: &ServiceGoal, mobility: Mobility, takeoff_height: f64) {
    match goal.kind {
        GoalKind::Forward => planner.on_goal(Point3::new(1.0, 0.0, 0.0), GoalFrame::Body),
        GoalKind::Seek => {
            let z = match mobility {
                Mobility::Ground => goal.position.z,
                Mobility::Aerial => takeoff_height,
            };
            planner.on_goal(Point3::new(goal.position.x, goal.position.y, z), GoalFrame::Odometry)
        }
        GoalKind::Hold => {}
    }
}

/// Runs one environment from its start pose until a terminal status.
pub fn run_environment(setup: &EnvSetup, sim: &SimSettings, planner_cfg: &PlannerConfig) -> EnvRun {
    let gen = GenParams {
        ceiling_height: setup.ceiling_height,
        vehicle_radius: sim.vehicle_radius,
        start_z: setup.start.position.z,
        ..GenParams::default()
    };
    let Course { world, .. } = generate_environment(&setup.kind, &gen);
    let env = setup.environment();
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed ^ name_hash(&setup.name));
    let mut planner = Planner::new(PlannerConfig { mobility: setup.mobility, ..*planner_cfg });
    let mut state = VehicleState::new(setup.start, setup.mobility, 0.0);
    let mut log = String::new();

    let mut services = Vec::new();
    if setup.mobility == Mobility::Aerial {
        services.push(Service::new(
            MobilityMode::TakeOff,
            Point3::new(0.0, 0.0, sim.takeoff_height),
            ServiceParams::default(),
        ));
    }
    services.push(cruise_service(setup));
    let mut active = 0;

    let sim_div = sim.base_hz / sim.sim_hz.max(1);
    let plan_div = sim.base_hz / sim.planner_hz.max(1);
    let lidar_div = sim.base_hz / sim.lidar_hz.max(1);
    let sim_dt = 1.0 / sim.sim_hz as f64;
    let base_dt = 1.0 / sim.base_hz as f64;

    let mut target = PositionTarget::hold(setup.mobility, state.pose.position, state.pose.yaw);
    let mut pending: Option<(PointCloud, Pose)> = None;
    let mut stuck_since: Option<f64> = None;
    let mut tick: u64 = 0;
    let (status, elapsed) = loop {
        let t = tick as f64 * base_dt;
        if tick.is_multiple_of(lidar_div as u64) {
            let cloud = noisy(sense_lidar(&world, &state.pose, &sim.lidar, t), &mut rng, sim.lidar_noise);
            pending = Some((cloud, state.pose));
        }
        if tick.is_multiple_of(plan_div as u64) {
            let (bottom, top) = clearances(&world, &state.pose, &sim.sonar);
            planner.on_pose(state.pose);
            if setup.mobility == Mobility::Aerial {
                planner.on_clearance(bottom, top);
            }
            if let Some((cloud, at)) = pending.take() {
                planner.on_point_cloud(&cloud, &at);
            }
            let p = &state.pose.position;
            let inputs =
                ServiceInputs { latest: state.pose, ground_z: world.ground_z(p.x, p.y, p.z), bottom_clearance: bottom };
            let step = services[active].step(&inputs);
            for line in &step.trace {
                let _ = writeln!(log, "{line}");
            }
            if services[active].is_done() && active + 1 < services.len() {
                active += 1;
                for line in &services[active].step(&inputs).trace {
                    let _ = writeln!(log, "{line}");
                }
            }
            let svc = &mut services[active];
            let goal = svc.step(&inputs).goal;
            if goal.kind == GoalKind::Hold {
                target = target_from_goal(&goal, setup.mobility);
            } else {
                apply_goal(&mut planner, &goal, setup.mobility, sim.takeoff_height);
                let out = planner.tick_publish(t);
                let _ = writeln!(log, "{}", out.record);
                target = out.target;
                if out.status == PlannerStatus::Stuck {
                    stuck_since.get_or_insert(t);
                } else {
                    stuck_since = None;
                }
            }
        }
        if tick.is_multiple_of(sim_div as u64) && tick > 0 {
            let stepped = match state.mobility {
                Mobility::Ground => step_ground(&state, &target, sim_dt, &sim.dynamics),
                Mobility::Aerial => step_aerial(&state, &target, sim_dt, &sim.dynamics).and_then(|mut s| {
                    let p = state.pose.position;
                    let ground = world.ground_z(p.x, p.y, p.z);
                    let ceiling = world.ceiling_z(p.x, p.y, p.z);
                    s.pose.position.z = step_z(p.z, &target, sim_dt, &sim.dynamics, ground, ceiling)?;
                    Ok(s)
                }),
            };
            match stepped {
                Ok(s) => state = s,
                Err(e) => {
                    let _ = writeln!(log, "sim error {e}");
                }
            }
            if collision_check(&world, &state.pose, sim.vehicle_radius, setup.ceiling_height) {
                break (EnvStatus::Collided, t);
            }
            if env.contains_end(&state.pose) {
                break (EnvStatus::Successful, t);
            }
        }
        if stuck_since.is_some_and(|s| t - s >= sim.stuck_grace) {
            break (EnvStatus::Stuck, t);
        }
        if t > sim.timeout {
            break (EnvStatus::Timeout, t);
        }
        tick += 1;
    };
    let p = state.pose.position;
    let _ = writeln!(log, "end status={status} t={elapsed:.3} pose={:.3},{:.3},{:.3}", p.x, p.y, p.z);
    let map_dump = match planner.local_map() {
        Some(m) => write_map(m),
        None => format!("mapv1 {}\n", planner_cfg.local_map.map_or(0.2, |m| m.resolution)),
    };
    EnvRun { status, elapsed, final_pose: state.pose, ticks_log: log, map_dump }
}

/// Runs every enabled environment, `jobs` at a time. Results are indexed
/// like `setups`; disabled environments get `None`.
pub fn run_all(
    setups: &[EnvSetup],
    sim: &SimSettings,
    planner_cfg: &PlannerConfig,
    jobs: usize,
) -> Vec<Option<EnvRun>> {
    let enabled: Vec<usize> = (0..setups.len()).filter(|&i| setups[i].enabled).collect();
    let mut runs: Vec<Option<EnvRun>> = vec![None; setups.len()];
    let jobs = jobs.max(1);
    if jobs == 1 {
        for &i in &enabled {
            runs[i] = Some(run_environment(&setups[i], sim, planner_cfg));
        }
        return runs;
    }
    for chunk in enabled.chunks(jobs) {
        let done: Vec<(usize, EnvRun)> = std::thread::scope(|s| {
            let handles: Vec<_> =
                chunk.iter().map(|&i| s.spawn(move || (i, run_environment(&setups[i], sim, planner_cfg)))).collect();
            handles.into_iter().map(|h| h.join().expect("environment run panicked")).collect()
        });
        for (i, r) in done {
            runs[i] = Some(r);
        }
    }
    runs
}
