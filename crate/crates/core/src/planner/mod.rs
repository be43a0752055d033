//! Local planner: cloud ingestion, primitive selection, the vertical state
//! machine and the timed target publisher.

mod target;
mod vertical;
mod wall_follow;

use core::fmt;

pub use target::*;
pub use vertical::{vertical_sm_step, VerticalSmConfig, VerticalState};
pub use wall_follow::{wall_follow_plane_baseline, WallFollowCommand, WallFollowStatus};

use crate::cloud::{
    classify_cloud_status, crop_box_remove, dust_filter, transform_cloud, voxel_downsample, CloudStatus, Frame,
    KdIndex, Point3, PointCloud, Pose,
};
use crate::mapping::{astar_plan, extract_waypoint, path_points, HybridNode, LocalMap, ModeCosts, SearchSpace};
use crate::prelude::*;
use crate::primitives::{
    check_collision, generate_endpoints, primitive_cost, select_best, CollisionStatus, CostConfig, Primitive, Selection,
};
use crate::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlannerStatus {
    Waiting,
    Running,
    Stuck,
}

impl fmt::Display for PlannerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerStatus::Waiting => "waiting",
            PlannerStatus::Running => "running",
            PlannerStatus::Stuck => "stuck",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DustConfig {
    pub window: usize,
    pub variance_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMapConfig {
    pub resolution: f64,
    pub retain_radius: f64,
    /// Arc length along the A* path at which the local goal is taken.
    pub waypoint_distance: f64,
    /// Replan after this many clouds.
    pub replan_every: usize,
    pub margin: i64,
}

impl Default for LocalMapConfig {
    fn default() -> Self {
        Self { resolution: 0.2, retain_radius: 8.0, waypoint_distance: 1.0, replan_every: 5, margin: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub mobility: Mobility,
    pub voxel_size: f64,
    pub voxel_min_points: usize,
    /// Body-frame box around the wheels whose returns are dropped.
    pub wheel_box: (Point3, Point3),
    /// Sensor-to-body extrinsics.
    pub extrinsics: Pose,
    pub dust: Option<DustConfig>,
    pub truncate_ground: bool,
    pub wheel_radius: f64,
    pub ground_margin: f64,
    /// Distance to the primitive endpoints.
    pub horizon: f64,
    /// Primitive duration `T`.
    pub duration: f64,
    /// Azimuth fan of the primitives, centred on the heading.
    pub fov: f64,
    pub n_azimuth: usize,
    /// Elevation of the upper and lower rows in aerial mode.
    pub elevation: f64,
    pub cost: CostConfig,
    pub sample_spacing: f64,
    pub yaw_escape: bool,
    pub vertical: VerticalSmConfig,
    /// Rolling heading gain and yaw rate limit.
    pub yaw_gain: f64,
    pub max_yaw_rate: f64,
    pub local_map: Option<LocalMapConfig>,
    /// Keep earlier obstacle points within this distance of the vehicle.
    pub memory_radius: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mobility: Mobility::Ground,
            voxel_size: 0.1,
            voxel_min_points: 1,
            wheel_box: (Point3::new(-0.25, -0.3, -0.3), Point3::new(0.25, 0.3, 0.05)),
            extrinsics: Pose::new(Point3::new(0.0, 0.0, 0.1), 0.0, 0.0, 0.0),
            dust: Some(DustConfig { window: 11, variance_threshold: 0.05 }),
            truncate_ground: true,
            wheel_radius: 0.15,
            ground_margin: 0.02,
            horizon: 1.0,
            duration: 1.0,
            fov: 85f64.to_radians(),
            n_azimuth: 15,
            elevation: 15f64.to_radians(),
            cost: CostConfig::default(),
            sample_spacing: 0.05,
            yaw_escape: false,
            vertical: VerticalSmConfig::default(),
            yaw_gain: 2.0,
            max_yaw_rate: 1.5,
            local_map: None,
            memory_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalMode {
    /// Point goal in the odometry frame.
    Seek(Point3),
    /// Constant goal one meter ahead in the body frame.
    WallFollow,
}

/// Frame tag attached to a goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalFrame {
    Odometry,
    Body,
}

/// What one tick published, for logs and assertions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub status: PlannerStatus,
    pub selected: Option<usize>,
    pub cost: Option<f64>,
    pub vcmd: Point3,
}

impl fmt::Display for TickRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick t={:.3} status={} sel=", self.t, self.status)?;
        match self.selected {
            Some(i) => write!(f, "{i}")?,
            None => f.write_str("none")?,
        }
        match self.cost {
            Some(c) => write!(f, " cost={c:.3}")?,
            None => f.write_str(" cost=-")?,
        }
        write!(f, " vcmd={:.3},{:.3},{:.3}", self.vcmd.x, self.vcmd.y, self.vcmd.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub target: PositionTarget,
    pub status: PlannerStatus,
    pub record: TickRecord,
}

#[derive(Debug, Clone)]
pub struct Planner {
    cfg: PlannerConfig,
    status: PlannerStatus,
    goal: GoalMode,
    pose: Option<Pose>,
    velocity: Point3,
    bottom: Option<f64>,
    top: Option<f64>,
    primitives: Vec<Primitive>,
    selected: Option<usize>,
    cloud_status: Option<CloudStatus>,
    obstacles: Option<PointCloud>,
    vertical: VerticalState,
    map: Option<LocalMap>,
    clouds_seen: usize,
    waypoint: Option<Point3>,
}

impl Planner {
    pub fn new(cfg: PlannerConfig) -> Self {
        Self {
            map: cfg.local_map.map(|m| LocalMap::new(m.resolution, m.retain_radius)),
            cfg,
            status: PlannerStatus::Waiting,
            goal: GoalMode::WallFollow,
            pose: None,
            velocity: Point3::ORIGIN,
            bottom: None,
            top: None,
            primitives: Vec::new(),
            selected: None,
            cloud_status: None,
            obstacles: None,
            vertical: VerticalState::Forward,
            clouds_seen: 0,
            waypoint: None,
        }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn status(&self) -> PlannerStatus {
        self.status
    }

    pub fn goal(&self) -> GoalMode {
        self.goal
    }

    pub fn is_wall_following(&self) -> bool {
        self.goal == GoalMode::WallFollow
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn selected(&self) -> Option<&Primitive> {
        self.selected.map(|i| &self.primitives[i])
    }

    pub fn cloud_status(&self) -> Option<CloudStatus> {
        self.cloud_status
    }

    /// Obstacle cloud of the last usable round, in the odometry frame.
    pub fn obstacles(&self) -> Option<&PointCloud> {
        self.obstacles.as_ref()
    }

    pub fn clearances(&self) -> (Option<f64>, Option<f64>) {
        (self.bottom, self.top)
    }

    pub fn vertical_state(&self) -> VerticalState {
        self.vertical
    }

    pub fn local_map(&self) -> Option<&LocalMap> {
        self.map.as_ref()
    }

    pub fn waypoint(&self) -> Option<Point3> {
        self.waypoint
    }

    /// A body-frame goal of `(1, 0, 0)` switches to wall following; any
    /// odometry-frame goal is sought directly.
    pub fn on_goal(&mut self, goal: Point3, frame: GoalFrame) {
        self.goal = match frame {
            GoalFrame::Body if (goal - Point3::new(1.0, 0.0, 0.0)).norm() < 1e-9 => GoalMode::WallFollow,
            GoalFrame::Body => match self.pose {
                Some(p) => GoalMode::Seek(planar_body_to_odom(&p, &goal)),
                None => GoalMode::WallFollow,
            },
            GoalFrame::Odometry => GoalMode::Seek(goal),
        };
        self.waypoint = None;
    }

    pub fn on_pose(&mut self, pose: Pose) {
        self.pose = Some(pose);
    }

    pub fn on_clearance(&mut self, bottom: f64, top: f64) {
        self.bottom = Some(bottom);
        self.top = Some(top);
    }

    /// Runs the cloud pipeline and a selection round. `state_at_stamp` is the
    /// vehicle pose when the cloud was captured.
    pub fn on_point_cloud(&mut self, cloud: &PointCloud, state_at_stamp: &Pose) -> Option<Selection> {
        let raw = cloud.len();
        let cfg = self.cfg;
        let mut sensor = voxel_downsample(cloud, cfg.voxel_size, cfg.voxel_min_points);
        if let Some(d) = cfg.dust {
            sensor = dust_filter(&sensor, d.window, d.variance_threshold).0;
        }
        let body = transform_cloud(&sensor, &cfg.extrinsics, Frame::Body).ok()?;
        let body = crop_box_remove(&body, &cfg.wheel_box.0, &cfg.wheel_box.1);
        let mut odom = transform_cloud(&body, state_at_stamp, Frame::Odometry).ok()?;
        let status = classify_cloud_status(raw, odom.len());
        self.cloud_status = Some(status);
        if status == CloudStatus::Noisy {
            return None;
        }
        if cfg.truncate_ground {
            let ground = state_at_stamp.position.z - self.bottom.unwrap_or(cfg.wheel_radius);
            let floor = ground + cfg.ground_margin;
            odom.points.retain(|p| p.z > floor);
        }
        self.update_map(&odom);
        if let Some(radius) = cfg.memory_radius {
            let here = state_at_stamp.position;
            if let Some(prev) = &self.obstacles {
                odom.points.extend(prev.points.iter().filter(|p| p.dist(&here) <= radius).copied());
            }
            odom = voxel_downsample(&odom, cfg.voxel_size, 1);
        }
        let index = KdIndex::build(&odom.points);
        self.obstacles = Some(odom);
        Some(self.select(&index))
    }

    fn update_map(&mut self, odom: &PointCloud) {
        let (Some(map), Some(pose), Some(mcfg)) = (self.map.as_mut(), self.pose, self.cfg.local_map) else { return };
        map.insert_cloud(odom);
        map.prune(&pose.position);
        self.clouds_seen += 1;
        let GoalMode::Seek(goal) = self.goal else { return };
        if self.waypoint.is_some() && !(self.clouds_seen - 1).is_multiple_of(mcfg.replan_every.max(1)) {
            return;
        }
        let ground_k = map.voxel_of(&Point3::new(pose.position.x, pose.position.y, self.cfg.wheel_radius)).2;
        let (start, target, costs) = match self.cfg.mobility {
            Mobility::Ground => {
                let (si, sj, _) = map.voxel_of(&pose.position);
                let (gi, gj, _) = map.voxel_of(&goal);
                (HybridNode::ground(si, sj, ground_k), HybridNode::ground(gi, gj, ground_k), ModeCosts::default())
            }
            Mobility::Aerial => {
                let (si, sj, sk) = map.voxel_of(&pose.position);
                let (gi, gj, gk) = map.voxel_of(&goal);
                let costs = ModeCosts { ground: 1e3, air: 1.0, mode_change_factor: 1.0 };
                (HybridNode::air(si, sj, sk.max(ground_k + 1)), HybridNode::air(gi, gj, gk.max(ground_k + 1)), costs)
            }
        };
        let mut space = SearchSpace::around(map, &start, &target, ground_k, mcfg.margin);
        if self.cfg.mobility == Mobility::Ground {
            space.max.2 = ground_k;
        }
        self.waypoint = astar_plan(map, &space, start, target, &costs).ok().and_then(|path| {
            let mut pts = path_points(map, &path.nodes);
            if let Some(first) = pts.first_mut() {
                *first = pose.position;
            }
            extract_waypoint(&pts, mcfg.waypoint_distance).map(|w| Point3::new(w.x, w.y, goal.z))
        });
    }

    fn current_goal(&self, pose: &Pose) -> Point3 {
        match self.goal {
            GoalMode::WallFollow => planar_body_to_odom(pose, &Point3::new(1.0, 0.0, 0.0)),
            GoalMode::Seek(g) => {
                let g = self.waypoint.unwrap_or(g);
                match self.cfg.mobility {
                    Mobility::Ground => Point3::new(g.x, g.y, pose.position.z),
                    Mobility::Aerial => g,
                }
            }
        }
    }

    fn select(&mut self, index: &KdIndex) -> Selection {
        let Some(pose) = self.pose else {
            self.selected = None;
            return Selection::Stuck;
        };
        let cfg = self.cfg;
        let rows: Vec<f64> = match cfg.mobility {
            Mobility::Ground => vec![0.0],
            Mobility::Aerial => vec![0.0, cfg.elevation, -cfg.elevation],
        };
        let start = pose.position;
        let goal = self.current_goal(&pose);
        let to_goal = goal - start;
        let heading = Pose::planar(start.x, start.y, start.z, pose.yaw);
        let endpoints = generate_endpoints(&heading, cfg.horizon, cfg.fov, cfg.n_azimuth, &rows, cfg.yaw_escape);
        let (z_lo, z_hi) = match (self.bottom, self.top) {
            (Some(b), Some(t)) if cfg.mobility == Mobility::Aerial => {
                (start.z - b + cfg.vertical.min_bottom_clearance, start.z + t - cfg.vertical.min_top_clearance)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        };
        self.primitives = endpoints
            .into_iter()
            .filter_map(|end| Primitive::new(start, self.velocity, end, cfg.duration, cfg.sample_spacing).ok())
            .map(|mut prim| {
                let (d, mut st) = check_collision(&prim, index, &cfg.cost);
                // Outside the clearance band only primitives heading back in are allowed.
                let rising = prim.endpoint.z > start.z;
                let sinking = prim.endpoint.z < start.z;
                let leaves_band = prim.samples.iter().any(|(p, _)| (p.z < z_lo && !rising) || (p.z > z_hi && !sinking));
                let mut d = d;
                if leaves_band {
                    st = CollisionStatus::Colliding;
                    d = d.min(0.0);
                }
                prim.min_obstacle_dist = d;
                prim.status = st;
                prim.goal_angle = angle_between(&(prim.endpoint - start), &to_goal);
                prim.cost = primitive_cost(prim.goal_angle, d, &cfg.cost);
                prim
            })
            .collect();
        let sel = select_best(&self.primitives);
        match sel {
            Selection::Chosen(i) => {
                self.selected = Some(i);
                self.status = PlannerStatus::Running;
            }
            Selection::Stuck => {
                self.selected = None;
                self.status = PlannerStatus::Stuck;
            }
        }
        sel
    }

    /// Target for the controller at time `now`.
    pub fn tick_publish(&mut self, now: f64) -> TickOutput {
        let cfg = self.cfg;
        let pose = self.pose.unwrap_or_else(Pose::identity);
        let hold = |mobility| PositionTarget::hold(mobility, pose.position, pose.yaw);
        let mut vcmd = Point3::ORIGIN;
        let (target, cost) = match (self.status, self.selected()) {
            (PlannerStatus::Running, Some(prim)) => {
                let cost = prim.cost;
                vcmd = (prim.endpoint - pose.position) * (1.0 / cfg.duration);
                let heading = vcmd.y.atan2(vcmd.x);
                let target = match cfg.mobility {
                    Mobility::Ground => {
                        let err = wrap_angle(heading - pose.yaw);
                        let yaw_rate = (cfg.yaw_gain * err).clamp(-cfg.max_yaw_rate, cfg.max_yaw_rate);
                        // Turn on the spot rather than roll backwards.
                        if err.cos() < 0.0 {
                            vcmd = Point3::ORIGIN;
                        }
                        vcmd.z = 0.0;
                        velocity_target(Mobility::Ground, vcmd, heading, yaw_rate)
                    }
                    Mobility::Aerial => {
                        self.vertical = VerticalState::Forward;
                        velocity_target(Mobility::Aerial, vcmd, heading, 0.0)
                    }
                };
                (target, Some(cost))
            }
            (PlannerStatus::Stuck, _) => match cfg.mobility {
                Mobility::Ground => (velocity_target(Mobility::Ground, Point3::ORIGIN, pose.yaw, 0.0), None),
                Mobility::Aerial => {
                    let bottom = self.bottom.unwrap_or(f64::INFINITY);
                    let top = self.top.unwrap_or(f64::INFINITY);
                    let (next, vz) = vertical_sm_step(self.vertical, &cfg.vertical, false, bottom, top);
                    self.vertical = next;
                    vcmd = Point3::new(0.0, 0.0, vz);
                    (velocity_target(Mobility::Aerial, vcmd, pose.yaw, 0.0), None)
                }
            },
            _ => (hold(cfg.mobility), None),
        };
        self.velocity = vcmd;
        let record = TickRecord { t: now, status: self.status, selected: self.selected, cost, vcmd };
        TickOutput { target, status: self.status, record }
    }
}

fn velocity_target(mobility: Mobility, v: Point3, yaw: f64, yaw_rate: f64) -> PositionTarget {
    PositionTarget {
        mobility,
        xy_mode: ControlMode::Velocity,
        z_mode: ControlMode::Velocity,
        xy_frame: XyFrame::Odometry,
        z_frame: ZFrame::Odometry,
        position: Point3::ORIGIN,
        velocity: v,
        yaw,
        yaw_rate,
    }
}

/// Body-frame point to odometry using only the vehicle's yaw.
fn planar_body_to_odom(pose: &Pose, p: &Point3) -> Point3 {
    let (s, c) = pose.yaw.sin_cos();
    pose.position + Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
}

/// Angle between two vectors; zero if either vanishes.
pub fn angle_between(a: &Point3, b: &Point3) -> f64 {
    let n = a.norm() * b.norm();
    if n == 0.0 {
        return 0.0;
    }
    (a.dot(b) / n).clamp(-1.0, 1.0).acos()
}
