//! Mobility services: the eight service behaviours, the transition table
//! between them, and the client that wraps mode changes in take-off/landing.

use core::fmt;

use crate::cloud::{Point3, PointCloud, Pose};
use crate::mapping::NodeMode;
use crate::planner::{ControlMode, XyFrame, ZFrame};
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MobilityMode {
    Idle,
    Hover,
    TakeOff,
    Land,
    FlyTo,
    FlyForward,
    DriveTo,
    DriveForward,
}

impl MobilityMode {
    pub const ALL: [MobilityMode; 8] = [
        MobilityMode::Idle,
        MobilityMode::Hover,
        MobilityMode::TakeOff,
        MobilityMode::Land,
        MobilityMode::FlyTo,
        MobilityMode::FlyForward,
        MobilityMode::DriveTo,
        MobilityMode::DriveForward,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MobilityMode::Idle => "idle",
            MobilityMode::Hover => "hover",
            MobilityMode::TakeOff => "take_off",
            MobilityMode::Land => "land",
            MobilityMode::FlyTo => "fly_to",
            MobilityMode::FlyForward => "fly_forward",
            MobilityMode::DriveTo => "drive_to",
            MobilityMode::DriveForward => "drive_forward",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// True for the modes that keep the vehicle airborne.
    pub fn is_aerial(self) -> bool {
        matches!(self, MobilityMode::Hover | MobilityMode::TakeOff | MobilityMode::FlyTo | MobilityMode::FlyForward)
    }
}

impl fmt::Display for MobilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Allowed,
    Forbidden,
    /// The unprinted diagonal; staying in the current service.
    SelfHold,
}

impl Transition {
    pub fn symbol(self) -> char {
        match self {
            Transition::Allowed => '1',
            Transition::Forbidden => '0',
            Transition::SelfHold => '-',
        }
    }
}

const A: Transition = Transition::Allowed;
const F: Transition = Transition::Forbidden;
const S: Transition = Transition::SelfHold;

/// Rows are the current mode, columns the requested one, both in
/// [`MobilityMode::ALL`] order.
pub const TRANSITIONS: [[Transition; 8]; 8] = [
    [S, F, A, F, F, F, A, A],
    [F, S, F, A, A, A, F, F],
    [F, A, S, A, A, A, F, F],
    [F, A, A, S, A, A, F, F],
    [F, A, F, A, A, A, F, F],
    [F, A, F, A, A, A, F, F],
    [A, A, A, F, F, F, A, A],
    [A, F, A, F, F, F, A, A],
];

pub fn transition(current: MobilityMode, requested: MobilityMode) -> Transition {
    TRANSITIONS[current.index()][requested.index()]
}

/// Whether the service may switch from `current` to `requested`.
pub fn request_transition(current: MobilityMode, requested: MobilityMode) -> bool {
    transition(current, requested) != Transition::Forbidden
}

/// The table as eight lines of space-separated `-`, `0`, `1`.
pub fn render_transition_table() -> String {
    let mut out = String::new();
    for row in TRANSITIONS {
        let line: Vec<String> = row.iter().map(|t| t.symbol().to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalKind {
    /// Keep the given pose.
    Hold,
    /// Plan toward the given point.
    Seek,
    /// Follow walls: the goal sits at a fixed offset in the body frame.
    Forward,
}

/// A goal for the local planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceGoal {
    pub kind: GoalKind,
    pub xy_frame: XyFrame,
    pub z_frame: ZFrame,
    pub z_mode: ControlMode,
    pub position: Point3,
    /// Vertical rate used when `z_mode` is velocity.
    pub z_rate: f64,
    pub yaw: f64,
}

impl ServiceGoal {
    /// Body-frame goals only make sense as a forward offset; body-frame z
    /// is never a position.
    pub fn is_valid(&self) -> bool {
        let xy_ok = self.xy_frame == XyFrame::Odometry || self.kind == GoalKind::Forward;
        let z_ok = !(self.z_frame == ZFrame::Body && self.z_mode == ControlMode::Position);
        xy_ok && z_ok && self.position.is_finite() && self.z_rate.is_finite() && self.yaw.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceParams {
    pub takeoff_tolerance: f64,
    pub land_rate: f64,
    pub land_filter_alpha: f64,
    pub wheel_radius: f64,
    pub landed_margin: f64,
}

impl Default for ServiceParams {
    fn default() -> Self {
        Self {
            takeoff_tolerance: 0.05,
            land_rate: -0.3,
            land_filter_alpha: 0.2,
            wheel_radius: 0.15,
            landed_margin: 0.02,
        }
    }
}

impl ServiceParams {
    pub fn landed_threshold(&self) -> f64 {
        self.wheel_radius + self.landed_margin
    }
}

/// What the service sees each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceInputs {
    pub latest: Pose,
    /// Ground height under the vehicle in the odometry frame.
    pub ground_z: f64,
    /// Bottom clearance (height sensor reading).
    pub bottom_clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceEvent {
    Started,
    Goal,
    Done,
    Preempted,
}

impl ServiceEvent {
    pub fn name(self) -> &'static str {
        match self {
            ServiceEvent::Started => "started",
            ServiceEvent::Goal => "goal",
            ServiceEvent::Done => "done",
            ServiceEvent::Preempted => "preempted",
        }
    }
}

/// One line of the service trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceLine {
    pub mode: MobilityMode,
    pub event: ServiceEvent,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "svc {} event={}", self.mode, self.event.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceStep {
    pub goal: ServiceGoal,
    pub trace: Vec<TraceLine>,
}

/// A running service. Call [`Service::step`] once per 30 Hz iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Service {
    mode: MobilityMode,
    params: ServiceParams,
    /// Height for take-off, destination for fly/drive-to.
    desired: Point3,
    anchor: Option<ServiceGoal>,
    filtered_height: Option<f64>,
    started: bool,
    done: bool,
    finished: bool,
}

impl Service {
    /// `desired` carries the take-off height in `z` or the fly/drive-to
    /// destination; it is ignored by the other services.
    pub fn new(mode: MobilityMode, desired: Point3, params: ServiceParams) -> Self {
        Self {
            mode,
            params,
            desired,
            anchor: None,
            filtered_height: None,
            started: false,
            done: false,
            finished: false,
        }
    }

    pub fn mode(&self) -> MobilityMode {
        self.mode
    }

    /// Take-off reached its height or the vehicle has landed.
    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Stopped by a preempt request.
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn filtered_height(&self) -> Option<f64> {
        self.filtered_height
    }

    fn hold_goal(&self, position: Point3, yaw: f64) -> ServiceGoal {
        ServiceGoal {
            kind: GoalKind::Hold,
            xy_frame: XyFrame::Odometry,
            z_frame: ZFrame::Odometry,
            z_mode: ControlMode::Position,
            position,
            z_rate: 0.0,
            yaw,
        }
    }

    fn first_goal(&self, inp: &ServiceInputs) -> ServiceGoal {
        let p = inp.latest.position;
        let yaw = inp.latest.yaw;
        let base = self.hold_goal(p, yaw);
        match self.mode {
            MobilityMode::Idle => ServiceGoal { position: Point3::new(p.x, p.y, inp.ground_z), ..base },
            MobilityMode::Hover => base,
            MobilityMode::TakeOff => {
                ServiceGoal { z_frame: ZFrame::Ground, position: Point3::new(p.x, p.y, self.desired.z), ..base }
            }
            MobilityMode::Land => ServiceGoal {
                z_frame: ZFrame::Ground,
                z_mode: ControlMode::Velocity,
                position: Point3::new(p.x, p.y, 0.0),
                z_rate: self.params.land_rate,
                ..base
            },
            MobilityMode::FlyTo => {
                ServiceGoal { kind: GoalKind::Seek, z_frame: ZFrame::Ground, position: self.desired, ..base }
            }
            MobilityMode::DriveTo => {
                ServiceGoal { kind: GoalKind::Seek, position: Point3::new(self.desired.x, self.desired.y, 0.0), ..base }
            }
            MobilityMode::FlyForward => ServiceGoal {
                kind: GoalKind::Forward,
                xy_frame: XyFrame::Body,
                z_frame: ZFrame::Ground,
                position: Point3::new(1.0, 0.0, inp.bottom_clearance),
                ..base
            },
            MobilityMode::DriveForward => ServiceGoal {
                kind: GoalKind::Forward,
                xy_frame: XyFrame::Body,
                z_frame: ZFrame::Ground,
                position: Point3::new(1.0, 0.0, 0.0),
                ..base
            },
        }
    }

    pub fn step(&mut self, inp: &ServiceInputs) -> ServiceStep {
        let mut trace = Vec::new();
        if !self.started {
            self.started = true;
            trace.push(TraceLine { mode: self.mode, event: ServiceEvent::Started });
        }
        let anchor = match self.anchor {
            Some(a) => a,
            None => {
                let a = self.first_goal(inp);
                self.anchor = Some(a);
                a
            }
        };
        let mut goal = anchor;
        if !self.done {
            match self.mode {
                MobilityMode::TakeOff => {
                    if (self.desired.z - inp.bottom_clearance).abs() < self.params.takeoff_tolerance {
                        self.done = true;
                        trace.push(TraceLine { mode: self.mode, event: ServiceEvent::Done });
                    }
                }
                MobilityMode::Land => {
                    let a = self.params.land_filter_alpha;
                    let h = match self.filtered_height {
                        None => inp.bottom_clearance,
                        Some(prev) => a * inp.bottom_clearance + (1.0 - a) * prev,
                    };
                    self.filtered_height = Some(h);
                    if h < self.params.landed_threshold() {
                        self.done = true;
                        // Landed: hold where we are.
                        self.anchor = Some(self.hold_goal(inp.latest.position, inp.latest.yaw));
                        goal = self.anchor.unwrap_or(goal);
                        trace.push(TraceLine { mode: self.mode, event: ServiceEvent::Done });
                    }
                }
                _ => {}
            }
        }
        trace.push(TraceLine { mode: self.mode, event: ServiceEvent::Goal });
        ServiceStep { goal, trace }
    }

    /// Stops the service and returns the final hold goal.
    pub fn preempt(&mut self, inp: &ServiceInputs) -> ServiceStep {
        self.finished = true;
        let goal = self.hold_goal(inp.latest.position, inp.latest.yaw);
        ServiceStep {
            goal,
            trace: vec![
                TraceLine { mode: self.mode, event: ServiceEvent::Goal },
                TraceLine { mode: self.mode, event: ServiceEvent::Preempted },
            ],
        }
    }
}

/// Services needed to reach the next path segment.
pub fn hybrid_client_step(prev: NodeMode, next: NodeMode, next_goal: Point3) -> Vec<(MobilityMode, Point3)> {
    match (prev, next) {
        (NodeMode::Ground, NodeMode::Ground) => vec![(MobilityMode::DriveTo, next_goal)],
        (NodeMode::Air, NodeMode::Air) => vec![(MobilityMode::FlyTo, next_goal)],
        (NodeMode::Ground, NodeMode::Air) => {
            vec![(MobilityMode::TakeOff, next_goal), (MobilityMode::FlyTo, next_goal)]
        }
        (NodeMode::Air, NodeMode::Ground) => {
            vec![(MobilityMode::Land, next_goal), (MobilityMode::DriveTo, next_goal)]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandingVerdict {
    Ok,
    TooRough,
    NoHeadroom,
}

/// Decides whether the vehicle may take off from or land on the patch seen
/// by the downward sensor.
pub fn landing_site_check(
    bottom_cloud: &PointCloud,
    variance_threshold: f64,
    top_clearance: f64,
    min_top: f64,
) -> LandingVerdict {
    if top_clearance < min_top {
        return LandingVerdict::NoHeadroom;
    }
    if bottom_cloud.is_empty() {
        return LandingVerdict::TooRough;
    }
    let n = bottom_cloud.len() as f64;
    let mean = bottom_cloud.points.iter().map(|p| p.z).sum::<f64>() / n;
    let var = bottom_cloud.points.iter().map(|p| (p.z - mean) * (p.z - mean)).sum::<f64>() / n;
    if var > variance_threshold {
        LandingVerdict::TooRough
    } else {
        LandingVerdict::Ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Frame;
    use proptest::{prop_assert, proptest};
    use MobilityMode::*;

    fn inputs(x: f64, z: f64, bottom: f64) -> ServiceInputs {
        ServiceInputs { latest: Pose::planar(x, 2.0, z, 0.4), ground_z: 0.0, bottom_clearance: bottom }
    }

    #[test]
    fn table_spot_checks() {
        assert!(request_transition(Idle, TakeOff));
        assert!(!request_transition(Idle, Hover));
        assert!(request_transition(Hover, Land));
        assert!(!request_transition(DriveForward, Hover));
        assert!(!request_transition(FlyForward, DriveTo));
        assert_eq!(transition(Land, Land), Transition::SelfHold);
        assert!(request_transition(Land, Land));
    }

    #[test]
    fn rendered_table_shape() {
        let t = render_transition_table();
        assert_eq!(t.lines().count(), 8);
        assert_eq!(t.lines().next(), Some("- 0 1 0 0 0 1 1"));
        assert_eq!(t.lines().last(), Some("1 0 1 0 0 0 1 1"));
    }

    #[test]
    fn forward_goals() {
        let mut s = Service::new(FlyForward, Point3::ORIGIN, ServiceParams::default());
        let g = s.step(&inputs(0.0, 1.2, 1.0)).goal;
        assert_eq!((g.position.x, g.position.y), (1.0, 0.0));
        assert_eq!(g.xy_frame, XyFrame::Body);
        assert_eq!(g.z_frame, ZFrame::Ground);
        assert_eq!(g.position.z, 1.0);
        let mut s = Service::new(DriveForward, Point3::ORIGIN, ServiceParams::default());
        let g = s.step(&inputs(0.0, 0.15, 0.15)).goal;
        assert_eq!(g.position, Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn hold_goals() {
        let mut idle = Service::new(Idle, Point3::ORIGIN, ServiceParams::default());
        let inp = ServiceInputs { ground_z: -0.1, ..inputs(3.0, 0.2, 0.3) };
        let g = idle.step(&inp).goal;
        assert_eq!(g.position, Point3::new(3.0, 2.0, -0.1));
        assert_eq!(g.kind, GoalKind::Hold);
        let mut hover = Service::new(Hover, Point3::ORIGIN, ServiceParams::default());
        let g = hover.step(&inputs(3.0, 1.4, 1.3)).goal;
        assert_eq!(g.position, Point3::new(3.0, 2.0, 1.4));
        // The hover pose is latched at the first iteration.
        let g = hover.step(&inputs(3.5, 1.6, 1.5)).goal;
        assert_eq!(g.position, Point3::new(3.0, 2.0, 1.4));
    }

    #[test]
    fn take_off_completes_within_tolerance() {
        let mut s = Service::new(TakeOff, Point3::new(0.0, 0.0, 1.0), ServiceParams::default());
        let first = s.step(&inputs(0.0, 0.15, 0.15));
        assert_eq!(first.trace[0], TraceLine { mode: TakeOff, event: ServiceEvent::Started });
        assert!(!s.is_done());
        let last = s.step(&inputs(0.0, 0.98, 0.98));
        assert!(s.is_done());
        assert!(last.trace.iter().any(|t| t.event == ServiceEvent::Done));
        assert_eq!(last.goal.z_frame, ZFrame::Ground);
        assert_eq!(last.goal.position.z, 1.0);
    }

    #[test]
    fn landing_declared_where_offline_filter_crosses() {
        let params = ServiceParams::default();
        let trace: Vec<f64> = (0..60).map(|i| (1.0 - 0.03 * i as f64).max(0.15)).collect();
        let mut filt = trace[0];
        let mut expected = None;
        for (i, &h) in trace.iter().enumerate() {
            if i > 0 {
                filt = 0.2 * h + 0.8 * filt;
            }
            if filt < 0.17 {
                expected = Some(i);
                break;
            }
        }
        let mut s = Service::new(Land, Point3::ORIGIN, params);
        let mut landed_at = None;
        for (i, &h) in trace.iter().enumerate() {
            let step = s.step(&inputs(0.0, h, h));
            if i == 0 {
                assert_eq!(step.goal.z_mode, ControlMode::Velocity);
                assert_eq!(step.goal.z_rate, -0.3);
            }
            if s.is_done() {
                landed_at = Some(i);
                assert_eq!(step.goal.kind, GoalKind::Hold);
                assert_eq!(step.goal.z_mode, ControlMode::Position);
                break;
            }
        }
        assert!(expected.is_some());
        assert_eq!(landed_at, expected);
    }

    #[test]
    fn preempt_emits_final_hold() {
        let mut s = Service::new(FlyTo, Point3::new(5.0, 0.0, 1.0), ServiceParams::default());
        s.step(&inputs(0.0, 1.0, 1.0));
        let end = s.preempt(&inputs(0.5, 1.1, 1.0));
        assert!(s.is_finished());
        assert_eq!(end.goal.kind, GoalKind::Hold);
        assert_eq!(end.goal.position, Point3::new(0.5, 2.0, 1.1));
        assert_eq!(end.trace.last().unwrap().to_string(), "svc fly_to event=preempted");
    }

    #[test]
    fn every_service_goal_is_valid() {
        for mode in MobilityMode::ALL {
            let mut s = Service::new(mode, Point3::new(2.0, 1.0, 1.0), ServiceParams::default());
            for h in [1.0, 0.5, 0.1] {
                let step = s.step(&inputs(0.0, h, h));
                assert!(step.goal.is_valid(), "{mode}");
            }
            assert!(s.preempt(&inputs(0.0, 0.2, 0.2)).goal.is_valid());
        }
    }

    #[test]
    fn hybrid_client_sequences() {
        let g = Point3::new(1.0, 2.0, 0.0);
        assert_eq!(hybrid_client_step(NodeMode::Ground, NodeMode::Air, g), vec![(TakeOff, g), (FlyTo, g)]);
        assert_eq!(hybrid_client_step(NodeMode::Air, NodeMode::Ground, g), vec![(Land, g), (DriveTo, g)]);
        assert_eq!(hybrid_client_step(NodeMode::Ground, NodeMode::Ground, g), vec![(DriveTo, g)]);
        assert_eq!(hybrid_client_step(NodeMode::Air, NodeMode::Air, g), vec![(FlyTo, g)]);
        for (prev, next) in [(NodeMode::Air, NodeMode::Air), (NodeMode::Air, NodeMode::Ground)] {
            assert!(hybrid_client_step(prev, next, g).iter().all(|(m, _)| *m != TakeOff));
        }
        for (prev, next) in [(NodeMode::Ground, NodeMode::Ground), (NodeMode::Ground, NodeMode::Air)] {
            assert!(hybrid_client_step(prev, next, g).iter().all(|(m, _)| *m != Land));
        }
    }

    #[test]
    fn landing_site_verdicts() {
        let flat = PointCloud::from_points(
            (0..25).map(|i| Point3::new((i % 5) as f64 * 0.1, (i / 5) as f64 * 0.1, 0.0)).collect(),
            Frame::Body,
            0.0,
        );
        assert_eq!(landing_site_check(&flat, 0.005, 1.0, 0.5), LandingVerdict::Ok);
        // Rocks at +-sqrt(0.02) give a height variance of exactly 0.02.
        let r = 0.02f64.sqrt();
        let rocky = PointCloud::from_points(
            (0..20).map(|i| Point3::new(i as f64 * 0.1, 0.0, if i % 2 == 0 { r } else { -r })).collect(),
            Frame::Body,
            0.0,
        );
        assert_eq!(landing_site_check(&rocky, 0.005, 1.0, 0.5), LandingVerdict::TooRough);
        assert_eq!(landing_site_check(&flat, 0.005, 0.2, 0.5), LandingVerdict::NoHeadroom);
        let empty = PointCloud::new(Frame::Body, 0.0);
        assert_eq!(landing_site_check(&empty, 0.005, 1.0, 0.5), LandingVerdict::TooRough);
    }

    proptest! {
        #[test]
        fn land_filter_is_monotone(steps in proptest::collection::vec(0.0..0.05f64, 2..80), start in 0.5..3.0f64) {
            let mut s = Service::new(Land, Point3::ORIGIN, ServiceParams { wheel_radius: -10.0, ..ServiceParams::default() });
            let mut h = start;
            let mut prev = f64::INFINITY;
            for d in steps {
                h -= d;
                s.step(&inputs(0.0, h, h));
                let f = s.filtered_height().unwrap();
                prop_assert!(f <= prev);
                prop_assert!(f >= h);
                prev = f;
            }
        }
    }
}
