use thiserror::Error;

use crate::cloud::Pose;
use crate::planner::{ControlMode, Mobility, PositionTarget, XyFrame, ZFrame};
#[allow(unused_imports)]
use crate::prelude::Float;
use crate::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("position goals in the body frame are not supported ({0})")]
    Unsupported(&'static str),
    #[error("target is for {target} mobility but the vehicle is in {vehicle} mode")]
    WrongMobility { target: Mobility, vehicle: Mobility },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub pose: Pose,
    /// Body-frame forward velocity from the last step.
    pub forward_velocity: f64,
    pub mobility: Mobility,
    pub stamp: f64,
}

impl VehicleState {
    pub fn new(pose: Pose, mobility: Mobility, stamp: f64) -> Self {
        Self { pose, forward_velocity: 0.0, mobility, stamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    /// Planning horizon `T` used to turn position goals into velocities.
    pub horizon: f64,
    /// Aerial yaw slew rate.
    pub yaw_rate: f64,
    /// Aerial vertical slew rate.
    pub z_rate: f64,
    pub wheel_radius: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { horizon: 1.0, yaw_rate: 1.0, z_rate: 0.5, wheel_radius: 0.15 }
    }
}

/// Moves `from` toward `to` by at most `step`, never past it.
fn slew(from: f64, to: f64, step: f64) -> f64 {
    if to < from {
        (from - step).max(to)
    } else if to > from {
        (from + step).min(to)
    } else {
        from
    }
}

pub fn slew_yaw(yaw: f64, desired: f64, dt: f64, rate: f64) -> f64 {
    let err = wrap_angle(desired - yaw);
    let step = dt * rate;
    if err.abs() <= step {
        wrap_angle(desired)
    } else {
        wrap_angle(yaw + step * err.signum())
    }
}

/// Rolling update: body velocity and yaw change from the target, then
/// integration along the new heading with the wheels on the ground.
pub fn step_ground(
    state: &VehicleState,
    target: &PositionTarget,
    dt: f64,
    params: &DynamicsParams,
) -> Result<VehicleState, SimError> {
    if target.mobility != Mobility::Ground || state.mobility != Mobility::Ground {
        return Err(SimError::WrongMobility { target: target.mobility, vehicle: state.mobility });
    }
    let p = &state.pose;
    let (s, c) = p.yaw.sin_cos();
    let (d_yaw, v_body) = match (target.xy_frame, target.xy_mode) {
        (XyFrame::Odometry, ControlMode::Position) => {
            let vx = (target.position.x - p.position.x) / params.horizon;
            let vy = (target.position.y - p.position.y) / params.horizon;
            (wrap_angle(target.yaw - p.yaw), vx * c + vy * s)
        }
        (XyFrame::Odometry, ControlMode::Velocity) => {
            (target.yaw_rate * dt, target.velocity.x * c + target.velocity.y * s)
        }
        (XyFrame::Body, ControlMode::Velocity) => (target.yaw_rate * dt, target.velocity.x),
        (XyFrame::Body, ControlMode::Position) => return Err(SimError::Unsupported("xy")),
    };
    let yaw = wrap_angle(p.yaw + d_yaw);
    let (s1, c1) = yaw.sin_cos();
    let position =
        crate::Point3::new(p.position.x + v_body * dt * c1, p.position.y + v_body * dt * s1, params.wheel_radius);
    Ok(VehicleState {
        pose: Pose::new(position, 0.0, 0.0, yaw),
        forward_velocity: v_body,
        mobility: Mobility::Ground,
        stamp: state.stamp + dt,
    })
}

/// Aerial `x, y` and yaw update. The height is left to [`step_z`].
pub fn step_aerial(
    state: &VehicleState,
    target: &PositionTarget,
    dt: f64,
    params: &DynamicsParams,
) -> Result<VehicleState, SimError> {
    if target.mobility != Mobility::Aerial || state.mobility != Mobility::Aerial {
        return Err(SimError::WrongMobility { target: target.mobility, vehicle: state.mobility });
    }
    let p = &state.pose;
    let (dx, dy) = match (target.xy_frame, target.xy_mode) {
        (XyFrame::Odometry, ControlMode::Position) => (
            (target.position.x - p.position.x) / params.horizon * dt,
            (target.position.y - p.position.y) / params.horizon * dt,
        ),
        (XyFrame::Odometry, ControlMode::Velocity) => (target.velocity.x * dt, target.velocity.y * dt),
        (XyFrame::Body, ControlMode::Velocity) => {
            let (s, c) = p.yaw.sin_cos();
            let (vx, vy) = (target.velocity.x, target.velocity.y);
            ((vx * c - vy * s) * dt, (vx * s + vy * c) * dt)
        }
        (XyFrame::Body, ControlMode::Position) => return Err(SimError::Unsupported("xy")),
    };
    let yaw = slew_yaw(p.yaw, target.yaw, dt, params.yaw_rate);
    let (s, c) = p.yaw.sin_cos();
    let position = crate::Point3::new(p.position.x + dx, p.position.y + dy, p.position.z);
    Ok(VehicleState {
        pose: Pose::new(position, 0.0, 0.0, yaw),
        forward_velocity: (dx * c + dy * s) / dt,
        mobility: Mobility::Aerial,
        stamp: state.stamp + dt,
    })
}

/// Aerial height update. `ground_z` and `ceiling_z` are the surfaces
/// directly below and above the vehicle.
pub fn step_z(
    z: f64,
    target: &PositionTarget,
    dt: f64,
    params: &DynamicsParams,
    ground_z: f64,
    ceiling_z: f64,
) -> Result<f64, SimError> {
    let step = dt * params.z_rate;
    match (target.z_frame, target.z_mode) {
        (ZFrame::Body, ControlMode::Position) => Err(SimError::Unsupported("z")),
        (ZFrame::Body, ControlMode::Velocity) => Ok(z + target.position.z / params.horizon * dt),
        (_, ControlMode::Velocity) => Ok(z + target.velocity.z * dt),
        (ZFrame::Odometry, ControlMode::Position) => Ok(slew(z, target.position.z, step)),
        (ZFrame::Ground, ControlMode::Position) => Ok(slew(z, target.position.z + ground_z, step)),
        (ZFrame::Ceiling, ControlMode::Position) => Ok(slew(z, ceiling_z - target.position.z, step)),
    }
}

/// Height of the vehicle centre above the ground from two downward sonars
/// mounted at axle height.
pub fn bottom_clearance(sonar1: f64, sonar2: f64, wheel_radius: f64) -> f64 {
    sonar1.min(sonar2) + wheel_radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;
    use core::f64::consts::{FRAC_PI_2, PI};
    use proptest::{prop_assert, prop_assert_eq, proptest};

    fn ground_state(yaw: f64) -> VehicleState {
        VehicleState::new(Pose::planar(0.0, 0.0, 0.15, yaw), Mobility::Ground, 0.0)
    }

    fn body_velocity(mobility: Mobility, vx: f64) -> PositionTarget {
        PositionTarget {
            xy_mode: ControlMode::Velocity,
            z_mode: ControlMode::Velocity,
            xy_frame: XyFrame::Body,
            velocity: Point3::new(vx, 0.0, 0.0),
            ..PositionTarget::hold(mobility, Point3::ORIGIN, 0.0)
        }
    }

    #[test]
    fn ground_body_velocity() {
        let p = DynamicsParams::default();
        let s = step_ground(&ground_state(0.0), &body_velocity(Mobility::Ground, 1.0), 0.1, &p).unwrap();
        assert!((s.pose.position.x - 0.1).abs() < 1e-15 && s.pose.position.y == 0.0);
        let s = step_ground(&ground_state(FRAC_PI_2), &body_velocity(Mobility::Ground, 1.0), 0.1, &p).unwrap();
        assert!((s.pose.position.y - 0.1).abs() < 1e-15 && s.pose.position.x.abs() < 1e-15);
        assert_eq!(s.pose.position.z, p.wheel_radius);
    }

    #[test]
    fn ground_odometry_position_one_step() {
        let p = DynamicsParams::default();
        let target = PositionTarget::hold(Mobility::Ground, Point3::new(1.0, 0.0, 0.0), 0.0);
        let s = step_ground(&ground_state(0.0), &target, 0.1, &p).unwrap();
        // v = (1 - 0) / T = 1, so one step of 0.1 s moves 0.1 m.
        assert!((s.pose.position.x - 0.1).abs() < 1e-15);
        assert_eq!(s.forward_velocity, 1.0);
    }

    #[test]
    fn ground_odometry_velocity_projects_on_heading() {
        let p = DynamicsParams::default();
        let mut target = body_velocity(Mobility::Ground, 0.0);
        target.xy_frame = XyFrame::Odometry;
        target.velocity = Point3::new(0.0, 2.0, 0.0);
        target.yaw_rate = 0.5;
        let s = step_ground(&ground_state(FRAC_PI_2), &target, 0.1, &p).unwrap();
        let yaw = FRAC_PI_2 + 0.05;
        assert!((s.pose.yaw - yaw).abs() < 1e-15);
        assert!((s.pose.position.x - 0.2 * yaw.cos()).abs() < 1e-15);
        assert!((s.pose.position.y - 0.2 * yaw.sin()).abs() < 1e-15);
    }

    #[test]
    fn body_position_is_rejected() {
        let p = DynamicsParams::default();
        let mut target = PositionTarget::hold(Mobility::Ground, Point3::ORIGIN, 0.0);
        target.xy_frame = XyFrame::Body;
        assert_eq!(step_ground(&ground_state(0.0), &target, 0.1, &p), Err(SimError::Unsupported("xy")));
        target.mobility = Mobility::Aerial;
        let aerial = VehicleState::new(Pose::identity(), Mobility::Aerial, 0.0);
        assert_eq!(step_aerial(&aerial, &target, 0.1, &p), Err(SimError::Unsupported("xy")));
        let mut zt = PositionTarget::hold(Mobility::Aerial, Point3::ORIGIN, 0.0);
        zt.z_frame = ZFrame::Body;
        assert_eq!(step_z(1.0, &zt, 0.1, &p, 0.0, 3.0), Err(SimError::Unsupported("z")));
        assert!(step_ground(&aerial, &zt, 0.1, &p).is_err());
    }

    #[test]
    fn aerial_yaw_slew_clamps() {
        let p = DynamicsParams { yaw_rate: 1.0, ..DynamicsParams::default() };
        let state = VehicleState::new(Pose::identity(), Mobility::Aerial, 0.0);
        let target = PositionTarget::hold(Mobility::Aerial, Point3::ORIGIN, 0.05);
        let s = step_aerial(&state, &target, 0.1, &p).unwrap();
        assert_eq!(s.pose.yaw, 0.05);
        assert_eq!(s.pose.position, Point3::ORIGIN);
    }

    #[test]
    fn aerial_hover_and_velocity() {
        let p = DynamicsParams::default();
        let state = VehicleState::new(Pose::planar(1.0, 2.0, 1.0, 0.3), Mobility::Aerial, 0.0);
        let hold = PositionTarget::hold(Mobility::Aerial, Point3::new(1.0, 2.0, 1.0), 0.3);
        assert_eq!(step_aerial(&state, &hold, 0.1, &p).unwrap().pose, state.pose);

        let mut s = VehicleState::new(Pose::identity(), Mobility::Aerial, 0.0);
        let mut target = body_velocity(Mobility::Aerial, 0.0);
        target.xy_frame = XyFrame::Odometry;
        target.velocity = Point3::new(1.0, 0.0, 0.0);
        for _ in 0..10 {
            s = step_aerial(&s, &target, 0.1, &p).unwrap();
        }
        assert!((s.pose.position.x - 1.0).abs() < 1e-12);

        let rotated = VehicleState::new(Pose::planar(0.0, 0.0, 1.0, FRAC_PI_2), Mobility::Aerial, 0.0);
        let mut fwd = body_velocity(Mobility::Aerial, 1.0);
        fwd.yaw = FRAC_PI_2;
        let s = step_aerial(&rotated, &fwd, 0.1, &p).unwrap();
        assert!(s.pose.position.x.abs() < 1e-15 && (s.pose.position.y - 0.1).abs() < 1e-15);
    }

    #[test]
    fn z_modes() {
        let p = DynamicsParams { z_rate: 0.5, ..DynamicsParams::default() };
        let mut ground = PositionTarget::hold(Mobility::Aerial, Point3::new(0.0, 0.0, 1.0), 0.0);
        ground.z_frame = ZFrame::Ground;
        let mut z = 0.15;
        for _ in 0..200 {
            z = step_z(z, &ground, 0.05, &p, 0.2, 3.0).unwrap();
        }
        assert_eq!(z, 1.2);

        let mut vel = ground;
        vel.z_mode = ControlMode::Velocity;
        vel.velocity.z = -0.3;
        assert!((step_z(1.0, &vel, 0.1, &p, 0.0, 3.0).unwrap() - 0.97).abs() < 1e-15);

        let mut body = vel;
        body.z_frame = ZFrame::Body;
        body.position.z = 0.5;
        assert!((step_z(1.0, &body, 0.1, &p, 0.0, 3.0).unwrap() - 1.05).abs() < 1e-15);

        let mut ceiling = ground;
        ceiling.z_frame = ZFrame::Ceiling;
        ceiling.position.z = 0.5;
        let mut z = 1.0;
        for _ in 0..100 {
            z = step_z(z, &ceiling, 0.05, &p, 0.0, 2.0).unwrap();
            assert!(z <= 1.5);
        }
        assert_eq!(z, 1.5);
    }

    #[test]
    fn bottom_clearance_cases() {
        assert!((bottom_clearance(0.4, 0.5, 0.15) - 0.55).abs() < 1e-15);
        assert_eq!(bottom_clearance(0.7, 0.7, 0.15), 0.7 + 0.15);
        assert_eq!(bottom_clearance(0.4, 3.0, 0.15), 0.4 + 0.15);
    }

    proptest! {
        #[test]
        fn ground_z_is_wheel_radius(yaw in -PI..PI, vx in -2.0..2.0f64, rate in -1.0..1.0f64, steps in 1usize..50) {
            let p = DynamicsParams::default();
            let mut s = ground_state(yaw);
            let mut t = body_velocity(Mobility::Ground, vx);
            t.yaw_rate = rate;
            for _ in 0..steps {
                s = step_ground(&s, &t, 0.02, &p).unwrap();
                prop_assert_eq!(s.pose.position.z, p.wheel_radius);
            }
        }

        #[test]
        fn yaw_slew_never_overshoots(yaw in -PI..PI, desired in -PI..PI, dt in 0.001..0.5f64, rate in 0.1..5.0f64) {
            let next = slew_yaw(yaw, desired, dt, rate);
            let before = wrap_angle(desired - yaw).abs();
            let after = wrap_angle(desired - next).abs();
            prop_assert!(after <= before + 1e-12);
            prop_assert!(wrap_angle(next - yaw).abs() <= dt * rate + 1e-12);
        }
    }
}
