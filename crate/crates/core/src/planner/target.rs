use core::fmt;

use crate::cloud::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mobility {
    Aerial,
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Position,
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XyFrame {
    Odometry,
    /// Gravity-aligned body frame.
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZFrame {
    Odometry,
    Body,
    /// Height above the ground below the vehicle.
    Ground,
    /// Distance below the ceiling.
    Ceiling,
}

/// What the planner hands to the controller (or simulator) each tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionTarget {
    pub mobility: Mobility,
    pub xy_mode: ControlMode,
    pub z_mode: ControlMode,
    pub xy_frame: XyFrame,
    pub z_frame: ZFrame,
    /// Desired `x, y, z`, read according to the frames.
    pub position: Point3,
    /// Desired velocity; `z` is the vertical rate in velocity mode.
    pub velocity: Point3,
    pub yaw: f64,
    pub yaw_rate: f64,
}

impl PositionTarget {
    /// Position hold in the odometry frame.
    pub fn hold(mobility: Mobility, position: Point3, yaw: f64) -> Self {
        Self {
            mobility,
            xy_mode: ControlMode::Position,
            z_mode: ControlMode::Position,
            xy_frame: XyFrame::Odometry,
            z_frame: ZFrame::Odometry,
            position,
            velocity: Point3::ORIGIN,
            yaw,
            yaw_rate: 0.0,
        }
    }

    /// A position goal expressed in the body frame has no meaning for the
    /// vehicle; every other combination is accepted.
    pub fn is_valid(&self) -> bool {
        let xy_ok = !(self.xy_frame == XyFrame::Body && self.xy_mode == ControlMode::Position);
        let z_ok = !(self.z_frame == ZFrame::Body && self.z_mode == ControlMode::Position);
        let finite =
            self.position.is_finite() && self.velocity.is_finite() && self.yaw.is_finite() && self.yaw_rate.is_finite();
        xy_ok && z_ok && finite
    }
}

impl fmt::Display for Mobility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mobility::Aerial => "aerial",
            Mobility::Ground => "ground",
        })
    }
}
