//! Navigation stack for a hybrid aerial-ground vehicle.
//!
//! Everything in this crate is allocation-only (`alloc`, no `std`): point cloud
//! processing, motion primitives and the local planner loop, voxel mapping with
//! hybrid A*, mobility services, rolling-mode control and estimation, terrain
//! traversability, and the kinematic simulator used by the unit-test harness.
//! File formats, configuration and the command line live in the `hybridnav`
//! companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cloud;
pub mod control;
pub mod mapping;
pub mod mobility;
pub mod planner;
pub mod primitives;
pub mod sim;
pub mod traversability;

#[allow(unused_imports)]
mod prelude {
    pub use alloc::{boxed::Box, format, string::String, string::ToString, vec, vec::Vec};
    // Inherent float methods only exist when std is linked in.
    pub use num_traits::Float;
}

pub use cloud::{Frame, KdIndex, Plane, Point3, PointCloud, Pose};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use core::f64::consts::{PI, TAU};
    #[allow(unused_imports)]
    use prelude::Float;
    if !a.is_finite() {
        return a;
    }
    let mut w = a % TAU;
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}
