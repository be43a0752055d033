use crate::cloud::{fit_plane, Point3, PointCloud, RansacParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallFollowStatus {
    Ok,
    NoPlane,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallFollowCommand {
    /// Body-frame velocity: unit forward plus the lateral correction.
    pub velocity: Point3,
    /// Distance from the sensor to the fitted wall.
    pub wall_distance: f64,
    pub status: WallFollowStatus,
}

/// Plane-fit wall follower kept as a baseline. The cloud, in the sensor
/// frame, should already be cut down to the wall band. The lateral command
/// is `k_p (d - standoff)` toward the wall.
pub fn wall_follow_plane_baseline(
    cloud: &PointCloud,
    standoff: f64,
    k_p: f64,
    params: &RansacParams,
) -> WallFollowCommand {
    let Ok(plane) = fit_plane(&cloud.points, params) else {
        return WallFollowCommand {
            velocity: Point3::new(1.0, 0.0, 0.0),
            wall_distance: f64::INFINITY,
            status: WallFollowStatus::NoPlane,
        };
    };
    // Foot of the perpendicular from the sensor origin.
    let n = plane.normal();
    let toward_wall = if plane.d > 0.0 { -n } else { n };
    let d = plane.d.abs();
    let lateral = toward_wall.y * k_p * (d - standoff);
    WallFollowCommand { velocity: Point3::new(1.0, lateral, 0.0), wall_distance: d, status: WallFollowStatus::Ok }
}
