use alloc::collections::BTreeMap;

use super::dynamics::bottom_clearance;
use super::world::WorldGeometry;
use crate::cloud::{Frame, Point3, PointCloud, Pose};
#[allow(unused_imports)]
use crate::prelude::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarParams {
    pub max_range: f64,
    pub min_depth: f64,
    /// Half of the vertical field of view.
    pub elevation_fov: f64,
    pub rings: u16,
    pub azimuth_bins: usize,
    /// Sensor origin in the body frame.
    pub mount: Point3,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            max_range: 6.0,
            min_depth: 0.5,
            elevation_fov: 15f64.to_radians(),
            rings: 16,
            azimuth_bins: 720,
            mount: Point3::new(0.0, 0.0, 0.1),
        }
    }
}

impl LidarParams {
    /// Sensor-to-body extrinsics.
    pub fn extrinsics(&self) -> Pose {
        Pose::new(self.mount, 0.0, 0.0, 0.0)
    }
}

/// World points seen from `pose`, in the sensor frame. Each return is binned
/// by ring and azimuth and only the nearest point of a bin survives, which
/// stands in for occlusion.
pub fn sense_lidar(world: &WorldGeometry, pose: &Pose, params: &LidarParams, stamp: f64) -> PointCloud {
    let sensor_pose = Pose::new(pose.transform_point(&params.mount), pose.roll, pose.pitch, pose.yaw);
    let origin = sensor_pose.position;
    let fov = params.elevation_fov;
    let rings = params.rings.max(1);
    let bins = params.azimuth_bins.max(1);
    let mut nearest: BTreeMap<(u16, usize), (f64, Point3)> = BTreeMap::new();
    for n in world.index().radius_search(&origin, params.max_range) {
        if n.distance <= params.min_depth {
            continue;
        }
        let local = sensor_pose.inverse_transform_point(&n.point);
        let elevation = local.z.atan2(local.x.hypot(local.y));
        if elevation.abs() > fov {
            continue;
        }
        let ring = (((elevation + fov) / (2.0 * fov) * rings as f64) as u16).min(rings - 1);
        let azimuth = local.y.atan2(local.x) + core::f64::consts::PI;
        let bin = ((azimuth / core::f64::consts::TAU * bins as f64) as usize).min(bins - 1);
        let slot = nearest.entry((ring, bin)).or_insert((f64::INFINITY, local));
        if n.distance < slot.0 {
            *slot = (n.distance, local);
        }
    }
    let points = nearest.into_iter().map(|((ring, _), (_, p))| Point3::new(p.x, p.y, p.z).with_ring(ring)).collect();
    PointCloud::from_points(points, Frame::Sensor, stamp)
}

/// Downward sonars at either end of the axle, `half_track` to each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SonarParams {
    pub half_track: f64,
    pub wheel_radius: f64,
    pub max_range: f64,
}

impl Default for SonarParams {
    fn default() -> Self {
        Self { half_track: 0.2, wheel_radius: 0.15, max_range: 5.0 }
    }
}

/// Both sonar readings for a vehicle at `pose`.
pub fn sonar_readings(world: &WorldGeometry, pose: &Pose, params: &SonarParams) -> (f64, f64) {
    let z = pose.position.z - params.wheel_radius;
    let (s, c) = pose.yaw.sin_cos();
    let read = |side: f64| {
        let x = pose.position.x - s * side * params.half_track;
        let y = pose.position.y + c * side * params.half_track;
        (z - world.ground_z(x, y, z)).clamp(0.0, params.max_range)
    };
    (read(1.0), read(-1.0))
}

/// Bottom and top clearance at `pose`.
pub fn clearances(world: &WorldGeometry, pose: &Pose, params: &SonarParams) -> (f64, f64) {
    let (s1, s2) = sonar_readings(world, pose, params);
    let p = &pose.position;
    (bottom_clearance(s1, s2, params.wheel_radius), world.ceiling_z(p.x, p.y, p.z) - p.z)
}

/// Any obstacle point within the vehicle sphere, or the sphere reaching the
/// ceiling.
pub fn collision_check(world: &WorldGeometry, pose: &Pose, vehicle_radius: f64, ceiling_height: f64) -> bool {
    pose.position.z + vehicle_radius > ceiling_height || world.index().any_within(&pose.position, vehicle_radius)
}

#[cfg(test)]
mod tests {
    use super::super::world::Aabb;
    use super::*;
    use crate::prelude::*;
    use proptest::{prop_assert_eq, proptest};

    fn world_of(points: Vec<Point3>) -> WorldGeometry {
        WorldGeometry::new(points, Vec::new(), 3.0)
    }

    fn level_params() -> LidarParams {
        LidarParams { mount: Point3::ORIGIN, ..LidarParams::default() }
    }

    #[test]
    fn min_depth_and_elevation_band() {
        let pose = Pose::planar(0.0, 0.0, 1.0, 0.0);
        let w = world_of(vec![Point3::new(0.3, 0.0, 1.0), Point3::new(2.0, 0.0, 1.0 + 2.0 * 20f64.to_radians().tan())]);
        assert!(sense_lidar(&w, &pose, &level_params(), 0.0).is_empty());
    }

    #[test]
    fn wall_point_lands_at_body_coordinate() {
        let pose = Pose::planar(1.0, 2.0, 1.0, core::f64::consts::FRAC_PI_2);
        let w = world_of(vec![Point3::new(1.0, 4.0, 1.0)]);
        let cloud = sense_lidar(&w, &pose, &level_params(), 0.5);
        assert_eq!(cloud.frame, Frame::Sensor);
        assert_eq!(cloud.len(), 1);
        let p = cloud.points[0];
        assert!((p.x - 2.0).abs() < 1e-12 && p.y.abs() < 1e-12 && p.z.abs() < 1e-12);
        assert_eq!(p.ring, Some(8));
    }

    #[test]
    fn nearer_point_occludes_farther() {
        let pose = Pose::planar(0.0, 0.0, 1.0, 0.0);
        let w = world_of(vec![Point3::new(2.0, 0.0, 1.0), Point3::new(4.0, 0.0, 1.0)]);
        let cloud = sense_lidar(&w, &pose, &level_params(), 0.0);
        assert_eq!(cloud.len(), 1);
        assert!((cloud.points[0].x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collisions() {
        let w = world_of(vec![Point3::new(0.315, 0.0, 1.0)]);
        assert!(collision_check(&w, &Pose::planar(0.0, 0.0, 1.0, 0.0), 0.35, 3.0));
        assert!(!collision_check(&w, &Pose::planar(-2.0, 0.0, 1.0, 0.0), 0.35, 3.0));
        assert!(collision_check(&w, &Pose::planar(-2.0, 0.0, 2.8, 0.0), 0.35, 3.0));
    }

    #[test]
    fn sonar_over_a_block() {
        let block = Aabb::new(Point3::new(1.0, 0.05, 0.0), Point3::new(2.0, 1.0, 0.4));
        let w = WorldGeometry::new(Vec::new(), vec![block], 3.0);
        let p = SonarParams::default();
        let pose = Pose::planar(1.5, 0.0, 1.15, 0.0);
        let (left, right) = sonar_readings(&w, &pose, &p);
        assert!((left - 0.6).abs() < 1e-12 && (right - 1.0).abs() < 1e-12);
        let (bottom, top) = clearances(&w, &pose, &p);
        assert!((bottom - 0.75).abs() < 1e-12);
        assert!((top - 1.85).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bottom_clearance_is_min_plus_radius(s1 in 0.0..10.0f64, s2 in 0.0..10.0f64, r in 0.0..1.0f64) {
            prop_assert_eq!(bottom_clearance(s1, s2, r), s1.min(s2) + r);
        }
    }
}
