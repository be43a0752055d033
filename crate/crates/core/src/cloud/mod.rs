//! Point clouds: representation, rigid transforms, filtering, nearest-neighbour
//! indexing and plane fitting.

mod filter;
mod kdtree;
mod plane;

pub use filter::{
    classify_cloud_status, crop_box_remove, dust_filter, passthrough_filter, radius_remove, voxel_downsample,
    CloudStatus, DustStatus, YSign,
};
pub use kdtree::{KdIndex, Neighbor};
pub use plane::{fit_plane, fit_plane_least_squares, Plane, RansacParams};

use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudError {
    #[error("cannot transform a {from} cloud into the {to} frame")]
    FrameMismatch { from: Frame, to: Frame },
    #[error("index is empty")]
    EmptyIndex,
    #[error("plane fit needs at least 3 points, got {0}")]
    NotEnoughPoints(usize),
    #[error("points are collinear or coincident, no unique plane")]
    Degenerate,
}

/// A 3D point in meters with optional LIDAR attributes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: Option<f64>,
    /// Laser index of the LIDAR ring that produced the return.
    pub ring: Option<u16>,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, intensity: None, ring: None }
    }

    pub fn with_ring(mut self, ring: u16) -> Self {
        self.ring = Some(ring);
        self
    }

    pub fn with_intensity(mut self, intensity: f64) -> Self {
        self.intensity = Some(intensity);
        self
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, o: &Point3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, o: &Point3) -> f64 {
        self.dist_sq(o).sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(&self) -> Option<Point3> {
        let n = self.norm();
        (n > 1e-12).then(|| *self * (1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    /// Copies the coordinates of `xyz` while keeping this point's attributes.
    pub fn with_xyz(mut self, xyz: Point3) -> Self {
        self.x = xyz.x;
        self.y = xyz.y;
        self.z = xyz.z;
        self
    }

    pub(crate) fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub(crate) fn from_vector(v: &Vector3<f64>) -> Point3 {
        Point3::new(v.x, v.y, v.z)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Frame {
    Sensor,
    Body,
    Odometry,
}

impl Frame {
    pub fn as_str(&self) -> &'static str {
        match self {
            Frame::Sensor => "sensor",
            Frame::Body => "body",
            Frame::Odometry => "odometry",
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Frame {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "sensor" => Ok(Frame::Sensor),
            "body" => Ok(Frame::Body),
            "odometry" => Ok(Frame::Odometry),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame: Frame,
    /// Acquisition time in seconds.
    pub stamp: f64,
}

impl PointCloud {
    pub fn new(frame: Frame, stamp: f64) -> Self {
        Self { points: Vec::new(), frame, stamp }
    }

    pub fn from_points(points: Vec<Point3>, frame: Frame, stamp: f64) -> Self {
        Self { points, frame, stamp }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same frame and stamp, different points.
    pub(crate) fn with_points(&self, points: Vec<Point3>) -> PointCloud {
        PointCloud { points, frame: self.frame, stamp: self.stamp }
    }
}

/// Position plus roll/pitch/yaw in radians. Angles are kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Point3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Point3, roll: f64, pitch: f64, yaw: f64) -> Self {
        use crate::wrap_angle;
        Self {
            position: Point3::new(position.x, position.y, position.z),
            roll: wrap_angle(roll),
            pitch: wrap_angle(pitch),
            yaw: wrap_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Gravity-aligned pose: only translation and heading.
    pub fn planar(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(Point3::new(x, y, z), 0.0, 0.0, yaw)
    }

    /// Rotation built as `Rx(roll) * Ry(pitch) * Rz(yaw)` with the pitch block
    /// laid out as `[c 0 -s; 0 1 0; s 0 c]`.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sr, cr) = self.roll.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        let ry = Matrix3::new(cp, 0.0, -sp, 0.0, 1.0, 0.0, sp, 0.0, cp);
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        rx * ry * rz
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        let v = self.rotation() * p.to_vector() + self.position.to_vector();
        p.with_xyz(Point3::from_vector(&v))
    }

    /// Maps a parent-frame point into this pose's frame.
    pub fn inverse_transform_point(&self, p: &Point3) -> Point3 {
        let v = self.rotation().transpose() * (p.to_vector() - self.position.to_vector());
        p.with_xyz(Point3::from_vector(&v))
    }

    /// Unit heading in the horizontal plane.
    pub fn heading(&self) -> Point3 {
        Point3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }
}

/// Applies one forward hop of the frame chain: sensor to body (pose = sensor
/// extrinsics) or body to odometry (pose = vehicle state at the cloud stamp).
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose, target_frame: Frame) -> Result<PointCloud, CloudError> {
    match (cloud.frame, target_frame) {
        (Frame::Sensor, Frame::Body) | (Frame::Body, Frame::Odometry) => {}
        (from, to) => return Err(CloudError::FrameMismatch { from, to }),
    }
    let rot = pose.rotation();
    let t = pose.position.to_vector();
    let points = cloud.points.iter().map(|p| p.with_xyz(Point3::from_vector(&(rot * p.to_vector() + t)))).collect();
    Ok(PointCloud { points, frame: target_frame, stamp: cloud.stamp })
}

/// Inverse of [`transform_cloud`]: odometry to body or body to sensor.
pub fn untransform_cloud(cloud: &PointCloud, pose: &Pose, target_frame: Frame) -> Result<PointCloud, CloudError> {
    match (cloud.frame, target_frame) {
        (Frame::Odometry, Frame::Body) | (Frame::Body, Frame::Sensor) => {}
        (from, to) => return Err(CloudError::FrameMismatch { from, to }),
    }
    let rot_t = pose.rotation().transpose();
    let t = pose.position.to_vector();
    let points = cloud.points.iter().map(|p| p.with_xyz(Point3::from_vector(&(rot_t * (p.to_vector() - t))))).collect();
    Ok(PointCloud { points, frame: target_frame, stamp: cloud.stamp })
}
