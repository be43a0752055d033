//! Kinematic simulator: vehicle dynamics, sensor models, generated courses
//! and the environment manager.

mod dynamics;
mod manager;
mod sensors;
mod world;

pub use dynamics::{
    bottom_clearance, slew_yaw, step_aerial, step_ground, step_z, DynamicsParams, SimError, VehicleState,
};
pub use manager::{EnvAction, EnvEvent, EnvManager, EnvResult, EnvStatus, Environment};
pub use sensors::{clearances, collision_check, sense_lidar, sonar_readings, LidarParams, SonarParams};
pub use world::{generate_environment, Aabb, Course, EnvKind, GenParams, Turn, WorldGeometry};
