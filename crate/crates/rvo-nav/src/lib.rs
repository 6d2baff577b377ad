//! Distributed multi-robot collision avoidance built on reciprocal velocity
//! obstacles.
//!
//! Neighboring robots and static line obstacles are represented as cones in
//! velocity space. A recurrent actor-critic policy, trained with PPO on a
//! cone-area reward, picks velocity increments for differential-drive
//! robots; a reactive sampling baseline picks velocities outside the joint
//! cone area directly. A benchmarking harness runs both through circle,
//! random, and corridor scenarios and reports success rate, travel time,
//! and average speed.

pub mod baseline;
pub mod geometry;
pub mod harness;
pub mod kinematics;
pub mod reward;
pub mod vec2;
pub mod world;

pub use vec2::Vec2;
pub mod ppo;
pub mod nn;
