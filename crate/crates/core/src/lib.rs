//! Digital twin of a robotic battery-pack disassembly cell.
//!
//! The crate is organized bottom-up: [`geometry`] and [`kinematics`] model
//! the robot, [`scene`] the pack and cell, [`motion`] and [`skills`] turn
//! component tags into collision-checked programs, [`link`] and
//! [`robotsim`] carry those programs over the cyclic correction protocol,
//! [`registration`] re-aligns the twin to an observed pack, and [`session`]
//! ties it together into record-and-replay teleoperation. [`analysis`]
//! holds the cost and usability arithmetic.

pub mod analysis;
pub mod geometry;
pub mod kinematics;
pub mod link;
pub mod motion;
pub mod registration;
pub mod robotsim;
pub mod scene;
pub mod session;
pub mod skills;

pub use geometry::{JointState, Pose6D};
pub use kinematics::RobotModel;
pub use scene::Scene;

