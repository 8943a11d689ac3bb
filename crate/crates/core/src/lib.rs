//! Assistive mecanum robot stack with a deterministic home simulator.

pub mod bus;
pub mod config;
pub mod error;
pub mod grid;
pub mod kinematics;
pub mod lowlayer;
pub mod messages;
pub mod nav;
pub mod perception;
pub mod stack;
pub mod taskmgr;
pub mod vocal;
pub mod worldsim;

pub use error::{Error, Result};
