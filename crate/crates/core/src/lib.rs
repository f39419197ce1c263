//! Issue mirroring pipeline: mine pull requests, re-create their bugs inside
//! executable gyms, verify the results by running tests, and curate agent
//! trajectories for training.

pub mod assemble;
pub mod github;
pub mod gymrun;
pub mod ingest;
pub mod lm;
pub mod mirror;
pub mod model;
pub mod patchkit;
pub mod pylit;
pub mod traj;
pub mod verify;
