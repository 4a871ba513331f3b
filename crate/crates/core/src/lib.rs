//! Finite-state robot teams on modifiable grid worlds: simulation,
//! verification, design search and hardness reductions.

pub mod bundle;
pub mod controller;
pub mod grid;
pub mod oracles;
pub mod problems;
pub mod reductions;
pub mod sim;

pub use controller::{Controller, Direction, Formula, Modification, Transition, TransitionTemplate, Trigger};
pub use grid::{Environment, Legend, Position, TypeId};
