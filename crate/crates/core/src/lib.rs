//! One-dimensional thin-film equation `u_t = -(uⁿ u_xxx)_x`: an implicit
//! solver, free-boundary tracking, the growth criteria that decide whether
//! a contact line waits or moves, and the localized functionals used to
//! study them.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod free_boundary;
pub mod grid;
pub mod initial_data;
pub mod manifest;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Grid1D, Profile};
