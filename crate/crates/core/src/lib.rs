//! Closed-loop designed, open-loop executed quantum control.
//!
//! The pipeline: simulate a bilinear feedback (Lyapunov-designed) system with
//! a fixed-step Runge-Kutta method, freeze the feedback values into
//! piecewise-constant pulses, drive the real plant open-loop with exact
//! per-interval unitaries, and quantify the resulting state error against a
//! high-accuracy reference trajectory. The analysis layer verifies the
//! asymptotic error limit, its first-order rate and method independence, and
//! an explicit three-term upper bound on the error norm.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod integrators;
pub mod linalg;
pub mod pipeline;
pub mod tol;
pub mod twoqubit;

pub use cli::cli_main;
pub use error::{Error, Result};
