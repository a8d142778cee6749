//! Simulation and calibration harness around the `disttest` testers.
//!
//! The library half exists so integration tests can drive experiments and
//! calibration in-process; the `disttest` binary wires it to a CLI.

pub mod calibrate;
pub mod experiment;
pub mod families;
pub mod samples;
