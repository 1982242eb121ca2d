//! Command-line front end: scenario files and the commands built on them.

pub mod app;
pub mod commands;
pub mod scenario;
