//! Command-line front end: scenario generation, reconstruction and
//! benchmark presets.

pub mod bench;
pub mod commands;
pub mod plot;
pub mod presets;
