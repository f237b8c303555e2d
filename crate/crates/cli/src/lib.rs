//! IO, configuration, and orchestration around `gsurv-core`: CSV panel
//! files, TOML model and grid configs, parallel simulation runs, and report
//! rendering.

pub mod config;
pub mod panel_io;
pub mod report;
pub mod run;
