//! Experiment harness around `ldlab-core`: sectioned key-value configs,
//! named profiles, CSV/JSON/SVG artifacts and reproducible run
//! manifests.

pub mod config;
pub mod manifest;
pub mod plots;
pub mod profiles;
pub mod runners;
