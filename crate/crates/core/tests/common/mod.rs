#![allow(dead_code)]

use std::path::PathBuf;

use neusim::config::Config;
use neusim::workload::{compile_reference, OpList, TaskGraph};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// The shipped platform with `overrides` applied.
pub fn platform(overrides: &[&str]) -> Config {
    Config::load_with_overrides(&[data_dir().join("platform.yaml")], overrides).unwrap()
}

/// The shipped platform plus the shipped power characterization.
pub fn with_power(overrides: &[&str]) -> Config {
    Config::load_with_overrides(
        &[
            data_dir().join("platform.yaml"),
            data_dir().join("power.yaml"),
        ],
        overrides,
    )
    .unwrap()
}

pub fn compile(ops: &OpList, cfg: &Config) -> TaskGraph {
    compile_reference(ops, &cfg.platform).unwrap()
}
