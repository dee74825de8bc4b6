#![allow(dead_code, unused_imports)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixsem::data::{simulate, write_source_csv, CovariateSource, SchemaConfig, SimulatedSource};

#[path = "../../../core/tests/support/mod.rs"]
pub mod support;

pub use support::{simulated, truth, CENTERING};

pub fn simulate_source(classes: usize, n: usize, seed: u64) -> SimulatedSource {
    let (spec, theta) = truth(classes);
    simulate(&theta, &spec, &SchemaConfig::default(), &CENTERING, n, seed, CovariateSource::Synthetic).unwrap()
}

/// Writes a simulated CSV (with the `_class` column) and returns its path.
pub fn write_simulated(dir: &Path, name: &str, classes: usize, n: usize, seed: u64) -> PathBuf {
    let sim = simulate_source(classes, n, seed);
    let path = dir.join(name);
    let mut bytes = Vec::new();
    write_source_csv(&sim.data, Some(&sim.classes), &mut bytes).unwrap();
    std::fs::write(&path, bytes).unwrap();
    path
}

pub fn mixsem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixsem")).args(args).env_remove("MIXSEM_THREADS").output().unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
