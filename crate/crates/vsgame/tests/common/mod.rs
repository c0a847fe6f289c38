#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;
use vsgame::case_model::{parse_matpower_case, parse_native_case, PowerSystemCase};
use vsgame::stability::{covert_limit, CovertOptions, StabilityModel};

pub fn data_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file)
}

pub fn load_native(name: &str) -> PowerSystemCase {
    let text = fs::read_to_string(data_path(&format!("{name}.json"))).unwrap();
    parse_native_case(&text).unwrap()
}

pub fn load_matpower(name: &str) -> PowerSystemCase {
    let text = fs::read_to_string(data_path(&format!("{name}.m"))).unwrap();
    parse_matpower_case(&text).unwrap()
}

pub fn model(case: &PowerSystemCase) -> StabilityModel {
    StabilityModel::from_case(case).unwrap()
}

/// Covert limits for every load at the default band/tolerance.
pub fn covert_limits(case: &PowerSystemCase) -> Vec<f64> {
    (0..case.n_loads())
        .map(|k| covert_limit(case, k, &CovertOptions::default()).unwrap())
        .collect()
}
