#![allow(dead_code)]

use sdiv::FrequencyTable;

pub const ARE_ALPHAS: [f64; 7] = [0.0, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0];

/// Published efficiency table, `(model, theta, values over ARE_ALPHAS)`.
pub const ARE_PUBLISHED: [(&str, f64, [f64; 7]); 10] = [
    ("poisson", 2.0, [100.0, 99.62, 98.77, 93.06, 86.15, 79.55, 71.17]),
    ("poisson", 3.0, [100.0, 99.66, 98.82, 92.86, 85.18, 77.42, 68.22]),
    ("poisson", 5.0, [100.0, 99.61, 98.80, 92.38, 84.19, 76.96, 66.47]),
    ("poisson", 10.0, [100.0, 99.66, 98.75, 92.07, 83.86, 76.07, 65.69]),
    ("poisson", 15.0, [100.0, 99.66, 98.83, 92.09, 83.76, 75.71, 65.59]),
    ("geometric", 0.1, [100.0, 99.10, 96.78, 81.93, 68.42, 59.24, 51.06]),
    ("geometric", 0.2, [100.0, 99.10, 96.79, 82.01, 68.59, 59.49, 51.45]),
    ("geometric", 0.5, [100.0, 99.14, 96.92, 82.90, 70.37, 62.19, 55.64]),
    ("geometric", 0.7, [100.0, 99.21, 97.19, 84.71, 73.98, 67.54, 63.61]),
    ("geometric", 0.9, [100.0, 99.43, 98.03, 90.04, 84.07, 81.56, 82.15]),
];

pub const GRID_ALPHAS: [f64; 8] = [0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.8, 1.0];
pub const GRID_LAMBDAS: [f64; 11] = [-1.0, -0.7, -0.5, -0.3, -0.1, 0.0, 0.5, 1.0, 1.3, 1.5, 2.0];

/// Inadmissible cells are encoded as NaN.
const NA: f64 = f64::NAN;

pub type Grid = [[f64; 8]; 11];

pub const RUN1_CLEAN: Grid = [
    [NA, 0.08, 0.11, 0.12, 0.12, 0.12, 0.13, 0.13],
    [0.09, 0.10, 0.12, 0.12, 0.12, 0.13, 0.13, 0.13],
    [0.10, 0.11, 0.12, 0.12, 0.12, 0.13, 0.13, 0.13],
    [0.11, 0.12, 0.12, 0.12, 0.12, 0.13, 0.13, 0.13],
    [0.11, 0.12, 0.12, 0.12, 0.13, 0.13, 0.13, 0.13],
    [0.12, 0.12, 0.12, 0.12, 0.13, 0.13, 0.13, 0.13],
    [0.12, 0.12, 0.12, 0.13, 0.13, 0.13, 0.13, 0.13],
    [0.12, 0.12, 0.13, 0.13, 0.13, 0.13, 0.13, 0.13],
    [0.12, 0.12, 0.13, 0.13, 0.13, 0.13, 0.13, 0.13],
    [0.12, 0.12, 0.13, 0.13, 0.13, 0.13, 0.13, 0.13],
    [0.12, 0.13, 0.13, 0.13, 0.13, 0.13, 0.13, 0.13],
];

pub const RUN1_FULL: Grid = [
    [NA, 0.08, 0.11, 0.13, 0.14, 0.14, 0.15, 0.16],
    [0.10, 0.11, 0.13, 0.14, 0.14, 0.15, 0.16, 0.16],
    [0.13, 0.13, 0.13, 0.14, 0.14, 0.15, 0.16, 0.16],
    [0.18, 0.15, 0.14, 0.14, 0.14, 0.15, 0.16, 0.16],
    [0.29, 0.22, 0.16, 0.15, 0.15, 0.15, 0.16, 0.16],
    [0.36, 0.26, 0.18, 0.15, 0.15, 0.15, 0.16, 0.16],
    [0.59, 0.49, 0.34, 0.21, 0.17, 0.16, 0.16, 0.16],
    [0.70, 0.63, 0.49, 0.32, 0.18, 0.17, 0.16, 0.16],
    [0.75, 0.68, 0.55, 0.39, 0.28, 0.19, 0.16, 0.16],
    [0.77, 0.71, 0.59, 0.44, 0.32, 0.25, 0.16, 0.16],
    [0.81, 0.76, 0.66, 0.52, 0.40, 0.27, 0.16, 0.16],
];

pub const RUN2_CLEAN: Grid = [
    [NA, 0.29, 0.35, 0.36, 0.36, 0.35, 0.35, 0.35],
    [0.34, 0.35, 0.36, 0.36, 0.36, 0.36, 0.35, 0.35],
    [0.36, 0.37, 0.37, 0.36, 0.36, 0.36, 0.35, 0.35],
    [0.38, 0.38, 0.37, 0.37, 0.36, 0.36, 0.35, 0.35],
    [0.39, 0.39, 0.38, 0.37, 0.37, 0.36, 0.35, 0.35],
    [0.39, 0.39, 0.38, 0.37, 0.37, 0.36, 0.35, 0.35],
    [0.41, 0.40, 0.39, 0.38, 0.37, 0.36, 0.35, 0.35],
    [0.42, 0.42, 0.40, 0.39, 0.32, 0.37, 0.36, 0.35],
    [0.43, 0.42, 0.41, 0.39, 0.38, 0.37, 0.36, 0.35],
    [0.43, 0.42, 0.41, 0.39, 0.38, 0.37, 0.36, 0.35],
    [0.44, 0.43, 0.42, 0.40, 0.39, 0.37, 0.36, 0.35],
];

pub const RUN2_FULL: Grid = [
    [NA, 0.30, 0.35, 0.36, 0.36, 0.36, 0.36, 0.36],
    [0.34, 0.36, 0.37, 0.37, 0.37, 0.37, 0.36, 0.36],
    [0.36, 0.37, 0.37, 0.37, 0.37, 0.37, 0.37, 0.36],
    [0.38, 0.38, 0.38, 0.37, 0.37, 0.37, 0.37, 0.36],
    [0.39, 0.39, 0.38, 0.38, 0.37, 0.37, 0.37, 0.36],
    [3.03, 0.39, 0.39, 0.38, 0.37, 0.37, 0.37, 0.36],
    [31.31, 30.28, 25.12, 0.39, 0.38, 0.37, 0.37, 0.36],
    [32.20, 31.84, 30.79, 27.08, 0.99, 0.38, 0.37, 0.36],
    [32.40, 32.15, 31.48, 29.71, 24.93, 0.38, 0.37, 0.36],
    [32.50, 32.29, 31.76, 30.48, 27.78, 22.54, 0.37, 0.36],
    [33.22, 32.50, 32.15, 31.43, 30.28, 26.24, 0.37, 0.36],
];

pub fn run1_full() -> FrequencyTable {
    sdiv::io::ingest("builtin:drosophila-run1", sdiv::io::DataFormat::Auto).unwrap()
}

pub fn run2_full() -> FrequencyTable {
    sdiv::io::ingest("builtin:drosophila-run2", sdiv::io::DataFormat::Auto).unwrap()
}

pub fn run1_clean() -> FrequencyTable {
    run1_full().without(&[3, 4]).unwrap()
}

pub fn run2_clean() -> FrequencyTable {
    run2_full().without(&[91]).unwrap()
}

pub fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}
