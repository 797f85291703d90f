//! Shared fixtures for the benchmarks.

use nalgebra::{DMatrix, DVector};
use sweepplast::pipeline::Setup;
use sweepplast::scenario::Scenario;

const ROD: &str = include_str!("../../../scenarios/rod.scn");
const ROD_HARDENING: &str = include_str!("../../../scenarios/rod_hardening.scn");

pub fn rod(elements: usize) -> Setup {
    let s = Scenario::parse(ROD).unwrap().with_mesh(elements).unwrap();
    Setup::build(&s).unwrap()
}

pub fn hardened_rod(elements: usize) -> Setup {
    let s = Scenario::parse(ROD_HARDENING).unwrap().with_mesh(elements).unwrap();
    Setup::build(&s).unwrap()
}

/// Deterministic dense matrix with entries in `[-1, 1]`.
pub fn matrix(rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| ((i * 31 + j * 17) as f64 * 0.618).sin())
}

pub fn point(n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| scale * ((i * 7 + 3) as f64).cos())
}
