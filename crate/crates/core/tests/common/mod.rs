#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix2};
use propcoloc::sim::{gen_dataset, replicate_rng, SimConfig};
use propcoloc::SummaryDataset;

/// A single-causal simulated dataset.
pub fn simulated(n: usize, j: usize, eta0: f64, seed: u64) -> SummaryDataset {
    let cfg = SimConfig::single(n, j, 1.0, eta0);
    gen_dataset(&cfg, &mut replicate_rng(seed, 0, 0)).unwrap().0
}

/// Writes a dataset into `dir` and returns (assoc, ld) paths.
pub fn write_dataset(ds: &SummaryDataset, dir: &Path) -> (PathBuf, PathBuf) {
    let a = dir.join("assoc.tsv");
    let l = dir.join("ld.tsv");
    ds.write(&a, &l).unwrap();
    (a, l)
}

pub fn sigma_v(v11: f64, v12: f64, v22: f64) -> Matrix2<f64> {
    Matrix2::new(v11, v12, v12, v22)
}

/// Equicorrelated LD matrix.
pub fn equicorrelated(j: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(j, j, |a, b| if a == b { 1.0 } else { r })
}
