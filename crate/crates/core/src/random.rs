//! Seeded random matrices and per-stream generators.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{FactorLabel, LabeledOperator, C64};

/// Generator for stream `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Haar-random `d × d` unitary (QR of a Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let qr = ginibre(d, d, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random isometry mapping a `d_in`-dimensional space into `d_out` dimensions.
pub fn random_isometry<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> DMatrix<C64> {
    assert!(d_out >= d_in, "isometry needs d_out >= d_in");
    random_unitary(d_out, rng).columns(0, d_in).into_owned()
}

/// Haar-random unit vector.
pub fn random_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let v = ginibre(d, 1, rng);
    let n = v.norm();
    v.iter().map(|z| z / n).collect()
}

/// Random Hermitian operator `G + G†` with Gaussian `G` over `factors`.
pub fn random_hermitian<R: Rng + ?Sized>(factors: Vec<FactorLabel>, rng: &mut R) -> Result<LabeledOperator> {
    let d = factors.iter().map(|f| f.dim).product();
    let g = ginibre(d, d, rng);
    LabeledOperator::from_matrix(factors, &(&g + g.adjoint()))
}
