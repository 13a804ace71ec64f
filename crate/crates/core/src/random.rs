//! Seeded generation of test instances.
//!
//! All generators draw from ChaCha8 so that a seed reproduces the same
//! matrices on every platform.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream of the generator seeded with `seed`; stream 0 is `rng(seed)`.
pub fn rng_stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthogonal factor of a Gaussian matrix, with columns signed so that R has
/// a positive diagonal.
pub fn random_orthogonal(rng: &mut Rng, n: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    sign_fixed_q(g)
}

/// Orthonormal n×m frame: the leading columns of a random orthogonal matrix.
pub fn random_frame(rng: &mut Rng, n: usize, m: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, m);
    sign_fixed_q(g)
}

pub fn random_skew(rng: &mut Rng, m: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, m, m);
    (&g - g.transpose()) * 0.5
}

pub fn random_symmetric(rng: &mut Rng, m: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, m, m);
    (&g + g.transpose()) * 0.5
}

/// Uniform random permutation of `0..k`.
pub fn random_permutation(rng: &mut Rng, k: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..k).collect();
    p.shuffle(rng);
    p
}

pub fn random_signs(rng: &mut Rng, k: usize) -> Vec<i8> {
    use rand::Rng as _;
    (0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

fn sign_fixed_q(g: DMatrix<f64>) -> DMatrix<f64> {
    let cols = g.ncols();
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
