//! Seeded random unitaries, states and projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{ComplexMatrix, Projection, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random unitary via Gram-Schmidt on a complex Gaussian matrix.
pub fn unitary(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n).map(|_| gaussian(rng)).collect();
        for c in &cols {
            let proj: C64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(c) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|z| z / norm).collect());
        }
    }
    ComplexMatrix::from_fn(n, |i, j| cols[j][i])
}

/// Random projection of the given rank.
pub fn projection(n: usize, rank: usize, rng: &mut impl Rng) -> Projection {
    let u = unitary(n, rng);
    let vecs: Vec<Vec<C64>> = (0..rank).map(|k| u.column(k)).collect();
    Projection::from_orthonormal(n, &vecs)
}

/// Random probability vector with entries at least `floor`.
pub fn spectrum(n: usize, floor: f64, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let scaled: Vec<f64> = raw.iter().map(|x| floor + (1.0 - n as f64 * floor) * x / total).collect();
    let total: f64 = scaled.iter().sum();
    scaled.into_iter().map(|x| x / total).collect()
}

/// Random faithful density matrix.
pub fn faithful_density(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let u = unitary(n, rng);
    let d = ComplexMatrix::real_diag(&spectrum(n, 0.02, rng));
    u.matmul(&d).matmul(&u.adjoint()).hermitian_part()
}

/// Random Hermitian matrix with Gaussian entries.
pub fn hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(n, |_, _| gaussian(rng));
    g.hermitian_part()
}
