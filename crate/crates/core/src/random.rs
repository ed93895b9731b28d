//! Seeded random ensembles used for adversarial strategies and noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::opalg::{real, CVec, Ket, Op, C64};

/// Deterministic generator for a user-facing seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Complex Ginibre matrix with i.i.d. standard normal real and imaginary parts.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Op {
    Op::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    CVec::from_fn(d, |_, _| gaussian(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Op {
    let g = random_matrix(d, d, rng);
    (&g + g.adjoint()).scale(0.5)
}

/// Random Hermitian matrix rescaled to unit Frobenius norm.
pub fn random_unit_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Op {
    let h = random_hermitian(d, rng);
    let n = h.norm();
    h.unscale(n)
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Op {
    let qr = random_matrix(d, d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { real(1.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    let v = random_vector(d, rng);
    let n = v.norm();
    v.unscale(n)
}

pub fn random_ket<R: Rng + ?Sized>(dim_a: usize, dim_b: usize, rng: &mut R) -> Ket {
    Ket::normalized(dim_a, dim_b, random_vector(dim_a * dim_b, rng)).expect("Gaussian vector is nonzero")
}

/// `U diag(±1) U†` with Haar `U` and uniformly random signs.
pub fn random_involution<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Op {
    let u = haar_unitary(d, rng);
    let signs = CVec::from_fn(d, |_, _| if rng.random_bool(0.5) { real(1.0) } else { real(-1.0) });
    &u * Op::from_diagonal(&signs) * u.adjoint()
}

/// Haar-rotated involution with `⌈d/2⌉` eigenvalues `+1` and the rest `−1`.
pub fn random_balanced_involution<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Op {
    let u = haar_unitary(d, rng);
    let signs = CVec::from_fn(d, |i, _| if i < d.div_ceil(2) { real(1.0) } else { real(-1.0) });
    &u * Op::from_diagonal(&signs) * u.adjoint()
}
