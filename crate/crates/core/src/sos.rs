//! Sum-of-squares certificate for the quantum bound and the algebraic
//! relations every optimal strategy must satisfy.
//!
//! With `𝓑_x = Σ_y signs(x,y) B_y`, `ω_x = ‖(I ⊗ 𝓑_x)|ψ⟩‖` and
//! `M_x = I ⊗ 𝓑_x / ω_x − A_x ⊗ I`,
//!
//! ```text
//! Σ_x (ω_x / 2) M_x† M_x = (Σ_x ω_x) I − 𝒢
//! ```
//!
//! holds in expectation on `|ψ⟩` whenever Alice's observables square to the
//! identity, and as an operator identity when in addition every `𝓑_x²` is
//! the scalar `ω_x² I` (as for anticommuting Bob observables).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{combined_bob, MAX_SPECTRAL_DIM};
use crate::clifford::Strategy;
use crate::error::{BellError, Result};
use crate::game::{strict_pairs, GameSpec};
use crate::opalg::{identity, real, schmidt, Op, C64};

/// Weights at or below this make `M_x` undefined.
pub const OMEGA_CUTOFF: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SosCertificate {
    pub omegas: Vec<f64>,
    /// `‖Σ(ω_x/2) M_x†M_x − (Σω_x) I + 𝒢‖_F`
    pub identity_defect: f64,
    /// `|⟨ψ|Σ(ω_x/2) M_x†M_x − (Σω_x) I + 𝒢|ψ⟩|`
    pub expectation_defect: f64,
    /// `‖M_x|ψ⟩‖` per `x`.
    pub kernel_residuals: Vec<f64>,
    /// `Σ_x ω_x`
    pub claimed_value: f64,
}

/// Off-block Frobenius mass of each observable in the Schmidt frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockLeakage {
    pub alice: Vec<f64>,
    pub bob: Vec<f64>,
}

impl BlockLeakage {
    pub fn max(&self) -> f64 {
        self.alice.iter().chain(&self.bob).fold(0.0, |m, v| m.max(*v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityDiagnostics {
    /// `Re⟨{B_y, B_y'}⟩_ψ` for `y < y'`, in row-major pair order.
    pub bob_anticomm: Vec<f64>,
    /// `max_{x<x'} |⟨{A_x, A_x'}⟩ − (2/n) Σ_y signs(x,y) signs(x',y)|`
    pub alice_anticomm_defect: f64,
    /// Per `y`: `‖𝒜'_y S − S B'_yᵀ‖_F` on the Schmidt support.
    pub transpose_defects: Vec<f64>,
    pub transpose_defect: f64,
    pub block_structure: BlockLeakage,
}

impl OptimalityDiagnostics {
    pub fn max_bob_anticomm(&self) -> f64 {
        self.bob_anticomm.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest of all defect fields.
    pub fn worst(&self) -> f64 {
        self.max_bob_anticomm().max(self.alice_anticomm_defect).max(self.transpose_defect).max(self.block_structure.max())
    }
}

/// `ω_x = ‖(I ⊗ 𝓑_x)|ψ⟩‖` for every `x`.
pub fn omegas(s: &Strategy) -> Result<Vec<f64>> {
    combined_bob(&s.game, &s.bob_obs)
        .iter()
        .map(|bx| Ok(s.state.apply_local(None, Some(bx))?.norm()))
        .collect()
}

fn checked_omegas(s: &Strategy) -> Result<Vec<f64>> {
    let w = omegas(s)?;
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, &v)| v <= OMEGA_CUTOFF) {
        return Err(BellError::DegenerateStrategy { index, value });
    }
    Ok(w)
}

/// Dense residual operators `M_x` on the joint space and their weights.
pub fn residual_ops(s: &Strategy) -> Result<(Vec<Op>, Vec<f64>)> {
    let (da, db) = s.dims();
    if da * db > MAX_SPECTRAL_DIM {
        return Err(BellError::ResourceLimit(format!("joint dimension {} exceeds {MAX_SPECTRAL_DIM}", da * db)));
    }
    let w = checked_omegas(s)?;
    let ia = identity(da);
    let ib = identity(db);
    let ops = combined_bob(&s.game, &s.bob_obs)
        .par_iter()
        .zip(s.alice_obs.par_iter())
        .zip(w.par_iter())
        .map(|((bx, a), &om)| ia.kronecker(&(bx * real(1.0 / om))) - a.kronecker(&ib))
        .collect();
    Ok((ops, w))
}

/// `‖M_x|ψ⟩‖` without forming joint operators.
pub fn kernel_residuals(s: &Strategy, omegas: &[f64]) -> Result<Vec<f64>> {
    combined_bob(&s.game, &s.bob_obs)
        .iter()
        .zip(&s.alice_obs)
        .zip(omegas)
        .map(|((bx, a), &om)| {
            let lhs = s.state.apply_local(None, Some(&(bx * real(1.0 / om))))?;
            let rhs = s.state.apply_local(Some(a), None)?;
            Ok((lhs - rhs).norm())
        })
        .collect()
}

/// Builds the certificate. The identity is evaluated through its local
/// expansion
/// `Σ_x [I ⊗ 𝓑_x†𝓑_x/(2ω_x) + (ω_x/2) A_x†A_x ⊗ I − (A_x† ⊗ 𝓑_x + A_x ⊗ 𝓑_x†)/2]`,
/// which is exact for any operators and avoids joint-space products.
pub fn verify_sos_identity(s: &Strategy) -> Result<SosCertificate> {
    let (da, db) = s.dims();
    if da * db > MAX_SPECTRAL_DIM {
        return Err(BellError::ResourceLimit(format!("joint dimension {} exceeds {MAX_SPECTRAL_DIM}", da * db)));
    }
    let w = checked_omegas(s)?;
    let bx = combined_bob(&s.game, &s.bob_obs);
    let claimed: f64 = w.iter().sum();

    let mut local_b = Op::zeros(db, db);
    let mut local_a = Op::zeros(da, da);
    for ((b, a), &om) in bx.iter().zip(&s.alice_obs).zip(&w) {
        local_b += b.adjoint() * b * real(0.5 / om);
        local_a += a.adjoint() * a * real(0.5 * om);
    }
    let mut total = identity(da).kronecker(&local_b) + local_a.kronecker(&identity(db)) - identity(da * db) * real(claimed);

    // Cross terms: A ⊗ 𝓑 from 𝒢 minus the Hermitian part from the squares.
    // They cancel identically for Hermitian observables.
    for (b, a) in bx.iter().zip(&s.alice_obs) {
        total += a.kronecker(b) - (a.adjoint().kronecker(b) + a.kronecker(&b.adjoint())) * real(0.5);
    }
    let kernel = kernel_residuals(s, &w)?;
    let expectation_defect = s.state.expectation(&total)?.norm();
    Ok(SosCertificate {
        omegas: w,
        identity_defect: total.norm(),
        expectation_defect,
        kernel_residuals: kernel,
        claimed_value: claimed,
    })
}

/// `𝒜_y = (√n / 2^{n−1}) Σ_x signs(x,y) A_x`
pub fn alice_effective(game: &GameSpec, alice: &[Op]) -> Vec<Op> {
    let n = game.n();
    let scale = (n as f64).sqrt() / game.num_alice() as f64;
    (0..n)
        .map(|y| {
            let mut acc = Op::zeros(alice[0].nrows(), alice[0].ncols());
            for (x, a) in alice.iter().enumerate() {
                acc += a * real(game.sign(x, y) as f64);
            }
            acc * real(scale)
        })
        .collect()
}

fn frobenius_inner(a: &Op, b: &Op) -> C64 {
    a.iter().zip(b.iter()).map(|(u, v)| u.conj() * v).sum()
}

/// Frobenius norm of `O − Σ_k P_k O P_k`, the blocks `P_k` being the Schmidt
/// blocks plus the orthogonal complement of the support.
fn off_block_mass(o: &Op, projectors: &[Op]) -> f64 {
    let mut diag = Op::zeros(o.nrows(), o.ncols());
    for p in projectors {
        diag += p * o * p;
    }
    (o - diag).norm()
}

fn block_projectors(basis: &Op, blocks: &[crate::opalg::SchmidtBlock]) -> Vec<Op> {
    let d = basis.nrows();
    let mut out: Vec<Op> = blocks
        .iter()
        .map(|b| {
            let v = basis.columns(b.start, b.multiplicity);
            v * v.adjoint()
        })
        .collect();
    let support: Op = out.iter().fold(Op::zeros(d, d), |acc, p| acc + p);
    out.push(identity(d) - support);
    out
}

/// Algebraic optimality relations. Never fails on large defects; callers
/// compare the fields against their own thresholds.
pub fn optimality_diagnostics(s: &Strategy, degeneracy_tol: f64) -> Result<OptimalityDiagnostics> {
    let n = s.n();
    let psi = s.state.as_matrix();

    // (I ⊗ B)|ψ⟩ = vec(Ψ Bᵀ) and (A ⊗ I)|ψ⟩ = vec(A Ψ).
    let bob_images: Vec<Op> = s.bob_obs.iter().map(|b| &psi * b.transpose()).collect();
    let bob_adj_images: Vec<Op> = s.bob_obs.iter().map(|b| &psi * b.adjoint().transpose()).collect();
    let bob_anticomm = strict_pairs(n)
        .iter()
        .map(|&(y, z)| (frobenius_inner(&bob_adj_images[y], &bob_images[z]) + frobenius_inner(&bob_adj_images[z], &bob_images[y])).re)
        .collect();

    let alice_images: Vec<Op> = s.alice_obs.iter().map(|a| a * &psi).collect();
    let alice_adj_images: Vec<Op> = s.alice_obs.iter().map(|a| a.adjoint() * &psi).collect();
    let nx = s.game.num_alice();
    let alice_anticomm_defect = (0..nx)
        .into_par_iter()
        .map(|x| {
            let mut worst = 0.0f64;
            for xp in x + 1..nx {
                let measured = (frobenius_inner(&alice_adj_images[x], &alice_images[xp])
                    + frobenius_inner(&alice_adj_images[xp], &alice_images[x]))
                .re;
                let overlap: i64 = (0..n).map(|y| (s.game.sign(x, y) * s.game.sign(xp, y)) as i64).sum();
                worst = worst.max((measured - 2.0 * overlap as f64 / n as f64).abs());
            }
            worst
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);

    let sd = schmidt(&s.state, degeneracy_tol)?;
    let u = sd.left_basis.columns(0, sd.rank).into_owned();
    let r = sd.right_basis.columns(0, sd.rank).into_owned();
    let sqrt_d = Op::from_diagonal(&crate::opalg::CVec::from_iterator(sd.rank, sd.coefficients.iter().map(|&c| real(c))));
    let effective = alice_effective(&s.game, &s.alice_obs);
    let transpose_defects: Vec<f64> = effective
        .iter()
        .zip(&s.bob_obs)
        .map(|(a, b)| {
            let a_frame = u.adjoint() * a * &u;
            let b_frame = r.adjoint() * b * &r;
            (a_frame * &sqrt_d - &sqrt_d * b_frame.transpose()).norm()
        })
        .collect();
    let transpose_defect = transpose_defects.iter().fold(0.0f64, |m, v| m.max(*v));

    let pa = block_projectors(&sd.left_basis.columns(0, sd.rank).into_owned(), &sd.blocks);
    let pb = block_projectors(&sd.right_basis.columns(0, sd.rank).into_owned(), &sd.blocks);
    let block_structure = BlockLeakage {
        alice: s.alice_obs.par_iter().map(|a| off_block_mass(a, &pa)).collect(),
        bob: s.bob_obs.par_iter().map(|b| off_block_mass(b, &pb)).collect(),
    };

    Ok(OptimalityDiagnostics { bob_anticomm, alice_anticomm_defect, transpose_defects, transpose_defect, block_structure })
}
