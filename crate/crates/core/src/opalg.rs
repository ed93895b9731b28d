//! Dense complex operator algebra.
//!
//! Operators are plain `nalgebra` matrices over `Complex64`. Bipartite pure
//! states are stored as [`Ket`]s whose amplitudes use the row-major
//! vectorisation `vec(X)[i * d_b + j] = X[i, j]`, so that
//! `(A ⊗ B) vec(X) = vec(A X Bᵀ)` and `vec(I_m) / √m` is the maximally
//! entangled state `Σ_i |ii⟩ / √m`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BellError, Result};

pub type C64 = Complex64;
pub type Op = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Schmidt coefficients closer than this are treated as one block.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;
/// Tolerance on `‖ψ‖ = 1` accepted by [`Ket::new`].
pub const NORM_TOL: f64 = 1e-12;
/// Hermiticity tolerance for [`eig_hermitian`], relative to `max(1, ‖A‖_F)`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Largest operator dimension any constructor here will allocate.
pub const MAX_OP_DIM: usize = 8192;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Which party a local operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

pub fn identity(d: usize) -> Op {
    Op::identity(d, d)
}

pub fn pauli_x() -> Op {
    Op::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> Op {
    Op::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> Op {
    Op::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &Op, b: &Op) -> Result<Op> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= MAX_OP_DIM && c <= MAX_OP_DIM => Ok(a.kronecker(b)),
        _ => Err(BellError::ResourceLimit(format!(
            "tensor product of {}x{} and {}x{} exceeds dimension {MAX_OP_DIM}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        ))),
    }
}

/// Kronecker product of two vectors.
pub fn tensor_vec(a: &CVec, b: &CVec) -> CVec {
    let nb = b.len();
    CVec::from_fn(a.len() * nb, |k, _| a[k / nb] * b[k % nb])
}

/// Row-major vectorisation.
pub fn vec(m: &Op) -> CVec {
    let (r, c) = m.shape();
    CVec::from_fn(r * c, |k, _| m[(k / c, k % c)])
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> Result<Op> {
    if rows * cols != v.len() {
        return Err(BellError::DimensionMismatch(format!(
            "cannot reshape vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Op::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

pub fn hermitian_defect(a: &Op) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn is_hermitian(a: &Op, tol: f64) -> bool {
    a.is_square() && hermitian_defect(a) <= tol
}

/// `‖A² − I‖_F`
pub fn involution_defect(a: &Op) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    (a * a - identity(a.nrows())).norm()
}

pub fn is_involution(a: &Op, tol: f64) -> bool {
    involution_defect(a) <= tol
}

/// Hermitian involution: both defects within `tol`.
pub fn is_dichotomic(a: &Op, tol: f64) -> bool {
    is_hermitian(a, tol) && is_involution(a, tol)
}

pub fn anticommutator(a: &Op, b: &Op) -> Op {
    a * b + b * a
}

pub fn unitarity_defect(u: &Op) -> f64 {
    (u.adjoint() * u - identity(u.ncols())).norm()
}

/// `U A U†`
pub fn conjugate(u: &Op, a: &Op) -> Op {
    u * a * u.adjoint()
}

/// Outer product `|v⟩⟨v|`.
pub fn density(v: &CVec) -> Op {
    v * v.adjoint()
}

/// A normalized pure state on `C^{d_a} ⊗ C^{d_b}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    dim_a: usize,
    dim_b: usize,
    amps: CVec,
}

impl Ket {
    pub fn new(dim_a: usize, dim_b: usize, amps: CVec) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 || dim_a * dim_b != amps.len() {
            return Err(BellError::DimensionMismatch(format!(
                "{} amplitudes for local dimensions ({dim_a}, {dim_b})",
                amps.len()
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(BellError::NotNormalized { norm });
        }
        Ok(Self { dim_a, dim_b, amps })
    }

    /// Rescales `amps` to unit norm first.
    pub fn normalized(dim_a: usize, dim_b: usize, amps: CVec) -> Result<Self> {
        let norm = amps.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(BellError::NotNormalized { norm });
        }
        Self::new(dim_a, dim_b, amps.unscale(norm))
    }

    /// `|φ⁺_m⟩ = Σ_i |ii⟩ / √m`
    pub fn max_entangled(m: usize) -> Self {
        let s = 1.0 / (m as f64).sqrt();
        let amps = CVec::from_fn(m * m, |k, _| if k / m == k % m { real(s) } else { ZERO });
        Self { dim_a: m, dim_b: m, amps }
    }

    pub fn product(a: &CVec, b: &CVec) -> Result<Self> {
        Self::normalized(a.len(), b.len(), tensor_vec(a, b))
    }

    /// Builds the ket `vec(X)` for a coefficient matrix with unit Frobenius norm.
    pub fn from_matrix(m: &Op) -> Result<Self> {
        Self::new(m.nrows(), m.ncols(), vec(m))
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVec {
        self.amps
    }

    /// Coefficient matrix `Ψ` with `|ψ⟩ = vec(Ψ)`.
    pub fn as_matrix(&self) -> Op {
        Op::from_fn(self.dim_a, self.dim_b, |i, j| self.amps[i * self.dim_b + j])
    }

    fn check_local(&self, op: &Op, side: Side) -> Result<()> {
        let d = match side {
            Side::A => self.dim_a,
            Side::B => self.dim_b,
        };
        if op.nrows() != d || op.ncols() != d {
            return Err(BellError::DimensionMismatch(format!(
                "{}x{} operator on side {side:?} of local dimension {d}",
                op.nrows(),
                op.ncols()
            )));
        }
        Ok(())
    }

    /// `(A ⊗ B)|ψ⟩` computed as `vec(A Ψ Bᵀ)`; `None` stands for the identity.
    pub fn apply_local(&self, a: Option<&Op>, b: Option<&Op>) -> Result<CVec> {
        let mut psi = self.as_matrix();
        if let Some(a) = a {
            self.check_local(a, Side::A)?;
            psi = a * psi;
        }
        if let Some(b) = b {
            self.check_local(b, Side::B)?;
            psi *= b.transpose();
        }
        Ok(vec(&psi))
    }

    /// `⟨ψ|A ⊗ B|ψ⟩ = Tr[Ψ† A Ψ Bᵀ]`
    pub fn expectation_local(&self, a: &Op, b: &Op) -> Result<C64> {
        self.check_local(a, Side::A)?;
        self.check_local(b, Side::B)?;
        let psi = self.as_matrix();
        Ok((psi.adjoint() * a * &psi * b.transpose()).trace())
    }

    /// `⟨ψ|O|ψ⟩` for an operator on the joint space.
    pub fn expectation(&self, op: &Op) -> Result<C64> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(BellError::DimensionMismatch(format!(
                "joint operator {}x{} on state of dimension {}",
                op.nrows(),
                op.ncols(),
                self.dim()
            )));
        }
        Ok(self.amps.dotc(&(op * &self.amps)))
    }

    /// Applies `U_A ⊗ U_B`; the result stays normalized when both are unitary.
    pub fn rotated(&self, ua: &Op, ub: &Op) -> Result<Ket> {
        let v = self.apply_local(Some(ua), Some(ub))?;
        Ket::normalized(ua.nrows(), ub.nrows(), v)
    }
}

/// Contiguous run of equal (within tolerance) Schmidt weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtBlock {
    /// Mean squared coefficient λ of the block.
    pub value: f64,
    pub multiplicity: usize,
    /// Index range `start..end` into the coefficient list.
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug)]
pub struct SchmidtData {
    /// Descending positive coefficients `√λ_i`, one per unit of rank.
    pub coefficients: Vec<f64>,
    /// Columns are the Alice-side Schmidt vectors (orthonormal).
    pub left_basis: Op,
    /// Columns are the Bob-side Schmidt vectors (orthonormal).
    pub right_basis: Op,
    pub rank: usize,
    pub blocks: Vec<SchmidtBlock>,
    /// `‖Σ_i √λ_i |u_i⟩|v_i⟩ − |ψ⟩‖`
    pub reconstruction_error: f64,
}

impl SchmidtData {
    /// Squared coefficients λ_i.
    pub fn weights(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c * c).collect()
    }

    pub fn left_block(&self, block: &SchmidtBlock) -> Op {
        self.left_basis.columns(block.start, block.multiplicity).into_owned()
    }

    pub fn right_block(&self, block: &SchmidtBlock) -> Op {
        self.right_basis.columns(block.start, block.multiplicity).into_owned()
    }
}

/// Coefficients below this are dropped from the rank.
const SCHMIDT_RANK_TOL: f64 = 1e-12;

pub fn schmidt(ket: &Ket, degeneracy_tol: f64) -> Result<SchmidtData> {
    let norm = ket.amplitudes().norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(BellError::NotNormalized { norm });
    }
    let psi = ket.as_matrix();
    let svd = psi.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(BellError::Internal("SVD did not return singular vectors".into())),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let k = order.len();
    let mut left = Op::zeros(ket.dim_a(), k);
    let mut right = Op::zeros(ket.dim_b(), k);
    let mut coefficients = Vec::new();
    for (col, &src) in order.iter().enumerate() {
        left.set_column(col, &u.column(src));
        // Ψ = U S Vᵗ, so the Bob vector of term i is row i of Vᵗ (no conjugate).
        right.set_column(col, &vt.row(src).transpose());
        let s = svd.singular_values[src];
        if s > SCHMIDT_RANK_TOL {
            coefficients.push(s);
        }
    }
    let rank = coefficients.len();

    let mut blocks: Vec<SchmidtBlock> = Vec::new();
    let mut start = 0;
    while start < rank {
        let first = coefficients[start] * coefficients[start];
        let mut end = start + 1;
        while end < rank && (coefficients[end] * coefficients[end] - first).abs() <= degeneracy_tol {
            end += 1;
        }
        let value = coefficients[start..end].iter().map(|c| c * c).sum::<f64>() / (end - start) as f64;
        blocks.push(SchmidtBlock { value, multiplicity: end - start, start, end });
        start = end;
    }

    let mut recon = Op::zeros(ket.dim_a(), ket.dim_b());
    for (i, &c) in coefficients.iter().enumerate() {
        recon += left.column(i) * right.column(i).transpose() * real(c);
    }
    let reconstruction_error = (recon - psi).norm();

    Ok(SchmidtData { coefficients, left_basis: left, right_basis: right, rank, blocks, reconstruction_error })
}

/// `√⟨ψ|(O†O ⊗ I)|ψ⟩` (side A) or `√⟨ψ|(I ⊗ O†O)|ψ⟩` (side B).
pub fn state_weighted_norm(op: &Op, ket: &Ket, side: Side) -> Result<f64> {
    let v = match side {
        Side::A => ket.apply_local(Some(op), None)?,
        Side::B => ket.apply_local(None, Some(op))?,
    };
    Ok(v.norm())
}

/// Eigendecomposition `A = U Λ U†` of a Hermitian matrix.
///
/// Eigenvalues are returned in ascending order (ties keep the solver's
/// order) and every eigenvector is rotated so that its first component with
/// magnitude above `1e-10` is real and positive.
pub fn eig_hermitian(a: &Op) -> Result<(Vec<f64>, Op)> {
    if !a.is_square() {
        return Err(BellError::DimensionMismatch(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    let defect = hermitian_defect(a);
    if defect > HERMITIAN_TOL * a.norm().max(1.0) {
        return Err(BellError::NotHermitian { defect });
    }
    let h = (a + a.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| BellError::Internal("Hermitian eigensolver did not converge".into()))?;

    let d = a.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Op::zeros(d, d);
    for (col, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = v.iter().copied().find(|c| c.norm() > 1e-10) {
            let phase = first.conj() / first.norm();
            v *= phase;
        }
        vectors.set_column(col, &v);
    }
    Ok((values, vectors))
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_function(a: &Op, f: impl Fn(f64) -> f64) -> Result<Op> {
    let (values, u) = eig_hermitian(a)?;
    let diag = Op::from_diagonal(&CVec::from_iterator(values.len(), values.iter().map(|&x| real(f(x)))));
    Ok(&u * diag * u.adjoint())
}

/// `exp(i t H)` for Hermitian `H`.
pub fn unitary_exp(h: &Op, t: f64) -> Result<Op> {
    let (values, u) = eig_hermitian(h)?;
    let diag = Op::from_diagonal(&CVec::from_iterator(values.len(), values.iter().map(|&x| C64::from_polar(1.0, t * x))));
    Ok(&u * diag * u.adjoint())
}

fn factor_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

fn check_factorization(total: usize, dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) || dims.iter().product::<usize>() != total {
        return Err(BellError::DimensionMismatch(format!("factor dimensions {dims:?} do not multiply to {total}")));
    }
    Ok(())
}

fn check_selection(n_factors: usize, sel: &[usize]) -> Result<()> {
    let mut seen = vec![false; n_factors];
    for &k in sel {
        if k >= n_factors || seen[k] {
            return Err(BellError::InvalidParameter(format!("bad factor selection {sel:?} of {n_factors} factors")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Reorders tensor factors: factor `k` of the output is factor `order[k]` of
/// the input.
pub fn permute_factors(v: &CVec, dims: &[usize], order: &[usize]) -> Result<CVec> {
    check_factorization(v.len(), dims)?;
    if order.len() != dims.len() {
        return Err(BellError::InvalidParameter(format!("permutation {order:?} for {} factors", dims.len())));
    }
    check_selection(dims.len(), order)?;
    let old_strides = factor_strides(dims);
    let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let new_strides = factor_strides(&new_dims);
    let mut out = CVec::zeros(v.len());
    for (idx, amp) in v.iter().enumerate() {
        let mut target = 0;
        for (pos, &k) in order.iter().enumerate() {
            let digit = (idx / old_strides[k]) % dims[k];
            target += digit * new_strides[pos];
        }
        out[target] = *amp;
    }
    Ok(out)
}

/// Reduced density operator of a pure state on the factors `keep` (in that
/// order); the remaining factors are traced out.
pub fn reduced_state(v: &CVec, dims: &[usize], keep: &[usize]) -> Result<Op> {
    check_factorization(v.len(), dims)?;
    check_selection(dims.len(), keep)?;
    let mut order = keep.to_vec();
    order.extend((0..dims.len()).filter(|k| !keep.contains(k)));
    let permuted = permute_factors(v, dims, &order)?;
    let d_keep: usize = keep.iter().map(|&k| dims[k]).product();
    let m = unvec(&permuted, d_keep, v.len() / d_keep)?;
    Ok(&m * m.adjoint())
}

/// Partial trace of a density operator over every factor not in `keep`.
pub fn partial_trace(rho: &Op, dims: &[usize], keep: &[usize]) -> Result<Op> {
    if !rho.is_square() {
        return Err(BellError::DimensionMismatch("density operator must be square".into()));
    }
    check_factorization(rho.nrows(), dims)?;
    check_selection(dims.len(), keep)?;
    let strides = factor_strides(dims);
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let d_keep: usize = keep_dims.iter().product();
    let d_traced: usize = traced_dims.iter().product();

    let embed = |sub: usize, factors: &[usize], fdims: &[usize]| -> usize {
        let fstrides = factor_strides(fdims);
        factors.iter().enumerate().map(|(pos, &k)| ((sub / fstrides[pos]) % fdims[pos]) * strides[k]).sum()
    };
    let keep_offsets: Vec<usize> = (0..d_keep).map(|i| embed(i, keep, &keep_dims)).collect();
    let traced_offsets: Vec<usize> = (0..d_traced).map(|t| embed(t, &traced, &traced_dims)).collect();

    Ok(Op::from_fn(d_keep, d_keep, |i, j| {
        traced_offsets.iter().map(|&t| rho[(keep_offsets[i] + t, keep_offsets[j] + t)]).sum()
    }))
}

/// Reduced state of one party of a bipartite ket.
pub fn reduced_local(ket: &Ket, keep: Side) -> Op {
    let psi = ket.as_matrix();
    match keep {
        Side::A => &psi * psi.adjoint(),
        Side::B => psi.transpose() * psi.conjugate(),
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::random::random_ket;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn schmidt_reconstructs(seed in any::<u64>(), da in 1usize..24, db in 1usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ket = random_ket(da, db, &mut rng);
            let s = schmidt(&ket, DEFAULT_DEGENERACY_TOL).unwrap();
            prop_assert!(s.reconstruction_error <= 1e-10);
            prop_assert!((s.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert_eq!(s.blocks.iter().map(|b| b.multiplicity).sum::<usize>(), s.rank);
        }

        #[test]
        fn reduced_state_has_unit_trace(seed in any::<u64>(), d1 in 1usize..5, d2 in 1usize..5, d3 in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ket = random_ket(d1 * d2, d3, &mut rng);
            let rho = reduced_state(ket.amplitudes(), &[d1, d2, d3], &[2, 0]).unwrap();
            prop_assert!((rho.trace().re - 1.0).abs() <= 1e-12);
        }
    }
}
