//! Reference strategies built from Clifford generators.
//!
//! Bob's generators follow the recursion
//! `Cl_n = {σ_z ⊗ I, −σ_y ⊗ I, σ_x ⊗ Γ'_1, …, σ_x ⊗ Γ'_{n−2}}` with `Γ'`
//! the generators of `Cl_{n−2}`, bottoming out at `Cl_0 = {}` and
//! `Cl_1 = {[1]}` on a one-dimensional space. The result acts on
//! `m* = 2^⌊n/2⌋` dimensions. Alice uses the entrywise transposes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BellError, Result};
use crate::game::{build_game, GameSpec, MAX_GAME_N};
use crate::opalg::{
    hermitian_defect, identity, involution_defect, pauli_x, pauli_y, pauli_z, real, tensor, Ket, Op, Side,
};
use crate::random::{haar_unitary, random_unit_vector, rng_from_seed};

/// Observables must be Hermitian involutions to within this Frobenius defect.
pub const OBSERVABLE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CliffordBasis {
    pub n: usize,
    pub m_star: usize,
    pub bob_gens: Vec<Op>,
    pub alice_gens: Vec<Op>,
}

/// Minimal irreducible dimension `2^⌊n/2⌋`.
pub fn m_star(n: usize) -> usize {
    1 << (n / 2)
}

fn bob_recursion(n: usize) -> (Vec<Op>, usize) {
    match n {
        0 => (Vec::new(), 1),
        1 => (vec![identity(1)], 1),
        _ => {
            let (inner, d) = bob_recursion(n - 2);
            let id = identity(d);
            let mut gens = vec![pauli_z().kronecker(&id), (-pauli_y()).kronecker(&id)];
            gens.extend(inner.iter().map(|g| pauli_x().kronecker(g)));
            (gens, 2 * d)
        }
    }
}

pub fn clifford_generators(n: usize) -> Result<CliffordBasis> {
    if !(2..=MAX_GAME_N).contains(&n) {
        return Err(BellError::InvalidParameter(format!("n = {n} outside 2..={MAX_GAME_N}")));
    }
    let (bob_gens, dim) = bob_recursion(n);
    debug_assert_eq!(dim, m_star(n));
    let alice_gens = bob_gens.iter().map(|g| g.transpose()).collect();
    Ok(CliffordBasis { n, m_star: dim, bob_gens, alice_gens })
}

impl CliffordBasis {
    pub fn generators(&self, side: Side) -> &[Op] {
        match side {
            Side::A => &self.alice_gens,
            Side::B => &self.bob_gens,
        }
    }
}

/// A two-party strategy: shared pure state plus dichotomic observables.
#[derive(Clone, Debug)]
pub struct Strategy {
    pub game: GameSpec,
    pub state: Ket,
    pub alice_obs: Vec<Op>,
    pub bob_obs: Vec<Op>,
}

impl Strategy {
    /// Checks counts, dimensions, and that every observable is a Hermitian
    /// involution within [`OBSERVABLE_TOL`].
    pub fn new(game: GameSpec, state: Ket, alice_obs: Vec<Op>, bob_obs: Vec<Op>) -> Result<Self> {
        let s = Self::from_parts_unchecked(game, state, alice_obs, bob_obs)?;
        for (label, ops) in [("A", &s.alice_obs), ("B", &s.bob_obs)] {
            for (i, o) in ops.iter().enumerate() {
                let h = hermitian_defect(o);
                let inv = involution_defect(o);
                if h > OBSERVABLE_TOL || inv > OBSERVABLE_TOL {
                    return Err(BellError::Precondition(format!(
                        "{label}[{i}] is not a Hermitian involution (hermitian defect {h:.2e}, involution defect {inv:.2e})"
                    )));
                }
            }
        }
        Ok(s)
    }

    /// Checks counts and dimensions only. Used for fault injection and for
    /// diagnosing adversarial inputs.
    pub fn from_parts_unchecked(game: GameSpec, state: Ket, alice_obs: Vec<Op>, bob_obs: Vec<Op>) -> Result<Self> {
        if alice_obs.len() != game.num_alice() || bob_obs.len() != game.n() {
            return Err(BellError::DimensionMismatch(format!(
                "expected {} Alice and {} Bob observables, got {} and {}",
                game.num_alice(),
                game.n(),
                alice_obs.len(),
                bob_obs.len()
            )));
        }
        let (da, db) = state.dims();
        if let Some(bad) = alice_obs.iter().find(|o| o.nrows() != da || o.ncols() != da) {
            return Err(BellError::DimensionMismatch(format!("Alice observable {}x{} vs dim {da}", bad.nrows(), bad.ncols())));
        }
        if let Some(bad) = bob_obs.iter().find(|o| o.nrows() != db || o.ncols() != db) {
            return Err(BellError::DimensionMismatch(format!("Bob observable {}x{} vs dim {db}", bad.nrows(), bad.ncols())));
        }
        Ok(Self { game, state, alice_obs, bob_obs })
    }

    pub fn n(&self) -> usize {
        self.game.n()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.state.dims()
    }
}

/// `A_x = (1/√n) Σ_y signs(x,y) Γ_yᵀ` for a generator family `gens_t`.
pub fn alice_from_effective(game: &GameSpec, effective: &[Op]) -> Vec<Op> {
    let scale = 1.0 / (game.n() as f64).sqrt();
    game.signs()
        .iter()
        .map(|row| {
            let mut acc = Op::zeros(effective[0].nrows(), effective[0].ncols());
            for (s, g) in row.iter().zip(effective) {
                acc += g * real(*s as f64);
            }
            acc * real(scale)
        })
        .collect()
}

/// Maximally entangled state of dimension `m*`, Bob measuring `Γ_y` and
/// Alice `(1/√n) Σ_y signs(x,y) Γ_yᵀ`.
pub fn canonical_strategy(n: usize) -> Result<Strategy> {
    let basis = clifford_generators(n)?;
    let game = build_game(n)?;
    let alice = alice_from_effective(&game, &basis.alice_gens);
    Strategy::new(game, Ket::max_entangled(basis.m_star), alice, basis.bob_gens)
}

/// Replaces every observable by its transpose, keeping the state.
pub fn transposed_strategy(s: &Strategy) -> Strategy {
    Strategy {
        game: s.game.clone(),
        state: s.state.clone(),
        alice_obs: s.alice_obs.iter().map(|o| o.transpose()).collect(),
        bob_obs: s.bob_obs.iter().map(|o| o.transpose()).collect(),
    }
}

fn block_diag(blocks: &[Op]) -> Op {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Op::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Direct sum over blocks `k` of `√w_k |φ⁺_{m_k}⟩` with `m_k = copies[k]·m*`,
/// every observable acting as `(canonical ⊗ I_{copies[k]})` on block `k`.
pub fn block_sum_strategy(n: usize, weights: &[f64], copies: &[usize]) -> Result<Strategy> {
    if weights.is_empty() || weights.len() != copies.len() {
        return Err(BellError::InvalidParameter(format!(
            "{} weights for {} copy counts",
            weights.len(),
            copies.len()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) || copies.contains(&0) {
        return Err(BellError::InvalidParameter("weights and copies must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(BellError::InvalidParameter(format!("weights sum to {total}, not 1")));
    }
    let canonical = canonical_strategy(n)?;
    let m = m_star(n);

    let mut state_blocks = Vec::with_capacity(weights.len());
    for (&w, &c) in weights.iter().zip(copies) {
        let mk = m * c;
        state_blocks.push(identity(mk) * real((w / mk as f64).sqrt()));
    }
    let lift = |ops: &[Op]| -> Result<Vec<Op>> {
        ops.iter()
            .map(|o| {
                let blocks = copies.iter().map(|&c| tensor(o, &identity(c))).collect::<Result<Vec<_>>>()?;
                Ok(block_diag(&blocks))
            })
            .collect()
    };
    let state = Ket::from_matrix(&block_diag(&state_blocks))?;
    Strategy::new(canonical.game.clone(), state, lift(&canonical.alice_obs)?, lift(&canonical.bob_obs)?)
}

/// Local unitaries applied by [`scramble`], for test-side bookkeeping.
#[derive(Clone, Debug)]
pub struct HiddenUnitaries {
    pub alice: Op,
    pub bob: Op,
}

/// Appends junk registers `|j_A⟩`, `|j_B⟩` and conjugates each side by the
/// given unitaries of dimension `dim · junk`.
pub fn scramble_with(s: &Strategy, junk_a: &crate::opalg::CVec, junk_b: &crate::opalg::CVec, ua: &Op, ub: &Op) -> Result<Strategy> {
    let (da, db) = s.dims();
    let (ja, jb) = (junk_a.len(), junk_b.len());
    if ua.nrows() != da * ja || ub.nrows() != db * jb {
        return Err(BellError::DimensionMismatch(format!(
            "unitaries of size ({}, {}) for extended dimensions ({}, {})",
            ua.nrows(),
            ub.nrows(),
            da * ja,
            db * jb
        )));
    }
    let junk_matrix = junk_a * junk_b.transpose();
    let psi = tensor(&s.state.as_matrix(), &junk_matrix)?;
    let extended = Ket::normalized(da * ja, db * jb, crate::opalg::vec(&psi))?;
    let state = extended.rotated(ua, ub)?;
    let lift = |ops: &[Op], u: &Op, j: usize| -> Result<Vec<Op>> {
        ops.iter().map(|o| Ok(u * tensor(o, &identity(j))? * u.adjoint())).collect()
    };
    Strategy::from_parts_unchecked(s.game.clone(), state, lift(&s.alice_obs, ua, ja)?, lift(&s.bob_obs, ub, jb)?)
}

/// Seeded adversary: Haar-random junk kets and Haar-random local unitaries.
pub fn scramble(s: &Strategy, junk_a: usize, junk_b: usize, seed: u64) -> Result<(Strategy, HiddenUnitaries)> {
    if junk_a == 0 || junk_b == 0 {
        return Err(BellError::InvalidParameter("junk dimensions must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    scramble_rng(s, junk_a, junk_b, &mut rng)
}

pub fn scramble_rng<R: Rng + ?Sized>(s: &Strategy, junk_a: usize, junk_b: usize, rng: &mut R) -> Result<(Strategy, HiddenUnitaries)> {
    let (da, db) = s.dims();
    let ja = random_unit_vector(junk_a, rng);
    let jb = random_unit_vector(junk_b, rng);
    let ua = haar_unitary(da * junk_a, rng);
    let ub = haar_unitary(db * junk_b, rng);
    let scrambled = scramble_with(s, &ja, &jb, &ua, &ub)?;
    Ok((scrambled, HiddenUnitaries { alice: ua, bob: ub }))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GeneratorCheck {
    pub max_anticommutator: f64,
    pub max_involution_defect: f64,
    pub max_hermitian_defect: f64,
}

/// Frobenius defects of the Clifford relations `{Γ_y, Γ_y'} = 2δ I`.
pub fn check_generators(gens: &[Op]) -> GeneratorCheck {
    let mut out = GeneratorCheck { max_anticommutator: 0.0, max_involution_defect: 0.0, max_hermitian_defect: 0.0 };
    for (i, g) in gens.iter().enumerate() {
        out.max_involution_defect = out.max_involution_defect.max(involution_defect(g));
        out.max_hermitian_defect = out.max_hermitian_defect.max(hermitian_defect(g));
        for h in &gens[i + 1..] {
            out.max_anticommutator = out.max_anticommutator.max((g * h + h * g).norm());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{eig_hermitian, CVec, C64};

    fn int_op(rows: &[&[(i32, i32)]]) -> Op {
        let d = rows.len();
        Op::from_fn(d, d, |i, j| C64::new(rows[i][j].0 as f64, rows[i][j].1 as f64))
    }

    #[test]
    fn small_generator_families() {
        let b2 = clifford_generators(2).unwrap();
        assert_eq!(b2.bob_gens, vec![pauli_z(), -pauli_y()]);
        assert_eq!(b2.alice_gens, vec![pauli_z(), pauli_y()]);

        let b3 = clifford_generators(3).unwrap();
        assert_eq!(b3.m_star, 2);
        assert_eq!(b3.bob_gens, vec![pauli_z(), -pauli_y(), pauli_x()]);
        let chk = check_generators(&b3.bob_gens);
        assert_eq!(chk.max_anticommutator, 0.0);
    }

    #[test]
    fn n4_generators_entrywise() {
        let b = clifford_generators(4).unwrap();
        let o = (0, 0);
        let p = (1, 0);
        let m = (-1, 0);
        let pi = (0, 1);
        let mi = (0, -1);
        let expected_bob = [
            int_op(&[&[p, o, o, o], &[o, p, o, o], &[o, o, m, o], &[o, o, o, m]]),
            int_op(&[&[o, o, pi, o], &[o, o, o, pi], &[mi, o, o, o], &[o, mi, o, o]]),
            int_op(&[&[o, o, p, o], &[o, o, o, m], &[p, o, o, o], &[o, m, o, o]]),
            int_op(&[&[o, o, o, pi], &[o, o, mi, o], &[o, pi, o, o], &[mi, o, o, o]]),
        ];
        for (got, want) in b.bob_gens.iter().zip(&expected_bob) {
            assert_eq!(got, want);
        }
        assert_eq!(b.bob_gens[2], tensor(&pauli_x(), &pauli_z()).unwrap());
        assert_eq!(b.bob_gens[3], -tensor(&pauli_x(), &pauli_y()).unwrap());
        for (a, bg) in b.alice_gens.iter().zip(&b.bob_gens) {
            assert_eq!(a, &bg.transpose());
        }
    }

    #[test]
    fn clifford_relations_hold() {
        for n in 2..=12 {
            let b = clifford_generators(n).unwrap();
            assert_eq!(b.m_star, m_star(n));
            let chk = check_generators(&b.bob_gens);
            assert!(chk.max_anticommutator <= 1e-12, "n = {n}");
            assert!(chk.max_involution_defect <= 1e-12);
            assert!(chk.max_hermitian_defect <= 1e-12);
        }
        assert!(clifford_generators(1).is_err());
    }

    #[test]
    fn canonical_alice_observables_are_dichotomic() {
        let g4 = clifford_generators(4).unwrap();
        let (vals, _) = eig_hermitian(&g4.bob_gens[0]).unwrap();
        assert_eq!(vals, vec![-1.0, -1.0, 1.0, 1.0]);
        for n in 2..=7 {
            let s = canonical_strategy(n).unwrap();
            for a in &s.alice_obs {
                let (vals, _) = eig_hermitian(a).unwrap();
                assert!(vals.iter().all(|v| (v.abs() - 1.0).abs() < 1e-12), "n = {n}");
            }
        }
    }

    #[test]
    fn canonical_pairs_are_perfectly_correlated() {
        for n in 2..=6 {
            let s = canonical_strategy(n).unwrap();
            let b = clifford_generators(n).unwrap();
            for (a, g) in b.alice_gens.iter().zip(&b.bob_gens) {
                let c = s.state.expectation_local(a, g).unwrap();
                assert!((c - real(1.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_twice_is_identity() {
        let s = canonical_strategy(3).unwrap();
        let tt = transposed_strategy(&transposed_strategy(&s));
        assert_eq!(tt.alice_obs, s.alice_obs);
        assert_eq!(tt.bob_obs, s.bob_obs);
        assert_eq!(tt.state, s.state);
    }

    #[test]
    fn block_sum_validation() {
        assert!(block_sum_strategy(3, &[0.5, 0.4], &[1, 1]).is_err());
        assert!(block_sum_strategy(3, &[0.5, 0.5], &[1]).is_err());
        assert!(block_sum_strategy(3, &[1.0], &[0]).is_err());
        let single = block_sum_strategy(3, &[1.0], &[1]).unwrap();
        let canonical = canonical_strategy(3).unwrap();
        assert_eq!(single.bob_obs, canonical.bob_obs);
        assert!((single.state.amplitudes() - canonical.state.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn identity_scramble_is_a_no_op() {
        let s = canonical_strategy(3).unwrap();
        let one = CVec::from_element(1, real(1.0));
        let out = scramble_with(&s, &one, &one, &identity(2), &identity(2)).unwrap();
        assert_eq!(out.alice_obs, s.alice_obs);
        assert_eq!(out.bob_obs, s.bob_obs);
        assert!((out.state.amplitudes() - s.state.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn scrambled_observables_stay_involutions() {
        let s = canonical_strategy(4).unwrap();
        let (t, hidden) = scramble(&s, 2, 3, 9).unwrap();
        assert_eq!(t.dims(), (8, 12));
        assert_eq!(hidden.alice.nrows(), 8);
        for o in t.alice_obs.iter().chain(&t.bob_obs) {
            assert!(involution_defect(o) < 1e-10);
            assert!(hermitian_defect(o) < 1e-10);
        }
        assert!(Strategy::new(t.game.clone(), t.state.clone(), t.alice_obs.clone(), t.bob_obs.clone()).is_ok());
        assert!(scramble(&s, 0, 1, 0).is_err());
    }

    #[test]
    fn strategy_rejects_bad_shapes() {
        let s = canonical_strategy(3).unwrap();
        let mut bob = s.bob_obs.clone();
        bob.pop();
        assert!(Strategy::new(s.game.clone(), s.state.clone(), s.alice_obs.clone(), bob).is_err());
        let mut bob = s.bob_obs.clone();
        bob[0] = bob[0].scale(0.9);
        assert!(matches!(
            Strategy::new(s.game.clone(), s.state.clone(), s.alice_obs.clone(), bob),
            Err(BellError::Precondition(_))
        ));
    }
}
