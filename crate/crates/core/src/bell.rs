//! Bell operator assembly, Bell values, and two quantum-value oracles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::Strategy;
use crate::error::{BellError, Result};
use crate::game::GameSpec;
use crate::opalg::{eig_hermitian, hermitian_defect, hermitian_function, real, Ket, Op};
use crate::random::{random_balanced_involution, random_ket, rng_from_seed};

/// Largest joint dimension for which the dense Bell operator is built.
pub const MAX_SPECTRAL_DIM: usize = 4096;

#[derive(Clone, Debug)]
pub struct BellOperator {
    pub game: GameSpec,
    pub matrix: Op,
    pub dims: (usize, usize),
}

fn check_observables(g: &GameSpec, alice: &[Op], bob: &[Op]) -> Result<(usize, usize)> {
    if alice.len() != g.num_alice() || bob.len() != g.n() {
        return Err(BellError::DimensionMismatch(format!(
            "expected {} Alice and {} Bob observables, got {} and {}",
            g.num_alice(),
            g.n(),
            alice.len(),
            bob.len()
        )));
    }
    let da = alice[0].nrows();
    let db = bob[0].nrows();
    if alice.iter().any(|a| a.shape() != (da, da)) || bob.iter().any(|b| b.shape() != (db, db)) {
        return Err(BellError::DimensionMismatch("observables on one side differ in shape".into()));
    }
    Ok((da, db))
}

/// Combined Bob operators `𝓑_x = Σ_y signs(x,y) B_y`.
pub fn combined_bob(g: &GameSpec, bob: &[Op]) -> Vec<Op> {
    g.signs()
        .iter()
        .map(|row| {
            let mut acc = Op::zeros(bob[0].nrows(), bob[0].ncols());
            for (s, b) in row.iter().zip(bob) {
                acc += b * real(*s as f64);
            }
            acc
        })
        .collect()
}

/// `𝒢 = Σ_x Σ_y signs(x,y) A_x ⊗ B_y` as a dense matrix.
pub fn bell_operator(g: &GameSpec, alice: &[Op], bob: &[Op]) -> Result<BellOperator> {
    let (da, db) = check_observables(g, alice, bob)?;
    if da * db > MAX_SPECTRAL_DIM {
        return Err(BellError::ResourceLimit(format!(
            "joint dimension {} exceeds {MAX_SPECTRAL_DIM}",
            da * db
        )));
    }
    let mut matrix = Op::zeros(da * db, da * db);
    for (a, bx) in alice.iter().zip(combined_bob(g, bob)) {
        matrix += a.kronecker(&bx);
    }
    let defect = hermitian_defect(&matrix);
    if defect > 1e-10 * matrix.norm().max(1.0) {
        return Err(BellError::NotHermitian { defect });
    }
    Ok(BellOperator { game: g.clone(), matrix, dims: (da, db) })
}

/// `Σ_x Tr[Ψ† A_x Ψ 𝓑_xᵀ]` summed in a fixed order.
fn value_terms(state: &Ket, alice: &[Op], bob_combined: &[Op]) -> Vec<num_complex::Complex64> {
    let psi = state.as_matrix();
    let psi_dag = psi.adjoint();
    alice
        .par_iter()
        .zip(bob_combined.par_iter())
        .map(|(a, bx)| {
            let m = &psi_dag * a * &psi;
            // Tr[M Bᵀ] = Σ_ij M_ij B_ij
            m.iter().zip(bx.iter()).map(|(u, v)| u * v).sum()
        })
        .collect()
}

/// `⟨ψ|𝒢|ψ⟩` without forming the joint operator.
pub fn bell_value(s: &Strategy) -> Result<f64> {
    let bx = combined_bob(&s.game, &s.bob_obs);
    let total: num_complex::Complex64 = value_terms(&s.state, &s.alice_obs, &bx).into_iter().sum();
    if total.im.abs() > 1e-10 * total.re.abs().max(1.0) {
        return Err(BellError::Internal(format!("Bell value has imaginary part {:.3e}", total.im)));
    }
    Ok(total.re)
}

/// Table of correlators `⟨A_x ⊗ B_y⟩`, rows indexed by `x`.
pub fn correlators(s: &Strategy) -> Vec<Vec<f64>> {
    let psi = s.state.as_matrix();
    let psi_dag = psi.adjoint();
    s.alice_obs
        .par_iter()
        .map(|a| {
            let m = &psi_dag * a * &psi;
            s.bob_obs.iter().map(|b| m.iter().zip(b.iter()).map(|(u, v)| u * v).sum::<num_complex::Complex64>().re).collect()
        })
        .collect()
}

/// Largest eigenvalue of the Bell operator.
pub fn spectral_quantum_value(b: &BellOperator) -> Result<f64> {
    if b.matrix.nrows() > MAX_SPECTRAL_DIM {
        return Err(BellError::ResourceLimit(format!("dimension {} exceeds {MAX_SPECTRAL_DIM}", b.matrix.nrows())));
    }
    let (values, _) = eig_hermitian(&b.matrix)?;
    values.last().copied().ok_or_else(|| BellError::Internal("empty spectrum".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeesawConfig {
    pub max_sweeps: usize,
    /// Relative per-sweep improvement regarded as stalled.
    pub rel_tol: f64,
    /// Consecutive stalled sweeps required to declare convergence.
    pub patience: usize,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        Self { max_sweeps: 500, rel_tol: 1e-10, patience: 5 }
    }
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    pub strategy: Strategy,
    /// Bell value after every partial update (Alice, Bob, state), starting
    /// with the random initial point.
    pub trace: Vec<f64>,
    pub value: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Best dichotomic response to an environment operator: `U sign(Λ) U†`,
/// with (numerically) zero eigenvalues mapped to +1.
pub fn dichotomic_response(env: &Op) -> Result<Op> {
    let (values, _) = eig_hermitian(env)?;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = 1e-12 * scale.max(f64::MIN_POSITIVE);
    hermitian_function(env, |x| if x < -cut { -1.0 } else { 1.0 })
}

fn top_eigenvector(op: &BellOperator) -> Result<Ket> {
    let (_, u) = eig_hermitian(&op.matrix)?;
    let v = u.column(u.ncols() - 1).into_owned();
    Ket::normalized(op.dims.0, op.dims.1, v)
}

/// Alternating maximisation over Alice's observables, Bob's observables and
/// the state, from a seeded random starting point.
pub fn seesaw_optimize(g: &GameSpec, dim_a: usize, dim_b: usize, seed: u64, iters: usize) -> Result<SeesawResult> {
    seesaw_with(g, dim_a, dim_b, seed, SeesawConfig { max_sweeps: iters, ..SeesawConfig::default() })
}

pub fn seesaw_with(g: &GameSpec, dim_a: usize, dim_b: usize, seed: u64, cfg: SeesawConfig) -> Result<SeesawResult> {
    if dim_a < 2 || dim_b < 2 {
        return Err(BellError::InvalidParameter("see-saw needs local dimensions of at least 2".into()));
    }
    if dim_a * dim_b > MAX_SPECTRAL_DIM {
        return Err(BellError::ResourceLimit(format!("joint dimension {} exceeds {MAX_SPECTRAL_DIM}", dim_a * dim_b)));
    }
    let mut rng = rng_from_seed(seed);
    let mut alice: Vec<Op> = (0..g.num_alice()).map(|_| random_balanced_involution(dim_a, &mut rng)).collect();
    let mut bob: Vec<Op> = (0..g.n()).map(|_| random_balanced_involution(dim_b, &mut rng)).collect();
    let mut state = random_ket(dim_a, dim_b, &mut rng);

    let evaluate = |state: &Ket, alice: &[Op], bob: &[Op]| -> f64 {
        value_terms(state, alice, &combined_bob(g, bob)).into_iter().map(|c| c.re).sum()
    };

    let mut trace = vec![evaluate(&state, &alice, &bob)];
    let mut stalled = 0;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let before = *trace.last().unwrap_or(&0.0);

        // ⟨A ⊗ 𝓑⟩ = Tr[A · Ψ 𝓑ᵀ Ψ†]
        let psi = state.as_matrix();
        let psi_dag = psi.adjoint();
        alice = combined_bob(g, &bob)
            .par_iter()
            .map(|bx| dichotomic_response(&(&psi * bx.transpose() * &psi_dag)))
            .collect::<Result<_>>()?;
        trace.push(evaluate(&state, &alice, &bob));

        // ⟨A ⊗ B⟩ = Tr[B · (Ψ† A Ψ)ᵀ]
        let pulled: Vec<Op> = alice.iter().map(|a| (&psi_dag * a * &psi).transpose()).collect();
        bob = (0..g.n())
            .into_par_iter()
            .map(|y| {
                let mut env = Op::zeros(dim_b, dim_b);
                for (x, p) in pulled.iter().enumerate() {
                    env += p * real(g.sign(x, y) as f64);
                }
                dichotomic_response(&env)
            })
            .collect::<Result<_>>()?;
        trace.push(evaluate(&state, &alice, &bob));

        let op = bell_operator(g, &alice, &bob)?;
        state = top_eigenvector(&op)?;
        let after = evaluate(&state, &alice, &bob);
        trace.push(after);

        if (after - before).abs() <= cfg.rel_tol * after.abs().max(1.0) {
            stalled += 1;
            if stalled >= cfg.patience {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    let value = *trace.last().unwrap_or(&0.0);
    let strategy = Strategy::from_parts_unchecked(g.clone(), state, alice, bob)?;
    Ok(SeesawResult { strategy, trace, value, sweeps, converged })
}
