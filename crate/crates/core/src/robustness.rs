//! Robustness of the self-test: noise models, the deficit `δ`, measured
//! deviations, and the √δ constants they are compared with.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_operator, bell_value, combined_bob};
use crate::clifford::Strategy;
use crate::error::{BellError, Result};
use crate::extract::{canonicalize_observables, DEFAULT_EXTRACT_TOL};
use crate::game::{build_game, quantum_bound, sign_pseudoinverse_norm, strict_pairs};
use crate::opalg::{eig_hermitian, identity, real, unitary_exp, Ket, Op, Side};
use crate::random::{random_unit_hermitian, random_vector, rng_from_seed};
use crate::sos::{alice_effective, kernel_residuals, omegas, optimality_diagnostics};

pub const MAX_EPS: f64 = 0.3;
/// Eigenvalues of the SOS operator at or below this fraction of its largest
/// eigenvalue span the numerical kernel.
pub const KERNEL_CUTOFF: f64 = 1e-9;
/// Largest `δ` for which the bounds are enforced.
pub const DEFAULT_REGIME_MAX: f64 = 1e-3;
/// Samples with `δ` at or below this carry no scaling information.
pub const DELTA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConstants {
    pub n: usize,
    /// `√(2^{2−n}/√n)`
    pub f_n: f64,
    /// Analytic lower bound `2√n` on the smallest nonzero SOS eigenvalue.
    pub lambda_min: f64,
    /// `1/√(2√n)`
    pub c_n: f64,
    /// `‖C⁺‖_{∞→∞}`
    pub k_n: f64,
    /// `K_n / (2^{n+1} n)`
    pub l_n: f64,
    pub h_n: f64,
    pub q_n: f64,
    pub d_n: f64,
    pub e_n: f64,
    /// `√(2/√n)`: bound on one residual when a single SOS term carries all of `δ`.
    pub single_term: f64,
}

pub fn constants(n: usize) -> Result<RobustnessConstants> {
    let g = build_game(n)?;
    let nf = n as f64;
    let rn = nf.sqrt();
    let f_n = ((2f64).powi(2 - n as i32) / rn).sqrt();
    let lambda_min = 2.0 * rn;
    let c_n = 1.0 / (2.0 * rn).sqrt();
    let k_n = sign_pseudoinverse_norm(&g)?;
    let l_n = k_n / ((2f64).powi(n as i32 + 1) * nf);
    let tail = 1.0 / ((2f64).powi(n as i32 + 2) * nf * nf);
    let h_n = 2.0 * c_n + f_n + tail;
    let q_n = (0.5 + rn) * c_n + tail;
    let d_n = f_n + q_n + h_n;
    let e_n = rn * h_n;
    Ok(RobustnessConstants { n, f_n, lambda_min, c_n, k_n, l_n, h_n, q_n, d_n, e_n, single_term: (2.0 / rn).sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    StateMix,
    BobRotate,
    AliceRotate,
    Combined,
}

impl NoiseModel {
    pub const ALL: [NoiseModel; 4] = [Self::StateMix, Self::BobRotate, Self::AliceRotate, Self::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StateMix => "state_mix",
            Self::BobRotate => "bob_rotate",
            Self::AliceRotate => "alice_rotate",
            Self::Combined => "combined",
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseModel {
    type Err = BellError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BellError::InvalidParameter(format!("unknown noise model {s:?}")))
    }
}

/// Applies seeded noise of strength `eps`.
///
/// The random draws are made in a fixed order (orthogonal state direction,
/// Alice's generator, Bob's generator) whatever the model, so `combined`
/// is the composition of the three single models at the same seed. Each
/// rotation model conjugates all of one party's observables by the same
/// `exp(i·eps·H)`, which keeps them exact involutions.
pub fn perturb(s: &Strategy, model: NoiseModel, eps: f64, seed: u64) -> Result<Strategy> {
    if !(0.0..=MAX_EPS).contains(&eps) {
        return Err(BellError::InvalidParameter(format!("eps = {eps} outside [0, {MAX_EPS}]")));
    }
    let (da, db) = s.dims();
    let mut rng = rng_from_seed(seed);
    let raw = random_vector(da * db, &mut rng);
    let ha = random_unit_hermitian(da, &mut rng);
    let hb = random_unit_hermitian(db, &mut rng);

    let mut out = s.clone();
    if matches!(model, NoiseModel::StateMix | NoiseModel::Combined) {
        let psi = s.state.amplitudes();
        let perp = &raw - psi * psi.dotc(&raw);
        let perp = perp.unscale(perp.norm());
        let mixed = psi * real((1.0 - eps * eps).sqrt()) + perp * real(eps);
        out.state = Ket::normalized(da, db, mixed)?;
    }
    if matches!(model, NoiseModel::AliceRotate | NoiseModel::Combined) {
        let u = unitary_exp(&ha, eps)?;
        out.alice_obs = s.alice_obs.iter().map(|a| &u * a * u.adjoint()).collect();
    }
    if matches!(model, NoiseModel::BobRotate | NoiseModel::Combined) {
        let u = unitary_exp(&hb, eps)?;
        out.bob_obs = s.bob_obs.iter().map(|b| &u * b * u.adjoint()).collect();
    }
    Ok(out)
}

/// Frame in which the perturbed strategy is compared with the reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Direct comparison: the local isometry is the identity.
    InPlace,
    /// Conjugate the perturbed observables to Clifford form first and rotate
    /// the state accordingly.
    #[default]
    Extracted,
}

/// √δ bounds evaluated at one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValues {
    pub state_distance: f64,
    pub residual: f64,
    pub anticomm: f64,
    pub alice_obs: f64,
    pub bob_obs: f64,
    /// `√(2/√n)·√δ`
    pub single_term_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSample {
    pub noise_param: f64,
    /// `2^{n−1}√n − ⟨𝒢⟩`
    pub delta: f64,
    /// `Σ_x (ω̃_x/2)‖M̃_x|ψ̃⟩‖²` with the perturbed strategy's own weights.
    pub delta_sos: f64,
    /// `Σ_x ω̃_x − 2^{n−1}√n`
    pub omega_gap: f64,
    pub state_distance: f64,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub max_anticomm: f64,
    /// `max_x ω̃_x² − n − Δ_x` with `Δ_x` recomputed from anticommutators.
    pub delta_x_consistency: f64,
    pub alice_obs_deviation: f64,
    pub bob_obs_deviation: f64,
    pub kernel_dim: usize,
    /// Smallest nonzero eigenvalue of the reference SOS operator.
    pub lambda_min_measured: f64,
    pub bound_values: BoundValues,
}

/// `𝓜 = Σ_x (ω_x/2) M_x†M_x`, assembled as `I ⊗ P + Q ⊗ I − 𝒢` with
/// `P = Σ 𝓑_x²/(2ω_x)` and `Q = Σ (ω_x/2) A_x²`.
pub fn sos_operator(s: &Strategy) -> Result<Op> {
    let w = omegas(s)?;
    let (da, db) = s.dims();
    let bx = combined_bob(&s.game, &s.bob_obs);
    let mut p = Op::zeros(db, db);
    let mut q = Op::zeros(da, da);
    for ((b, a), &om) in bx.iter().zip(&s.alice_obs).zip(&w) {
        if om <= crate::sos::OMEGA_CUTOFF {
            return Err(BellError::DegenerateStrategy { index: 0, value: om });
        }
        p += b.adjoint() * b * real(0.5 / om);
        q += a.adjoint() * a * real(0.5 * om);
    }
    let g = bell_operator(&s.game, &s.alice_obs, &s.bob_obs)?.matrix;
    Ok(identity(da).kronecker(&p) + q.kronecker(&identity(db)) - g)
}

/// Orthonormal basis of the numerical kernel of the reference SOS operator
/// (as columns) and the smallest eigenvalue above the cutoff.
pub fn sos_kernel(reference: &Strategy) -> Result<(Op, f64)> {
    let m = sos_operator(reference)?;
    let (values, vectors) = eig_hermitian(&m)?;
    let top = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = KERNEL_CUTOFF * top;
    let dim = values.iter().filter(|&&v| v <= cut).count();
    if dim == 0 {
        return Err(BellError::Precondition("reference SOS operator has no kernel".into()));
    }
    let lambda = values.get(dim).copied().unwrap_or(f64::INFINITY);
    Ok((vectors.columns(0, dim).into_owned(), lambda))
}

fn max_bob_anticomm(s: &Strategy) -> Result<(f64, Vec<f64>)> {
    let d = optimality_diagnostics(s, crate::opalg::DEFAULT_DEGENERACY_TOL)?;
    Ok((d.max_bob_anticomm(), d.bob_anticomm))
}

/// Measures one perturbed strategy against the reference.
pub fn measure_sample(s_tilde: &Strategy, reference: &Strategy, frame: Frame) -> Result<RobustnessSample> {
    measure_sample_at(s_tilde, reference, frame, f64::NAN)
}

pub fn measure_sample_at(s_tilde: &Strategy, reference: &Strategy, frame: Frame, noise_param: f64) -> Result<RobustnessSample> {
    if s_tilde.dims() != reference.dims() || s_tilde.n() != reference.n() {
        return Err(BellError::DimensionMismatch(format!(
            "perturbed strategy {:?} vs reference {:?}",
            s_tilde.dims(),
            reference.dims()
        )));
    }
    let n = s_tilde.n();
    let k = constants(n)?;
    let optimum = quantum_bound(n);
    let value = bell_value(s_tilde)?;
    let delta = optimum - value;
    if delta < -1e-9 {
        return Err(BellError::BoundExceeded { excess: -delta });
    }

    let w = omegas(s_tilde)?;
    let residuals = kernel_residuals(s_tilde, &w)?;
    let delta_sos: f64 = w.iter().zip(&residuals).map(|(om, r)| om / 2.0 * r * r).sum();
    let omega_gap = w.iter().sum::<f64>() - optimum;

    let (max_anticomm, anticomm) = max_bob_anticomm(s_tilde)?;
    let pairs = strict_pairs(n);
    let delta_x_consistency = w
        .iter()
        .enumerate()
        .map(|(x, om)| {
            let dx: f64 = pairs.iter().zip(&anticomm).map(|(&p, a)| s_tilde.game.pair_coefficient(x, p) as f64 * a).sum();
            (om * om - n as f64 - dx).abs()
        })
        .fold(0.0, f64::max);

    let (aligned, state) = match frame {
        Frame::InPlace => (s_tilde.clone(), s_tilde.state.clone()),
        Frame::Extracted => {
            let eff = alice_effective(&s_tilde.game, &s_tilde.alice_obs);
            let ca = canonicalize_observables(&eff, Side::A, DEFAULT_EXTRACT_TOL)?;
            let cb = canonicalize_observables(&s_tilde.bob_obs, Side::B, DEFAULT_EXTRACT_TOL)?;
            // Remove the gauge phase relative to the reference frame.
            let ua = align_to(&ca.unitary, &alice_effective(&reference.game, &reference.alice_obs), Side::A)?;
            let ub = align_to(&cb.unitary, &reference.bob_obs, Side::B)?;
            let conj = |u: &Op, ops: &[Op]| ops.iter().map(|o| u * o * u.adjoint()).collect::<Vec<_>>();
            let mut t = s_tilde.clone();
            t.alice_obs = conj(&ua, &s_tilde.alice_obs);
            t.bob_obs = conj(&ub, &s_tilde.bob_obs);
            t.state = s_tilde.state.rotated(&ua, &ub)?;
            let st = t.state.clone();
            (t, st)
        }
    };

    let (kernel, lambda_min_measured) = sos_kernel(reference)?;
    let v = state.amplitudes();
    let proj = &kernel * (kernel.adjoint() * v);
    let state_distance = (v - proj).norm();

    let dev = |mine: &[Op], theirs: &[Op], side: Side| -> Result<f64> {
        mine.iter()
            .zip(theirs)
            .map(|(a, b)| {
                let d = a - b;
                Ok(match side {
                    Side::A => state.apply_local(Some(&d), None)?.norm(),
                    Side::B => state.apply_local(None, Some(&d))?.norm(),
                })
            })
            .try_fold(0.0f64, |m, r: Result<f64>| Ok(m.max(r?)))
    };
    let alice_obs_deviation = dev(&aligned.alice_obs, &reference.alice_obs, Side::A)?;
    let bob_obs_deviation = dev(&aligned.bob_obs, &reference.bob_obs, Side::B)?;

    let sd = delta.max(0.0).sqrt();
    let bound_values = BoundValues {
        state_distance: k.c_n * sd,
        residual: k.f_n * sd,
        anticomm: k.l_n * sd,
        alice_obs: k.d_n * sd,
        bob_obs: k.e_n * sd,
        single_term_residual: k.single_term * sd,
    };
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(*r));
    Ok(RobustnessSample {
        noise_param,
        delta,
        delta_sos,
        omega_gap,
        state_distance,
        residuals,
        max_residual,
        max_anticomm,
        delta_x_consistency,
        alice_obs_deviation,
        bob_obs_deviation,
        kernel_dim: kernel.ncols(),
        lambda_min_measured,
        bound_values,
    })
}

/// Composes a canonicalising unitary with the inverse of the reference's
/// own canonicalisation, so that both strategies share the reference frame.
fn align_to(u: &Op, reference_obs: &[Op], side: Side) -> Result<Op> {
    let r = canonicalize_observables(reference_obs, side, DEFAULT_EXTRACT_TOL)?;
    Ok(r.unitary.adjoint() * u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub points: usize,
}

/// Ordinary least squares `y = a + b x` with textbook standard errors.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let m = xs.len();
    if m < 2 || m != ys.len() {
        return None;
    }
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, intercept_stderr) = if m > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let s2 = rss / (mf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / mf + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Some(LinearFit { slope, intercept, slope_stderr, intercept_stderr, points: m })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub model: NoiseModel,
    pub eps_grid: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub frame: Frame,
    /// Bounds are enforced only for `DELTA_FLOOR < δ ≤ regime_max`.
    pub regime_max: f64,
    /// Multiplicative slack on the residual bound.
    pub residual_slack: f64,
    /// Multiplicative slack on the state-distance bound.
    pub state_slack: f64,
}

impl SweepConfig {
    pub fn new(n: usize, model: NoiseModel, eps_grid: Vec<f64>, seeds: usize) -> Self {
        Self {
            n,
            model,
            eps_grid,
            seeds,
            base_seed: 0,
            frame: Frame::default(),
            regime_max: DEFAULT_REGIME_MAX,
            residual_slack: 1.01,
            state_slack: 1.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub seed: u64,
    pub in_regime: bool,
    pub residual_ok: bool,
    pub state_ok: bool,
    /// `‖M̃_x|ψ̃⟩‖ / (F_n√δ)`
    pub residual_ratio: f64,
    /// `state_distance / (C_n√δ)`
    pub state_ratio: f64,
    /// `max_anticomm / (L_n√δ)`
    pub anticomm_ratio: f64,
    pub sample: RobustnessSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: SweepConfig,
    pub constants: RobustnessConstants,
    pub rows: Vec<SweepRow>,
    pub state_fit: Option<LinearFit>,
    pub residual_fit: Option<LinearFit>,
    pub alice_obs_fit: Option<LinearFit>,
    pub bob_obs_fit: Option<LinearFit>,
    pub in_regime: usize,
    pub residual_violations: usize,
    pub state_violations: usize,
    pub max_residual_ratio: f64,
    pub max_state_ratio: f64,
    pub max_anticomm_ratio: f64,
}

fn ratio(measured: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        measured / bound
    } else if measured > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Perturbs the canonical strategy over the grid, measures every sample and
/// fits log-log slopes against `δ` inside the enforced regime.
pub fn scaling_sweep(cfg: &SweepConfig) -> Result<ScalingReport> {
    if cfg.eps_grid.is_empty() || cfg.seeds == 0 {
        return Err(BellError::DegenerateGrid("empty grid or zero seeds".into()));
    }
    if let Some(bad) = cfg.eps_grid.iter().find(|e| !(0.0..=MAX_EPS).contains(*e)) {
        return Err(BellError::InvalidParameter(format!("eps = {bad} outside [0, {MAX_EPS}]")));
    }
    let reference = crate::clifford::canonical_strategy(cfg.n)?;
    let k = constants(cfg.n)?;
    let jobs: Vec<(f64, u64)> = cfg
        .eps_grid
        .iter()
        .flat_map(|&e| (0..cfg.seeds as u64).map(move |s| (e, cfg.base_seed + s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(eps, seed)| {
            let t = perturb(&reference, cfg.model, eps, seed)?;
            let sample = measure_sample_at(&t, &reference, cfg.frame, eps)?;
            let d = sample.delta;
            let in_regime = d > DELTA_FLOOR && d <= cfg.regime_max;
            let b = &sample.bound_values;
            let residual_ratio = ratio(sample.max_residual, b.residual);
            let state_ratio = ratio(sample.state_distance, b.state_distance);
            let anticomm_ratio = ratio(sample.max_anticomm, b.anticomm);
            Ok(SweepRow {
                eps,
                seed,
                in_regime,
                residual_ok: !in_regime || residual_ratio <= cfg.residual_slack,
                state_ok: !in_regime || state_ratio <= cfg.state_slack,
                residual_ratio,
                state_ratio,
                anticomm_ratio,
                sample,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if rows.iter().all(|r| r.sample.delta <= DELTA_FLOOR) {
        return Err(BellError::DegenerateGrid(format!("every deficit is at or below {DELTA_FLOOR:e}")));
    }
    let regime: Vec<&SweepRow> = rows.iter().filter(|r| r.in_regime).collect();
    let fit = |get: &dyn Fn(&RobustnessSample) -> f64| -> Option<LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = regime
            .iter()
            .filter(|r| get(&r.sample) > 0.0)
            .map(|r| (r.sample.delta.ln(), get(&r.sample).ln()))
            .unzip();
        fit_line(&xs, &ys)
    };
    let max_over = |get: &dyn Fn(&SweepRow) -> f64| regime.iter().map(|r| get(r)).fold(0.0f64, f64::max);
    Ok(ScalingReport {
        state_fit: fit(&|s| s.state_distance),
        residual_fit: fit(&|s| s.max_residual),
        alice_obs_fit: fit(&|s| s.alice_obs_deviation),
        bob_obs_fit: fit(&|s| s.bob_obs_deviation),
        in_regime: regime.len(),
        residual_violations: regime.iter().filter(|r| !r.residual_ok).count(),
        state_violations: regime.iter().filter(|r| !r.state_ok).count(),
        max_residual_ratio: max_over(&|r| r.residual_ratio),
        max_state_ratio: max_over(&|r| r.state_ratio),
        max_anticomm_ratio: max_over(&|r| r.anticomm_ratio),
        config: cfg.clone(),
        constants: k,
        rows,
    })
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}
