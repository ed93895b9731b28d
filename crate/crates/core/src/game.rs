//! Bell game combinatorics.
//!
//! Alice has `2^{n-1}` settings indexed by bit strings `z^x` of length `n`
//! whose first bit is fixed to 0; Bob has `n` settings. The functional is
//! `Σ_x Σ_y (-1)^{z^x_y} A_x B_y`. Rows are enumerated in lexicographic
//! order of the trailing `n - 1` bits, so row `x` is the binary expansion
//! of `x` over bits `2..=n` (most significant first).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BellError, Result};

/// Largest `n` for which the sign table is materialised.
pub const MAX_GAME_N: usize = 20;
/// Largest `n` for the exhaustive local-bound search.
pub const MAX_BRUTEFORCE_N: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSpec {
    n: usize,
    bitstrings: Vec<Vec<u8>>,
    signs: Vec<Vec<i8>>,
}

impl GameSpec {
    pub fn new(n: usize) -> Result<Self> {
        if !(2..=MAX_GAME_N).contains(&n) {
            return Err(BellError::InvalidParameter(format!("n = {n} outside 2..={MAX_GAME_N}")));
        }
        let rows = 1usize << (n - 1);
        let bitstrings: Vec<Vec<u8>> = (0..rows)
            .map(|x| {
                let mut z = vec![0u8; n];
                for (y, bit) in z.iter_mut().enumerate().skip(1) {
                    *bit = ((x >> (n - 1 - y)) & 1) as u8;
                }
                z
            })
            .collect();
        let signs = bitstrings
            .iter()
            .map(|z| z.iter().map(|&b| 1 - 2 * b as i8).collect())
            .collect();
        Ok(Self { n, bitstrings, signs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of Alice settings, `2^{n-1}`.
    pub fn num_alice(&self) -> usize {
        self.signs.len()
    }

    pub fn bitstrings(&self) -> &[Vec<u8>] {
        &self.bitstrings
    }

    pub fn signs(&self) -> &[Vec<i8>] {
        &self.signs
    }

    pub fn sign(&self, x: usize, y: usize) -> i8 {
        self.signs[x][y]
    }

    /// Pair coefficient `c^x_{(y,y')} = signs(x,y)·signs(x,y')`.
    pub fn pair_coefficient(&self, x: usize, pair: (usize, usize)) -> i8 {
        self.signs[x][pair.0] * self.signs[x][pair.1]
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        strict_pairs(self.n)
    }
}

/// Shorthand for [`GameSpec::new`].
pub fn build_game(n: usize) -> Result<GameSpec> {
    GameSpec::new(n)
}

/// Pairs `(y, y')` with `y < y'`, `y` ascending then `y'` ascending.
pub fn strict_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|y| (y + 1..n).map(move |y2| (y, y2))).collect()
}

/// Pairs `(y, y')` with `y ≤ y'`, `y` ascending then `y'` ascending.
pub fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|y| (y..n).map(move |y2| (y, y2))).collect()
}

/// `Σ_x signs(x,y)·signs(x,y')` for every pair of [`upper_pairs`].
pub fn walsh_column_sums(g: &GameSpec) -> Vec<i64> {
    upper_pairs(g.n)
        .into_iter()
        .map(|(y, y2)| g.signs.iter().map(|row| (row[y] * row[y2]) as i64).sum())
        .collect()
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Closed-form classical bound `(⌊n/2⌋+1)·C(n, ⌊n/2⌋+1)`.
pub fn local_bound_formula(n: usize) -> Result<u64> {
    if n < 2 {
        return Err(BellError::InvalidParameter(format!("n = {n} must be at least 2")));
    }
    let n = n as u128;
    let k = n / 2 + 1;
    binomial(n, k)
        .and_then(|b| b.checked_mul(k))
        .and_then(|v| u64::try_from(v).ok())
        .ok_or_else(|| BellError::InvalidParameter(format!("local bound for n = {n} overflows 64 bits")))
}

/// Exhaustive classical bound: maximum over Bob's deterministic
/// assignments `b ∈ {±1}^n` of `Σ_x |Σ_y signs(x,y) b_y|` (Alice answers
/// each row with the sign of its sum).
pub fn local_bound_bruteforce(g: &GameSpec) -> Result<u64> {
    if g.n > MAX_BRUTEFORCE_N {
        return Err(BellError::ResourceLimit(format!(
            "exhaustive search limited to n <= {MAX_BRUTEFORCE_N}, got {}",
            g.n
        )));
    }
    let n = g.n;
    let best = (0u32..(1u32 << n))
        .into_par_iter()
        .map(|mask| {
            g.signs
                .iter()
                .map(|row| {
                    let s: i64 = (0..n)
                        .map(|y| {
                            let b = if (mask >> y) & 1 == 1 { -1 } else { 1 };
                            (row[y] as i64) * b
                        })
                        .sum();
                    s.unsigned_abs()
                })
                .sum::<u64>()
        })
        .max()
        .unwrap_or(0);
    Ok(best)
}

/// Optimal quantum value `2^{n-1}√n`.
pub fn quantum_bound(n: usize) -> f64 {
    (1u64 << (n - 1)) as f64 * (n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub local_bound: u64,
    pub quantum_bound: f64,
    pub ratio: f64,
}

pub fn bound_report(n: usize) -> Result<BoundReport> {
    let local_bound = local_bound_formula(n)?;
    let quantum_bound = quantum_bound(n);
    Ok(BoundReport { n, local_bound, quantum_bound, ratio: quantum_bound / local_bound as f64 })
}

/// Pair-coefficient matrix `C[x][p] = c^x_p` over [`strict_pairs`].
pub fn pair_coefficient_matrix(g: &GameSpec) -> Vec<Vec<i8>> {
    let pairs = g.pairs();
    (0..g.num_alice()).map(|x| pairs.iter().map(|&p| g.pair_coefficient(x, p)).collect()).collect()
}

/// Exact Gram matrix `CᵀC` of the pair-coefficient matrix, computed with
/// packed sign bits.
pub fn pair_gram(g: &GameSpec) -> Vec<Vec<i64>> {
    let pairs = g.pairs();
    let rows = g.num_alice();
    let words = rows.div_ceil(64);
    let columns: Vec<Vec<u64>> = pairs
        .iter()
        .map(|&p| {
            let mut bits = vec![0u64; words];
            for x in 0..rows {
                if g.pair_coefficient(x, p) < 0 {
                    bits[x / 64] |= 1 << (x % 64);
                }
            }
            bits
        })
        .collect();
    columns
        .par_iter()
        .map(|a| {
            columns
                .iter()
                .map(|b| {
                    let differing: u32 = a.iter().zip(b).map(|(u, v)| (u ^ v).count_ones()).sum();
                    rows as i64 - 2 * differing as i64
                })
                .collect()
        })
        .collect()
}

/// Dense pseudoinverse `C⁺ = (CᵀC)⁻¹Cᵀ` (rows indexed by pairs).
pub fn sign_pseudoinverse(g: &GameSpec) -> Result<nalgebra::DMatrix<f64>> {
    if g.n > MAX_BRUTEFORCE_N {
        return Err(BellError::ResourceLimit(format!("dense pseudoinverse limited to n <= {MAX_BRUTEFORCE_N}")));
    }
    let c = pair_coefficient_matrix(g);
    let rows = c.len();
    let cols = g.pairs().len();
    let cm = nalgebra::DMatrix::from_fn(rows, cols, |x, p| c[x][p] as f64);
    let gram = cm.transpose() * &cm;
    let chol = gram
        .cholesky()
        .ok_or_else(|| BellError::Internal("pair-coefficient matrix is rank deficient".into()))?;
    Ok(chol.solve(&cm.transpose()))
}

/// `K_n = ‖C⁺‖_{∞→∞}`, the largest absolute row sum of the pseudoinverse.
pub fn sign_pseudoinverse_norm(g: &GameSpec) -> Result<f64> {
    let gram = pair_gram(g);
    let rows = g.num_alice() as i64;
    let scaled_identity = gram
        .iter()
        .enumerate()
        .all(|(p, row)| row.iter().enumerate().all(|(q, &v)| v == if p == q { rows } else { 0 }));
    if scaled_identity {
        // C⁺ = Cᵀ / 2^{n-1}: every row of C⁺ has 2^{n-1} entries of magnitude 2^{1-n}.
        return Ok(1.0);
    }
    let pinv = sign_pseudoinverse(g)?;
    Ok(pinv.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sign_tables() {
        assert_eq!(build_game(2).unwrap().signs(), &[vec![1, 1], vec![1, -1]]);
        assert_eq!(
            build_game(3).unwrap().signs(),
            &[vec![1, 1, 1], vec![1, 1, -1], vec![1, -1, 1], vec![1, -1, -1]]
        );
        let g4 = build_game(4).unwrap();
        assert_eq!(g4.num_alice(), 8);
        assert!(g4.signs().iter().all(|r| r.len() == 4));
    }

    #[test]
    fn game_invariants() {
        for n in 2..=9 {
            let g = build_game(n).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for (z, s) in g.bitstrings().iter().zip(g.signs()) {
                assert_eq!(z[0], 0);
                for (b, sv) in z.iter().zip(s) {
                    assert_eq!(*sv, 1 - 2 * *b as i8);
                }
                seen.insert(z.clone());
            }
            assert_eq!(seen.len(), 1 << (n - 1));
            let ordered: Vec<Vec<u8>> = seen.into_iter().collect();
            assert_eq!(ordered, g.bitstrings());
        }
    }

    #[test]
    fn rejects_out_of_range_n() {
        assert!(matches!(build_game(1), Err(BellError::InvalidParameter(_))));
        assert!(matches!(build_game(21), Err(BellError::InvalidParameter(_))));
    }

    #[test]
    fn walsh_sums() {
        let g3 = build_game(3).unwrap();
        let sums = walsh_column_sums(&g3);
        let pairs = upper_pairs(3);
        let at = |p: (usize, usize)| sums[pairs.iter().position(|&q| q == p).unwrap()];
        assert_eq!(at((0, 1)), 0);
        assert_eq!(at((1, 1)), 4);
        assert_eq!(sums.len(), 3 + 3);

        let g5 = build_game(5).unwrap();
        for ((y, y2), s) in upper_pairs(5).into_iter().zip(walsh_column_sums(&g5)) {
            assert_eq!(s, if y == y2 { 16 } else { 0 });
        }
    }

    #[test]
    fn local_bounds() {
        assert_eq!(local_bound_formula(2).unwrap(), 2);
        assert_eq!(local_bound_formula(3).unwrap(), 6);
        assert_eq!(local_bound_formula(4).unwrap(), 12);
        assert_eq!(local_bound_bruteforce(&build_game(2).unwrap()).unwrap(), 2);
        assert_eq!(local_bound_bruteforce(&build_game(4).unwrap()).unwrap(), 12);
        assert_eq!(local_bound_bruteforce(&build_game(5).unwrap()).unwrap(), 30);
        assert!(local_bound_formula(1).is_err());
        assert!(matches!(
            local_bound_bruteforce(&build_game(13).unwrap()),
            Err(BellError::ResourceLimit(_))
        ));
    }

    #[test]
    fn bruteforce_matches_formula() {
        for n in 2..=MAX_BRUTEFORCE_N {
            let g = build_game(n).unwrap();
            assert_eq!(local_bound_bruteforce(&g).unwrap(), local_bound_formula(n).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn quantum_exceeds_local() {
        for n in 2..=MAX_GAME_N {
            let r = bound_report(n).unwrap();
            assert!(r.ratio > 1.0, "n = {n}");
        }
        assert!((quantum_bound(4) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn pair_walsh_orthogonality() {
        for n in 2..=8 {
            let g = build_game(n).unwrap();
            let c = pair_coefficient_matrix(&g);
            let np = g.pairs().len();
            for p in 0..np {
                for q in 0..np {
                    let s: i64 = c.iter().map(|row| (row[p] * row[q]) as i64).sum();
                    assert_eq!(s, if p == q { 1 << (n - 1) } else { 0 }, "n={n} p={p} q={q}");
                }
            }
            assert_eq!(pair_gram(&g), (0..np).map(|p| (0..np).map(|q| if p == q { 1 << (n - 1) } else { 0 }).collect()).collect::<Vec<Vec<i64>>>());
        }
    }

    #[test]
    fn signs_gram_is_scaled_identity() {
        for n in 2..=8 {
            let g = build_game(n).unwrap();
            for y in 0..n {
                for y2 in 0..n {
                    let s: i64 = g.signs().iter().map(|r| (r[y] * r[y2]) as i64).sum();
                    assert_eq!(s, if y == y2 { 1 << (n - 1) } else { 0 });
                }
            }
        }
    }

    #[test]
    fn pseudoinverse_norm_and_left_inverse() {
        for n in 3..=8 {
            let g = build_game(n).unwrap();
            assert_eq!(sign_pseudoinverse_norm(&g).unwrap(), 1.0);
            let pinv = sign_pseudoinverse(&g).unwrap();
            let c = pair_coefficient_matrix(&g);
            let cm = nalgebra::DMatrix::from_fn(c.len(), g.pairs().len(), |x, p| c[x][p] as f64);
            let prod = &pinv * cm;
            let eye = nalgebra::DMatrix::<f64>::identity(prod.nrows(), prod.ncols());
            assert!((prod - eye).norm() < 1e-12);
            let dense_norm = pinv.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
            assert!((dense_norm - 1.0).abs() < 1e-12);
        }
        assert_eq!(sign_pseudoinverse_norm(&build_game(20).unwrap()).unwrap(), 1.0);
    }
}
