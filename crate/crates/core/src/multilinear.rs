//! Levi-Civita contractions and their closed forms.
//!
//! Every QT equation of motion is written as a contraction of completely
//! antisymmetric tensors with the gradients of the entropy `S` and of the
//! conserved quantities. For probabilities the energy is `H = Σ p_i`, so its
//! gradient is the ones-vector `u`. The literal permutation sums live here as
//! brute-force oracles (capped at `N ≤ 8`); the production paths use the
//! algebraic collapse
//!
//! ```text
//! norm² · ε_{i,j,K} u_j · ε_{a,b,K} g_a u_b = norm² (N−2)! (N g_i − Σ g)
//! ```
//!
//! which becomes the simplex projection `g − mean(g)` for
//! `norm = 1/sqrt(N (N−2)!)`.
//!
//! Orientation: `ε` with indices in ascending order is `+1`.

use std::sync::OnceLock;

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::error::{check_finite, invalid, QtError, Result};
use crate::util::factorial;

/// Largest dimension accepted by the permutation-sum oracles (8! = 40320).
pub const BRUTE_FORCE_MAX_DIM: usize = 8;

/// Normalizer stated for the six-variable Lindblad embedding.
///
/// The literal rank-6 contraction with this value yields half of the
/// gradient flow; see [`six_slot_normalizer`].
pub const SIX_SLOT_STATED_NORM: f64 = 0.125;

/// Sign of a permutation of `0..perm.len()`; zero if an index repeats.
pub fn levi_civita_sign(perm: &[usize]) -> Result<i8> {
    let n = perm.len();
    if let Some(&bad) = perm.iter().find(|&&i| i >= n) {
        return Err(invalid(format!("index {bad} out of range 0..{n}")));
    }
    let mut inversions = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            match perm[i].cmp(&perm[j]) {
                std::cmp::Ordering::Equal => return Ok(0),
                std::cmp::Ordering::Greater => inversions += 1,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    Ok(if inversions.is_multiple_of(2) { 1 } else { -1 })
}

struct SignedPermutation {
    perm: Vec<usize>,
    sign: f64,
}

/// All permutations of `0..n` with their signs, built once per `n`.
fn signed_permutations(n: usize) -> &'static [SignedPermutation] {
    static TABLES: [OnceLock<Vec<SignedPermutation>>; BRUTE_FORCE_MAX_DIM + 1] =
        [const { OnceLock::new() }; BRUTE_FORCE_MAX_DIM + 1];
    assert!(n <= BRUTE_FORCE_MAX_DIM);
    TABLES[n].get_or_init(|| {
        (0..n)
            .permutations(n)
            .map(|perm| {
                let sign = levi_civita_sign(&perm).expect("indices in range") as f64;
                SignedPermutation { perm, sign }
            })
            .collect()
    })
}

fn check_brute_force_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid(format!("dimension must be at least 2, got {n}")));
    }
    if n > BRUTE_FORCE_MAX_DIM {
        return Err(QtError::SizeCap {
            n,
            max: BRUTE_FORCE_MAX_DIM,
        });
    }
    Ok(())
}

fn check_gradient(g: &[f64]) -> Result<()> {
    if g.len() < 2 {
        return Err(invalid(format!(
            "gradient needs at least 2 entries, got {}",
            g.len()
        )));
    }
    check_finite(g, "gradient")
}

/// Base-`n` index of a tuple of tensor indices.
fn flat_index(indices: &[usize], n: usize) -> usize {
    indices.iter().fold(0, |acc, &i| acc * n + i)
}

/// `1/sqrt(N (N−2)!)`: the per-factor constant that turns the double
/// contraction into the simplex projection. `N = 4` gives `8 norm² = 1`.
pub fn normalizer(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("dimension must be at least 2, got {n}")));
    }
    Ok(1.0 / (n as f64 * factorial(n - 2)).sqrt())
}

/// Literal double contraction
/// `norm ε_{i,i1,K} u_{i1} · norm ε_{a,b,K} g_a u_b`, summed over permutations.
pub fn main_term_bruteforce(g: &[f64], norm: f64) -> Result<Vec<f64>> {
    check_gradient(g)?;
    let n = g.len();
    check_brute_force_dim(n)?;
    let perms = signed_permutations(n);

    // Rank N−2 tensor A_K = norm ε_{a,b,K} g_a u_b, dense over n^(N−2) slots.
    let mut tensor = vec![0.0; n.pow((n - 2) as u32)];
    for sp in perms {
        let a = sp.perm[0];
        tensor[flat_index(&sp.perm[2..], n)] += sp.sign * g[a];
    }
    for t in &mut tensor {
        *t *= norm;
    }

    let mut out = vec![0.0; n];
    for sp in perms {
        out[sp.perm[0]] += sp.sign * tensor[flat_index(&sp.perm[2..], n)];
    }
    for o in &mut out {
        *o *= norm;
    }
    Ok(out)
}

/// Closed form of the main term: `g_i − (1/N) Σ_j g_j`.
///
/// Equals [`main_term_bruteforce`] evaluated with [`normalizer`].
pub fn main_term_closed(g: &[f64]) -> Result<Vec<f64>> {
    check_gradient(g)?;
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    Ok(g.iter().map(|x| x - mean).collect())
}

/// Difference vector `e_β − e_{β+1}` (0-based `β < n − 1`).
pub fn difference_vector(n: usize, beta: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[beta] = 1.0;
    v[beta + 1] = -1.0;
    v
}

fn check_subset(n: usize, subset: &[usize]) -> Result<()> {
    if n < 3 {
        return Err(invalid(format!(
            "Hamiltonian-like terms need N >= 3, got {n}"
        )));
    }
    if subset.len() != n - 3 {
        return Err(invalid(format!(
            "subset must have N-3 = {} elements, got {}",
            n - 3,
            subset.len()
        )));
    }
    if subset.iter().any(|&s| s >= n - 1) {
        return Err(invalid(format!(
            "subset indices must be below N-1 = {}",
            n - 1
        )));
    }
    Ok(())
}

/// Hamiltonian-like term `ε_{i,j,k,m..} u_j g_k v^(s1)_{m1} ···`.
///
/// `subset` holds 0-based indices into the difference basis of the
/// hyperplane `Σ p = 0`. Evaluated as the cofactor expansion of the
/// determinant with rows `(e_i, u, g, v^(s1), ...)`.
pub fn ham_term(g: &[f64], subset: &[usize]) -> Result<Vec<f64>> {
    check_gradient(g)?;
    let n = g.len();
    check_subset(n, subset)?;

    let mut rows = DMatrix::zeros(n - 1, n);
    rows.row_mut(0).fill(1.0);
    for (k, &gk) in g.iter().enumerate() {
        rows[(1, k)] = gk;
    }
    for (r, &s) in subset.iter().enumerate() {
        rows[(2 + r, s)] = 1.0;
        rows[(2 + r, s + 1)] = -1.0;
    }

    let out = (0..n)
        .map(|i| {
            let minor = rows.clone().remove_column(i);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor.determinant()
        })
        .collect();
    Ok(out)
}

/// Permutation-sum oracle for [`ham_term`].
pub fn ham_term_bruteforce(g: &[f64], subset: &[usize]) -> Result<Vec<f64>> {
    check_gradient(g)?;
    let n = g.len();
    check_subset(n, subset)?;
    check_brute_force_dim(n)?;
    let vectors: Vec<Vec<f64>> = subset.iter().map(|&s| difference_vector(n, s)).collect();

    let mut out = vec![0.0; n];
    for sp in signed_permutations(n) {
        // sp.perm[1] carries the ones-vector.
        let mut term = sp.sign * g[sp.perm[2]];
        for (v, &m) in vectors.iter().zip(&sp.perm[3..]) {
            term *= v[m];
            if term == 0.0 {
                break;
            }
        }
        out[sp.perm[0]] += term;
    }
    Ok(out)
}

/// Matrix of the linear map `g ↦ ham_term(g, subset)`; antisymmetric.
pub fn ham_matrix(n: usize, subset: &[usize]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let col = ham_term(&e, subset)?;
        for (i, c) in col.into_iter().enumerate() {
            m[(i, k)] = c;
        }
    }
    Ok(m)
}

/// Normalizer that makes the rank-6 embedding reproduce the Bloch gradient
/// flow exactly: the contraction evaluates to `dp_i/dt = 16 norm² G_i`, so
/// `dP_x/dt = 32 norm² ∂S/∂P_x` and `norm = 1/sqrt(32)`.
pub fn six_slot_normalizer() -> f64 {
    1.0 / 32f64.sqrt()
}

const PAIR_SUM_TOL: f64 = 1e-12;

/// Rank-6 double contraction with the three pair integrals
/// `H1 = p1+p2`, `H2 = p3+p4`, `H3 = p5+p6`:
///
/// ```text
/// dp_i/dt = norm ε_{iklmnp} ∂H1_k ∂H2_l ∂H3_m A_np
/// A_np    = norm ε_{nprstu} ∂S_r ∂H1_s ∂H2_t ∂H3_u
/// ```
///
/// `g3` is the gradient of `S` with respect to the pair differences
/// `(p1−p2, p3−p4, p5−p6)`; `p6` only needs to satisfy the pair sums.
pub fn six_slot_main_term(g3: &[f64; 3], p6: &[f64; 6], norm: f64) -> Result<[f64; 6]> {
    check_finite(g3, "gradient")?;
    check_finite(p6, "six-variable state")?;
    for pair in p6.chunks(2) {
        if (pair[0] + pair[1] - 1.0).abs() > PAIR_SUM_TOL {
            return Err(invalid(format!(
                "pair ({}, {}) does not sum to 1",
                pair[0], pair[1]
            )));
        }
    }

    let grad = [g3[0], -g3[0], g3[1], -g3[1], g3[2], -g3[2]];
    let pair_of = |idx: usize| idx / 2;
    // ∂H_j/∂p_i is 1 iff p_i belongs to pair j.
    let h = |j: usize, idx: usize| if pair_of(idx) == j { 1.0 } else { 0.0 };

    let perms = signed_permutations(6);
    let mut a = [[0.0; 6]; 6];
    for sp in perms {
        let p = &sp.perm;
        let w = h(0, p[3]) * h(1, p[4]) * h(2, p[5]);
        if w != 0.0 {
            a[p[0]][p[1]] += sp.sign * grad[p[2]] * w;
        }
    }
    let mut out = [0.0; 6];
    for sp in perms {
        let p = &sp.perm;
        let w = h(0, p[1]) * h(1, p[2]) * h(2, p[3]);
        if w != 0.0 {
            out[p[0]] += sp.sign * w * a[p[4]][p[5]];
        }
    }
    for o in &mut out {
        *o *= norm * norm;
    }
    Ok(out)
}

/// `A_np` of the rank-6 contraction (without the outer factor), exposed for
/// checking individual coefficients.
pub fn six_slot_tensor(g3: &[f64; 3], norm: f64) -> [[f64; 6]; 6] {
    let grad = [g3[0], -g3[0], g3[1], -g3[1], g3[2], -g3[2]];
    let h = |j: usize, idx: usize| if idx / 2 == j { 1.0 } else { 0.0 };
    let mut a = [[0.0; 6]; 6];
    for sp in signed_permutations(6) {
        let p = &sp.perm;
        let w = h(0, p[3]) * h(1, p[4]) * h(2, p[5]);
        if w != 0.0 {
            a[p[0]][p[1]] += norm * sp.sign * grad[p[2]] * w;
        }
    }
    a
}
