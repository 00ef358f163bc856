//! Pauli master equation `dP_i/dt = Σ_k (W_ik P_k − P_i W_ki)`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, QtError, Result};
use crate::util::compensated_sum;

/// Off-diagonal transition rates. `w[(i, k)]` is the rate of `|k⟩ → |i⟩`;
/// the diagonal is unused and stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    w: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(invalid(format!(
                "transition matrix must be square, got {}x{}",
                n,
                w.ncols()
            )));
        }
        if n < 2 {
            return Err(invalid(format!("need at least 2 states, got {n}")));
        }
        check_finite(w.as_slice(), "transition matrix")?;
        let mut w = w;
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    w[(i, k)] = 0.0;
                } else if w[(i, k)] < 0.0 {
                    return Err(invalid(format!(
                        "negative rate W[{i}][{k}] = {}",
                        w[(i, k)]
                    )));
                }
            }
        }
        Ok(Self { w })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(invalid(format!(
                "transition matrix row has {} entries, expected {n}",
                bad.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, k| rows[i][k]))
    }

    /// Two-state rates `W12` (2→1) and `W21` (1→2).
    pub fn two_state(w12: f64, w21: f64) -> Result<Self> {
        Self::from_rows(&[vec![0.0, w12], vec![w21, 0.0]])
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn rate(&self, i: usize, k: usize) -> f64 {
        self.w[(i, k)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.w.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn max_rate(&self) -> f64 {
        self.w.iter().copied().fold(0.0, f64::max)
    }
}

const SUM_TOL: f64 = 1e-9;
const NEG_TOL: f64 = 1e-12;

/// Probability vector; entries may dip to `-1e-12` and the total may drift
/// from one by `1e-9` to absorb integrator error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityState(Vec<f64>);

impl ProbabilityState {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_finite(&p, "probability state")?;
        if p.is_empty() {
            return Err(invalid("probability state is empty"));
        }
        if let Some(v) = p.iter().find(|&&v| v < -NEG_TOL) {
            return Err(invalid(format!("negative probability {v}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for ProbabilityState {
    type Error = QtError;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        Self::new(p)
    }
}

impl From<ProbabilityState> for Vec<f64> {
    fn from(p: ProbabilityState) -> Self {
        p.0
    }
}

/// Generator `L` with `L[i][k] = W_ik` off the diagonal and
/// `L[i][i] = −Σ_k W_ki`; every column sums to zero.
pub fn build_generator(w: &TransitionMatrix) -> DMatrix<f64> {
    let n = w.dim();
    let mut l = w.w.clone();
    for i in 0..n {
        l[(i, i)] = -compensated_sum((0..n).filter(|&k| k != i).map(|k| w.w[(k, i)]));
    }
    l
}

pub fn pme_rhs(w: &TransitionMatrix, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != w.dim() {
        return Err(QtError::DimensionMismatch {
            expected: w.dim(),
            got: p.len(),
        });
    }
    let l = build_generator(w);
    Ok((l * DVector::from_column_slice(p)).as_slice().to_vec())
}

const KERNEL_REL_TOL: f64 = 1e-10;

/// Unique stationary distribution, taken from the right singular vector of
/// the smallest singular value of `L`.
pub fn stationary_state(w: &TransitionMatrix) -> Result<ProbabilityState> {
    let n = w.dim();
    let l = build_generator(w);
    let svd = l.svd(false, true);
    let sv = &svd.singular_values;
    let scale = sv.max();
    let kernel_dim = if scale == 0.0 {
        n
    } else {
        sv.iter().filter(|&&s| s < KERNEL_REL_TOL * scale).count()
    };
    if kernel_dim != 1 {
        return Err(QtError::ReducibleChain { kernel_dim });
    }
    let v_t = svd.v_t.expect("requested V^T");
    let idx = sv.imin();
    let mut p: Vec<f64> = v_t.row(idx).iter().copied().collect();
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x /= total;
    }
    if let Some(v) = p.iter().find(|&&v| v < -KERNEL_REL_TOL) {
        return Err(QtError::Degenerate(format!(
            "kernel vector has negative entry {v}"
        )));
    }
    for x in &mut p {
        *x = x.max(0.0);
    }
    let total: f64 = p.iter().sum();
    ProbabilityState::new(p.into_iter().map(|x| x / total).collect())
}

/// Eigenvalues of the generator, sorted by real part descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Index of the eigenvalue closest to zero (the conservation mode).
    pub zero_mode: usize,
}

impl Spectrum {
    /// Eigenvalues other than the conservation mode.
    pub fn relaxation_modes(&self) -> impl Iterator<Item = &Complex<f64>> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.zero_mode)
            .map(|(_, z)| z)
    }
}

pub fn spectrum(w: &TransitionMatrix) -> Spectrum {
    let l = build_generator(w);
    let mut eigenvalues: Vec<Complex<f64>> = l.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let zero_mode = eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Spectrum {
        eigenvalues,
        zero_mode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RateFlags {
    pub symmetric: bool,
    pub doubly_stochastic: bool,
}

/// Symmetry (`W_ik = W_ki`) and double stochasticity
/// (`Σ_k W_ik = Σ_k W_ki` for every `i`).
pub fn classify_w(w: &TransitionMatrix) -> RateFlags {
    let n = w.dim();
    let tol = 1e-12 * w.max_rate().max(1.0);
    let symmetric = (0..n).all(|i| (0..i).all(|k| (w.w[(i, k)] - w.w[(k, i)]).abs() <= tol));
    let doubly_stochastic = (0..n).all(|i| {
        let out_sum = compensated_sum((0..n).map(|k| w.w[(i, k)]));
        let in_sum = compensated_sum((0..n).map(|k| w.w[(k, i)]));
        (out_sum - in_sum).abs() <= tol * n as f64
    });
    debug_assert!(!symmetric || doubly_stochastic);
    RateFlags {
        symmetric,
        doubly_stochastic,
    }
}

/// Boltzmann-Shannon entropy `−Σ p ln p` with `0 ln 0 = 0`.
pub fn bs_entropy(p: &[f64]) -> f64 {
    0.0 - p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxation::ThreeStateRates;
    use crate::util::max_abs_diff;

    fn cyclic() -> TransitionMatrix {
        ThreeStateRates::new(1.0, 0.0, 0.0, 1.0, 1.0, 0.0)
            .unwrap()
            .transition_matrix()
    }

    fn all_ones(n: usize) -> TransitionMatrix {
        TransitionMatrix::new(DMatrix::from_element(n, n, 1.0)).unwrap()
    }

    #[test]
    fn generator_examples() {
        let l = build_generator(&TransitionMatrix::two_state(1.0, 1.0).unwrap());
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        let l = build_generator(&cyclic());
        let expected = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 1.0, 1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        assert_eq!(l, expected);
    }

    #[test]
    fn generator_matches_three_state_equations() {
        // Rows of dp/dt = L p for rates (a..f) mapped a=W21, b=W31, c=W12,
        // d=W32, e=W13, f=W23.
        let (a, b, c, d, e, f) = (0.3, 1.7, 0.2, 0.9, 2.1, 0.4);
        let l = build_generator(&ThreeStateRates::new(a, b, c, d, e, f).unwrap().transition_matrix());
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[-(a + b), c, e, a, -(c + d), f, b, d, -(e + f)],
        );
        assert!((l - expected).abs().max() < 1e-15);
    }

    #[test]
    fn rejects_invalid_rates() {
        assert!(TransitionMatrix::two_state(-1.0, 1.0).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![0.0, 1.0]]).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![0.0]]).is_err());
        assert!(TransitionMatrix::two_state(f64::INFINITY, 1.0).is_err());
        // Diagonal is ignored.
        let w = TransitionMatrix::from_rows(&[vec![-5.0, 1.0], vec![2.0, 7.0]]).unwrap();
        assert_eq!(w.rate(0, 0), 0.0);
    }

    #[test]
    fn rhs_examples() {
        let out = pme_rhs(&all_ones(3), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, vec![-2.0, 1.0, 1.0]);
        let out = pme_rhs(&TransitionMatrix::two_state(2.0, 1.0).unwrap(), &[0.0, 1.0]).unwrap();
        assert_eq!(out, vec![2.0, -2.0]);
        assert!(pme_rhs(&all_ones(3), &[1.0, 0.0]).is_err());
    }

    #[test]
    fn stationary_examples() {
        let p = stationary_state(&TransitionMatrix::two_state(2.0, 1.0).unwrap()).unwrap();
        assert!(max_abs_diff(p.as_slice(), &[2.0 / 3.0, 1.0 / 3.0]) < 1e-14);
        let p = stationary_state(&cyclic()).unwrap();
        assert!(max_abs_diff(p.as_slice(), &[1.0 / 3.0; 3]) < 1e-14);
        let w = TransitionMatrix::from_rows(&[
            vec![0.0, 0.5, 2.0, 0.1],
            vec![0.5, 0.0, 0.3, 0.7],
            vec![2.0, 0.3, 0.0, 1.1],
            vec![0.1, 0.7, 1.1, 0.0],
        ])
        .unwrap();
        let p = stationary_state(&w).unwrap();
        assert!(max_abs_diff(p.as_slice(), &[0.25; 4]) < 1e-12);
        let rhs = pme_rhs(&w, p.as_slice()).unwrap();
        assert!(rhs.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn reducible_chain_is_reported() {
        let w = TransitionMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            stationary_state(&w),
            Err(QtError::ReducibleChain { kernel_dim: 2 })
        ));
        let zero = TransitionMatrix::two_state(0.0, 0.0).unwrap();
        assert!(matches!(
            stationary_state(&zero),
            Err(QtError::ReducibleChain { kernel_dim: 2 })
        ));
    }

    #[test]
    fn spectrum_examples() {
        let s = spectrum(&TransitionMatrix::two_state(1.0, 1.0).unwrap());
        assert!((s.eigenvalues[0].norm()) < 1e-14);
        assert!((s.eigenvalues[1].re + 2.0).abs() < 1e-14);
        assert_eq!(s.zero_mode, 0);

        let s = spectrum(&all_ones(3));
        assert!(s.eigenvalues[0].norm() < 1e-14);
        for z in s.relaxation_modes() {
            assert!((z - Complex::new(-3.0, 0.0)).norm() < 1e-10);
        }

        let s = spectrum(&cyclic());
        let expected = [
            Complex::new(-1.5, 3f64.sqrt() / 2.0),
            Complex::new(-1.5, -3f64.sqrt() / 2.0),
        ];
        let modes: Vec<_> = s.relaxation_modes().copied().collect();
        for (z, e) in modes.iter().zip(&expected) {
            assert!((z - e).norm() < 1e-12, "{z} vs {e}");
        }
    }

    #[test]
    fn flags_examples() {
        let f = classify_w(&TransitionMatrix::two_state(3.0, 3.0).unwrap());
        assert!(f.symmetric && f.doubly_stochastic);
        let f = classify_w(&cyclic());
        assert!(!f.symmetric && f.doubly_stochastic);
        let f = classify_w(&TransitionMatrix::two_state(2.0, 1.0).unwrap());
        assert!(!f.symmetric && !f.doubly_stochastic);
    }

    #[test]
    fn entropy_examples() {
        assert!((bs_entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(bs_entropy(&[1.0, 0.0]), 0.0);
        assert!((bs_entropy(&[1.0 / 3.0; 3]) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn probability_state_validation() {
        assert!(ProbabilityState::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityState::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityState::new(vec![1.1, -0.1]).is_err());
        assert!(ProbabilityState::new(vec![1.0 + 1e-10, -1e-13]).is_ok());
    }
}
