//! Composite of two independent two-state systems and its subextensive
//! entropy `S = S_A + S_B − λ S_A S_B`.
//!
//! Subsystem A flips with rate `a` in both directions, subsystem B with rate
//! `c`. The joint populations are ordered `W1 = p1q1, W2 = p1q2, W3 = p2q1,
//! W4 = p2q2`.

use nalgebra::{DMatrix, Matrix4};

use crate::error::{check_finite, invalid, QtError, Result};
use crate::multilinear::main_term_bruteforce;
use crate::pme::{ProbabilityState, TransitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeSystem {
    pub a: f64,
    pub c: f64,
    pub lambda: f64,
    pub boltzmann_k: f64,
}

impl CompositeSystem {
    /// System with `λ` from [`lambda_star`].
    pub fn new(a: f64, c: f64, boltzmann_k: f64) -> Result<Self> {
        let lambda = lambda_star(a, c)?;
        Self::with_lambda(a, c, lambda, boltzmann_k)
    }

    pub fn with_lambda(a: f64, c: f64, lambda: f64, boltzmann_k: f64) -> Result<Self> {
        check_finite(&[a, c, lambda, boltzmann_k], "composite parameters")?;
        if a <= 0.0 || c <= 0.0 {
            return Err(invalid(format!("rates must be positive, got a = {a}, c = {c}")));
        }
        if boltzmann_k <= 0.0 {
            return Err(invalid(format!("Boltzmann constant must be positive, got {boltzmann_k}")));
        }
        Ok(Self {
            a,
            c,
            lambda,
            boltzmann_k,
        })
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        let g = composite_generator(self);
        let w = DMatrix::from_fn(4, 4, |i, k| if i == k { 0.0 } else { g[(i, k)] });
        TransitionMatrix::new(w).expect("positive rates")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeState(pub [f64; 4]);

impl CompositeState {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        ProbabilityState::new(w.to_vec())?;
        Ok(Self(w))
    }

    /// Product state of subsystem distributions `p` and `q`.
    pub fn product(p: [f64; 2], q: [f64; 2]) -> Result<Self> {
        Self::new([p[0] * q[0], p[0] * q[1], p[1] * q[0], p[1] * q[1]])
    }

    /// Marginals `(p1, q1) = (W1 + W2, W1 + W3)`.
    pub fn marginals(&self) -> (f64, f64) {
        let w = self.0;
        (w[0] + w[1], w[0] + w[2])
    }

    /// `(W1+W2−W3−W4, W1+W3−W2−W4, W1+W4−W2−W3)`.
    fn differences(&self) -> (f64, f64, f64) {
        let [w1, w2, w3, w4] = self.0;
        (w1 + w2 - w3 - w4, w1 + w3 - w2 - w4, w1 + w4 - w2 - w3)
    }
}

/// Four-state generator; column sums vanish and it equals the Kronecker sum
/// of the two subsystem generators.
pub fn composite_generator(sys: &CompositeSystem) -> Matrix4<f64> {
    let (a, c) = (sys.a, sys.c);
    let s = -(a + c);
    Matrix4::new(
        s, c, a, 0.0, //
        c, s, 0.0, a, //
        a, 0.0, s, c, //
        0.0, a, c, s,
    )
}

pub fn composite_rhs(sys: &CompositeSystem, w: &CompositeState) -> [f64; 4] {
    let v = composite_generator(sys) * nalgebra::Vector4::from(w.0);
    v.into()
}

/// `(S_A, S_B) = (−(a/4)(p1−p2)², −(c/4)(q1−q2)²)` written in `W`.
pub fn subsystem_entropies(sys: &CompositeSystem, w: &CompositeState) -> (f64, f64) {
    let (x, y, _) = w.differences();
    (-sys.a / 4.0 * x * x, -sys.c / 4.0 * y * y)
}

/// `λ = 4(a+c)/(ac)`, the solution of `acλ/8 = (a+c)/2`.
pub fn lambda_star(a: f64, c: f64) -> Result<f64> {
    check_finite(&[a, c], "rates")?;
    if a <= 0.0 || c <= 0.0 {
        return Err(QtError::Degenerate(format!(
            "lambda needs positive rates, got a = {a}, c = {c}"
        )));
    }
    Ok(4.0 * (a + c) / (a * c))
}

pub fn composite_entropy(sys: &CompositeSystem, w: &CompositeState) -> f64 {
    let (x, y, z) = w.differences();
    let (a, c) = (sys.a, sys.c);
    -a / 4.0 * x * x - c / 4.0 * y * y - sys.lambda * a * c / 16.0 * z * z
}

pub fn composite_gradient(sys: &CompositeSystem, w: &CompositeState) -> [f64; 4] {
    let (x, y, z) = w.differences();
    let (a, c) = (sys.a, sys.c);
    let (gx, gy, gz) = (-a / 2.0 * x, -c / 2.0 * y, -sys.lambda * a * c / 8.0 * z);
    [
        gx + gy + gz,
        gx - gy - gz,
        -gx + gy - gz,
        -gx - gy + gz,
    ]
}

/// Nonextensivity `q = 1 + k(a+c)/4`.
pub fn q_parameter(sys: &CompositeSystem) -> f64 {
    1.0 + sys.boltzmann_k * (sys.a + sys.c) / 4.0
}

/// Comparison of the Tsallis coupling `(1−q)/k` with `−λ`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TsallisCheck {
    pub q: f64,
    pub one_minus_q_over_k: f64,
    pub minus_lambda: f64,
    /// `(1−q)/k + λ`; zero only when `ac = 16`.
    pub mismatch: f64,
}

pub fn tsallis_check(sys: &CompositeSystem) -> TsallisCheck {
    let q = q_parameter(sys);
    let coupling = (1.0 - q) / sys.boltzmann_k;
    debug_assert!((coupling + (sys.a + sys.c) / 4.0).abs() <= 1e-12 * (1.0 + sys.a + sys.c));
    TsallisCheck {
        q,
        one_minus_q_over_k: coupling,
        minus_lambda: -sys.lambda,
        mismatch: coupling + sys.lambda,
    }
}

/// Normalizer of the four-index contraction, `8 norm² = 1`.
pub fn contraction_norm() -> f64 {
    1.0 / 8f64.sqrt()
}

/// Max-abs difference between the ε-contraction flow of `∇S` and the
/// generator, over the given states.
pub fn gradient_residual(sys: &CompositeSystem, states: &[CompositeState]) -> Result<f64> {
    let norm = contraction_norm();
    let mut worst: f64 = 0.0;
    for s in states {
        let flow = main_term_bruteforce(&composite_gradient(sys, s), norm)?;
        let rhs = composite_rhs(sys, s);
        for (f, r) in flow.iter().zip(rhs) {
            worst = worst.max((f - r).abs());
        }
    }
    Ok(worst)
}

pub fn stationary(sys: &CompositeSystem) -> Result<Vec<f64>> {
    Ok(crate::pme::stationary_state(&sys.transition_matrix())?.into())
}
