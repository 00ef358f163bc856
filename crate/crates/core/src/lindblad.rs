//! Two-level Lindblad dynamics in Bloch form.
//!
//! With `ρ = (1 + P·σ)/2`, `H = 2h·σ` and dissipators `R_j = A_j·σ + iB_j·σ`
//! (ħ = 1), the polarization obeys
//!
//! ```text
//! dP/dt = h×P + Σ_j [2(A_j×B_j) − A_j×(P×A_j) − B_j×(P×B_j)]
//! ```
//!
//! For a single dissipator and `h = 0` this is the gradient flow of
//! `S(P) = 2(A×B)·P − P²(A²+B²)/2 + (A·P)²/2 + (B·P)²/2`, which in turn
//! embeds into a six-variable QT system with three pair integrals.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, QtError, Result};
use crate::multilinear::{six_slot_main_term, six_slot_normalizer};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector(pub Vec3);

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vec3::new(x, y, z))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_physical(&self) -> bool {
        self.norm() <= 1.0 + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dissipator {
    #[serde(rename = "A")]
    pub a: Vec3,
    #[serde(rename = "B")]
    pub b: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladChannel {
    #[serde(default)]
    pub h: Vec3,
    pub dissipators: Vec<Dissipator>,
}

impl LindbladChannel {
    pub fn single(a: Vec3, b: Vec3) -> Self {
        Self {
            h: Vec3::zeros(),
            dissipators: vec![Dissipator { a, b }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(self.h.as_slice(), "h")?;
        for d in &self.dissipators {
            check_finite(d.a.as_slice(), "A")?;
            check_finite(d.b.as_slice(), "B")?;
        }
        Ok(())
    }

    /// The single dissipator `(A, B)` when the channel has the gradient form.
    pub fn gradient_pair(&self) -> Result<(Vec3, Vec3)> {
        if self.h != Vec3::zeros() {
            return Err(QtError::GradientFormUnavailable(
                "channel has a Hamiltonian term h != 0".into(),
            ));
        }
        match self.dissipators.as_slice() {
            [d] => Ok((d.a, d.b)),
            ds => Err(QtError::GradientFormUnavailable(format!(
                "channel has {} dissipators, need exactly one",
                ds.len()
            ))),
        }
    }

    /// `dP/dt = M P + c` with `M = [h]× + Σ (AAᵀ + BBᵀ − (A²+B²) I)` and
    /// `c = Σ 2 A×B`.
    pub fn affine_form(&self) -> (Matrix3<f64>, Vec3) {
        let h = self.h;
        let mut m = Matrix3::new(0.0, -h.z, h.y, h.z, 0.0, -h.x, -h.y, h.x, 0.0);
        let mut c = Vec3::zeros();
        for d in &self.dissipators {
            m += d.a * d.a.transpose() + d.b * d.b.transpose()
                - Matrix3::identity() * (d.a.norm_squared() + d.b.norm_squared());
            c += 2.0 * d.a.cross(&d.b);
        }
        (m, c)
    }
}

pub fn bloch_rhs(ch: &LindbladChannel, p: &BlochVector) -> Vec3 {
    let p = p.0;
    let mut out = ch.h.cross(&p);
    for d in &ch.dissipators {
        out += 2.0 * d.a.cross(&d.b) - d.a.cross(&p.cross(&d.a)) - d.b.cross(&p.cross(&d.b));
    }
    out
}

/// `P_st = 2(A×B)/(A²+B²)`.
pub fn stationary_bloch(a: &Vec3, b: &Vec3) -> Result<BlochVector> {
    let denom = a.norm_squared() + b.norm_squared();
    if denom == 0.0 {
        return Err(QtError::Degenerate("A = B = 0: channel has no dissipation".into()));
    }
    Ok(BlochVector(2.0 * a.cross(b) / denom))
}

/// Stationary point of a general channel, from the affine form.
pub fn stationary_general(ch: &LindbladChannel) -> Result<BlochVector> {
    let (m, c) = ch.affine_form();
    let p = m
        .lu()
        .solve(&(-c))
        .filter(|p| p.iter().all(|x| x.is_finite()))
        .ok_or_else(|| QtError::Degenerate("Bloch flow has no unique fixed point".into()))?;
    Ok(BlochVector(p))
}

pub fn bloch_entropy(a: &Vec3, b: &Vec3, p: &BlochVector) -> f64 {
    let p = p.0;
    2.0 * a.cross(b).dot(&p) - 0.5 * p.norm_squared() * (a.norm_squared() + b.norm_squared())
        + 0.5 * a.dot(&p).powi(2)
        + 0.5 * b.dot(&p).powi(2)
}

/// `∇S = 2(A×B) − P(A²+B²) + (A·P)A + (B·P)B`.
pub fn gradient_rhs(a: &Vec3, b: &Vec3, p: &BlochVector) -> Vec3 {
    let p = p.0;
    2.0 * a.cross(b) - p * (a.norm_squared() + b.norm_squared()) + a * a.dot(&p) + b * b.dot(&p)
}

const PAIR_TOL: f64 = 1e-12;

/// `(p1..p6)` with `p_{2j−1} = (1 + P_j)/2`, `p_{2j} = (1 − P_j)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SixState(pub [f64; 6]);

impl SixState {
    pub fn new(p: [f64; 6]) -> Result<Self> {
        check_finite(&p, "six-variable state")?;
        for pair in p.chunks(2) {
            if (pair[0] + pair[1] - 1.0).abs() > PAIR_TOL {
                return Err(invalid(format!(
                    "pair ({}, {}) does not sum to 1",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self(p))
    }
}

pub fn embed_six(p: &BlochVector) -> SixState {
    let v = p.0;
    SixState([
        (1.0 + v.x) / 2.0,
        (1.0 - v.x) / 2.0,
        (1.0 + v.y) / 2.0,
        (1.0 - v.y) / 2.0,
        (1.0 + v.z) / 2.0,
        (1.0 - v.z) / 2.0,
    ])
}

pub fn extract_bloch(s: &SixState) -> BlochVector {
    let p = s.0;
    BlochVector::new(p[0] - p[1], p[2] - p[3], p[4] - p[5])
}

/// Six-variable QT flow with the given ε normalizer.
pub fn qt_six_rhs_with_norm(a: &Vec3, b: &Vec3, s: &SixState, norm: f64) -> Result<[f64; 6]> {
    let grad = gradient_rhs(a, b, &extract_bloch(s));
    six_slot_main_term(&[grad.x, grad.y, grad.z], &s.0, norm)
}

/// Six-variable QT flow normalized so that its Bloch image is exactly the
/// gradient flow.
pub fn qt_six_rhs(a: &Vec3, b: &Vec3, s: &SixState) -> Result<[f64; 6]> {
    qt_six_rhs_with_norm(a, b, s, six_slot_normalizer())
}

/// Bloch-space velocity of a six-variable velocity.
pub fn extract_velocity(dp: &[f64; 6]) -> Vec3 {
    Vec3::new(dp[0] - dp[1], dp[2] - dp[3], dp[4] - dp[5])
}
