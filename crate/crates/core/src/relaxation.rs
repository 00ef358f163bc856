//! Three-state relaxation character: secular equation, discriminant and the
//! ellipse criterion.
//!
//! The nonzero eigenvalues of the three-state generator solve
//! `λ² + ξλ + η(a+b+e) − (e−c)(f−a) = 0`. Relaxation is called monotonic
//! when both roots are real (`disc ≥ 0`) and oscillatory otherwise. In the
//! variables `u = l+m`, `v = l−m`, `ω = (a+d+e) − (b+c+f)` the discriminant
//! equals `(√3 u + 2ω/√3)² + v² − ω²/3`, so the oscillatory region is the
//! interior of an ellipse that collapses to a point at `ω = 0`.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, Result};
use crate::pme::TransitionMatrix;

/// Rates of the three-state chain, `a = W21, b = W31, c = W12, d = W32,
/// e = W13, f = W23`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct ThreeStateRates {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl ThreeStateRates {
    pub fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Result<Self> {
        Self::try_from([a, b, c, d, e, f])
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        let Self { a, b, c, d, e, f } = *self;
        TransitionMatrix::from_rows(&[vec![0.0, c, e], vec![a, 0.0, f], vec![b, d, 0.0]])
            .expect("validated rates")
    }

    pub fn omega(&self) -> f64 {
        (self.a + self.d + self.e) - (self.b + self.c + self.f)
    }
}

impl TryFrom<[f64; 6]> for ThreeStateRates {
    type Error = crate::QtError;
    fn try_from(r: [f64; 6]) -> Result<Self> {
        check_finite(&r, "rates")?;
        if let Some(v) = r.iter().find(|&&v| v < 0.0) {
            return Err(invalid(format!("negative rate {v}")));
        }
        let [a, b, c, d, e, f] = r;
        Ok(Self { a, b, c, d, e, f })
    }
}

impl From<ThreeStateRates> for [f64; 6] {
    fn from(r: ThreeStateRates) -> Self {
        r.as_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Secular {
    pub xi: f64,
    pub constant: f64,
    pub disc: f64,
    pub roots: [Complex<f64>; 2],
}

pub fn secular(rates: &ThreeStateRates) -> Secular {
    let ThreeStateRates { a, b, c, d, e, f } = *rates;
    let xi = a + b + c + d + e + f;
    let eta = c + d + f;
    let constant = eta * (a + b + e) - (e - c) * (f - a);
    let disc = xi * xi + 4.0 * (e - c) * (f - a) - 4.0 * eta * (a + b + e);
    let roots = if disc >= 0.0 {
        // Cancellation-free pair: q = −(ξ + √disc)/2, roots q and constant/q.
        let q = -0.5 * (xi + disc.sqrt());
        let other = if q != 0.0 { constant / q } else { 0.0 };
        [Complex::new(other, 0.0), Complex::new(q, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex::new(-0.5 * xi, im), Complex::new(-0.5 * xi, -im)]
    };
    Secular {
        xi,
        constant,
        disc,
        roots,
    }
}

const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxationReport {
    pub xi: f64,
    pub eta: f64,
    pub constant: f64,
    pub disc: f64,
    pub k: f64,
    pub l: f64,
    pub m: f64,
    pub omega: f64,
    pub u: f64,
    pub v: f64,
    /// `(√3 u + 2ω/√3)² + v² − ω²/3`; equal to `disc`.
    pub ellipse: f64,
    /// Nonzero eigenvalues as `[re, im]` pairs.
    #[serde(serialize_with = "serialize_complex_pair")]
    pub eigenvalues: [Complex<f64>; 2],
    pub monotonic: bool,
    /// `|disc| < 1e-9 · max(1, ξ²)`.
    pub boundary: bool,
}

fn serialize_complex_pair<S: serde::Serializer>(
    z: &[Complex<f64>; 2],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(2))?;
    for v in z {
        seq.serialize_element(&[v.re, v.im])?;
    }
    seq.end()
}

pub fn classify(rates: &ThreeStateRates) -> RelaxationReport {
    let ThreeStateRates { a, b, c, d, e, f } = *rates;
    let sec = secular(rates);
    let (k, l, m) = (e - c, f - a, b - d);
    let omega = rates.omega();
    let (u, v) = (l + m, l - m);
    let s3 = 3f64.sqrt();
    let ellipse = (s3 * u + 2.0 / s3 * omega).powi(2) + v * v - omega * omega / 3.0;
    RelaxationReport {
        xi: sec.xi,
        eta: c + d + f,
        constant: sec.constant,
        disc: sec.disc,
        k,
        l,
        m,
        omega,
        u,
        v,
        ellipse,
        eigenvalues: sec.roots,
        monotonic: sec.disc >= 0.0,
        boundary: sec.disc.abs() < BOUNDARY_TOL * sec.xi.powi(2).max(1.0),
    }
}

/// Discriminant from the `(ω, l, m)` form: `ω² + 4ω(l+m) + 4(l² + m² + lm)`.
pub fn disc_from_omega(omega: f64, l: f64, m: f64) -> f64 {
    omega * omega + 4.0 * omega * (l + m) + 4.0 * (l * l + m * m + l * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScanConstraint {
    #[default]
    None,
    /// Rescale `(b, c, f)` so that `a+d+e = b+c+f`.
    OmegaZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub samples: usize,
    pub low: f64,
    pub high: f64,
    pub constraint: ScanConstraint,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub rates: ThreeStateRates,
    pub xi: f64,
    pub disc: f64,
    pub omega: f64,
    pub u: f64,
    pub v: f64,
    pub monotonic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaBin {
    pub abs_omega_low: f64,
    pub abs_omega_high: f64,
    pub count: usize,
    pub oscillatory: usize,
    pub fraction_oscillatory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    #[serde(skip)]
    pub rows: Vec<ScanRow>,
    pub samples: usize,
    pub oscillatory: usize,
    pub fraction_oscillatory: f64,
    pub bins: Vec<OmegaBin>,
}

/// Seeded sample of rate space with per-sample classification and the
/// oscillatory fraction binned by `|ω|`. Samples are drawn sequentially and
/// classified in parallel, so the output order only depends on the seed.
pub fn scan(spec: &ScanSpec, seed: u64) -> Result<ScanReport> {
    if spec.samples == 0 {
        return Err(invalid("scan needs at least one sample"));
    }
    if spec.bins == 0 {
        return Err(invalid("scan needs at least one |omega| bin"));
    }
    if !(spec.low.is_finite() && spec.high.is_finite()) || spec.low < 0.0 || spec.high <= spec.low {
        return Err(invalid(format!(
            "rate range must satisfy 0 <= low < high, got [{}, {}]",
            spec.low, spec.high
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<[f64; 6]> = (0..spec.samples)
        .map(|_| {
            let mut r: [f64; 6] = std::array::from_fn(|_| rng.gen_range(spec.low..spec.high));
            if spec.constraint == ScanConstraint::OmegaZero {
                let forward = r[0] + r[3] + r[4];
                let backward = r[1] + r[2] + r[5];
                if backward > 0.0 {
                    let s = forward / backward;
                    for i in [1, 2, 5] {
                        r[i] *= s;
                    }
                }
            }
            r
        })
        .collect();

    let rows: Vec<ScanRow> = draws
        .par_iter()
        .map(|r| {
            let rates = ThreeStateRates::try_from(*r).expect("sampled rates are valid");
            let rep = classify(&rates);
            ScanRow {
                rates,
                xi: rep.xi,
                disc: rep.disc,
                omega: rep.omega,
                u: rep.u,
                v: rep.v,
                monotonic: rep.monotonic,
            }
        })
        .collect();

    let max_omega = 3.0 * (spec.high - spec.low);
    let width = max_omega / spec.bins as f64;
    let mut bins: Vec<OmegaBin> = (0..spec.bins)
        .map(|i| OmegaBin {
            abs_omega_low: i as f64 * width,
            abs_omega_high: (i + 1) as f64 * width,
            count: 0,
            oscillatory: 0,
            fraction_oscillatory: None,
        })
        .collect();
    for row in &rows {
        let idx = ((row.omega.abs() / width) as usize).min(spec.bins - 1);
        bins[idx].count += 1;
        if !row.monotonic {
            bins[idx].oscillatory += 1;
        }
    }
    for b in &mut bins {
        if b.count > 0 {
            b.fraction_oscillatory = Some(b.oscillatory as f64 / b.count as f64);
        }
    }
    let oscillatory = rows.iter().filter(|r| !r.monotonic).count();
    Ok(ScanReport {
        samples: rows.len(),
        oscillatory,
        fraction_oscillatory: oscillatory as f64 / rows.len() as f64,
        rows,
        bins,
    })
}
