//! Fixed-step RK4 integration with conservation and entropy monitoring.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid, QtError, Result};

/// Distance to stationary below which a trajectory counts as converged.
pub const CONVERGED_DISTANCE: f64 = 1e-6;
/// Slack allowed when checking that a distance is non-increasing.
pub const WITNESS_TOLERANCE: f64 = 1e-9;

type Field<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;
type Evaluator<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Per-sample invariant record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Monitor {
    /// `Σy(t) − Σy(0)`.
    pub sum_drift: f64,
    pub entropy: Option<f64>,
    /// Change of entropy since the previous sample.
    pub entropy_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub monitors: Vec<Monitor>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Largest `|sum drift| / t` over the run.
    pub fn max_drift_rate(&self) -> f64 {
        self.times
            .iter()
            .zip(&self.monitors)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, m)| m.sum_drift.abs() / t)
            .fold(0.0, f64::max)
    }

    /// Most negative per-step entropy change, reported as a positive number (0 if none).
    pub fn max_entropy_decrease(&self) -> f64 {
        self.monitors
            .iter()
            .filter_map(|m| m.entropy_delta)
            .fold(0.0, |acc, d| acc.max(-d))
    }

    /// CSV with header `t,y1..yN,entropy,sum_drift`, keeping every `stride`-th sample
    /// plus the final one. `fmt` renders each number.
    pub fn to_csv(&self, stride: usize, fmt: &dyn Fn(f64) -> String) -> String {
        let stride = stride.max(1);
        let mut out = String::from("t");
        for i in 1..=self.dim() {
            let _ = write!(out, ",y{i}");
        }
        out.push_str(",entropy,sum_drift\n");
        let last = self.len().saturating_sub(1);
        for idx in (0..self.len()).filter(|&i| i % stride == 0 || i == last) {
            out.push_str(&fmt(self.times[idx]));
            for &y in &self.states[idx] {
                out.push(',');
                out.push_str(&fmt(y));
            }
            out.push(',');
            if let Some(s) = self.monitors[idx].entropy {
                out.push_str(&fmt(s));
            }
            out.push(',');
            out.push_str(&fmt(self.monitors[idx].sum_drift));
            out.push('\n');
        }
        out
    }
}

/// Step size `1e-3 / max_rate`; falls back to `1e-3` when there is no rate scale.
pub fn default_dt(max_rate: f64) -> f64 {
    if max_rate > 0.0 && max_rate.is_finite() {
        1e-3 / max_rate
    } else {
        1e-3
    }
}

/// Integrates the autonomous field `rhs` from `y0` to `t_end`.
pub fn integrate<F>(rhs: F, y0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    integrate_inner(&rhs, y0, t_end, dt, None)
}

/// Like [`integrate`] but also records `entropy(y)` at each sample.
pub fn integrate_with_entropy<F, S>(
    rhs: F,
    entropy: S,
    y0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Vec<f64>,
    S: Fn(&[f64]) -> f64,
{
    integrate_inner(&rhs, y0, t_end, dt, Some(&entropy))
}

fn integrate_inner(
    rhs: Field<'_>,
    y0: &[f64],
    t_end: f64,
    dt: f64,
    entropy: Option<Evaluator<'_>>,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive and finite, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(invalid(format!("t_end must be positive and finite, got {t_end}")));
    }
    if y0.is_empty() {
        return Err(invalid("initial state is empty"));
    }
    crate::error::check_finite(y0, "initial state")?;
    let probe = rhs(y0);
    if probe.len() != y0.len() {
        return Err(QtError::DimensionMismatch {
            expected: y0.len(),
            got: probe.len(),
        });
    }

    let full_steps = (t_end / dt).floor() as usize;
    // Absorb a tail shorter than a rounding error into the last full step.
    let tail = t_end - full_steps as f64 * dt;
    let steps = if tail > 1e-12 * t_end { full_steps + 1 } else { full_steps.max(1) };

    let sum0: f64 = crate::util::compensated_sum(y0.iter().copied());
    let s0 = entropy.map(|s| s(y0));
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        monitors: Vec::with_capacity(steps + 1),
    };
    traj.times.push(0.0);
    traj.states.push(y0.to_vec());
    traj.monitors.push(Monitor {
        sum_drift: 0.0,
        entropy: s0,
        entropy_delta: None,
    });

    let mut y = y0.to_vec();
    let mut prev_s = s0;
    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * dt;
        let t_next = if step == steps { t_end } else { step as f64 * dt };
        let h = t_next - t_prev;
        y = rk4_step(rhs, &y, h);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(QtError::Divergence { step });
        }
        let s = entropy.map(|f| f(&y));
        traj.times.push(t_next);
        traj.monitors.push(Monitor {
            sum_drift: crate::util::compensated_sum(y.iter().copied()) - sum0,
            entropy: s,
            entropy_delta: s.zip(prev_s).map(|(a, b)| a - b),
        });
        traj.states.push(y.clone());
        prev_s = s;
    }
    Ok(traj)
}

fn rk4_step(rhs: Field<'_>, y: &[f64], h: f64) -> Vec<f64> {
    let shifted = |k: &[f64], c: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    let k1 = rhs(y);
    let k2 = rhs(&shifted(&k1, h / 2.0));
    let k3 = rhs(&shifted(&k2, h / 2.0));
    let k4 = rhs(&shifted(&k3, h));
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn check_converged(traj: &Trajectory, stationary: &[f64]) -> Result<()> {
    if traj.dim() != stationary.len() {
        return Err(QtError::DimensionMismatch {
            expected: traj.dim(),
            got: stationary.len(),
        });
    }
    let distance = crate::util::max_abs_diff(traj.final_state(), stationary);
    if distance.is_nan() || distance >= CONVERGED_DISTANCE {
        return Err(QtError::Inconclusive { distance });
    }
    Ok(())
}

/// For each component, whether `|y_i(t) − y_i*|` never grows across samples.
pub fn monotonicity_witness(traj: &Trajectory, stationary: &[f64]) -> Result<Vec<bool>> {
    check_converged(traj, stationary)?;
    Ok((0..stationary.len())
        .map(|i| {
            traj.states.windows(2).all(|w| {
                let before = (w[0][i] - stationary[i]).abs();
                let after = (w[1][i] - stationary[i]).abs();
                after <= before + WITNESS_TOLERANCE
            })
        })
        .collect())
}

/// Number of sign changes of `y_i(t) − y_i*` per component, ignoring samples
/// within `WITNESS_TOLERANCE` of the stationary value.
pub fn crossing_counts(traj: &Trajectory, stationary: &[f64]) -> Result<Vec<usize>> {
    check_converged(traj, stationary)?;
    Ok((0..stationary.len())
        .map(|i| {
            let mut last_sign = 0.0_f64;
            let mut count = 0;
            for state in &traj.states {
                let d = state[i] - stationary[i];
                if d.abs() <= WITNESS_TOLERANCE {
                    continue;
                }
                let sign = d.signum();
                if last_sign != 0.0 && sign != last_sign {
                    count += 1;
                }
                last_sign = sign;
            }
            count
        })
        .collect())
}
