//! Fitting an entropy-gradient (QT) form to a Pauli generator.
//!
//! The QT right-hand side is
//!
//! ```text
//! dp/dt = s · P(q p) + norm² Σ_α r_α H^(α)(q p)
//! ```
//!
//! where `P` is the simplex projection (the collapsed double ε contraction),
//! `H^(α)` are the Hamiltonian-like contractions built from the ones-vector
//! and `N−3` hyperplane basis vectors, `norm` is the per-factor ε
//! normalizer and `s = norm² N (N−2)!` rescales the projection accordingly.
//! With the default normalizer `s = 1`.
//!
//! For fixed `r` the flow is linear in the symmetric matrix `q`, so the fit
//! is nested: an exact least-squares solve for the gauge-fixed entries of `q`
//! inside a Levenberg-Marquardt loop over `r`. The outer loop is seeded with
//! the exact solution of the bilinear problem: writing `A` for the generator
//! restricted to the hyperplane `Σ p = 0` (orthonormal coordinates), the
//! factorization `A = (I + K) S` with `K` antisymmetric and `S` symmetric
//! holds iff `A K + K Aᵀ = A − Aᵀ`, a linear equation in `K` that is uniquely
//! solvable whenever no two nonzero eigenvalues of the generator sum to zero
//! (always true for irreducible chains).

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, QtError, Result};
use crate::multilinear::{self, difference_vector, ham_matrix, ham_term, main_term_closed};
use crate::pme::{build_generator, TransitionMatrix};
use crate::relaxation::ThreeStateRates;

/// `S(p) = ½ pᵀ q p` with `q` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEntropy {
    q: DMatrix<f64>,
}

impl QuadraticEntropy {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() < 2 {
            return Err(invalid(format!(
                "entropy matrix must be square with N >= 2, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        check_finite(q.as_slice(), "entropy matrix")?;
        let scale = q.abs().max().max(1.0);
        if (&q - q.transpose()).abs().max() > 1e-14 * scale {
            return Err(invalid("entropy matrix is not symmetric"));
        }
        Ok(Self {
            q: (&q + q.transpose()) * 0.5,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("entropy matrix rows must all have length N"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, k| rows[i][k]))
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        (&self.q * DVector::from_column_slice(p)).as_slice().to_vec()
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        let p = DVector::from_column_slice(p);
        0.5 * p.dot(&(&self.q * &p))
    }

    /// `q → q + k · (all-ones)`, i.e. `S → S + (k/2)(Σ p)²`.
    pub fn gauge_shifted(&self, k: f64) -> Self {
        Self {
            q: self.q.add_scalar(k),
        }
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.q.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Difference basis `e_β − e_{β+1}` of the hyperplane orthogonal to the
/// ones-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneBasis {
    pub vectors: Vec<Vec<f64>>,
}

pub fn hyperplane_basis(n: usize) -> Result<HyperplaneBasis> {
    if n < 2 {
        return Err(invalid(format!("dimension must be at least 2, got {n}")));
    }
    Ok(HyperplaneBasis {
        vectors: (0..n - 1).map(|b| difference_vector(n, b)).collect(),
    })
}

/// All `(N−3)`-subsets of the `N−1` hyperplane basis vectors (0-based), in
/// lexicographic order. Empty for `N = 2`; `[[]]` for `N = 3`.
pub fn ham_subsets(n: usize) -> Result<Vec<Vec<usize>>> {
    match n {
        0 | 1 => Err(invalid(format!("dimension must be at least 2, got {n}"))),
        2 => Ok(Vec::new()),
        _ => Ok((0..n - 1).combinations(n - 3).collect()),
    }
}

/// `(N−1)(N−2)/2`.
pub fn ham_term_count(n: usize) -> usize {
    (n - 1) * (n - 2) / 2
}

/// Free parameters of the representation: `N(N+1)/2 − 1` gauge-fixed
/// entropy entries plus `(N−1)(N−2)/2` Hamiltonian-like coefficients.
pub fn free_parameter_count(n: usize) -> usize {
    let count = n * (n + 1) / 2 - 1 + ham_term_count(n);
    assert_eq!(count, n * (n - 1), "QT parameter count must match the PME");
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RepresentationWire", try_from = "RepresentationWire")]
pub struct QtRepresentation {
    pub entropy: QuadraticEntropy,
    pub r: Vec<f64>,
    pub subsets: Vec<Vec<usize>>,
    pub norm: f64,
    /// Max-abs mismatch against the generator it was fitted to; zero for
    /// hand-built representations.
    pub residual: f64,
}

impl QtRepresentation {
    pub fn new(entropy: QuadraticEntropy, r: Vec<f64>, norm: f64) -> Result<Self> {
        let n = entropy.dim();
        let subsets = ham_subsets(n)?;
        if r.len() != subsets.len() {
            return Err(invalid(format!(
                "expected {} Hamiltonian-like coefficients for N = {n}, got {}",
                subsets.len(),
                r.len()
            )));
        }
        check_finite(&r, "r")?;
        if !(norm.is_finite() && norm > 0.0) {
            return Err(invalid(format!("normalizer must be positive, got {norm}")));
        }
        Ok(Self {
            entropy,
            r,
            subsets,
            norm,
            residual: 0.0,
        })
    }

    /// Representation with the default normalizer `1/sqrt(N (N−2)!)`.
    pub fn with_default_norm(entropy: QuadraticEntropy, r: Vec<f64>) -> Result<Self> {
        let norm = multilinear::normalizer(entropy.dim())?;
        Self::new(entropy, r, norm)
    }

    pub fn dim(&self) -> usize {
        self.entropy.dim()
    }

    fn main_scale(&self) -> f64 {
        let n = self.dim();
        let reference = multilinear::normalizer(n).expect("n >= 2");
        (self.norm / reference).powi(2)
    }

    /// The linear map `g ↦ dp/dt` applied to entropy gradients.
    pub fn flow_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut f = projector(n) * self.main_scale();
        let c = self.norm * self.norm;
        for (r, subset) in self.r.iter().zip(&self.subsets) {
            f += ham_matrix(n, subset).expect("valid subset") * (c * r);
        }
        f
    }

    /// The generator reproduced by this representation: `flow · q`.
    pub fn generator(&self) -> DMatrix<f64> {
        self.flow_matrix() * self.entropy.matrix()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepresentationWire {
    n: usize,
    q: Vec<Vec<f64>>,
    r: Vec<f64>,
    subsets: Vec<Vec<usize>>,
    norm: f64,
    residual: f64,
}

impl From<QtRepresentation> for RepresentationWire {
    fn from(rep: QtRepresentation) -> Self {
        Self {
            n: rep.dim(),
            q: rep.entropy.to_rows(),
            r: rep.r,
            subsets: rep.subsets,
            norm: rep.norm,
            residual: rep.residual,
        }
    }
}

impl TryFrom<RepresentationWire> for QtRepresentation {
    type Error = QtError;
    fn try_from(w: RepresentationWire) -> Result<Self> {
        let entropy = QuadraticEntropy::from_rows(&w.q)?;
        if entropy.dim() != w.n {
            return Err(invalid("n does not match the size of q"));
        }
        let mut rep = Self::new(entropy, w.r, w.norm)?;
        if rep.subsets != w.subsets {
            return Err(invalid("subsets do not match the canonical catalog"));
        }
        rep.residual = w.residual;
        Ok(rep)
    }
}

fn projector(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n).add_scalar(-1.0 / n as f64)
}

fn check_dim(rep: &QtRepresentation, p: &[f64]) -> Result<()> {
    if p.len() != rep.dim() {
        return Err(QtError::DimensionMismatch {
            expected: rep.dim(),
            got: p.len(),
        });
    }
    Ok(())
}

/// QT right-hand side evaluated term by term from the contractions.
pub fn qt_rhs(rep: &QtRepresentation, p: &[f64]) -> Result<Vec<f64>> {
    check_dim(rep, p)?;
    let g = rep.entropy.gradient(p);
    let scale = rep.main_scale();
    let mut out: Vec<f64> = main_term_closed(&g)?.into_iter().map(|x| scale * x).collect();
    let c = rep.norm * rep.norm;
    for (r, subset) in rep.r.iter().zip(&rep.subsets) {
        for (o, h) in out.iter_mut().zip(ham_term(&g, subset)?) {
            *o += c * r * h;
        }
    }
    Ok(out)
}

pub fn entropy_value(rep: &QtRepresentation, p: &[f64]) -> Result<f64> {
    check_dim(rep, p)?;
    Ok(rep.entropy.value(p))
}

/// Diagonal two-state entropy for the unnormalized two-variable form
/// `dp_i/dt = ε_ik ∂H/∂p_k {S, H}`.
///
/// With `ε_12 = +1` the flow is `dp1/dt = ∂S/∂p1 − ∂S/∂p2`, so reproducing
/// `dp1/dt = W12 p2 − W21 p1` needs `S = −W21 p1²/2 − W12 p2²/2`.
pub fn two_state_entropy(w: &TransitionMatrix) -> Result<QuadraticEntropy> {
    if w.dim() != 2 {
        return Err(QtError::DimensionMismatch {
            expected: 2,
            got: w.dim(),
        });
    }
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![-w.rate(1, 0), -w.rate(0, 1)]));
    QuadraticEntropy::new(q)
}

/// `κ = (b+c+f)/(a+d+e)` and `r = (1−κ)/(1+κ)`. With `a+d+e = 0` and
/// `b+c+f > 0` this is the limit `(∞, −1)`.
pub fn three_state_kappa_r(rates: &ThreeStateRates) -> Result<(f64, f64)> {
    let forward = rates.a + rates.d + rates.e;
    let backward = rates.b + rates.c + rates.f;
    if forward == 0.0 {
        if backward > 0.0 {
            return Ok((f64::INFINITY, -1.0));
        }
        return Err(QtError::Degenerate(
            "all rates vanish; kappa is undefined".into(),
        ));
    }
    let kappa = backward / forward;
    Ok((kappa, (1.0 - kappa) / (1.0 + kappa)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Seed for the perturbed multi-start points.
    pub seed: u64,
    /// Total number of outer starting points tried.
    pub max_restarts: usize,
    /// Accepted residual.
    pub tolerance: f64,
    /// Start from the exact linear solution before the generic starts.
    pub analytic_seed: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_restarts: 50,
            tolerance: 1e-8,
            analytic_seed: true,
        }
    }
}

pub fn fit(w: &TransitionMatrix) -> Result<QtRepresentation> {
    fit_with(w, &FitOptions::default())
}

pub fn fit_with(w: &TransitionMatrix, opts: &FitOptions) -> Result<QtRepresentation> {
    let n = w.dim();
    free_parameter_count(n);
    let l = build_generator(w);

    if n == 2 {
        // The two-variable form carries no ε normalizer.
        let mut rep = QtRepresentation::new(two_state_entropy(w)?, Vec::new(), 1.0)?;
        rep.residual = map_residual(&rep.generator(), &l);
        return finish(rep, opts.tolerance);
    }

    let problem = FitProblem::new(l)?;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if opts.analytic_seed {
        if let Some(r) = problem.analytic_seed() {
            starts.push(r);
        }
    }
    starts.push(vec![0.0; problem.ham.len()]);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut best: Option<(Vec<f64>, DMatrix<f64>, f64)> = None;
    for attempt in 0..opts.max_restarts.max(1) {
        let start = starts.get(attempt).cloned().unwrap_or_else(|| {
            (0..problem.ham.len())
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect()
        });
        let (r, q, residual) = problem.refine(start, opts.tolerance);
        let better = best.as_ref().is_none_or(|b| residual < b.2);
        if better {
            best = Some((r, q, residual));
        }
        if residual <= opts.tolerance {
            break;
        }
    }
    let (r, q, residual) = best.expect("at least one start");
    let mut rep = QtRepresentation::new(QuadraticEntropy::new(q)?, r, problem.norm)?;
    rep.residual = residual;
    finish(rep, opts.tolerance)
}

fn finish(rep: QtRepresentation, tolerance: f64) -> Result<QtRepresentation> {
    if rep.residual <= tolerance {
        Ok(rep)
    } else {
        Err(QtError::NonConvergence {
            best_residual: rep.residual,
            best: Box::new(rep),
        })
    }
}

/// Max-abs difference of two linear maps on the hyperplane difference basis
/// plus the simplex centroid.
pub fn map_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let diff = a - b;
    (0..n)
        .map(|j| {
            let v = if j + 1 < n {
                DVector::from_vec(difference_vector(n, j))
            } else {
                DVector::from_element(n, 1.0 / n as f64)
            };
            (&diff * v).abs().max()
        })
        .fold(0.0, f64::max)
}

/// Representation residual against a transition matrix.
pub fn residual_against(rep: &QtRepresentation, w: &TransitionMatrix) -> Result<f64> {
    if rep.dim() != w.dim() {
        return Err(QtError::DimensionMismatch {
            expected: rep.dim(),
            got: w.dim(),
        });
    }
    Ok(map_residual(&rep.generator(), &build_generator(w)))
}

struct FitProblem {
    n: usize,
    l: DMatrix<f64>,
    projector: DMatrix<f64>,
    /// `norm² · H^(α)` as matrices.
    ham: Vec<DMatrix<f64>>,
    norm: f64,
    /// Upper-triangle entries of `q` left free after gauge fixing
    /// `q[N−1][N−1] = 0`.
    unknowns: Vec<(usize, usize)>,
}

impl FitProblem {
    fn new(l: DMatrix<f64>) -> Result<Self> {
        let n = l.nrows();
        let norm = multilinear::normalizer(n)?;
        let ham = ham_subsets(n)?
            .iter()
            .map(|s| ham_matrix(n, s).map(|m| m * (norm * norm)))
            .collect::<Result<Vec<_>>>()?;
        let unknowns: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i..n).map(move |k| (i, k)))
            .filter(|&(i, k)| !(i == n - 1 && k == n - 1))
            .collect();
        debug_assert_eq!(unknowns.len() + ham.len(), n * (n - 1));
        Ok(Self {
            n,
            l,
            projector: projector(n),
            ham,
            norm,
            unknowns,
        })
    }

    fn flow(&self, r: &[f64]) -> DMatrix<f64> {
        let mut f = self.projector.clone();
        for (ri, h) in r.iter().zip(&self.ham) {
            f += h * *ri;
        }
        f
    }

    /// Least-squares `q` for fixed `r`.
    fn inner(&self, r: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let f = self.flow(r);
        let mut design = DMatrix::zeros(n * n, self.unknowns.len());
        for (j, &(a, b)) in self.unknowns.iter().enumerate() {
            // F · E_ab has column b equal to F[:, a] and column a equal to F[:, b].
            let mut fe = DMatrix::zeros(n, n);
            fe.set_column(b, &f.column(a));
            if a != b {
                fe.set_column(a, &f.column(b));
            }
            design.set_column(j, &DVector::from_column_slice(fe.as_slice()));
        }
        let target = DVector::from_column_slice(self.l.as_slice());
        let theta = least_squares(design, target);
        let mut q = DMatrix::zeros(n, n);
        for (&(a, b), t) in self.unknowns.iter().zip(theta.iter()) {
            q[(a, b)] = *t;
            q[(b, a)] = *t;
        }
        q
    }

    fn evaluate(&self, r: &[f64]) -> (DMatrix<f64>, DVector<f64>, f64) {
        let q = self.inner(r);
        let diff = self.flow(r) * &q - &self.l;
        let metric = map_residual(&(&diff + &self.l), &self.l);
        (q, DVector::from_column_slice(diff.as_slice()), metric)
    }

    /// Levenberg-Marquardt over `r` with the inner solve projected out.
    fn refine(&self, start: Vec<f64>, tolerance: f64) -> (Vec<f64>, DMatrix<f64>, f64) {
        let m = start.len();
        let mut r = start;
        let (mut q, mut res, mut metric) = self.evaluate(&r);
        let mut cost = res.norm_squared();
        let mut mu = 1e-3;
        for _ in 0..200 {
            if metric <= 0.01 * tolerance || m == 0 {
                break;
            }
            let mut jac = DMatrix::zeros(res.len(), m);
            for j in 0..m {
                let h = 1e-6 * r[j].abs().max(1.0);
                let mut rp = r.clone();
                rp[j] += h;
                let mut rm = r.clone();
                rm[j] -= h;
                let col = (self.evaluate(&rp).1 - self.evaluate(&rm).1) / (2.0 * h);
                jac.set_column(j, &col);
            }
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &res;
            let mut improved = false;
            while mu < 1e12 {
                let mut damped = jtj.clone();
                for i in 0..m {
                    damped[(i, i)] += mu * (jtj[(i, i)] + 1e-12);
                }
                let Some(step) = damped.lu().solve(&(-&grad)) else {
                    mu *= 4.0;
                    continue;
                };
                let trial: Vec<f64> = r.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let (tq, tres, tmetric) = self.evaluate(&trial);
                let tcost = tres.norm_squared();
                if tcost < cost {
                    r = trial;
                    q = tq;
                    res = tres;
                    metric = tmetric;
                    cost = tcost;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (r, q, metric)
    }

    /// Exact `r` from the linear equation `A K + K Aᵀ = A − Aᵀ`.
    fn analytic_seed(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let d = n - 1;
        let diffs = DMatrix::from_fn(n, d, |i, b| difference_vector(n, b)[i]);
        let v = diffs.qr().q();
        let a = v.transpose() * &self.l * &v;
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
        let mut system = DMatrix::zeros(pairs.len(), pairs.len());
        for (c, &(i, j)) in pairs.iter().enumerate() {
            let mut e = DMatrix::zeros(d, d);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            let img = &a * &e + &e * a.transpose();
            for (row, &(x, y)) in pairs.iter().enumerate() {
                system[(row, c)] = img[(x, y)];
            }
        }
        let skew = &a - a.transpose();
        let rhs = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(x, y)| skew[(x, y)]));
        let k = system.lu().solve(&rhs)?;
        if k.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let mut k_small = DMatrix::zeros(d, d);
        for (&(i, j), val) in pairs.iter().zip(k.iter()) {
            k_small[(i, j)] = *val;
            k_small[(j, i)] = -*val;
        }
        let k_full = &v * k_small * v.transpose();

        let mut design = DMatrix::zeros(n * n, self.ham.len());
        for (j, h) in self.ham.iter().enumerate() {
            design.set_column(j, &DVector::from_column_slice(h.as_slice()));
        }
        let target = DVector::from_column_slice(k_full.as_slice());
        let r = least_squares(design, target);
        Some(r.iter().copied().collect())
    }
}

/// Least squares for a tall design of full column rank via Householder QR,
/// with an SVD fallback if the triangular factor is singular.
fn least_squares(design: DMatrix<f64>, target: DVector<f64>) -> DVector<f64> {
    let cols = design.ncols();
    let qr = design.clone().qr();
    let mut rhs = target.clone();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().all(|d| d.abs() > 1e-12 * scale) {
        if let Some(x) = r.solve_upper_triangular(&rhs.rows(0, cols)) {
            return x;
        }
    }
    design
        .svd(true, true)
        .solve(&target, 1e-13 * scale)
        .expect("SVD with both factors")
}
