use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::composite::{self, CompositeState, CompositeSystem, TsallisCheck};
use crate::dynamics::{default_dt, integrate, integrate_with_entropy, Trajectory};
use crate::lindblad::{self, BlochVector, LindbladChannel, Vec3};
use crate::pme::{self, ProbabilityState, RateFlags, TransitionMatrix};
use crate::qtfit::{self, FitOptions};
use crate::relaxation::{self, RelaxationReport, ScanSpec, ThreeStateRates};
use crate::QtError;

use super::config::{
    Common, CompositeConfig, LindbladConfig, PmeSolveConfig, QtFitConfig, RelaxClassifyConfig,
    RelaxScanConfig,
};
use super::output::{format_real, to_json, write_atomic};
use super::{CliError, RunArgs};

/// Number of seeded sample points behind each reported residual.
const RESIDUAL_SAMPLES_LINDBLAD: usize = 100;
const RESIDUAL_SAMPLES_COMPOSITE: usize = 20;
const PURE_TOL: f64 = 1e-12;

struct Sink<'a> {
    dir: &'a Path,
    precision: usize,
}

impl Sink<'_> {
    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = to_json(value, self.precision).map_err(|e| CliError::Io(e.to_string()))?;
        write_atomic(self.dir, name, &text).map_err(|e| CliError::Io(format!("{name}: {e}")))
    }

    fn text(&self, name: &str, text: &str) -> Result<(), CliError> {
        write_atomic(self.dir, name, text).map_err(|e| CliError::Io(format!("{name}: {e}")))
    }

    fn trajectory(&self, traj: &Trajectory, stride: usize) -> Result<(), CliError> {
        let p = self.precision;
        self.text("trajectory.csv", &traj.to_csv(stride, &|v| format_real(v, p)))
    }
}

fn output_dir<'a>(args: &'a RunArgs, cfg: &'a impl Common) -> Result<&'a Path, CliError> {
    args.out
        .as_deref()
        .or_else(|| cfg.out())
        .ok_or_else(|| CliError::Invalid("no output directory: pass --out or set \"out\"".into()))
}

fn eigen_pairs(z: &[nalgebra::Complex<f64>]) -> Vec<[f64; 2]> {
    z.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Serialize)]
struct PmeReport {
    stationary: Vec<f64>,
    eigenvalues: Vec<[f64; 2]>,
    flags: RateFlags,
    final_state: Vec<f64>,
    t_end: f64,
    dt: f64,
}

pub fn pme_solve(args: &RunArgs, cfg: PmeSolveConfig) -> Result<(), CliError> {
    let dir = output_dir(args, &cfg)?;
    let w = TransitionMatrix::from_rows(&cfg.w)?;
    let p0 = ProbabilityState::new(cfg.p0.clone())?;
    if p0.dim() != w.dim() {
        return Err(QtError::DimensionMismatch {
            expected: w.dim(),
            got: p0.dim(),
        }
        .into());
    }
    let stationary: Vec<f64> = pme::stationary_state(&w)?.into();
    let dt = cfg.dt.unwrap_or_else(|| default_dt(w.max_rate()));
    let traj = integrate_with_entropy(
        |p| pme::pme_rhs(&w, p).expect("dimension checked"),
        pme::bs_entropy,
        p0.as_slice(),
        cfg.t_end,
        dt,
    )?;
    let report = PmeReport {
        stationary,
        eigenvalues: eigen_pairs(&pme::spectrum(&w).eigenvalues),
        flags: pme::classify_w(&w),
        final_state: traj.final_state().to_vec(),
        t_end: cfg.t_end,
        dt,
    };
    let sink = Sink {
        dir,
        precision: cfg.precision,
    };
    sink.trajectory(&traj, args.stride)?;
    sink.json("report.json", &report)
}

pub fn qt_fit(args: &RunArgs, cfg: QtFitConfig) -> Result<(), CliError> {
    let dir = output_dir(args, &cfg)?;
    let w = TransitionMatrix::from_rows(&cfg.w)?;
    let mut opts = FitOptions {
        seed: cfg.seed,
        ..FitOptions::default()
    };
    if let Some(m) = cfg.max_restarts {
        if m == 0 {
            return Err(CliError::Invalid("max_restarts must be at least 1".into()));
        }
        opts.max_restarts = m;
    }
    if let Some(t) = cfg.tolerance {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Invalid(format!("tolerance must be positive, got {t}")));
        }
        opts.tolerance = t;
    }
    let sink = Sink {
        dir,
        precision: cfg.precision,
    };
    match qtfit::fit_with(&w, &opts) {
        Ok(rep) => sink.json("representation.json", &rep),
        Err(QtError::NonConvergence {
            best_residual,
            best,
        }) => {
            sink.json("representation.json", &*best)?;
            Err(CliError::NonConvergence(format!(
                "QT fit did not converge: best residual {best_residual:.3e}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct ClassifyOutput {
    rates: ThreeStateRates,
    #[serde(flatten)]
    report: RelaxationReport,
}

pub fn relax_classify(args: &RunArgs, cfg: RelaxClassifyConfig) -> Result<(), CliError> {
    let dir = output_dir(args, &cfg)?;
    let out = ClassifyOutput {
        rates: cfg.rates,
        report: relaxation::classify(&cfg.rates),
    };
    Sink {
        dir,
        precision: cfg.precision,
    }
    .json("report.json", &out)
}

#[derive(Serialize)]
struct ScanSummary {
    seed: u64,
    low: f64,
    high: f64,
    constraint: relaxation::ScanConstraint,
    #[serde(flatten)]
    report: relaxation::ScanReport,
}

fn scan_threads() -> Result<Option<usize>, CliError> {
    match std::env::var("QTK_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Invalid(format!(
                "QTK_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

pub fn relax_scan(args: &RunArgs, cfg: RelaxScanConfig) -> Result<(), CliError> {
    let dir = output_dir(args, &cfg)?;
    let spec = ScanSpec {
        samples: cfg.samples,
        low: cfg.low,
        high: cfg.high,
        constraint: cfg.constraint,
        bins: cfg.bins,
    };
    let report = match scan_threads()? {
        None => relaxation::scan(&spec, cfg.seed)?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(|| relaxation::scan(&spec, cfg.seed))?,
    };

    let p = cfg.precision;
    let mut csv = String::from("a,b,c,d,e,f,xi,disc,omega,u,v,monotonic\n");
    for row in &report.rows {
        let nums = row
            .rates
            .as_array()
            .into_iter()
            .chain([row.xi, row.disc, row.omega, row.u, row.v]);
        for v in nums {
            csv.push_str(&format_real(v, p));
            csv.push(',');
        }
        csv.push_str(if row.monotonic { "true\n" } else { "false\n" });
    }
    let summary = ScanSummary {
        seed: cfg.seed,
        low: cfg.low,
        high: cfg.high,
        constraint: cfg.constraint,
        report,
    };
    let sink = Sink { dir, precision: p };
    sink.text("scan.csv", &csv)?;
    sink.json("summary.json", &summary)
}

#[derive(Serialize)]
struct LindbladReport {
    stationary: Vec3,
    stationary_norm: f64,
    pure: bool,
    gradient_residual: Option<f64>,
    six_state_residual: Option<f64>,
    final_state: Vec<f64>,
    t_end: f64,
    dt: f64,
}

fn ball_points(seed: u64, count: usize) -> Vec<BlochVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() <= 1.0 {
            out.push(BlochVector(v));
        }
    }
    out
}

pub fn lindblad(args: &RunArgs, cfg: LindbladConfig) -> Result<(), CliError> {
    let dir = output_dir(args, &cfg)?;
    let channel = LindbladChannel {
        h: cfg.h,
        dissipators: cfg.dissipators.clone(),
    };
    channel.validate()?;
    if channel.dissipators.is_empty() {
        return Err(CliError::Invalid("channel needs at least one dissipator".into()));
    }
    let pair = match channel.gradient_pair() {
        Ok(pair) => Some(pair),
        Err(e) if cfg.gradient_check => return Err(e.into()),
        Err(_) => None,
    };
    let p0 = BlochVector::new(cfg.p0[0], cfg.p0[1], cfg.p0[2]);
    crate::error::check_finite(&cfg.p0, "P0")?;
    if !p0.is_physical() {
        return Err(CliError::Invalid(format!("|P0| = {} exceeds 1", p0.norm())));
    }

    let stationary = match &pair {
        Some((a, b)) => lindblad::stationary_bloch(a, b)?,
        None => lindblad::stationary_general(&channel)?,
    };
    let rate_scale = channel.h.norm()
        + channel
            .dissipators
            .iter()
            .map(|d| d.a.norm_squared() + d.b.norm_squared())
            .sum::<f64>();
    let dt = cfg.dt.unwrap_or_else(|| default_dt(rate_scale));
    let field = |y: &[f64]| {
        let v = lindblad::bloch_rhs(&channel, &BlochVector::new(y[0], y[1], y[2]));
        vec![v.x, v.y, v.z]
    };
    let traj = match &pair {
        Some((a, b)) => integrate_with_entropy(
            field,
            |y| lindblad::bloch_entropy(a, b, &BlochVector::new(y[0], y[1], y[2])),
            &cfg.p0,
            cfg.t_end,
            dt,
        )?,
        None => integrate(field, &cfg.p0, cfg.t_end, dt)?,
    };

    let (gradient_residual, six_state_residual) = match &pair {
        Some((a, b)) => {
            let mut grad_worst: f64 = 0.0;
            let mut six_worst: f64 = 0.0;
            for p in ball_points(cfg.seed, RESIDUAL_SAMPLES_LINDBLAD) {
                let flow = lindblad::bloch_rhs(&channel, &p);
                grad_worst = grad_worst.max((flow - lindblad::gradient_rhs(a, b, &p)).amax());
                let six = lindblad::qt_six_rhs(a, b, &lindblad::embed_six(&p))?;
                six_worst = six_worst.max((flow - lindblad::extract_velocity(&six)).amax());
            }
            (Some(grad_worst), Some(six_worst))
        }
        None => (None, None),
    };

    let report = LindbladReport {
        stationary: stationary.0,
        stationary_norm: stationary.norm(),
        pure: (stationary.norm() - 1.0).abs() < PURE_TOL,
        gradient_residual,
        six_state_residual,
        final_state: traj.final_state().to_vec(),
        t_end: cfg.t_end,
        dt,
    };
    let sink = Sink {
        dir,
        precision: cfg.precision,
    };
    sink.trajectory(&traj, args.stride)?;
    sink.json("report.json", &report)
}

#[derive(Serialize)]
struct CompositeReport {
    a: f64,
    c: f64,
    k: f64,
    lambda: f64,
    q: f64,
    gradient_residual: f64,
    stationary: Vec<f64>,
    tsallis: TsallisCheck,
}

fn simplex_points<const N: usize>(seed: u64, count: usize) -> Vec<[f64; N]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let raw: [f64; N] = std::array::from_fn(|_| rng.gen_range(1e-3..1.0));
            let total: f64 = raw.iter().sum();
            raw.map(|x| x / total)
        })
        .collect()
}

pub fn composite(args: &RunArgs, cfg: CompositeConfig) -> Result<(), CliError> {
    let dir = output_dir(args, &cfg)?;
    let sys = CompositeSystem::new(cfg.a, cfg.c, cfg.k)?;
    let states = simplex_points::<4>(cfg.seed, RESIDUAL_SAMPLES_COMPOSITE)
        .into_iter()
        .map(CompositeState::new)
        .collect::<Result<Vec<_>, _>>()?;
    let report = CompositeReport {
        a: sys.a,
        c: sys.c,
        k: sys.boltzmann_k,
        lambda: sys.lambda,
        q: composite::q_parameter(&sys),
        gradient_residual: composite::gradient_residual(&sys, &states)?,
        stationary: composite::stationary(&sys)?,
        tsallis: composite::tsallis_check(&sys),
    };
    Sink {
        dir,
        precision: cfg.precision,
    }
    .json("report.json", &report)
}
