//! Command dispatch and artifact writing.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dphase::control::{optimize_control, ControlStatus, Objective, SolutionOperator, TrackingObjective};
use dphase::convexity::{check_sum_lemma, estimate_modulus, ModulusClaim, RealLine, SamplerConfig, SobolevSpace};
use dphase::io::{fmt17, read_csv, to_csv_string};
use dphase::solver::{solve_inner, verify_weak_form};
use dphase::{
    apply_divergence_operator, apply_pseudo_operator, energy, sobolev_norm, Exponents64, Grid64, GridFunction64,
    WeightField64,
};
use thiserror::Error;

use crate::config::{Command, ConvexityTarget, FieldSpec, RunConfig, WeightSpec};

/// Exit status of a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status for configuration and contract errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status for numerical non-convergence.
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{context}: {source}")]
    Numerics {
        context: String,
        #[source]
        source: dphase::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Numerics { source, .. } if is_convergence_failure(source) => EXIT_NOT_CONVERGED,
            _ => EXIT_CONFIG,
        }
    }
}

fn is_convergence_failure(e: &dphase::Error) -> bool {
    use dphase::Error::*;
    matches!(
        e,
        NotConverged(_) | CgNotConverged { .. } | NonPositiveCurvature { .. } | SingularLinearization { .. }
    )
}

trait Context<T> {
    fn context(self, what: &str) -> Result<T, RunError>;
}

impl<T> Context<T> for dphase::Result<T> {
    fn context(self, what: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Numerics {
            context: what.to_string(),
            source,
        })
    }
}

/// What a finished command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    /// Artifact paths in the order they were written.
    pub artifacts: Vec<PathBuf>,
    /// One-line human summary.
    pub summary: String,
}

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default)]
struct Record(Vec<(String, String)>);

impl Record {
    fn text(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    fn real(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, fmt17(value))
    }

    fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }
}

fn header(cfg: &RunConfig, rec: &mut Record) {
    let e = &cfg.exponents;
    rec.text("command", cfg.command.name())
        .text("n", cfg.n)
        .text("m", cfg.m)
        .text("mode", mode_name(cfg))
        .real("p", e.p())
        .real("q", e.q())
        .real("epsilon", e.regularization())
        .text("seed", cfg.seed);
}

fn mode_name(cfg: &RunConfig) -> String {
    if cfg.exponent_spec.equal_growth {
        "equal".into()
    } else {
        cfg.exponent_spec.mode.to_string()
    }
}

/// Loads a field on `grid` from its specification.
pub fn load_field(spec: &FieldSpec, grid: Grid64, what: &str) -> Result<GridFunction64, RunError> {
    match spec {
        FieldSpec::Constant(v) => Ok(GridFunction64::constant(grid, *v)),
        FieldSpec::Preset(p) => Ok(GridFunction64::from_fn(grid, |x| p.eval(x))),
        FieldSpec::Csv(path) => read_grid_csv(path, grid, what),
    }
}

fn read_grid_csv(path: &Path, grid: Grid64, what: &str) -> Result<GridFunction64, RunError> {
    let file = File::open(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let field: GridFunction64 = read_csv(BufReader::new(file)).context(&format!("{what} ({})", path.display()))?;
    if field.grid() != &grid {
        return Err(RunError::Numerics {
            context: format!("{what} ({})", path.display()),
            source: dphase::Error::GridMismatch,
        });
    }
    Ok(field)
}

/// Builds the weight field on `grid` from its specification.
pub fn load_weight(spec: &WeightSpec, grid: Grid64) -> Result<WeightField64, RunError> {
    match spec {
        WeightSpec::Constant(v) => WeightField64::constant(grid, *v).context("weight"),
        WeightSpec::Ramp(v) => {
            let bound = if *v > 0.0 { *v } else { 1.0 };
            WeightField64::from_fn(grid, bound, |x| v * x[0]).context("weight")
        }
        WeightSpec::Csv(path) => {
            let nodal = read_grid_csv(path, grid, "weight")?;
            let bound = nodal.max_abs();
            WeightField64::from_nodal(&nodal, if bound > 0.0 { bound } else { 1.0 }).context("weight")
        }
    }
}

fn trace_csv(header: &str, values: &[f64]) -> String {
    let mut s = format!("iteration,{header}\n");
    for (k, v) in values.iter().enumerate() {
        s.push_str(&format!("{k},{}\n", fmt17(*v)));
    }
    s
}

/// Runs the configured command, writing artifacts under `cfg.out`.
///
/// Wall time is only reported in the summary, never written, so that
/// artifacts of identical runs are byte-identical.
pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let start = Instant::now();
    let grid = Grid64::new(cfg.n, cfg.m).context("grid")?;
    let mut w = Writer::new(&cfg.out)?;
    let (exit_code, summary) = match cfg.command {
        Command::Solve => solve(cfg, grid, &mut w)?,
        Command::CompareOps => compare_ops(cfg, grid, &mut w)?,
        Command::Convexity => convexity(cfg, grid, &mut w)?,
        Command::Control => control(cfg, grid, &mut w)?,
        Command::Exponents => exponents(cfg, &mut w)?,
    };
    Ok(Outcome {
        exit_code,
        artifacts: w.written,
        summary: format!("{summary}; wall_time = {:.3}s", start.elapsed().as_secs_f64()),
    })
}

fn solve(cfg: &RunConfig, grid: Grid64, w: &mut Writer) -> Result<(i32, String), RunError> {
    let f = load_field(&cfg.forcing, grid, "forcing")?;
    let mu = load_weight(&cfg.weight, grid)?;
    let e = &cfg.exponents;
    let report = solve_inner(&f, &mu, e, &cfg.solver).context("solve")?;
    let converged = report.converged();
    let energy_value = energy(&report.u_star, &f, &mu, e).context("energy")?.total;
    let mut rec = Record::default();
    header(cfg, &mut rec);
    rec.text("status", report.status)
        .text("converged", converged)
        .text("iterations", report.iterations)
        .real("final_grad_norm", report.final_grad_norm)
        .real("weak_check", report.weak_check)
        .real("energy", energy_value)
        .real("tol_grad", cfg.solver.tol_grad);
    if converged {
        // Re-derived independently of the solver's bookkeeping.
        let check = verify_weak_form(&report, &f, &mu, e).context("weak-form check")?;
        rec.real("weak_check_bound", cfg.solver.tol_grad * grid.cell_volume())
            .text("weak_check_ok", check <= cfg.solver.tol_grad * grid.cell_volume());
    }
    w.put("u.csv", &to_csv_string(&report.u_star))?;
    w.put("report.txt", &rec.render())?;
    if cfg.dump_energy_trace {
        w.put("energy_trace.csv", &trace_csv("energy", &report.energy_trace))?;
    }
    let code = if converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok((
        code,
        format!(
            "solve: {} after {} iterations, |grad| = {:e}",
            report.status, report.iterations, report.final_grad_norm
        ),
    ))
}

fn compare_ops(cfg: &RunConfig, grid: Grid64, w: &mut Writer) -> Result<(i32, String), RunError> {
    let u = load_field(&cfg.compare_state, grid, "compare.state")?;
    let mu = load_weight(&cfg.weight, grid)?;
    let e = &cfg.exponents;
    let pseudo = apply_pseudo_operator(&u, &mu, e).context("pseudo operator")?;
    let div = apply_divergence_operator(&u, &mu, e).context("divergence operator")?;
    let diff = &pseudo - &div;
    let l2 = diff.l2_norm();
    let scale = pseudo.l2_norm();
    let relative = if scale > 0.0 { l2 / scale } else { l2 };
    let mut rec = Record::default();
    header(cfg, &mut rec);
    rec.real("l2_gap", l2)
        .real("relative_l2_gap", relative)
        .real("max_gap", diff.max_abs())
        .real("pseudo_l2_norm", scale);
    w.put("pseudo.csv", &to_csv_string(&pseudo))?;
    w.put("divergence.csv", &to_csv_string(&div))?;
    w.put("gaps.txt", &rec.render())?;
    Ok((EXIT_OK, format!("compare-ops: relative L2 gap = {relative:e}")))
}

fn convexity(cfg: &RunConfig, grid: Grid64, w: &mut Writer) -> Result<(i32, String), RunError> {
    let e = &cfg.exponents;
    let (p, q) = (e.p(), e.q());
    let sampler = SamplerConfig::new(cfg.seed, cfg.convexity_trials);
    let space = SobolevSpace { grid, exponent: p };
    let norm = |u: &GridFunction64| sobolev_norm(u, p).expect("norm exponent validated");
    let mut files: Vec<(&str, String)> = Vec::new();
    let cert = match cfg.convexity_target {
        ConvexityTarget::Square => estimate_modulus(&RealLine, |x: &f64| x * x, 2.0, &sampler).context("convexity")?,
        ConvexityTarget::Energy => {
            let mu = load_weight(&cfg.weight, grid)?;
            let zero = GridFunction64::zeros(grid);
            let j = |u: &GridFunction64| energy(u, &zero, &mu, e).expect("validated state").total;
            estimate_modulus(&space, j, p, &sampler).context("convexity")?
        }
        ConvexityTarget::SumLemma => {
            let h_cert = estimate_modulus(&space, |u: &GridFunction64| norm(u).powf(p) / p, p, &sampler)
                .context("convexity of |u|^p/p")?;
            let g_cert = estimate_modulus(&space, |u: &GridFunction64| norm(u).powf(q) / q, q, &sampler)
                .context("convexity of |u|^q/q")?;
            files.push(("h_certificate.txt", h_cert.to_record()));
            files.push(("g_certificate.txt", g_cert.to_record()));
            let sum = |u: &GridFunction64| {
                let r = norm(u);
                r.powf(p) / p + r.powf(q) / q
            };
            check_sum_lemma(
                ModulusClaim::from_certificate(&h_cert),
                ModulusClaim::from_certificate(&g_cert),
                &space,
                sum,
                &sampler,
            )
            .context("sum lemma")?
        }
    };
    for (name, text) in files {
        w.put(name, &text)?;
    }
    let target = match cfg.convexity_target {
        ConvexityTarget::Energy => "energy",
        ConvexityTarget::Square => "square",
        ConvexityTarget::SumLemma => "sum-lemma",
    };
    let mut text = format!("target = {target}\n");
    text.push_str(&cert.to_record());
    text.push_str(&format!("passed = {}\n", cert.passed()));
    w.put("certificate.txt", &text)?;
    let code = if cert.passed() { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok((
        code,
        format!(
            "convexity ({target}): c_estimate = {:e}, failures = {}",
            cert.c_estimate, cert.failures
        ),
    ))
}

fn control(cfg: &RunConfig, grid: Grid64, w: &mut Writer) -> Result<(i32, String), RunError> {
    let mu = load_weight(&cfg.weight, grid)?;
    let e: &Exponents64 = &cfg.exponents;
    let ctl = &cfg.control.config;
    let psi = SolutionOperator::new(mu.clone(), *e, ctl.inner.clone()).context("solution operator")?;
    let (target, reference) = match &cfg.control.target_path {
        Some(path) => (read_grid_csv(path, grid, "control.target_path")?, None),
        None => {
            let fhat = load_field(&cfg.control.reference, grid, "control.reference")?;
            (psi.apply(&fhat).context("forward solve of the reference control")?, Some(fhat))
        }
    };
    let obj = TrackingObjective {
        target,
        alpha: ctl.alpha,
    };
    let f0 = load_field(&cfg.forcing, grid, "forcing")?;
    let report = optimize_control(&obj, &f0, &mu, e, ctl).context("control")?;
    let final_objective = *report.objective_trace.last().expect("trace starts at f0");
    let mut rec = Record::default();
    header(cfg, &mut rec);
    rec.text("status", report.status)
        .text("converged", report.converged())
        .text("outer_iterations", report.outer_iters)
        .real("stationarity", report.stationarity)
        .real("tol_reduced", ctl.tol_reduced)
        .real("alpha", ctl.alpha)
        .real("objective", final_objective);
    if let Some(fhat) = &reference {
        let ud = &obj.target;
        rec.real("reference_objective", obj.evaluate(fhat, ud));
    }
    rec.real("f_star_l2_norm", report.f_star.l2_norm());
    w.put("f.csv", &to_csv_string(&report.f_star))?;
    w.put("u.csv", &to_csv_string(&report.u_star))?;
    w.put("report.txt", &rec.render())?;
    if cfg.dump_energy_trace {
        w.put("objective_trace.csv", &trace_csv("objective", &report.objective_trace))?;
    }
    let code = if report.status == ControlStatus::Stationary {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    };
    Ok((
        code,
        format!(
            "control: {} after {} outer iterations, stationarity = {:e}",
            report.status, report.outer_iters, report.stationarity
        ),
    ))
}

fn exponents(cfg: &RunConfig, w: &mut Writer) -> Result<(i32, String), RunError> {
    let e = &cfg.exponents;
    let (p, q, n) = (e.p(), e.q(), cfg.n as f64);
    let mut rec = Record::default();
    rec.text("command", cfg.command.name())
        .text("n", cfg.n)
        .text("mode", mode_name(cfg))
        .real("q", q)
        .real("p", p)
        .real("epsilon", e.regularization())
        .text("strict_sobolev", e.strict_sobolev());
    if q < n {
        rec.real("sobolev_relation_gap", (1.0 / p - (1.0 / q - 1.0 / n)).abs());
    }
    w.put("exponents.txt", &rec.render())?;
    Ok((EXIT_OK, format!("exponents: p = {p}, q = {q}, n = {}", cfg.n)))
}

