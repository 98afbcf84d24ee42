use crate::error::CliError;
use crate::export::{read_series, read_text, write_json, write_series, Series};
use fracctl::frac_ode::{PcOptions, PiecewiseControl};
use fracctl::grid::{SampledFunction, TimeGrid};
use fracctl::linear_control::{apply_control, observability_constant, synthesize_linear};
use fracctl::nonlinear_control::{fixed_point_solve, resimulate, BoundConstants, IterationRecord, RESIM_PASSES, RESIM_REFINE};
use fracctl::problem::{Numerics, ProblemSpec};
use fracctl::special_functions::{mittag_leffler, MlQuery};
use fracctl::transition::build_kernels;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const REPORT_JSON: &str = "report.json";
pub const LINEAR_CSV: &str = "linear_trajectory.csv";
pub const LINEAR_JSON: &str = "linear_law.json";
pub const VERIFY_JSON: &str = "verify.json";
pub const ML_CSV: &str = "mittag_leffler.csv";

/// Grid refinement and corrector passes of the `verify` re-simulation.
pub const VERIFY_REFINE: usize = 8;
pub const VERIFY_PASSES: usize = 2;

/// Command-line overrides of the numerics block.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n_steps: Option<usize>,
    pub fp_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub damping: Option<f64>,
    pub seed: Option<u64>,
}

pub fn load_problem(path: &Path, o: &Overrides) -> Result<ProblemSpec, CliError> {
    let text = read_text(path).map_err(|e| match e {
        CliError::Io { context, source } if source.kind() == std::io::ErrorKind::NotFound => {
            CliError::Input(format!("{context}: spec file not found"))
        }
        other => other,
    })?;
    let mut spec: ProblemSpec = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let nm = &mut spec.numerics;
    if let Some(v) = o.n_steps {
        nm.n_steps = v;
    }
    if let Some(v) = o.fp_tol {
        nm.fp_tol = v;
    }
    if let Some(v) = o.max_iter {
        nm.max_iter = v;
    }
    if let Some(v) = o.damping {
        nm.damping = v;
    }
    if let Some(v) = o.seed {
        spec.seed = v;
    }
    spec.validate()?;
    Ok(spec)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("out-dir {}", dir.display()), e))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramianSummary {
    pub matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub nonsingular: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearReport {
    pub problem: ProblemSpec,
    /// The linear subcommand freezes f at the origin: coefficient -A f(0).
    pub frozen_field: f64,
    pub z_hat_b: Vec<f64>,
    pub gramian: GramianSummary,
    pub observability_constant: Option<f64>,
    pub psi_ab: Vec<Vec<f64>>,
    pub control_l2_norm: f64,
    pub terminal_error: f64,
    pub terminal_tolerance: f64,
    pub trajectory_csv: String,
}

pub fn run_linear(spec: &ProblemSpec, out_dir: &Path) -> Result<LinearReport, CliError> {
    let n = spec.numerics.n_steps;
    let grid = TimeGrid::new(0.0, spec.t_final, n)?;
    let f0 = spec.f.eval(&DVector::<f64>::zeros(spec.d));
    let g = SampledFunction::scalar_from_fn(grid, |_| f0)?;
    let kernel = build_kernels(&(-spec.a_matrix()), &g, spec.alpha, spec.numerics.pb_tol)?;
    let b = spec.b_matrix();
    let y0 = spec.y0_vector();
    let yt = spec.y_t_vector();
    let law = synthesize_linear(&kernel, &b, &y0, &yt)?;
    let y = apply_control(&kernel, &b, &law.u, &y0)?;
    let obs = observability_constant(&kernel, &b)?;
    let terminal_error = (y.value(n) - &yt).norm();
    ensure_dir(out_dir)?;
    let series = Series { t: grid.nodes(), y: y.values().to_vec(), u: law.u.values().to_vec() };
    write_series(&out_dir.join(LINEAR_CSV), &series)?;
    let report = LinearReport {
        problem: spec.clone(),
        frozen_field: f0,
        z_hat_b: law.z_hat_b.as_slice().to_vec(),
        gramian: GramianSummary {
            matrix: rows(law.gramian.matrix()),
            min_eigenvalue: law.gramian.min_eigenvalue(),
            max_eigenvalue: law.gramian.max_eigenvalue(),
            nonsingular: law.gramian.is_nonsingular(),
        },
        observability_constant: obs.constant,
        psi_ab: rows(&kernel.psi_ab()),
        control_l2_norm: law.l2_norm,
        terminal_error,
        terminal_tolerance: spec.numerics.terminal_tol * (1.0 + yt.norm()),
        trajectory_csv: LINEAR_CSV.to_string(),
    };
    write_json(&out_dir.join(LINEAR_JSON), &report)?;
    Ok(report)
}

/// The control is zero up to node `node` and continues from `right` after it.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ControlJump {
    pub node: usize,
    pub t: f64,
    pub right: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonlinearReport {
    pub problem: ProblemSpec,
    pub converged: bool,
    pub fixed_point_converged: bool,
    pub terminal_error: f64,
    pub terminal_tolerance: f64,
    /// Refinement and corrector passes of the re-simulation giving `terminal_error`.
    pub resimulation: (usize, usize),
    pub audits_pass: bool,
    pub control_l2_norm: f64,
    pub constants: BoundConstants,
    pub control_jump: Option<ControlJump>,
    pub power_tail: bool,
    pub numerics: Numerics,
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    pub trajectory_csv: String,
}

pub fn run_nonlinear(spec: &ProblemSpec, out_dir: &Path) -> Result<NonlinearReport, CliError> {
    let rep = fixed_point_solve::<f64>(spec, &spec.numerics)?;
    ensure_dir(out_dir)?;
    let grid = *rep.trajectory.grid();
    let series = Series { t: grid.nodes(), y: rep.trajectory.values().to_vec(), u: rep.control.samples.values().to_vec() };
    write_series(&out_dir.join(TRAJECTORY_CSV), &series)?;
    let report = NonlinearReport {
        problem: spec.clone(),
        converged: rep.converged,
        fixed_point_converged: rep.fixed_point_converged,
        terminal_error: rep.terminal_error,
        terminal_tolerance: rep.terminal_tolerance,
        resimulation: (RESIM_REFINE, RESIM_PASSES),
        audits_pass: rep.audits_pass(),
        control_l2_norm: rep.control_l2_norm,
        constants: rep.constants,
        control_jump: rep.control.jump.as_ref().map(|(s, r)| ControlJump { node: *s, t: grid.node(*s), right: r.as_slice().to_vec() }),
        power_tail: rep.control.power_tail,
        numerics: rep.numerics,
        seed: rep.seed,
        iterations: rep.iterations,
        trajectory_csv: TRAJECTORY_CSV.to_string(),
    };
    write_json(&out_dir.join(REPORT_JSON), &report)?;
    if !report.converged {
        return Err(CliError::NotConverged(format!(
            "not converged after {} iterations: fixed point {}, terminal error {:.3e} (tolerance {:.3e}); report written to {}",
            report.iterations.len(),
            if report.fixed_point_converged { "reached" } else { "not reached" },
            report.terminal_error,
            report.terminal_tolerance,
            out_dir.join(REPORT_JSON).display()
        )));
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub report_terminal_error: f64,
    pub verify_terminal_error: f64,
    pub refine: usize,
    pub corrector_passes: usize,
    /// max / min of the two errors.
    pub ratio: f64,
    pub agree: bool,
}

pub fn run_verify(spec: &ProblemSpec, out_dir: &Path) -> Result<VerifyReport, CliError> {
    let report_path = out_dir.join(REPORT_JSON);
    let report: NonlinearReport =
        serde_json::from_str(&read_text(&report_path)?).map_err(|e| CliError::Input(format!("{}: {e}", report_path.display())))?;
    let mut stored = report.problem.clone();
    stored.numerics = spec.numerics;
    stored.seed = spec.seed;
    if stored != *spec {
        return Err(CliError::Input(format!("{} was produced for a different problem", report_path.display())));
    }
    let problem = &report.problem;
    let series = read_series(&out_dir.join(&report.trajectory_csv), problem.d, problem.n_inputs)?;
    let n = problem.numerics.n_steps;
    if series.t.len() != n + 1 {
        return Err(CliError::Input(format!("{} has {} rows, expected {}", report.trajectory_csv, series.t.len(), n + 1)));
    }
    let grid = TimeGrid::new(0.0, problem.t_final, n)?;
    let samples = SampledFunction::new(grid, series.u)?;
    let mut control = match &report.control_jump {
        Some(j) => PiecewiseControl::with_jump(samples, j.node, DVector::from_column_slice(&j.right))?,
        None => PiecewiseControl::continuous(samples),
    };
    control.power_tail = report.power_tail;
    let sim = resimulate(problem, &control, VERIFY_REFINE, PcOptions { corrector_passes: VERIFY_PASSES })?;
    let err = (sim.value(n) - problem.y_t_vector()).norm();
    let (lo, hi) = if err < report.terminal_error { (err, report.terminal_error) } else { (report.terminal_error, err) };
    let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    let out = VerifyReport {
        report_terminal_error: report.terminal_error,
        verify_terminal_error: err,
        refine: VERIFY_REFINE,
        corrector_passes: VERIFY_PASSES,
        ratio,
        agree: ratio <= 2.0,
    };
    write_json(&out_dir.join(VERIFY_JSON), &out)?;
    if !out.agree {
        return Err(CliError::NotConverged(format!(
            "re-simulated terminal error {err:.3e} disagrees with the report's {:.3e} (ratio {ratio:.2})",
            report.terminal_error
        )));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct MlTable {
    pub alpha: f64,
    pub beta: f64,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

pub fn run_tabulate(t: &MlTable, out_dir: &Path) -> Result<PathBuf, CliError> {
    if t.points < 2 || !(t.from.is_finite() && t.to.is_finite()) || t.from >= t.to {
        return Err(CliError::Input("tabulate-ml needs finite --from < --to and --points >= 2".into()));
    }
    let xs: Vec<f64> = (0..t.points).map(|i| t.from + (t.to - t.from) * i as f64 / (t.points - 1) as f64).collect();
    let vals = xs.iter().map(|&x| MlQuery::new(t.alpha, t.beta, x).map(|q| mittag_leffler(&q))).collect::<Result<Vec<f64>, _>>()?;
    ensure_dir(out_dir)?;
    let path = out_dir.join(ML_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["x", "value"])?;
    for (x, v) in xs.iter().zip(&vals) {
        w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(path)
}
