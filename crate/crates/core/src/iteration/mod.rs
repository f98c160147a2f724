//! Iteration engines and the run loop.
//!
//! Three update maps are provided: the regularized Jacobi step (one local
//! solve per agent), the same map in projection form, and the scaled projected
//! gradient step. For quadratics all three coincide; they differ only in the
//! range of `c` for which convergence is guaranteed.

mod maps;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use maps::{
    fixed_point_residual, gradient_step, jacobi_step, jacobi_step_projection, tie_break_map, xi_map,
};

use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::problem::{Problem, SmoothObjective};

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TOL_STEP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jacobi,
    JacobiProjection,
    Gradient,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Jacobi => "jacobi",
            Method::JacobiProjection => "jacobi_projection",
            Method::Gradient => "gradient",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "jacobi" => Ok(Method::Jacobi),
            "jacobi_projection" | "projection" => Ok(Method::JacobiProjection),
            "gradient" | "grad" => Ok(Method::Gradient),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub c: f64,
    pub method: Method,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol_step")]
    pub tol_step: f64,
    #[serde(default = "default_true")]
    pub record_objective: bool,
    /// Also record the stationarity residual at every iterate (one extra
    /// projection per iteration).
    #[serde(default)]
    pub record_residual: bool,
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_tol_step() -> f64 {
    DEFAULT_TOL_STEP
}

fn default_true() -> bool {
    true
}

impl IterationConfig {
    pub fn new(c: f64, method: Method) -> Self {
        Self {
            c,
            method,
            max_iter: DEFAULT_MAX_ITER,
            tol_step: DEFAULT_TOL_STEP,
            record_objective: true,
            record_residual: false,
        }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn tol_step(mut self, tol_step: f64) -> Self {
        self.tol_step = tol_step;
        self
    }

    pub fn record_residual(mut self, on: bool) -> Self {
        self.record_residual = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::invalid(format!(
                "c must be finite and nonnegative, got {}",
                self.c
            )));
        }
        if self.method == Method::Gradient && self.c == 0.0 {
            return Err(Error::invalid("the gradient method needs c > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.tol_step.is_finite() && self.tol_step > 0.0) {
            return Err(Error::invalid("tol_step must be positive"));
        }
        Ok(())
    }
}

/// One row of a trace. `objective` and `residual` are evaluated at `x_k`;
/// `step_norm` is `‖x_{k+1} − x_k‖` and is absent on the final row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub objective: Option<f64>,
    pub step_norm: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub method: Method,
    pub c: f64,
    pub records: Vec<TraceRecord>,
    pub x_final: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl IterationTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.objective)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.objective).collect()
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.step_norm).collect()
    }

    /// First `k` whose recorded objective is within `rel` of `f_star`, i.e.
    /// `(f(x_k) − f*) ≤ rel·max(|f*|, tiny)`.
    pub fn iterations_to_relative(&self, f_star: f64, rel: f64) -> Option<usize> {
        let scale = f_star.abs().max(f64::MIN_POSITIVE);
        self.records
            .iter()
            .find(|r| r.objective.is_some_and(|f| f - f_star <= rel * scale))
            .map(|r| r.k)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_trace_csv(&self.records, w)
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

/// Writes `k,f,step_norm,residual` rows with 17 significant digits; missing
/// values are empty fields.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "f", "step_norm", "residual"])?;
    for r in records {
        wr.write_record([
            r.k.to_string(),
            fmt_opt(r.objective),
            fmt_opt(r.step_norm),
            fmt_opt(r.residual),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// A run aborted by a failing step. The trace holds every completed iteration.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub trace: IterationTrace,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} iterations)",
            self.error, self.trace.iterations
        )
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        e.error
    }
}

fn start_point<F: SmoothObjective>(problem: &Problem<F>, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    match x0 {
        Some(x) => {
            problem.objective().partition().check(x)?;
            if !problem.contains(x, 1e-9) {
                return Err(Error::invalid("x0 is not feasible"));
            }
            Ok(x.to_vec())
        }
        None => problem.feasible_point(),
    }
}

/// Iterates the configured method from `x0` (or the default feasible point)
/// until the step norm drops to `tol_step` or `max_iter` steps are taken.
/// Reaching the cap is reported through `converged`, not as an error.
pub fn run<F: SmoothObjective>(
    problem: &Problem<F>,
    config: &IterationConfig,
    x0: Option<&[f64]>,
) -> std::result::Result<IterationTrace, RunError> {
    let fail = |error| RunError {
        error,
        trace: empty_trace(config),
    };
    config.validate().map_err(fail)?;
    let c = config.c;
    match config.method {
        Method::Jacobi => run_with_step(problem, config, x0, |x| jacobi_step(problem, x, c)),
        Method::JacobiProjection | Method::Gradient => {
            let quad = problem.objective().as_quadratic().ok_or_else(|| {
                fail(Error::invalid(format!(
                    "method {} needs a quadratic objective",
                    config.method
                )))
            })?;
            let qp = Problem::new(quad.clone(), problem.sets().to_vec()).map_err(fail)?;
            let decomp = quad.block_decompose();
            if config.method == Method::Gradient {
                run_with_step(problem, config, x0, |x| gradient_step(&qp, &decomp, x, c))
            } else {
                run_with_step(problem, config, x0, |x| {
                    jacobi_step_projection(&qp, &decomp, x, c)
                })
            }
        }
    }
}

fn empty_trace(config: &IterationConfig) -> IterationTrace {
    IterationTrace {
        method: config.method,
        c: config.c,
        records: Vec::new(),
        x_final: Vec::new(),
        converged: false,
        iterations: 0,
    }
}

/// The run loop of [`run`] with a caller-supplied update map.
pub fn run_with_step<F, S>(
    problem: &Problem<F>,
    config: &IterationConfig,
    x0: Option<&[f64]>,
    mut step: S,
) -> std::result::Result<IterationTrace, RunError>
where
    F: SmoothObjective,
    S: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut trace = empty_trace(config);
    if let Err(error) = config.validate() {
        return Err(RunError { error, trace });
    }
    let mut x = match start_point(problem, x0) {
        Ok(x) => x,
        Err(error) => return Err(RunError { error, trace }),
    };
    let obj = problem.objective();
    let observe = |x: &[f64]| -> Result<(Option<f64>, Option<f64>)> {
        let f = config.record_objective.then(|| obj.value(x));
        let r = if config.record_residual {
            Some(problem.stationarity_residual(x)?)
        } else {
            None
        };
        Ok((f, r))
    };

    for k in 0..config.max_iter {
        let outcome = observe(&x).and_then(|obs| step(&x).map(|next| (obs, next)));
        let ((f, r), next) = match outcome {
            Ok(v) => v,
            Err(error) => {
                trace.x_final = x;
                trace.iterations = k;
                return Err(RunError { error, trace });
            }
        };
        let s = dist(&next, &x);
        trace.records.push(TraceRecord {
            k,
            objective: f,
            step_norm: Some(s),
            residual: r,
        });
        x = next;
        trace.iterations = k + 1;
        if !s.is_finite() {
            trace.x_final = x;
            return Err(RunError {
                error: Error::NumericalFailure {
                    what: "iteration",
                    iterations: k + 1,
                    residual: s,
                },
                trace,
            });
        }
        if s <= config.tol_step {
            trace.converged = true;
            break;
        }
    }
    match observe(&x) {
        Ok((f, r)) => trace.records.push(TraceRecord {
            k: trace.iterations,
            objective: f,
            step_norm: None,
            residual: r,
        }),
        Err(error) => {
            trace.x_final = x;
            return Err(RunError { error, trace });
        }
    }
    if !trace.converged {
        log::info!(
            "{} with c = {} stopped at the cap of {} iterations",
            config.method,
            config.c,
            config.max_iter
        );
    }
    trace.x_final = x;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::problem::{BlockPartition, QuadraticObjective};
    use crate::sets::FeasibleSet;

    fn identity_problem() -> Problem<QuadraticObjective> {
        let obj = QuadraticObjective::new(
            DMatrix::identity(2, 2),
            vec![-2.0, -2.0],
            BlockPartition::scalar(2).unwrap(),
        )
        .unwrap();
        Problem::new(
            obj,
            vec![FeasibleSet::boxed(vec![0.0], vec![10.0]).unwrap(); 2],
        )
        .unwrap()
    }

    #[test]
    fn halving_run() {
        let p = identity_problem();
        let t = run(
            &p,
            &IterationConfig::new(1.0, Method::Jacobi),
            Some(&[0.0, 0.0]),
        )
        .unwrap();
        assert!(t.converged);
        // ‖x_{k+1} − x_k‖ = √2·2^{-(k+1)} ≤ 1e-9 first at k = 30.
        assert_eq!(t.iterations, 31);
        assert!(t.x_final.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let s = t.step_norms();
        for w in s.windows(2) {
            assert!((w[1] / w[0] - 0.5).abs() < 1e-6);
        }
        assert_eq!(t.records.len(), t.iterations + 1);
        assert!(t.records.last().unwrap().step_norm.is_none());
    }

    #[test]
    fn coupled_pair_cycles_at_c_zero() {
        // f = (x1 + x2)² − (x1 + x2) on [0,1]²: best responses from (0,0) are
        // (0.5, 0.5), then (0,0), and so on.
        let q = DMatrix::from_element(2, 2, 1.0) + DMatrix::identity(2, 2) * 1e-12;
        let obj = QuadraticObjective::new(q, vec![-1.0, -1.0], BlockPartition::scalar(2).unwrap())
            .unwrap();
        let p = Problem::new(
            obj,
            vec![FeasibleSet::boxed(vec![0.0], vec![1.0]).unwrap(); 2],
        )
        .unwrap();
        let t = run(
            &p,
            &IterationConfig::new(0.0, Method::Jacobi).max_iter(50),
            Some(&[0.0, 0.0]),
        )
        .unwrap();
        assert!(!t.converged);
        assert_eq!(t.iterations, 50);
        assert!(t.records.len() <= 51);
    }

    #[test]
    fn single_agent_any_c_converges() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let obj =
            QuadraticObjective::new(q, vec![1.0, -3.0], BlockPartition::uniform(1, 2).unwrap())
                .unwrap();
        let p = Problem::new(
            obj,
            vec![FeasibleSet::boxed(vec![-5.0; 2], vec![5.0; 2]).unwrap()],
        )
        .unwrap();
        for c in [1e-3, 1.0, 100.0] {
            let t = run(
                &p,
                &IterationConfig::new(c, Method::Jacobi).max_iter(100_000),
                None,
            )
            .unwrap();
            assert!(t.converged, "c = {c}");
        }
    }

    #[test]
    fn methods_agree_on_diagonal_problem() {
        let p = identity_problem();
        let a = run(&p, &IterationConfig::new(1.0, Method::Jacobi), None).unwrap();
        let b = run(&p, &IterationConfig::new(1.0, Method::Gradient), None).unwrap();
        let c = run(
            &p,
            &IterationConfig::new(1.0, Method::JacobiProjection),
            None,
        )
        .unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.iterations, c.iterations);
    }

    #[test]
    fn csv_layout() {
        let recs = [
            TraceRecord {
                k: 0,
                objective: Some(0.5),
                step_norm: Some(0.25),
                residual: None,
            },
            TraceRecord {
                k: 1,
                objective: Some(-1.0),
                step_norm: None,
                residual: None,
            },
        ];
        let mut out = Vec::new();
        write_trace_csv(&recs, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(
            s,
            "k,f,step_norm,residual\n0,5.0000000000000000e-1,2.5000000000000000e-1,\n1,-1.0000000000000000e0,,\n"
        );
    }

    #[test]
    fn config_validation() {
        assert!(IterationConfig::new(-1.0, Method::Jacobi)
            .validate()
            .is_err());
        assert!(IterationConfig::new(0.0, Method::Gradient)
            .validate()
            .is_err());
        assert!(IterationConfig::new(1.0, Method::Jacobi)
            .max_iter(0)
            .validate()
            .is_err());
        assert!(IterationConfig::new(1.0, Method::Jacobi)
            .tol_step(0.0)
            .validate()
            .is_err());
        assert_eq!(
            "jacobi-projection".parse::<Method>().unwrap(),
            Method::JacobiProjection
        );
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let p = identity_problem();
        let e = run(
            &p,
            &IterationConfig::new(1.0, Method::Jacobi),
            Some(&[-1.0, 0.0]),
        )
        .unwrap_err();
        assert!(matches!(e.error, Error::InvalidArgument(_)));
    }
}
