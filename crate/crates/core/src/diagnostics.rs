//! Centralized reference solver and executable checks of the convergence
//! inequalities.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iteration::{
    self, fixed_point_residual, jacobi_step, tie_break_map, IterationConfig, IterationTrace, Method,
};
use crate::linalg::{dist, quad_form, sub};
use crate::problem::{stacked_gradient, Problem, QuadraticObjective, SmoothObjective};

pub const ORACLE_TOL: f64 = 1e-9;
pub const ORACLE_MAX_ITER: usize = 1_000_000;
/// The oracle evaluates its stopping residual every this many iterations.
const RESIDUAL_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub f: f64,
    /// `‖x − P_X(x − ∇f(x)/L)‖` at `x`.
    pub residual: f64,
    pub iterations: usize,
}

/// Minimizes `f` over the product set by accelerated projected gradient with
/// step `1/L`, restarting the momentum whenever the objective goes up.
pub fn solve_centralized<F: SmoothObjective>(
    problem: &Problem<F>,
    x0: Option<&[f64]>,
) -> Result<OracleSolution> {
    solve_centralized_with(problem, x0, ORACLE_TOL, ORACLE_MAX_ITER)
}

pub fn solve_centralized_with<F: SmoothObjective>(
    problem: &Problem<F>,
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<OracleSolution> {
    let obj = problem.objective();
    let l = obj.lipschitz();
    let l = if l > 0.0 { l } else { 1.0 };
    let mut x = match x0 {
        Some(x) => problem.project(x)?,
        None => problem.feasible_point()?,
    };
    let pg = |y: &[f64]| -> Result<Vec<f64>> {
        let g = obj.gradient(y);
        let trial: Vec<f64> = y.iter().zip(&g).map(|(yv, gv)| yv - gv / l).collect();
        problem.project(&trial)
    };
    let mut f = obj.value(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;
    for k in 0..max_iter {
        if k % RESIDUAL_EVERY == 0 {
            residual = dist(&x, &pg(&x)?);
            if residual <= tol {
                return Ok(OracleSolution {
                    x,
                    f,
                    residual,
                    iterations: k,
                });
            }
        }
        let x_new = pg(&y)?;
        let f_new = obj.value(&x_new);
        if f_new > f && y != x {
            t = 1.0;
            y.clone_from(&x);
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        x = x_new;
        f = f_new;
        t = t_new;
    }
    Err(Error::NumericalFailure {
        what: "centralized solver",
        iterations: max_iter,
        residual,
    })
}

/// Outcome of one check. `pass` is `violation ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub check: String,
    pub instance: String,
    pub samples: usize,
    pub violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: Option<u64>,
}

impl DiagnosticsReport {
    fn new(
        check: &str,
        instance: &str,
        samples: usize,
        violation: f64,
        tolerance: f64,
        seed: Option<u64>,
    ) -> Self {
        Self {
            check: check.to_string(),
            instance: instance.to_string(),
            samples,
            violation,
            tolerance,
            pass: violation <= tolerance,
            seed,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Samples feasible pairs and checks
/// `‖T̃x − T̃y‖²_W ≤ (x − y)ᵀW(T̃x − T̃y)` with `W = Q_d + cI − Q`.
/// The violation is the largest excess of the left side, tolerance `1e-9`.
pub fn check_firm_nonexpansive(
    problem: &Problem<QuadraticObjective>,
    c: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<DiagnosticsReport> {
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs must be at least 1"));
    }
    let obj = problem.objective();
    let n = obj.dim();
    let d = obj.block_decompose();
    let w = &d.qd + DMatrix::identity(n, n) * c - obj.q_mat();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_pairs {
        let x = problem.sample(&mut rng)?;
        let y = problem.sample(&mut rng)?;
        let tx = jacobi_step(problem, &x, c)?;
        let ty = jacobi_step(problem, &y, c)?;
        let dt = sub(&tx, &ty);
        let lhs = quad_form(&w, &dt, &dt);
        let rhs = quad_form(&w, &sub(&x, &y), &dt);
        worst = worst.max(lhs - rhs);
    }
    Ok(DiagnosticsReport::new(
        "firm_nonexpansive",
        &format!("m={} n={n} c={c}", obj.agents()),
        n_pairs,
        worst,
        1e-9,
        Some(seed),
    ))
}

/// Constants for the per-iteration descent inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DescentMode {
    /// `f(x_{k+1}) ≤ f(x_k) − (c − λmax(Q))‖Δ‖²`, for the gradient method.
    Eq33 { lambda_q_max: f64 },
    /// `m f(x_{k+1}) ≤ m f(x_k) + (−c + (m−1)(K − 2c))‖Δ‖²`, for Jacobi, with
    /// `K = √m·L` in general or `2λmax(Q_z)` for quadratics.
    Eq55 { agents: usize, k_const: f64 },
}

impl DescentMode {
    fn name(&self) -> &'static str {
        match self {
            DescentMode::Eq33 { .. } => "descent_eq33",
            DescentMode::Eq55 { .. } => "descent_eq55",
        }
    }

    /// Coefficient of `‖Δ‖²` after dividing the inequality by `m`.
    fn coefficient(&self, c: f64) -> f64 {
        match *self {
            DescentMode::Eq33 { lambda_q_max } => -(c - lambda_q_max),
            DescentMode::Eq55 { agents, k_const } => {
                let m = agents as f64;
                (-c + (m - 1.0) * (k_const - 2.0 * c)) / m
            }
        }
    }
}

/// Checks the descent inequality at every recorded step. The violation is the
/// largest `(f_{k+1} − bound_k)/(1 + |f_k|)`, tolerance `1e-9`.
pub fn check_descent(trace: &IterationTrace, mode: DescentMode) -> Result<DiagnosticsReport> {
    let recs = &trace.records;
    if recs.iter().any(|r| r.objective.is_none()) {
        return Err(Error::invalid("trace has no recorded objective values"));
    }
    let coef = mode.coefficient(trace.c);
    let mut worst = 0.0f64;
    let mut samples = 0;
    for pair in recs.windows(2) {
        let (Some(f0), Some(f1), Some(s)) =
            (pair[0].objective, pair[1].objective, pair[0].step_norm)
        else {
            continue;
        };
        let bound = f0 + coef * s * s;
        worst = worst.max((f1 - bound) / (1.0 + f0.abs()));
        samples += 1;
    }
    Ok(DiagnosticsReport::new(
        mode.name(),
        &format!("{} c={}", trace.method, trace.c),
        samples,
        worst,
        1e-9,
        None,
    ))
}

/// Samples feasible triples `(x, y, z)` and checks
/// `‖∇̃f(z, x) − ∇̃f(z, y)‖ ≤ K‖x − y‖`, where `∇̃f` is the stacked partial
/// gradient and `K = 2λmax(Q_z)` for quadratics, `√m·L` otherwise. The
/// violation is the largest relative excess, tolerance `1e-9`.
pub fn check_lipschitz_stacked<F: SmoothObjective>(
    problem: &Problem<F>,
    n_triples: usize,
    seed: u64,
) -> Result<DiagnosticsReport> {
    let obj = problem.objective();
    let m = problem.agents();
    let (k_const, name) = match obj.as_quadratic() {
        Some(q) => (
            2.0 * q.block_decompose().lambda_qz_max()?,
            "lipschitz_stacked_qz",
        ),
        None => ((m as f64).sqrt() * obj.lipschitz(), "lipschitz_stacked"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_triples {
        let x = problem.sample(&mut rng)?;
        let y = problem.sample(&mut rng)?;
        let z = problem.sample(&mut rng)?;
        let lhs = dist(
            &stacked_gradient(obj, &z, &x)?,
            &stacked_gradient(obj, &z, &y)?,
        );
        let bound = k_const * dist(&x, &y);
        if lhs > bound {
            worst = worst.max((lhs - bound) / bound.max(f64::MIN_POSITIVE));
        }
    }
    Ok(DiagnosticsReport::new(
        name,
        &format!("m={m} n={} K={k_const}", problem.dim()),
        n_triples,
        worst,
        1e-9,
        Some(seed),
    ))
}

/// Checks that minimizers, fixed points of `T̃` and fixed points of the
/// tie-break map coincide:
///
/// * the oracle minimizer has `‖T̃x* − x*‖ ≤ 1e-7` and `‖T(x*) − x*‖ ≤ 1e-6`;
/// * the Jacobi limit reaches `f* + 1e-6·(1 + |f*|)`;
/// * sampled points with `f(x) > f* + 1e-3` have `‖T̃x − x‖ > 1e-6`.
///
/// Each condition is expressed as a ratio that must not exceed one; the
/// violation is the largest ratio and the tolerance is `1`.
pub fn equivalence_report(
    problem: &Problem<QuadraticObjective>,
    c: f64,
    n_points: usize,
    seed: u64,
) -> Result<DiagnosticsReport> {
    let oracle = solve_centralized(problem, None)?;
    let f_star = oracle.f;
    let mut worst = 0.0f64;

    let r_fixed = fixed_point_residual(problem, &oracle.x, c)?;
    worst = worst.max(r_fixed / 1e-7);
    let tie = tie_break_map(problem, &oracle.x, None)?;
    worst = worst.max(dist(&tie, &oracle.x) / 1e-6);

    let cfg = IterationConfig::new(c, Method::Jacobi)
        .max_iter(100_000)
        .tol_step(1e-12);
    let trace = iteration::run(problem, &cfg, None)?;
    let f_hat = problem.value(&trace.x_final)?;
    worst = worst.max((f_hat - f_star) / (1e-6 * (1.0 + f_star.abs())));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = 2;
    for _ in 0..n_points {
        let x = problem.sample(&mut rng)?;
        if problem.value(&x)? <= f_star + 1e-3 {
            continue;
        }
        let r = fixed_point_residual(problem, &x, c)?;
        worst = worst.max(1e-6 / r.max(f64::MIN_POSITIVE));
        samples += 1;
    }
    Ok(DiagnosticsReport::new(
        "equivalence",
        &format!(
            "m={} n={} c={c} f*={f_star}",
            problem.agents(),
            problem.dim()
        ),
        samples,
        worst,
        1.0,
        Some(seed),
    ))
}

/// Spread of optimal values found from several starts.
pub fn oracle_spread<F: SmoothObjective>(problem: &Problem<F>, starts: &[Vec<f64>]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in starts {
        let f = solve_centralized(problem, Some(s))?.f;
        lo = lo.min(f);
        hi = hi.max(f);
    }
    Ok(hi - lo)
}
