use nalgebra::DMatrix;
use rayon::prelude::*;

use super::EvScenario;
use crate::error::{check_dim, Error, Result};
use crate::iteration::{run_with_step, IterationConfig, IterationTrace, Method, RunError};
use crate::problem::{BlockPartition, Problem, QuadraticObjective, SmoothObjective};
use crate::sets::{project_budget, FeasibleSet, LocalQp};
use crate::spectral::{KroneckerOnes, SpectralBounds};

/// Largest fleet for which the dense `Q` is built.
pub const DENSE_MAX_AGENTS: usize = 200;

/// `(d + Σᵢxⁱ)ᵀP(d + Σᵢxⁱ)` evaluated through the per-slot total, never
/// forming `Q`. Values include the constant `dᵀPd`.
#[derive(Debug, Clone)]
pub struct EvObjective {
    p_scaled: Vec<f64>,
    d: Vec<f64>,
    partition: BlockPartition,
    lipschitz: f64,
}

impl EvObjective {
    pub fn new(scn: &EvScenario) -> Result<Self> {
        scn.validate()?;
        let p_scaled = scn.p_scaled();
        // λmax(1_{m×m} ⊗ P) = m·max P.
        let lipschitz = 2.0 * scn.m as f64 * p_scaled.iter().fold(0.0_f64, |a, b| a.max(*b));
        Ok(Self {
            p_scaled,
            d: scn.d.clone(),
            partition: BlockPartition::uniform(scn.m, scn.horizon)?,
            lipschitz,
        })
    }

    pub fn horizon(&self) -> usize {
        self.d.len()
    }

    /// `x̄ = d + Σᵢ xⁱ`, summed in vehicle order.
    pub fn aggregate(&self, x: &[f64]) -> Vec<f64> {
        let mut total = self.d.clone();
        for block in x.chunks(self.horizon()) {
            for (s, v) in total.iter_mut().zip(block) {
                *s += v;
            }
        }
        total
    }

    pub fn value_from_aggregate(&self, x_bar: &[f64]) -> f64 {
        self.p_scaled
            .iter()
            .zip(x_bar)
            .map(|(p, v)| p * v * v)
            .sum()
    }

    /// Vehicle `i`'s regularized best response to the broadcast total `x̄`:
    /// `min (x̄ − xⁱ + z)ᵀP(x̄ − xⁱ + z) + c‖z − xⁱ‖²` over its set.
    pub fn respond(
        &self,
        x_bar: &[f64],
        x_i: &[f64],
        c: f64,
        set: &FeasibleSet,
    ) -> Result<Vec<f64>> {
        let h: Vec<f64> = self.p_scaled.iter().map(|p| p + c).collect();
        let b: Vec<f64> = (0..x_i.len())
            .map(|t| 2.0 * self.p_scaled[t] * (x_bar[t] - x_i[t]) - 2.0 * c * x_i[t])
            .collect();
        solve_diagonal_qp(&h, &b, set)
    }
}

/// `argmin zᵀdiag(h)z + bᵀz` over `set` for positive `h`.
pub fn solve_diagonal_qp(h: &[f64], b: &[f64], set: &FeasibleSet) -> Result<Vec<f64>> {
    check_dim(set.dim(), h.len())?;
    check_dim(h.len(), b.len())?;
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("local Hessian is not positive definite"));
    }
    let v: Vec<f64> = b.iter().zip(h).map(|(bv, hv)| -bv / (2.0 * hv)).collect();
    match set {
        FeasibleSet::Box { lower, upper } => Ok(v
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(x, (l, u))| x.clamp(*l, *u))
            .collect()),
        FeasibleSet::BudgetBox {
            lower,
            upper,
            gamma,
        } => project_budget(&v, h, lower, upper, *gamma),
        FeasibleSet::Polytope { .. } => {
            let hm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(h));
            LocalQp::new(hm, b.to_vec(), set.clone())?.solve()
        }
    }
}

impl SmoothObjective for EvObjective {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_from_aggregate(&self.aggregate(x))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let x_bar = self.aggregate(x);
        let g: Vec<f64> = self
            .p_scaled
            .iter()
            .zip(&x_bar)
            .map(|(p, v)| 2.0 * p * v)
            .collect();
        g.iter().copied().cycle().take(x.len()).collect()
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn block_gradient(&self, i: usize, z_i: &[f64], x: &[f64]) -> Vec<f64> {
        let x_bar = self.aggregate(x);
        let x_i = self.partition.block(x, i);
        (0..z_i.len())
            .map(|t| 2.0 * self.p_scaled[t] * (x_bar[t] - x_i[t] + z_i[t]))
            .collect()
    }

    fn solve_local(&self, i: usize, x: &[f64], c: f64, set: &FeasibleSet) -> Result<Vec<f64>> {
        let x_bar = self.aggregate(x);
        self.respond(&x_bar, self.partition.block(x, i), c, set)
    }
}

/// The implicit-operator problem.
pub fn assemble_implicit(scn: &EvScenario) -> Result<Problem<EvObjective>> {
    Problem::new(EvObjective::new(scn)?, scn.sets()?)
}

/// The dense quadratic `Q = 1_{m×m} ⊗ P`, `q = 2AᵀPd`, with the constant
/// `dᵀPd` returned alongside. Limited to [`DENSE_MAX_AGENTS`] vehicles.
pub fn assemble_dense(scn: &EvScenario) -> Result<(Problem<QuadraticObjective>, f64)> {
    scn.validate()?;
    if scn.m > DENSE_MAX_AGENTS {
        return Err(Error::invalid(format!(
            "dense form limited to {DENSE_MAX_AGENTS} vehicles, got {}",
            scn.m
        )));
    }
    let p = scn.p_scaled();
    let q_mat = KroneckerOnes::full(scn.m, p.clone()).to_dense();
    let q_slot: Vec<f64> = p.iter().zip(&scn.d).map(|(p, d)| 2.0 * p * d).collect();
    let q_vec = q_slot
        .iter()
        .copied()
        .cycle()
        .take(scn.m * scn.horizon)
        .collect();
    let obj = QuadraticObjective::new_unchecked(
        q_mat,
        q_vec,
        BlockPartition::uniform(scn.m, scn.horizon)?,
    )?;
    Ok((Problem::new(obj, scn.sets()?)?, scn.offset()))
}

/// Spectral bounds through the implicit Kronecker operators.
pub fn ev_bounds(scn: &EvScenario) -> Result<SpectralBounds> {
    let p = scn.p_scaled();
    let q = KroneckerOnes::full(scn.m, p.clone());
    let qz = KroneckerOnes::hollow(scn.m, p);
    let l = EvObjective::new(scn)?.lipschitz();
    SpectralBounds::from_operators(scn.m, &q, &qz, Some(l))
}

/// One Jacobi step in broadcast form: every vehicle sees only `x̄_k`.
/// Returns `(x_{k+1}, x̄_{k+1})`.
pub fn aggregate_jacobi_step(
    obj: &EvObjective,
    sets: &[FeasibleSet],
    x: &[f64],
    x_bar: &[f64],
    c: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::invalid(format!(
            "c must be finite and nonnegative, got {c}"
        )));
    }
    obj.partition.check(x)?;
    check_dim(obj.horizon(), x_bar.len())?;
    check_dim(obj.partition.agents(), sets.len())?;
    let blocks = (0..sets.len())
        .into_par_iter()
        .map(|i| {
            obj.respond(x_bar, obj.partition.block(x, i), c, &sets[i])
                .map_err(|e| e.for_agent(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let next = obj.partition.stack(&blocks)?;
    let bar = obj.aggregate(&next);
    Ok((next, bar))
}

/// The run loop driven by [`aggregate_jacobi_step`]. Only the Jacobi method
/// applies; recorded objectives include `dᵀPd`.
pub fn run_aggregate(
    problem: &Problem<EvObjective>,
    config: &IterationConfig,
    x0: Option<&[f64]>,
) -> std::result::Result<IterationTrace, RunError> {
    if config.method != Method::Jacobi {
        return Err(RunError {
            error: Error::invalid("the aggregate form implements the Jacobi method only"),
            trace: IterationTrace {
                method: config.method,
                c: config.c,
                records: Vec::new(),
                x_final: Vec::new(),
                converged: false,
                iterations: 0,
            },
        });
    }
    let obj = problem.objective();
    let mut cached: Option<(Vec<f64>, Vec<f64>)> = None;
    run_with_step(problem, config, x0, |x| {
        let x_bar = match cached.take() {
            Some((prev, bar)) if prev == x => bar,
            _ => obj.aggregate(x),
        };
        let (next, bar) = aggregate_jacobi_step(obj, problem.sets(), x, &x_bar, config.c)?;
        cached = Some((next.clone(), bar));
        Ok(next)
    })
}
