use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dist, mat_vec};
use crate::problem::{BlockDecomposition, Problem, QuadraticObjective, SmoothObjective};
use crate::sets::{FeasibleSet, LocalQp};

/// Largest number of proximal-point sweeps used to find the local optimal value.
const TIE_PROX_MAX_ITER: usize = 10_000;
/// Largest number of multiplier doublings and bisections in the tie-break.
const TIE_MULTIPLIER_STEPS: usize = 200;

fn check_c(c: f64) -> Result<()> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::invalid(format!(
            "c must be finite and nonnegative, got {c}"
        )));
    }
    Ok(())
}

fn check_decomp(obj: &QuadraticObjective, decomp: &BlockDecomposition) -> Result<()> {
    let n = obj.dim();
    if decomp.qd.nrows() != n || decomp.qz.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: decomp.qd.nrows(),
        });
    }
    Ok(())
}

/// One regularized Jacobi update `x_{k+1} = T̃(x_k)`.
///
/// The agents' local problems are solved concurrently. Each reads `x` and
/// produces its own block, so the result does not depend on scheduling.
pub fn jacobi_step<F: SmoothObjective>(
    problem: &Problem<F>,
    x: &[f64],
    c: f64,
) -> Result<Vec<f64>> {
    check_c(c)?;
    let obj = problem.objective();
    obj.partition().check(x)?;
    let blocks = (0..problem.agents())
        .into_par_iter()
        .map(|i| {
            obj.solve_local(i, x, c, &problem.sets()[i])
                .map_err(|e| e.for_agent(i))
        })
        .collect::<Result<Vec<_>>>()?;
    obj.partition().stack(&blocks)
}

fn block_of(m: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    m.view((start, start), (len, len)).into_owned()
}

/// Unconstrained minimizer of the local problems,
/// `ξ(x) = (Q_d + cI)⁻¹(cx − Q_z x − q/2)`, solved block by block.
pub fn xi_map(
    obj: &QuadraticObjective,
    decomp: &BlockDecomposition,
    x: &[f64],
    c: f64,
) -> Result<Vec<f64>> {
    check_c(c)?;
    check_decomp(obj, decomp)?;
    let part = obj.partition();
    part.check(x)?;
    let qzx = mat_vec(&decomp.qz, x);
    let rhs: Vec<f64> = (0..x.len())
        .map(|j| c * x[j] - qzx[j] - 0.5 * obj.q_vec()[j])
        .collect();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..part.agents() {
        let r = part.range(i);
        let h = block_of(&decomp.qd, r.start, r.len()) + DMatrix::identity(r.len(), r.len()) * c;
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Internal(format!("agent {i}: Q_ii + cI is singular")))?;
        let sol = chol.solve(&nalgebra::DVector::from_column_slice(&rhs[r]));
        out.extend(sol.iter());
    }
    Ok(out)
}

/// The same update as [`jacobi_step`] written as a weighted projection of
/// [`xi_map`], with block weight `Q_ii + cI`.
pub fn jacobi_step_projection(
    problem: &Problem<QuadraticObjective>,
    decomp: &BlockDecomposition,
    x: &[f64],
    c: f64,
) -> Result<Vec<f64>> {
    let obj = problem.objective();
    let xi = xi_map(obj, decomp, x, c)?;
    let part = obj.partition();
    let blocks = (0..part.agents())
        .into_par_iter()
        .map(|i| {
            let r = part.range(i);
            let w =
                block_of(&decomp.qd, r.start, r.len()) + DMatrix::identity(r.len(), r.len()) * c;
            problem.sets()[i]
                .project_weighted(&xi[r], &w)
                .map_err(|e| e.for_agent(i))
        })
        .collect::<Result<Vec<_>>>()?;
    part.stack(&blocks)
}

/// Scaled projected gradient step: `x − (1/2c)(Q_d/c + I)⁻¹(2Qx + q)`,
/// projected blockwise in the `Q_d/c + I` norm.
pub fn gradient_step(
    problem: &Problem<QuadraticObjective>,
    decomp: &BlockDecomposition,
    x: &[f64],
    c: f64,
) -> Result<Vec<f64>> {
    check_c(c)?;
    if c == 0.0 {
        return Err(Error::invalid("the gradient step needs c > 0"));
    }
    let obj = problem.objective();
    check_decomp(obj, decomp)?;
    let part = obj.partition();
    let g = obj.grad(x)?;
    let blocks = (0..part.agents())
        .into_par_iter()
        .map(|i| {
            let r = part.range(i);
            let w =
                block_of(&decomp.qd, r.start, r.len()) / c + DMatrix::identity(r.len(), r.len());
            let chol = w
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Internal(format!("agent {i}: Q_ii/c + I is singular")))?;
            let dir = chol.solve(&nalgebra::DVector::from_column_slice(&g[r.clone()]));
            let y: Vec<f64> = x[r.clone()]
                .iter()
                .zip(dir.iter())
                .map(|(xv, dv)| xv - dv / (2.0 * c))
                .collect();
            problem.sets()[i]
                .project_weighted(&y, &w)
                .map_err(|e| e.for_agent(i))
        })
        .collect::<Result<Vec<_>>>()?;
    part.stack(&blocks)
}

/// `‖T̃(x) − x‖`.
pub fn fixed_point_residual<F: SmoothObjective>(
    problem: &Problem<F>,
    x: &[f64],
    c: f64,
) -> Result<f64> {
    Ok(dist(&jacobi_step(problem, x, c)?, x))
}

/// Unregularized best response with the proximal tie-break: among the
/// minimizers of `f(·, x⁻ⁱ)` over `Xⁱ`, the one closest to `xⁱ`.
///
/// Optimality is relaxed to `f(zⁱ, x⁻ⁱ) ≤ vᵢ + eps_tie`, where `vᵢ` is the local
/// optimal value, so the result is accurate to about `√eps_tie`. With
/// `eps_tie = None` the tolerance is `1e-9·(1 + |vᵢ|)`.
pub fn tie_break_map(
    problem: &Problem<QuadraticObjective>,
    x: &[f64],
    eps_tie: Option<f64>,
) -> Result<Vec<f64>> {
    if let Some(e) = eps_tie {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::invalid("eps_tie must be positive"));
        }
    }
    let obj = problem.objective();
    let part = obj.partition();
    part.check(x)?;
    let blocks = (0..part.agents())
        .into_par_iter()
        .map(|i| {
            tie_break_agent(obj, &problem.sets()[i], i, x, eps_tie).map_err(|e| e.for_agent(i))
        })
        .collect::<Result<Vec<_>>>()?;
    part.stack(&blocks)
}

fn tie_break_agent(
    obj: &QuadraticObjective,
    set: &FeasibleSet,
    i: usize,
    x: &[f64],
    eps_tie: Option<f64>,
) -> Result<Vec<f64>> {
    let part = obj.partition();
    let x_i = part.block(x, i).to_vec();
    let n_i = x_i.len();
    let qii = obj.diag_block(i);
    // Local objective g(z) = zᵀQ_ii z + bᵀz; f(z, x⁻ⁱ) = g(z) + const.
    let b: Vec<f64> = obj
        .coupling(i, x)
        .iter()
        .zip(&obj.q_vec()[part.range(i)])
        .map(|(cp, q)| 2.0 * cp + q)
        .collect();
    let g = |z: &[f64]| crate::linalg::quad_form(&qii, z, z) + crate::linalg::dot(&b, z);
    let mut zeroed = x.to_vec();
    zeroed[part.range(i)].iter_mut().for_each(|v| *v = 0.0);
    let offset = obj.eval(&zeroed)?;

    // A strictly convex local problem has a single minimizer: no tie to break.
    if qii.clone().cholesky().is_some() {
        return LocalQp::new(qii.clone(), b.clone(), set.clone())?.solve();
    }

    // Stage 1: proximal point for the (possibly non-strictly convex) local value.
    let rho = {
        let top = crate::spectral::lambda_max_sym(&qii)?;
        if top > 0.0 {
            top
        } else {
            1.0
        }
    };
    let h = &qii + DMatrix::identity(n_i, n_i) * rho;
    let mut z = set.project_euclidean(&x_i)?;
    for _ in 0..TIE_PROX_MAX_ITER {
        let lin: Vec<f64> = b
            .iter()
            .zip(&z)
            .map(|(bv, zv)| bv - 2.0 * rho * zv)
            .collect();
        let next = LocalQp::new(h.clone(), lin, set.clone())?.solve()?;
        let step = dist(&next, &z);
        z = next;
        if step <= 1e-14 * (1.0 + crate::linalg::norm(&z)) {
            break;
        }
    }
    let v_g = g(&z);
    let eps = eps_tie.unwrap_or(1e-9 * (1.0 + (v_g + offset).abs()));
    let level = v_g + eps;
    if g(&x_i) <= level {
        return Ok(x_i);
    }

    // Stage 2: z(μ) = argmin ‖z − xⁱ‖² + μ g(z) is feasible for the level set
    // once μ is large enough; bisect for the smallest such μ.
    let solve_mu = |mu: f64| -> Result<Vec<f64>> {
        let h = DMatrix::identity(n_i, n_i) + &qii * mu;
        let lin: Vec<f64> = b
            .iter()
            .zip(&x_i)
            .map(|(bv, xv)| mu * bv - 2.0 * xv)
            .collect();
        LocalQp::new(h, lin, set.clone())?.solve()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut best = solve_mu(hi)?;
    let mut found = g(&best) <= level;
    for _ in 0..TIE_MULTIPLIER_STEPS {
        if found {
            break;
        }
        lo = hi;
        hi *= 2.0;
        best = solve_mu(hi)?;
        found = g(&best) <= level;
    }
    if !found {
        return Err(Error::Internal(format!(
            "tie-break level set not reached (gap {:e})",
            g(&best) - v_g
        )));
    }
    for _ in 0..TIE_MULTIPLIER_STEPS {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let z = solve_mu(mid)?;
        if g(&z) <= level {
            hi = mid;
            best = z;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}
