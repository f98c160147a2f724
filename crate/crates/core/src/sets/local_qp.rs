use nalgebra::{DMatrix, DVector};

use super::budget::project_budget;
use super::FeasibleSet;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dist, dot, is_diagonal, mat_vec, norm};

/// Cap on accelerated projected-gradient iterations.
pub const INNER_MAX_ITER: usize = 100_000;
/// Gradient-mapping tolerance for inner solves, relative to `1 + ‖b‖`.
pub const INNER_TOL: f64 = 1e-12;

/// `min_z zᵀHz + bᵀz` over a feasible set, with `H` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct LocalQp {
    h: DMatrix<f64>,
    b: Vec<f64>,
    set: FeasibleSet,
    lambda_max: f64,
}

impl LocalQp {
    pub fn new(h: DMatrix<f64>, b: Vec<f64>, set: FeasibleSet) -> Result<Self> {
        let n = set.dim();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::invalid(format!(
                "Hessian is {}x{} but the set has dimension {n}",
                h.nrows(),
                h.ncols()
            )));
        }
        check_dim(n, b.len())?;
        let asym = linalg::inf_norm(&(&h - h.transpose()));
        if asym > 1e-12 * (1.0 + linalg::inf_norm(&h)) {
            return Err(Error::invalid("local Hessian is not symmetric"));
        }
        let eig = h.clone().symmetric_eigenvalues();
        let lambda_min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lambda_min > 0.0) {
            return Err(Error::invalid(format!(
                "local Hessian is not positive definite (smallest eigenvalue {lambda_min:e})"
            )));
        }
        Ok(Self {
            h,
            b,
            set,
            lambda_max,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        dot(z, &mat_vec(&self.h, z)) + dot(&self.b, z)
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        mat_vec(&self.h, z)
            .into_iter()
            .zip(&self.b)
            .map(|(hz, b)| 2.0 * hz + b)
            .collect()
    }

    /// Gradient-mapping norm `L‖z − P(z − ∇/L)‖`, zero exactly at the
    /// minimizer.
    pub fn kkt_residual(&self, z: &[f64]) -> Result<f64> {
        let l = 2.0 * self.lambda_max;
        let g = self.gradient(z);
        let trial: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / l).collect();
        let p = self.set.project_euclidean(&trial)?;
        Ok(l * dist(z, &p))
    }

    /// The unique minimizer.
    pub fn solve(&self) -> Result<Vec<f64>> {
        if is_diagonal(&self.h) {
            let w: Vec<f64> = (0..self.set.dim()).map(|j| self.h[(j, j)]).collect();
            let center: Vec<f64> = self.b.iter().zip(&w).map(|(b, w)| -b / (2.0 * w)).collect();
            match &self.set {
                FeasibleSet::Box { lower, upper } => {
                    return Ok(center
                        .iter()
                        .zip(lower.iter().zip(upper))
                        .map(|(c, (l, u))| c.clamp(*l, *u))
                        .collect());
                }
                FeasibleSet::BudgetBox {
                    lower,
                    upper,
                    gamma,
                } => return project_budget(&center, &w, lower, upper, *gamma),
                FeasibleSet::Polytope { .. } => {}
            }
        }
        let tol = INNER_TOL * (1.0 + norm(&self.b));
        let start = self.set.feasible_point()?;
        let z = accelerated_projected_gradient(
            &self.set,
            start,
            2.0 * self.lambda_max,
            |z| self.gradient(z),
            tol,
        )?;
        Ok(self.polish(z))
    }

    /// Re-solves the equality-constrained system on the active set guessed
    /// from an iterative solution. Keeps the original point unless the
    /// polished one is feasible and satisfies the sign conditions.
    fn polish(&self, z: Vec<f64>) -> Vec<f64> {
        let (lower, upper, gamma) = match &self.set {
            FeasibleSet::Box { lower, upper } => (lower, upper, None),
            FeasibleSet::BudgetBox {
                lower,
                upper,
                gamma,
            } => (lower, upper, Some(*gamma)),
            FeasibleSet::Polytope { .. } => return z,
        };
        let n = z.len();
        let mut fixed = vec![None; n];
        for j in 0..n {
            let slack = 1e-9 * (1.0 + (upper[j] - lower[j]).abs());
            if z[j] <= lower[j] + slack {
                fixed[j] = Some(lower[j]);
            } else if z[j] >= upper[j] - slack {
                fixed[j] = Some(upper[j]);
            }
        }
        let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
        if free.is_empty() {
            return z;
        }
        let k = free.len();
        let extra = usize::from(gamma.is_some());
        let mut lhs = DMatrix::zeros(k + extra, k + extra);
        let mut rhs = DVector::zeros(k + extra);
        for (a, &ja) in free.iter().enumerate() {
            for (bb, &jb) in free.iter().enumerate() {
                lhs[(a, bb)] = 2.0 * self.h[(ja, jb)];
            }
            let mut r = -self.b[ja];
            for (j, f) in fixed.iter().enumerate() {
                if let Some(v) = f {
                    r -= 2.0 * self.h[(ja, j)] * v;
                }
            }
            rhs[a] = r;
        }
        if let Some(g) = gamma {
            for a in 0..k {
                lhs[(a, k)] = 1.0;
                lhs[(k, a)] = 1.0;
            }
            rhs[k] = g - fixed.iter().flatten().sum::<f64>();
        }
        let Some(sol) = lhs.lu().solve(&rhs) else {
            return z;
        };
        let mut out = z.clone();
        for (a, &j) in free.iter().enumerate() {
            if sol[a] < lower[j] || sol[a] > upper[j] {
                return z;
            }
            out[j] = sol[a];
        }
        for (j, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                out[j] = *v;
            }
        }
        let mu = if gamma.is_some() { sol[k] } else { 0.0 };
        let grad = self.gradient(&out);
        let sign_tol = 1e-9 * (1.0 + norm(&self.b));
        for (j, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                let g = grad[j] + mu;
                let ok = if *v == lower[j] && *v == upper[j] {
                    true
                } else if *v == lower[j] {
                    g >= -sign_tol
                } else {
                    g <= sign_tol
                };
                if !ok {
                    return z;
                }
            }
        }
        if self.objective(&out) <= self.objective(&z) + 1e-12 * (1.0 + self.objective(&z).abs()) {
            out
        } else {
            z
        }
    }
}

/// Accelerated projected gradient for a strongly convex smooth function over
/// a set, with gradient-based momentum restart.
///
/// Stops once the gradient mapping `L‖y − P(y − ∇/L)‖` drops below `tol`.
pub fn accelerated_projected_gradient<G>(
    set: &FeasibleSet,
    start: Vec<f64>,
    lipschitz: f64,
    grad: G,
    tol: f64,
) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let l = lipschitz;
    let mut x = start;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut residual = f64::INFINITY;
    for _ in 0..INNER_MAX_ITER {
        let g = grad(&y);
        let trial: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / l).collect();
        let x_next = set.project_euclidean(&trial)?;
        residual = l * dist(&x_next, &y);
        if residual <= tol {
            return Ok(x_next);
        }
        // Restart when the momentum direction opposes the gradient step.
        let restart = y
            .iter()
            .zip(&x_next)
            .zip(&x)
            .map(|((yi, xn), xo)| (yi - xn) * (xn - xo))
            .sum::<f64>()
            > 0.0;
        if restart {
            t = 1.0;
            y = x_next.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = x_next
                .iter()
                .zip(&x)
                .map(|(xn, xo)| xn + beta * (xn - xo))
                .collect();
            t = t_next;
        }
        x = x_next;
    }
    Err(Error::NumericalFailure {
        what: "accelerated projected gradient",
        iterations: INNER_MAX_ITER,
        residual,
    })
}
