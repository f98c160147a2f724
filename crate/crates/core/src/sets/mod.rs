//! Per-agent compact convex sets, their projections, and the strictly convex
//! local QP solved by every agent at each Jacobi step.

mod budget;
mod local_qp;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, max_abs};

pub use budget::{project_budget, BUDGET_TOL, MAX_BISECTION};
pub use local_qp::{accelerated_projected_gradient, LocalQp, INNER_MAX_ITER, INNER_TOL};

/// Cap on Dykstra cycles for polytope projections.
const DYKSTRA_MAX_CYCLES: usize = 100_000;

/// A non-empty compact convex set `Xⁱ ⊂ R^{n_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeasibleSet {
    /// `lower ≤ z ≤ upper`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `lower ≤ z ≤ upper` and `Σ z = gamma`.
    BudgetBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
        gamma: f64,
    },
    /// `a z ≤ b` inside the box `lower ≤ z ≤ upper`; `point` is a known
    /// feasible point.
    Polytope {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        point: Vec<f64>,
    },
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let s = FeasibleSet::Box { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn budget_box(lower: Vec<f64>, upper: Vec<f64>, gamma: f64) -> Result<Self> {
        let s = FeasibleSet::BudgetBox {
            lower,
            upper,
            gamma,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn polytope(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        point: Vec<f64>,
    ) -> Result<Self> {
        let s = FeasibleSet::Polytope {
            a,
            b,
            lower,
            upper,
            point,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks the set is well formed and non-empty. Deserialized sets should
    /// be validated before use.
    pub fn validate(&self) -> Result<()> {
        let (lower, upper) = self.bounds();
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::invalid("set has dimension zero"));
        }
        if lower.iter().chain(upper).any(|v| !v.is_finite()) {
            return Err(Error::infeasible("bounds must be finite"));
        }
        if let Some(j) = (0..lower.len()).find(|&j| lower[j] > upper[j]) {
            return Err(Error::infeasible(format!(
                "lower[{j}] = {} exceeds upper[{j}] = {}",
                lower[j], upper[j]
            )));
        }
        match self {
            FeasibleSet::Box { .. } => Ok(()),
            FeasibleSet::BudgetBox { gamma, .. } => {
                let lo: f64 = lower.iter().sum();
                let hi: f64 = upper.iter().sum();
                let tol = BUDGET_TOL * (1.0 + gamma.abs());
                if !gamma.is_finite() || *gamma < lo - tol || *gamma > hi + tol {
                    return Err(Error::infeasible(format!(
                        "budget {gamma} outside [{lo}, {hi}]"
                    )));
                }
                Ok(())
            }
            FeasibleSet::Polytope { a, b, point, .. } => {
                check_dim(a.len(), b.len())?;
                check_dim(lower.len(), point.len())?;
                for row in a {
                    check_dim(lower.len(), row.len())?;
                }
                if !self.contains(point, 1e-9) {
                    return Err(Error::infeasible("certified point violates the polytope"));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds().0.len()
    }

    /// The (enclosing) box bounds.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        match self {
            FeasibleSet::Box { lower, upper }
            | FeasibleSet::BudgetBox { lower, upper, .. }
            | FeasibleSet::Polytope { lower, upper, .. } => (lower, upper),
        }
    }

    /// Membership up to an absolute tolerance on every constraint.
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        let (lower, upper) = self.bounds();
        if z.len() != lower.len() {
            return false;
        }
        let in_box = z
            .iter()
            .zip(lower.iter().zip(upper))
            .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol);
        if !in_box {
            return false;
        }
        match self {
            FeasibleSet::Box { .. } => true,
            FeasibleSet::BudgetBox { gamma, .. } => (z.iter().sum::<f64>() - gamma).abs() <= tol,
            FeasibleSet::Polytope { a, b, .. } => {
                a.iter().zip(b).all(|(row, bi)| dot(row, z) <= bi + tol)
            }
        }
    }

    /// `argmin_{z ∈ set} ‖z − v‖²`.
    pub fn project_euclidean(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        match self {
            FeasibleSet::Box { lower, upper } => Ok(v
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(x, (l, u))| x.clamp(*l, *u))
                .collect()),
            FeasibleSet::BudgetBox {
                lower,
                upper,
                gamma,
            } => project_budget(v, &vec![1.0; v.len()], lower, upper, *gamma),
            FeasibleSet::Polytope {
                a, b, lower, upper, ..
            } => dykstra(v, a, b, lower, upper),
        }
    }

    /// `argmin_{z ∈ set} (z − v)ᵀW(z − v)` for symmetric positive definite `W`.
    pub fn project_weighted(&self, v: &[f64], w: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        // (z − v)ᵀW(z − v) = zᵀWz − 2(Wv)ᵀz + const
        let wv = crate::linalg::mat_vec(w, v);
        let b = wv.into_iter().map(|x| -2.0 * x).collect();
        LocalQp::new(w.clone(), b, self.clone())?.solve()
    }

    /// A deterministic point of the set: the box midpoint, the Euclidean
    /// projection of the even split `γ/n` for budgets, or the certified point.
    pub fn feasible_point(&self) -> Result<Vec<f64>> {
        match self {
            FeasibleSet::Box { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect()),
            FeasibleSet::BudgetBox { gamma, .. } => {
                let even = vec![gamma / self.dim() as f64; self.dim()];
                self.project_euclidean(&even)
            }
            FeasibleSet::Polytope { point, .. } => Ok(point.clone()),
        }
    }

    /// A random point of the set: uniform in the box, then projected onto
    /// the set for budget boxes and polytopes.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let (lower, upper) = self.bounds();
        let raw: Vec<f64> = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| if u > l { rng.random_range(*l..=*u) } else { *l })
            .collect();
        match self {
            FeasibleSet::Box { .. } => Ok(raw),
            _ => self.project_euclidean(&raw),
        }
    }
}

fn clamp_box(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

/// Dykstra's alternating projections onto the box and each halfspace
/// `aᵣᵀz ≤ bᵣ`; converges to the projection onto their intersection.
fn dykstra(v: &[f64], a: &[Vec<f64>], b: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    let n = v.len();
    let sets = a.len() + 1;
    let mut x = v.to_vec();
    let mut incr = vec![vec![0.0; n]; sets];
    let scale = 1.0 + max_abs(v);
    let mut change = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_CYCLES {
        let before = x.clone();
        // The iterate alone can stall while the increments still move, so
        // their change enters the stopping test too.
        let mut incr_change = 0.0;
        for (k, p) in incr.iter_mut().enumerate() {
            let y: Vec<f64> = x.iter().zip(p.iter()).map(|(xi, pi)| xi + pi).collect();
            let mut proj = y.clone();
            if k == 0 {
                clamp_box(&mut proj, lower, upper);
            } else {
                let row = &a[k - 1];
                let excess = dot(row, &proj) - b[k - 1];
                let nn = dot(row, row);
                if excess > 0.0 && nn > 0.0 {
                    for (pj, rj) in proj.iter_mut().zip(row) {
                        *pj -= excess / nn * rj;
                    }
                }
            }
            for j in 0..n {
                let next = y[j] - proj[j];
                incr_change += (next - p[j]) * (next - p[j]);
                p[j] = next;
            }
            x = proj;
        }
        change = crate::linalg::dist(&x, &before).max(incr_change.sqrt());
        let violation = a
            .iter()
            .zip(b)
            .map(|(row, bi)| dot(row, &x) - bi)
            .fold(0.0_f64, f64::max)
            .max(
                x.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(xi, (l, u))| (l - xi).max(xi - u))
                    .fold(0.0_f64, f64::max),
            );
        if change <= 1e-15 * scale && violation <= 1e-13 * scale {
            clamp_box(&mut x, lower, upper);
            return Ok(x);
        }
    }
    Err(Error::NumericalFailure {
        what: "Dykstra projection",
        iterations: DYKSTRA_MAX_CYCLES,
        residual: change,
    })
}
