use nalgebra::DMatrix;

use super::BlockPartition;
use crate::error::{check_dim, Error, Result};
use crate::sets::{self, FeasibleSet};
use crate::spectral;

/// A jointly convex, continuously differentiable objective over the stacked
/// decision vector, with a known Lipschitz constant for its gradient.
pub trait SmoothObjective: Sync {
    fn partition(&self) -> &BlockPartition;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Lipschitz constant `L` of `∇f` over the feasible set.
    fn lipschitz(&self) -> f64;

    /// The quadratic form of this objective, when it has one. Enables the
    /// projection and scaled-gradient forms of the update.
    fn as_quadratic(&self) -> Option<&super::QuadraticObjective> {
        None
    }

    /// `∇ⁱf(zⁱ, x⁻ⁱ)`: block `i` of the gradient at `x` with block `i`
    /// replaced by `z_i`.
    fn block_gradient(&self, i: usize, z_i: &[f64], x: &[f64]) -> Vec<f64> {
        let range = self.partition().range(i);
        let mut w = x.to_vec();
        w[range.clone()].copy_from_slice(z_i);
        self.gradient(&w)[range].to_vec()
    }

    /// Block `i` of the regularized Jacobi update:
    /// `argmin_{z ∈ set} f(z, x⁻ⁱ) + c‖z − xⁱ‖²`.
    ///
    /// The default runs an accelerated projected-gradient loop on the local
    /// objective; quadratic objectives override it with an exact QP solve.
    fn solve_local(&self, i: usize, x: &[f64], c: f64, set: &FeasibleSet) -> Result<Vec<f64>> {
        let x_i = self.partition().block(x, i).to_vec();
        let step_l = self.lipschitz() + 2.0 * c;
        if !(step_l > 0.0) {
            return Err(Error::invalid(
                "local problem needs L + 2c > 0 for a finite step size",
            ));
        }
        let grad = |z: &[f64]| {
            let mut g = self.block_gradient(i, z, x);
            for (gj, (zj, xj)) in g.iter_mut().zip(z.iter().zip(&x_i)) {
                *gj += 2.0 * c * (zj - xj);
            }
            g
        };
        let start = set.project_euclidean(&x_i)?;
        let tol = sets::INNER_TOL * (1.0 + crate::linalg::norm(&grad(&start)));
        sets::accelerated_projected_gradient(set, start, step_l, grad, tol)
    }
}

/// Stacked vector whose block `i` is `∇ⁱf(zⁱ, x⁻ⁱ)`, i.e. the gradient of
/// `Σᵢ f(·, x⁻ⁱ)` evaluated at `z`.
pub fn stacked_gradient<F: SmoothObjective + ?Sized>(
    obj: &F,
    z: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    let part = obj.partition();
    part.check(z)?;
    part.check(x)?;
    let mut out = Vec::with_capacity(part.dim());
    for i in 0..part.agents() {
        out.extend(obj.block_gradient(i, part.block(z, i), x));
    }
    Ok(out)
}

/// Gradient of `y ↦ Σᵢ f(zⁱ, y⁻ⁱ)` at `y`: every agent contributes the full
/// gradient at `(zⁱ, y⁻ⁱ)` with its own block masked out.
pub fn frozen_gradient<F: SmoothObjective + ?Sized>(
    obj: &F,
    z: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let part = obj.partition();
    part.check(z)?;
    part.check(y)?;
    let mut out = vec![0.0; part.dim()];
    for i in 0..part.agents() {
        let range = part.range(i);
        let mut w = y.to_vec();
        w[range.clone()].copy_from_slice(&z[range.clone()]);
        let g = obj.gradient(&w);
        for (j, (o, gj)) in out.iter_mut().zip(&g).enumerate() {
            if !range.contains(&j) {
                *o += gj;
            }
        }
    }
    Ok(out)
}

/// `Σᵢ f(zⁱ, x⁻ⁱ)`.
pub fn partial_sum<F: SmoothObjective + ?Sized>(obj: &F, z: &[f64], x: &[f64]) -> Result<f64> {
    let part = obj.partition();
    part.check(z)?;
    part.check(x)?;
    let mut total = 0.0;
    let mut w = x.to_vec();
    for i in 0..part.agents() {
        let range = part.range(i);
        w[range.clone()].copy_from_slice(&z[range.clone()]);
        total += obj.value(&w);
        w[range.clone()].copy_from_slice(&x[range]);
    }
    Ok(total)
}

/// `f(x) = τ · log Σⱼ exp(aⱼᵀx / τ)`, a smooth convex soft-max of linear forms.
///
/// Its Hessian is `(1/τ) Aᵀ(diag(s) − s sᵀ)A ⪯ (1/τ) AᵀA`, so
/// `L = λmax(AᵀA) / τ`.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    a: DMatrix<f64>,
    tau: f64,
    lipschitz: f64,
    partition: BlockPartition,
}

impl LogSumExp {
    pub fn new(a: DMatrix<f64>, tau: f64, partition: BlockPartition) -> Result<Self> {
        check_dim(partition.dim(), a.ncols())?;
        if a.nrows() == 0 {
            return Err(Error::invalid("log-sum-exp needs at least one row"));
        }
        if !(tau > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        let ata = a.transpose() * &a;
        let lipschitz = spectral::lambda_max_sym(&ata)? / tau;
        Ok(Self {
            a,
            tau,
            lipschitz,
            partition,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn scaled_forms(&self, x: &[f64]) -> Vec<f64> {
        crate::linalg::mat_vec(&self.a, x)
            .into_iter()
            .map(|v| v / self.tau)
            .collect()
    }
}

impl SmoothObjective for LogSumExp {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = self.scaled_forms(x);
        let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = s.iter().map(|v| (v - top).exp()).sum();
        self.tau * (top + sum.ln())
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scaled_forms(x);
        let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = s.iter().map(|v| (v - top).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut g = vec![0.0; self.a.ncols()];
        for (r, wr) in w.iter().enumerate() {
            let p = wr / total;
            for (c, gc) in g.iter_mut().enumerate() {
                *gc += p * self.a[(r, c)];
            }
        }
        g
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lse() -> LogSumExp {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        LogSumExp::new(a, 0.5, BlockPartition::scalar(2).unwrap()).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let f = lse();
        let x = [0.3, -0.2];
        let g = f.gradient(&x);
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            assert!(
                (fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()),
                "{fd} vs {}",
                g[j]
            );
        }
    }

    #[test]
    fn lipschitz_is_lambda_max_over_tau() {
        // AᵀA = [[2,-1],[-1,2]] has eigenvalues 1 and 3.
        assert!((lse().lipschitz() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn stacked_gradient_at_diagonal_is_gradient() {
        let f = lse();
        let x = [0.1, 0.7];
        let s = stacked_gradient(&f, &x, &x).unwrap();
        let g = f.gradient(&x);
        for (a, b) in s.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
