use std::sync::OnceLock;

use nalgebra::DMatrix;

use super::{BlockPartition, SmoothObjective};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, inf_norm, mat_vec};
use crate::sets::{FeasibleSet, LocalQp};
use crate::spectral;

/// Relative asymmetry above which construction logs a warning.
const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue may dip this far below zero, relative to `λmax(Q)`.
const PSD_TOL: f64 = 1e-8;

/// `f(x) = xᵀQx + qᵀx` over a block partition of `x`.
#[derive(Debug)]
pub struct QuadraticObjective {
    q_mat: DMatrix<f64>,
    q_vec: Vec<f64>,
    partition: BlockPartition,
    lambda_max: OnceLock<f64>,
}

impl Clone for QuadraticObjective {
    fn clone(&self) -> Self {
        let lambda_max = OnceLock::new();
        if let Some(v) = self.lambda_max.get() {
            let _ = lambda_max.set(*v);
        }
        Self {
            q_mat: self.q_mat.clone(),
            q_vec: self.q_vec.clone(),
            partition: self.partition.clone(),
            lambda_max,
        }
    }
}

/// `Q = Q_d + Q_z`: the block-diagonal part of `Q` and its off-block-diagonal
/// complement.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    pub qd: DMatrix<f64>,
    pub qz: DMatrix<f64>,
}

impl QuadraticObjective {
    /// Builds the objective, symmetrizing `Q` and requiring it to be positive
    /// semidefinite.
    pub fn new(q_mat: DMatrix<f64>, q_vec: Vec<f64>, partition: BlockPartition) -> Result<Self> {
        let obj = Self::symmetrized(q_mat, q_vec, partition)?;
        obj.check_psd(false)?;
        Ok(obj)
    }

    /// As [`QuadraticObjective::new`] but requires `Q` positive definite.
    pub fn new_strict(
        q_mat: DMatrix<f64>,
        q_vec: Vec<f64>,
        partition: BlockPartition,
    ) -> Result<Self> {
        let obj = Self::symmetrized(q_mat, q_vec, partition)?;
        obj.check_psd(true)?;
        Ok(obj)
    }

    /// Skips the semidefiniteness check. For callers that build `Q` in a form
    /// that is PSD by construction (e.g. `AᵀPA`).
    pub(crate) fn new_unchecked(
        q_mat: DMatrix<f64>,
        q_vec: Vec<f64>,
        partition: BlockPartition,
    ) -> Result<Self> {
        Self::symmetrized(q_mat, q_vec, partition)
    }

    fn symmetrized(
        q_mat: DMatrix<f64>,
        q_vec: Vec<f64>,
        partition: BlockPartition,
    ) -> Result<Self> {
        let n = partition.dim();
        if q_mat.nrows() != n || q_mat.ncols() != n {
            return Err(Error::invalid(format!(
                "Q is {}x{} but the partition has dimension {n}",
                q_mat.nrows(),
                q_mat.ncols()
            )));
        }
        check_dim(n, q_vec.len())?;
        if q_mat.iter().chain(&q_vec).any(|v| !v.is_finite()) {
            return Err(Error::invalid("Q and q must be finite"));
        }
        let transpose = q_mat.transpose();
        let asym = inf_norm(&(&q_mat - &transpose));
        let q_mat = if asym > 0.0 {
            if asym > SYMMETRY_TOL * (1.0 + inf_norm(&q_mat)) {
                log::warn!("Q is not symmetric (‖Q − Qᵀ‖∞ = {asym:e}); using (Q + Qᵀ)/2");
            }
            (&q_mat + &transpose) * 0.5
        } else {
            q_mat
        };
        Ok(Self {
            q_mat,
            q_vec,
            partition,
            lambda_max: OnceLock::new(),
        })
    }

    fn check_psd(&self, strict: bool) -> Result<()> {
        let n = self.dim();
        if strict {
            return match self.q_mat.clone().cholesky() {
                Some(_) => Ok(()),
                None => Err(Error::invalid("Q is not positive definite")),
            };
        }
        let top = self.lambda_max()?;
        if top <= 0.0 {
            // Every eigenvalue is ≤ 0 and PSD needs them all ≥ −tol·top = 0.
            return if linalg::max_abs(self.q_mat.as_slice()) == 0.0 {
                Ok(())
            } else {
                Err(Error::invalid("Q is not positive semidefinite"))
            };
        }
        let shifted = &self.q_mat + DMatrix::identity(n, n) * (PSD_TOL * top);
        match shifted.cholesky() {
            Some(_) => Ok(()),
            None => Err(Error::invalid(format!(
                "Q is not positive semidefinite (smallest eigenvalue below −{PSD_TOL:e}·λmax)"
            ))),
        }
    }

    pub fn q_mat(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn q_vec(&self) -> &[f64] {
        &self.q_vec
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn agents(&self) -> usize {
        self.partition.agents()
    }

    /// `λmax(Q)`, computed once.
    pub fn lambda_max(&self) -> Result<f64> {
        if let Some(v) = self.lambda_max.get() {
            return Ok(*v);
        }
        let v = spectral::lambda_max_sym(&self.q_mat)?;
        Ok(*self.lambda_max.get_or_init(|| v))
    }

    /// `xᵀQx + qᵀx`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.partition.check(x)?;
        Ok(self.value_unchecked(x))
    }

    /// `2Qx + q`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.partition.check(x)?;
        Ok(self.gradient_unchecked(x))
    }

    fn value_unchecked(&self, x: &[f64]) -> f64 {
        dot(x, &mat_vec(&self.q_mat, x)) + dot(&self.q_vec, x)
    }

    fn gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.q_mat, x)
            .into_iter()
            .zip(&self.q_vec)
            .map(|(qx, q)| 2.0 * qx + q)
            .collect()
    }

    /// Diagonal block `Q_{i,i}`.
    pub fn diag_block(&self, i: usize) -> DMatrix<f64> {
        let r = self.partition.range(i);
        self.q_mat
            .view((r.start, r.start), (r.len(), r.len()))
            .into_owned()
    }

    pub fn block_decompose(&self) -> BlockDecomposition {
        let n = self.dim();
        let mut qd = DMatrix::zeros(n, n);
        for i in 0..self.agents() {
            let r = self.partition.range(i);
            for a in r.clone() {
                for b in r.clone() {
                    qd[(a, b)] = self.q_mat[(a, b)];
                }
            }
        }
        let qz = &self.q_mat - &qd;
        BlockDecomposition { qd, qz }
    }

    /// Coupling term `Σ_{j≠i} Q_{i,j} xʲ` seen by agent `i`.
    pub(crate) fn coupling(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let r = self.partition.range(i);
        r.map(|row| {
            let mut acc = 0.0;
            for (col, xc) in x.iter().enumerate() {
                if self.partition.owner(col) != i {
                    acc += self.q_mat[(row, col)] * xc;
                }
            }
            acc
        })
        .collect()
    }

    /// The strictly convex local problem of agent `i`:
    /// `zᵀ(Q_{i,i} + cI)z + (2Σ_{j≠i}Q_{i,j}xʲ − 2c xⁱ + q_i)ᵀz`.
    pub fn local_qp(&self, i: usize, x: &[f64], c: f64, set: &FeasibleSet) -> Result<LocalQp> {
        self.partition.check(x)?;
        let n_i = self.partition.size(i);
        let h = self.diag_block(i) + DMatrix::identity(n_i, n_i) * c;
        let x_i = self.partition.block(x, i);
        let q_i = &self.q_vec[self.partition.range(i)];
        let b = self
            .coupling(i, x)
            .into_iter()
            .zip(x_i.iter().zip(q_i))
            .map(|(cp, (xv, qv))| 2.0 * cp - 2.0 * c * xv + qv)
            .collect();
        LocalQp::new(h, b, set.clone())
    }

    /// `2Q_d z + 2Q_z x + q`, the closed form of the stacked gradient.
    pub fn stacked_gradient_closed(
        &self,
        decomp: &BlockDecomposition,
        z: &[f64],
        x: &[f64],
    ) -> Result<Vec<f64>> {
        self.partition.check(z)?;
        self.partition.check(x)?;
        let a = mat_vec(&decomp.qd, z);
        let b = mat_vec(&decomp.qz, x);
        Ok(a.iter()
            .zip(&b)
            .zip(&self.q_vec)
            .map(|((u, v), q)| 2.0 * u + 2.0 * v + q)
            .collect())
    }
}

impl BlockDecomposition {
    /// `λmax(Q_z)`.
    pub fn lambda_qz_max(&self) -> Result<f64> {
        spectral::lambda_max_sym(&self.qz)
    }
}

impl SmoothObjective for QuadraticObjective {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_unchecked(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_unchecked(x)
    }

    /// `2λmax(Q)`.
    fn lipschitz(&self) -> f64 {
        2.0 * self.lambda_max().unwrap_or_else(|_| inf_norm(&self.q_mat))
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        Some(self)
    }

    fn block_gradient(&self, i: usize, z_i: &[f64], x: &[f64]) -> Vec<f64> {
        let qii = self.diag_block(i);
        let own = mat_vec(&qii, z_i);
        let q_i = &self.q_vec[self.partition.range(i)];
        self.coupling(i, x)
            .into_iter()
            .zip(own)
            .zip(q_i)
            .map(|((cp, o), q)| 2.0 * o + 2.0 * cp + q)
            .collect()
    }

    fn solve_local(&self, i: usize, x: &[f64], c: f64, set: &FeasibleSet) -> Result<Vec<f64>> {
        self.local_qp(i, x, c, set)?.solve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::stacked_gradient;

    fn obj(q: &[f64], n: usize, qv: &[f64], sizes: Vec<usize>) -> QuadraticObjective {
        QuadraticObjective::new(
            DMatrix::from_row_slice(n, n, q),
            qv.to_vec(),
            BlockPartition::new(sizes).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = obj(&[1.0, 0.0, 0.0, 1.0], 2, &[-2.0, -2.0], vec![1, 1]);
        assert_eq!(f.eval(&[1.0, 1.0]).unwrap(), -2.0);
        assert_eq!(f.eval(&[0.0, 0.0]).unwrap(), 0.0);
        let g = obj(&[2.0, 1.0, 1.0, 3.0], 2, &[0.0, 0.0], vec![1, 1]);
        assert_eq!(g.eval(&[1.0, 1.0]).unwrap(), 7.0);
        assert!(matches!(
            f.eval(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn grad_examples() {
        let f = obj(&[1.0, 0.0, 0.0, 1.0], 2, &[-2.0, -2.0], vec![1, 1]);
        assert_eq!(f.grad(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(f.grad(&[0.0, 0.0]).unwrap(), vec![-2.0, -2.0]);
        let g = obj(&[2.0, 1.0, 1.0, 3.0], 2, &[1.0, 0.0], vec![1, 1]);
        assert_eq!(g.grad(&[1.0, 0.0]).unwrap(), vec![5.0, 2.0]);
        assert!(g.grad(&[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn decompose_examples() {
        let g = obj(&[2.0, 1.0, 1.0, 3.0], 2, &[0.0, 0.0], vec![1, 1]);
        let d = g.block_decompose();
        assert_eq!(d.qd, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert_eq!(d.qz, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));

        let ones = obj(&[1.0; 9], 3, &[0.0; 3], vec![1, 1, 1]);
        let d = ones.block_decompose();
        let expected = DMatrix::from_element(3, 3, 1.0) - DMatrix::<f64>::identity(3, 3);
        assert_eq!(d.qz, expected);

        let diag = obj(
            &[4.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0],
            3,
            &[0.0; 3],
            vec![2, 1],
        );
        assert!(diag.block_decompose().qz.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decompose_is_idempotent_on_qd() {
        let f = obj(
            &[2.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0],
            3,
            &[0.0; 3],
            vec![2, 1],
        );
        let d = f.block_decompose();
        let again = QuadraticObjective::new(d.qd.clone(), vec![0.0; 3], f.partition().clone())
            .unwrap()
            .block_decompose();
        assert_eq!(again.qd, d.qd);
        assert!(again.qz.iter().all(|v| *v == 0.0));
        assert_eq!(&d.qd + &d.qz, *f.q_mat());
    }

    #[test]
    fn stacked_gradient_example() {
        let g = obj(&[2.0, 1.0, 1.0, 3.0], 2, &[0.0, 0.0], vec![1, 1]);
        let s = stacked_gradient(&g, &[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!(s, vec![8.0, 6.0]);
        let d = g.block_decompose();
        assert_eq!(
            g.stacked_gradient_closed(&d, &[1.0, 1.0], &[0.0, 2.0])
                .unwrap(),
            vec![8.0, 6.0]
        );
    }

    #[test]
    fn stacked_gradient_without_coupling_ignores_x() {
        let f = obj(&[2.0, 0.0, 0.0, 3.0], 2, &[1.0, -1.0], vec![1, 1]);
        let a = stacked_gradient(&f, &[1.0, 2.0], &[5.0, -7.0]).unwrap();
        let b = stacked_gradient(&f, &[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![5.0, 11.0]);
    }

    #[test]
    fn asymmetric_input_is_averaged() {
        let f = QuadraticObjective::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            vec![0.0, 0.0],
            BlockPartition::scalar(2).unwrap(),
        );
        // (Q+Qᵀ)/2 = [[1,1],[1,1]] is PSD.
        let f = f.unwrap();
        assert_eq!(f.q_mat()[(0, 1)], 1.0);
        assert_eq!(f.q_mat()[(1, 0)], 1.0);
    }

    #[test]
    fn rejects_indefinite_and_honours_strict() {
        let part = BlockPartition::scalar(2).unwrap();
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(QuadraticObjective::new(indefinite, vec![0.0; 2], part.clone()).is_err());

        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(QuadraticObjective::new(singular.clone(), vec![0.0; 2], part.clone()).is_ok());
        assert!(QuadraticObjective::new_strict(singular, vec![0.0; 2], part.clone()).is_err());
        assert!(QuadraticObjective::new(
            -DMatrix::<f64>::identity(2, 2),
            vec![0.0; 2],
            part.clone()
        )
        .is_err());
        assert!(QuadraticObjective::new(DMatrix::zeros(2, 2), vec![0.0; 2], part).is_ok());
    }
}
