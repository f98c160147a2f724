//! Extreme eigenvalues of symmetric operators and the regularization
//! thresholds derived from them.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, inf_norm};
use crate::problem::QuadraticObjective;

/// Power-iteration cap.
pub const POWER_MAX_ITER: usize = 100_000;
/// Residual `‖Mv − ρv‖` accepted, relative to the shift.
const POWER_TOL: f64 = 1e-11;

/// A symmetric linear map given only by its action.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], out: &mut [f64]);

    /// `max_r Σ_c |M_rc|`, an upper bound on the spectral radius.
    fn max_abs_row_sum(&self) -> f64;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, xc) in x.iter().enumerate() {
                acc += self[(r, c)] * xc;
            }
            *o = acc;
        }
    }

    fn max_abs_row_sum(&self) -> f64 {
        inf_norm(self)
    }
}

/// `1_{m×m} ⊗ diag(p)`, or with `hollow` set, `(1_{m×m} − I) ⊗ diag(p)`:
/// the structure of fleet objectives where agents couple only through the
/// per-slot total.
#[derive(Debug, Clone)]
pub struct KroneckerOnes {
    agents: usize,
    diag: Vec<f64>,
    hollow: bool,
}

impl KroneckerOnes {
    pub fn full(agents: usize, diag: Vec<f64>) -> Self {
        Self {
            agents,
            diag,
            hollow: false,
        }
    }

    /// The off-block-diagonal part.
    pub fn hollow(agents: usize, diag: Vec<f64>) -> Self {
        Self {
            agents,
            diag,
            hollow: true,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let t = self.diag.len();
        let n = self.agents * t;
        DMatrix::from_fn(n, n, |r, c| {
            let same_slot = r % t == c % t;
            let same_agent = r / t == c / t;
            if same_slot && !(self.hollow && same_agent) {
                self.diag[r % t]
            } else {
                0.0
            }
        })
    }
}

impl SymmetricOperator for KroneckerOnes {
    fn dim(&self) -> usize {
        self.agents * self.diag.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let t = self.diag.len();
        let mut total = vec![0.0; t];
        for block in x.chunks(t) {
            for (s, v) in total.iter_mut().zip(block) {
                *s += v;
            }
        }
        for (ob, xb) in out.chunks_mut(t).zip(x.chunks(t)) {
            for k in 0..t {
                let others = if self.hollow {
                    total[k] - xb[k]
                } else {
                    total[k]
                };
                ob[k] = self.diag[k] * others;
            }
        }
    }

    fn max_abs_row_sum(&self) -> f64 {
        let copies = if self.hollow {
            self.agents - 1
        } else {
            self.agents
        };
        copies as f64 * self.diag.iter().fold(0.0_f64, |m, p| m.max(p.abs()))
    }
}

/// Largest eigenvalue of a dense symmetric matrix.
pub fn lambda_max_sym(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("matrix is not square"));
    }
    let asym = inf_norm(&(m - m.transpose()));
    if asym > 1e-12 * (1.0 + inf_norm(m)) {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (‖M − Mᵀ‖∞ = {asym:e})"
        )));
    }
    lambda_max_op(m)
}

/// Largest eigenvalue of a symmetric operator by power iteration on
/// `M + σI`, with `σ` the maximum absolute row sum so that the shifted
/// spectrum lies in `[0, 2σ]` and its top end dominates.
///
/// Runs from two deterministic starts (all-ones, and a low-discrepancy
/// sequence in case the first is orthogonal to the top eigenvector) and
/// keeps the larger Rayleigh quotient.
pub fn lambda_max_op<O: SymmetricOperator + ?Sized>(op: &O) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::invalid("operator has dimension zero"));
    }
    let shift = op.max_abs_row_sum();
    if shift == 0.0 {
        return Ok(0.0);
    }
    let ones = vec![1.0; n];
    let golden: Vec<f64> = (0..n)
        .map(|j| 0.5 + ((j as f64 + 1.0) * 0.618_033_988_749_894_9).fract())
        .collect();
    let a = power_iteration(op, shift, ones)?;
    let b = power_iteration(op, shift, golden)?;
    Ok(a.max(b))
}

fn power_iteration<O: SymmetricOperator + ?Sized>(
    op: &O,
    shift: f64,
    mut v: Vec<f64>,
) -> Result<f64> {
    let n = v.len();
    let scale = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= scale);
    let mut w = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut rho = 0.0;
    for _ in 0..POWER_MAX_ITER {
        op.apply(&v, &mut w);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += shift * vi;
        }
        rho = dot(&v, &w);
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= POWER_TOL * shift {
            return Ok(rho - shift);
        }
        let len = dot(&w, &w).sqrt();
        if len == 0.0 {
            // v sits in the eigenspace of −σ; the top of the spectrum is at
            // least that, and this start carries no more information.
            return Ok(-shift);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / len;
        }
    }
    log::debug!("power iteration stopped at rho = {}", rho - shift);
    Err(Error::NumericalFailure {
        what: "power iteration",
        iterations: POWER_MAX_ITER,
        residual,
    })
}

/// Eigenvalue summary and the convergence thresholds on the regularization
/// coefficient `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub agents: usize,
    /// `λmax(Q_z)`.
    pub lambda_qz_max: f64,
    /// `λmax(Q)`.
    pub lambda_q_max: f64,
    /// Fixed-point threshold: `λmax(Q_z)`.
    pub c_thm1: f64,
    /// Value-convergence threshold for quadratics: `(m−1)/(2m−1) · 2λmax(Q_z)`.
    pub c_thm3: f64,
    /// Value-convergence threshold for smooth objectives:
    /// `(m−1)/(2m−1) · √m · L`. Present only when `L` was supplied.
    pub c_eq38: Option<f64>,
    /// Scaled projected gradient threshold: `λmax(Q)`.
    pub c_grad: f64,
}

impl SpectralBounds {
    pub fn from_eigenvalues(
        agents: usize,
        lambda_qz_max: f64,
        lambda_q_max: f64,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        if agents == 0 {
            return Err(Error::invalid("need at least one agent"));
        }
        if let Some(l) = lipschitz {
            if !(l > 0.0) {
                return Err(Error::invalid("Lipschitz constant must be positive"));
            }
        }
        let m = agents as f64;
        let ratio = (m - 1.0) / (2.0 * m - 1.0);
        Ok(Self {
            agents,
            lambda_qz_max,
            lambda_q_max,
            c_thm1: lambda_qz_max,
            c_thm3: ratio * 2.0 * lambda_qz_max,
            c_eq38: lipschitz.map(|l| ratio * m.sqrt() * l),
            c_grad: lambda_q_max,
        })
    }

    pub fn from_operators<A, B>(
        agents: usize,
        q: &A,
        qz: &B,
        lipschitz: Option<f64>,
    ) -> Result<Self>
    where
        A: SymmetricOperator + ?Sized,
        B: SymmetricOperator + ?Sized,
    {
        Self::from_eigenvalues(agents, lambda_max_op(qz)?, lambda_max_op(q)?, lipschitz)
    }

    pub fn threshold(&self, policy: CPolicy) -> Result<f64> {
        match policy {
            CPolicy::Thm1 => Ok(self.c_thm1),
            CPolicy::Thm3 => Ok(self.c_thm3),
            CPolicy::Eq38 => self
                .c_eq38
                .ok_or_else(|| Error::invalid("eq38 policy needs a Lipschitz constant")),
            CPolicy::Grad => Ok(self.c_grad),
        }
    }
}

/// `SpectralBounds` for a quadratic objective, optionally with a Lipschitz
/// constant for the smooth-objective threshold.
pub fn compute_bounds(obj: &QuadraticObjective, lipschitz: Option<f64>) -> Result<SpectralBounds> {
    let decomp = obj.block_decompose();
    SpectralBounds::from_eigenvalues(
        obj.agents(),
        decomp.lambda_qz_max()?,
        obj.lambda_max()?,
        lipschitz,
    )
}

/// Which threshold to sit above when choosing `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CPolicy {
    Thm1,
    Thm3,
    Eq38,
    Grad,
}

impl FromStr for CPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm1" => Ok(CPolicy::Thm1),
            "thm3" => Ok(CPolicy::Thm3),
            "eq38" => Ok(CPolicy::Eq38),
            "grad" => Ok(CPolicy::Grad),
            other => Err(Error::invalid(format!("unknown c policy {other:?}"))),
        }
    }
}

impl fmt::Display for CPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CPolicy::Thm1 => "thm1",
            CPolicy::Thm3 => "thm3",
            CPolicy::Eq38 => "eq38",
            CPolicy::Grad => "grad",
        })
    }
}

/// Default relative margin above a threshold.
pub const DEFAULT_MARGIN: f64 = 0.01;

/// Where `c` comes from: a threshold plus margin, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CChoice {
    Policy { policy: CPolicy, margin: f64 },
    Manual(f64),
}

/// `(1 + margin) · threshold`, or `margin` itself when the threshold is zero;
/// manual values pass through unchanged.
pub fn pick_c(bounds: &SpectralBounds, choice: CChoice) -> Result<f64> {
    match choice {
        CChoice::Manual(c) => {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::invalid(format!(
                    "manual c must be a nonnegative number, got {c}"
                )));
            }
            Ok(c)
        }
        CChoice::Policy { policy, margin } => {
            if !(margin > 0.0) {
                return Err(Error::invalid("margin must be positive"));
            }
            let t = bounds.threshold(policy)?;
            Ok(if t > 0.0 { (1.0 + margin) * t } else { margin })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((lambda_max_sym(&swap).unwrap() - 1.0).abs() < 1e-10);
        let scaled = DMatrix::<f64>::identity(4, 4) * 4.0;
        assert!((lambda_max_sym(&scaled).unwrap() - 4.0).abs() < 1e-10);
        let ones = DMatrix::from_element(5, 5, 1.0);
        assert!((lambda_max_sym(&ones).unwrap() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn top_eigenvector_orthogonal_to_ones() {
        // Eigenvectors (1,1) → 0 and (1,−1) → 2; the all-ones start alone
        // would report 0.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!((lambda_max_sym(&m).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn negative_definite() {
        let m = DMatrix::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, -1.0]);
        assert!((lambda_max_sym(&m).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(lambda_max_sym(&m).is_err());
    }

    #[test]
    fn kronecker_matches_dense() {
        let p = vec![0.1, 0.3, 0.2];
        for op in [
            KroneckerOnes::full(4, p.clone()),
            KroneckerOnes::hollow(4, p.clone()),
        ] {
            let dense = op.to_dense();
            let x: Vec<f64> = (0..12).map(|j| (j as f64 * 0.7).sin()).collect();
            let mut a = vec![0.0; 12];
            let mut b = vec![0.0; 12];
            op.apply(&x, &mut a);
            dense.apply(&x, &mut b);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-15);
            }
            assert_eq!(op.max_abs_row_sum(), dense.max_abs_row_sum());
        }
    }

    #[test]
    fn pick_c_policies() {
        let b = SpectralBounds::from_eigenvalues(3, 1.0, 2.0, None).unwrap();
        let c = pick_c(
            &b,
            CChoice::Policy {
                policy: CPolicy::Thm1,
                margin: 0.01,
            },
        )
        .unwrap();
        assert!((c - 1.01).abs() < 1e-15);
        assert_eq!(pick_c(&b, CChoice::Manual(0.1485)).unwrap(), 0.1485);
        assert!(pick_c(
            &b,
            CChoice::Policy {
                policy: CPolicy::Eq38,
                margin: 0.01
            }
        )
        .is_err());
        assert!(pick_c(
            &b,
            CChoice::Policy {
                policy: CPolicy::Grad,
                margin: 0.0
            }
        )
        .is_err());

        let single = SpectralBounds::from_eigenvalues(1, 0.0, 2.0, Some(4.0)).unwrap();
        assert_eq!(single.c_thm3, 0.0);
        assert_eq!(single.c_eq38, Some(0.0));
        assert_eq!(
            pick_c(
                &single,
                CChoice::Policy {
                    policy: CPolicy::Thm3,
                    margin: 0.05
                }
            )
            .unwrap(),
            0.05
        );
    }

    #[test]
    fn thresholds_are_ordered() {
        for m in 1..50 {
            let b = SpectralBounds::from_eigenvalues(m, 1.5, 3.0, None).unwrap();
            assert!(b.c_thm3 < b.c_thm1);
        }
    }
}
