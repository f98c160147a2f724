//! Seeded problem generators.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BlockPartition, LogSumExp, Problem, QuadraticObjective};
use crate::sets::FeasibleSet;

/// The three coupling patterns with closed-form spectra: all-ones, all-ones
/// plus `mI`, and `mI`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceFamily {
    Ones,
    OnesPlusDiagonal,
    ScaledIdentity,
}

impl ReferenceFamily {
    pub const ALL: [ReferenceFamily; 3] =
        [Self::Ones, Self::OnesPlusDiagonal, Self::ScaledIdentity];

    pub fn matrix(self, m: usize) -> DMatrix<f64> {
        let mf = m as f64;
        match self {
            Self::Ones => DMatrix::from_element(m, m, 1.0),
            Self::OnesPlusDiagonal => {
                DMatrix::from_element(m, m, 1.0) + DMatrix::identity(m, m) * mf
            }
            Self::ScaledIdentity => DMatrix::identity(m, m) * mf,
        }
    }

    /// `(λmax(Q_z), λmax(Q))` for scalar agents.
    pub fn closed_form(self, m: usize) -> (f64, f64) {
        let mf = m as f64;
        match self {
            Self::Ones => (mf - 1.0, mf),
            Self::OnesPlusDiagonal => (mf - 1.0, 2.0 * mf),
            Self::ScaledIdentity => (0.0, mf),
        }
    }

    /// Objective `xᵀQx` with one scalar variable per agent.
    pub fn objective(self, m: usize) -> Result<QuadraticObjective> {
        QuadraticObjective::new(self.matrix(m), vec![0.0; m], BlockPartition::scalar(m)?)
    }
}

impl fmt::Display for ReferenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ones => "ones",
            Self::OnesPlusDiagonal => "ones+mI",
            Self::ScaledIdentity => "mI",
        })
    }
}

fn random_sizes(rng: &mut ChaCha8Rng, m: usize, max_block: usize) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(1..=max_block)).collect()
}

/// `BᵀB` for a random `k×n` matrix `B`; rank-deficient whenever `k < n`.
fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
    b.transpose() * b
}

fn random_box(rng: &mut ChaCha8Rng, n: usize) -> FeasibleSet {
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
    let upper = lower
        .iter()
        .map(|l| l + rng.random_range(0.5..2.5))
        .collect();
    FeasibleSet::boxed(lower, upper).expect("lower < upper by construction")
}

fn random_budget_box(rng: &mut ChaCha8Rng, n: usize) -> FeasibleSet {
    let lower = vec![0.0; n];
    let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = upper.iter().sum();
    let gamma = rng.random_range(0.2..0.8) * total;
    FeasibleSet::budget_box(lower, upper, gamma).expect("gamma inside the box range")
}

/// Options for [`random_quadratic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub agents: usize,
    pub max_block: usize,
    /// Use budget boxes for agents with at least two variables.
    pub budgets: bool,
    /// Allow rank-deficient `Q`.
    pub singular: bool,
}

impl RandomSpec {
    pub fn new(agents: usize, max_block: usize) -> Self {
        Self {
            agents,
            max_block,
            budgets: false,
            singular: false,
        }
    }
}

/// A random convex quadratic over boxes (or budget boxes).
pub fn random_quadratic(seed: u64, spec: RandomSpec) -> Result<Problem<QuadraticObjective>> {
    if spec.agents == 0 || spec.max_block == 0 {
        return Err(Error::invalid("agents and max_block must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = random_sizes(&mut rng, spec.agents, spec.max_block);
    let n: usize = sizes.iter().sum();
    let rank = if spec.singular && n > 1 {
        rng.random_range(1..n)
    } else {
        n + 1
    };
    let q_mat = random_psd(&mut rng, n, rank);
    let q_vec = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let sets = sizes
        .iter()
        .map(|&k| {
            if spec.budgets && k >= 2 {
                random_budget_box(&mut rng, k)
            } else {
                random_box(&mut rng, k)
            }
        })
        .collect();
    let obj = QuadraticObjective::new(q_mat, q_vec, BlockPartition::new(sizes)?)?;
    Problem::new(obj, sets)
}

/// `(x₁ + x₂)² − (x₁ + x₂)` over `[0,1]²` with scalar agents; every point
/// with `x₁ + x₂ = 1/2` is a minimizer.
pub fn singular_pair() -> Problem<QuadraticObjective> {
    let obj = QuadraticObjective::new(
        DMatrix::from_element(2, 2, 1.0),
        vec![-1.0, -1.0],
        BlockPartition::scalar(2).expect("two agents"),
    )
    .expect("PSD");
    Problem::new(
        obj,
        vec![FeasibleSet::boxed(vec![0.0], vec![1.0]).expect("box"); 2],
    )
    .expect("consistent")
}

/// Twenty fixed instances with `m ∈ {1,…,4}` and blocks of size one to
/// three, mixing boxes, budget boxes and rank-deficient `Q`. The last entry
/// is [`singular_pair`].
pub fn regression_set() -> Vec<(String, Problem<QuadraticObjective>)> {
    let mut out = Vec::with_capacity(20);
    for k in 0..19u64 {
        let spec = RandomSpec {
            agents: 1 + (k as usize % 4),
            max_block: 3,
            budgets: k % 3 == 1,
            singular: k % 5 == 2,
        };
        let seed = 1000 + k;
        let p = random_quadratic(seed, spec).expect("generator produces valid instances");
        out.push((format!("random-{seed}"), p));
    }
    out.push(("singular-pair".to_string(), singular_pair()));
    out
}

/// `τ·log Σⱼ exp(aⱼᵀx/τ)` with random `A`, over boxes.
pub fn random_log_sum_exp(
    seed: u64,
    agents: usize,
    max_block: usize,
    rows: usize,
) -> Result<Problem<LogSumExp>> {
    if agents == 0 || max_block == 0 || rows == 0 {
        return Err(Error::invalid(
            "agents, max_block and rows must be positive",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = random_sizes(&mut rng, agents, max_block);
    let n: usize = sizes.iter().sum();
    let a = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
    let tau = rng.random_range(0.5..2.0);
    let sets = sizes.iter().map(|&k| random_box(&mut rng, k)).collect();
    let obj = LogSumExp::new(a, tau, BlockPartition::new(sizes)?)?;
    Problem::new(obj, sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = random_quadratic(5, RandomSpec::new(3, 3)).unwrap();
        let b = random_quadratic(5, RandomSpec::new(3, 3)).unwrap();
        assert_eq!(a.objective().q_mat(), b.objective().q_mat());
        assert_eq!(a.sets(), b.sets());
    }

    #[test]
    fn regression_set_shape() {
        let set = regression_set();
        assert_eq!(set.len(), 20);
        for (_, p) in &set {
            assert!((1..=4).contains(&p.agents()));
            assert!(p
                .objective()
                .partition()
                .sizes()
                .iter()
                .all(|&s| (1..=3).contains(&s)));
            assert!(p.dim() <= 12);
        }
        let singular = set
            .iter()
            .filter(|(_, p)| p.objective().q_mat().clone().cholesky().is_none())
            .count();
        assert!(singular >= 2);
        assert!(set.iter().any(|(_, p)| p
            .sets()
            .iter()
            .any(|s| matches!(s, FeasibleSet::BudgetBox { .. }))));
    }

    #[test]
    fn reference_family_matrices() {
        let q = ReferenceFamily::OnesPlusDiagonal.matrix(3);
        assert_eq!(q[(0, 0)], 4.0);
        assert_eq!(q[(0, 1)], 1.0);
        assert_eq!(ReferenceFamily::ScaledIdentity.closed_form(5), (0.0, 5.0));
    }
}
