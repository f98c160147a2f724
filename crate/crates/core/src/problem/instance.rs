use rand::Rng;

use super::SmoothObjective;
use crate::error::{check_dim, Error, Result};
use crate::linalg::dist;
use crate::sets::FeasibleSet;

/// An objective together with one feasible set per agent.
#[derive(Debug, Clone)]
pub struct Problem<F> {
    objective: F,
    sets: Vec<FeasibleSet>,
}

impl<F: SmoothObjective> Problem<F> {
    pub fn new(objective: F, sets: Vec<FeasibleSet>) -> Result<Self> {
        let part = objective.partition();
        check_dim(part.agents(), sets.len())?;
        for (i, s) in sets.iter().enumerate() {
            s.validate().map_err(|e| e.for_agent(i))?;
            if s.dim() != part.size(i) {
                return Err(Error::invalid(format!(
                    "agent {i}: set has dimension {} but the block has {}",
                    s.dim(),
                    part.size(i)
                )));
            }
        }
        Ok(Self { objective, sets })
    }

    pub fn objective(&self) -> &F {
        &self.objective
    }

    pub fn sets(&self) -> &[FeasibleSet] {
        &self.sets
    }

    pub fn agents(&self) -> usize {
        self.sets.len()
    }

    pub fn dim(&self) -> usize {
        self.objective.partition().dim()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.objective.partition().check(x)?;
        Ok(self.objective.value(x))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let part = self.objective.partition();
        x.len() == part.dim()
            && self
                .sets
                .iter()
                .enumerate()
                .all(|(i, s)| s.contains(part.block(x, i), tol))
    }

    /// Per-agent `feasible_point`, stacked.
    pub fn feasible_point(&self) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.dim());
        for (i, s) in self.sets.iter().enumerate() {
            x.extend(s.feasible_point().map_err(|e| e.for_agent(i))?);
        }
        Ok(x)
    }

    /// Euclidean projection onto the product set.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let part = self.objective.partition();
        part.check(v)?;
        let mut x = Vec::with_capacity(v.len());
        for (i, s) in self.sets.iter().enumerate() {
            x.extend(
                s.project_euclidean(part.block(v, i))
                    .map_err(|e| e.for_agent(i))?,
            );
        }
        Ok(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.dim());
        for (i, s) in self.sets.iter().enumerate() {
            x.extend(s.sample(rng).map_err(|e| e.for_agent(i))?);
        }
        Ok(x)
    }

    /// Projected-gradient stationarity residual `‖x − P_X(x − ∇f(x)/L)‖`;
    /// zero exactly on the minimizers.
    pub fn stationarity_residual(&self, x: &[f64]) -> Result<f64> {
        self.objective.partition().check(x)?;
        let l = self.objective.lipschitz();
        let l = if l > 0.0 { l } else { 1.0 };
        let g = self.objective.gradient(x);
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi / l).collect();
        Ok(dist(x, &self.project(&trial)?))
    }
}
