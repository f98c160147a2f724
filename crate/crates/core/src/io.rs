//! Problem files: `{"n_i": [...], "Q": [[...]], "q": [...], "sets": [...]}`
//! with `Q` row-major. `sets` is optional and defaults to the box `[-1, 1]`
//! per coordinate.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BlockPartition, Problem, QuadraticObjective};
use crate::sets::FeasibleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n_i: Vec<usize>,
    #[serde(rename = "Q")]
    pub q_mat: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<FeasibleSet>>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }

    pub fn from_problem(problem: &Problem<QuadraticObjective>) -> Self {
        let obj = problem.objective();
        let q = obj.q_mat();
        Self {
            n_i: obj.partition().sizes().to_vec(),
            q_mat: q.row_iter().map(|r| r.iter().copied().collect()).collect(),
            q: obj.q_vec().to_vec(),
            sets: Some(problem.sets().to_vec()),
        }
    }

    pub fn objective(&self) -> Result<QuadraticObjective> {
        let n = self.q.len();
        if self.q_mat.len() != n || self.q_mat.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("Q must be {n}x{n} to match q")));
        }
        let flat: Vec<f64> = self.q_mat.iter().flatten().copied().collect();
        QuadraticObjective::new(
            DMatrix::from_row_slice(n, n, &flat),
            self.q.clone(),
            BlockPartition::new(self.n_i.clone())?,
        )
    }

    pub fn problem(&self) -> Result<Problem<QuadraticObjective>> {
        let obj = self.objective()?;
        let sets = match &self.sets {
            Some(s) => s.clone(),
            None => self
                .n_i
                .iter()
                .map(|&k| FeasibleSet::boxed(vec![-1.0; k], vec![1.0; k]))
                .collect::<Result<_>>()?,
        };
        Problem::new(obj, sets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::SmoothObjective;

    #[test]
    fn round_trip() {
        let text = r#"{"n_i":[1,2],"Q":[[2,1,0],[1,3,0],[0,0,1]],"q":[0.1,-0.2,0.3],
            "sets":[{"type":"box","lower":[0],"upper":[1]},
                    {"type":"budget_box","lower":[0,0],"upper":[1,1],"gamma":1}]}"#;
        let f = ProblemFile::from_json(text).unwrap();
        let p = f.problem().unwrap();
        assert_eq!(p.objective().q_mat()[(0, 1)], 1.0);
        let back = ProblemFile::from_json(&ProblemFile::from_problem(&p).to_json()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn row_major_layout() {
        // Asymmetric input is averaged; row-major reading matters for the
        // direction of the asymmetry only through the average.
        let f = ProblemFile::from_json(r#"{"n_i":[1,1],"Q":[[1,0.5],[0.5,2]],"q":[0,0]}"#).unwrap();
        let p = f.problem().unwrap();
        assert_eq!(p.objective().value(&[0.0, 1.0]), 2.0);
        assert_eq!(
            p.sets()[0],
            FeasibleSet::boxed(vec![-1.0], vec![1.0]).unwrap()
        );
    }

    #[test]
    fn shape_errors() {
        assert!(
            ProblemFile::from_json(r#"{"n_i":[2],"Q":[[1,0]],"q":[0,0]}"#)
                .unwrap()
                .problem()
                .is_err()
        );
        assert!(ProblemFile::from_json(r#"{"n_i":[1],"Q":[[1]],"q":[0],"x":1}"#).is_err());
    }
}
