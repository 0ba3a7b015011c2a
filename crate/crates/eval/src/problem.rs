//! Small synthetic problem stubs. A problem lists named test cases with
//! expected values; a solution maps test names to answers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROBLEM_FILE: &str = "problem.json";
pub const SOLUTION_FILE: &str = "solution.json";

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid problem stub {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub expected: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub description: String,
    pub tests: Vec<TestCase>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub answers: BTreeMap<String, Value>,
}

impl Problem {
    /// Reads `<dir>/<id>/problem.json`.
    pub fn load(dir: &Path, id: &str) -> Result<Self, ProblemError> {
        let path = dir.join(id).join(PROBLEM_FILE);
        let raw = std::fs::read_to_string(&path).map_err(|source| ProblemError::Read {
            path: path.clone(),
            source,
        })?;
        let problem: Problem = serde_json::from_str(&raw).map_err(|e| ProblemError::Invalid {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if problem.id != id {
            return Err(ProblemError::Invalid {
                path,
                message: format!("id {:?} does not match directory {id:?}", problem.id),
            });
        }
        if problem.tests.is_empty() {
            return Err(ProblemError::Invalid {
                path,
                message: "no test cases".into(),
            });
        }
        Ok(problem)
    }

    /// Stand-in used when no stub directory is configured.
    pub fn synthetic(id: &str) -> Self {
        Self {
            id: id.to_string(),
            description: format!("Implement the {id} exercise so that every listed case returns its expected value."),
            tests: (1..=3)
                .map(|i| TestCase {
                    name: format!("case-{i}"),
                    expected: Value::String(format!("{id}-{i}")),
                })
                .collect(),
        }
    }

    pub fn reference_solution(&self) -> Solution {
        Solution {
            answers: self
                .tests
                .iter()
                .map(|t| (t.name.clone(), t.expected.clone()))
                .collect(),
        }
    }

    /// A solution that gets every case wrong.
    pub fn broken_solution(&self) -> Solution {
        Solution {
            answers: self.tests.iter().map(|t| (t.name.clone(), Value::Null)).collect(),
        }
    }

    pub fn score(&self, solution: &Solution) -> (u32, u32) {
        let passed = self
            .tests
            .iter()
            .filter(|t| solution.answers.get(&t.name) == Some(&t.expected))
            .count();
        (passed as u32, self.tests.len() as u32)
    }

    /// Runs the tests against `<workdir>/solution.json`. A missing or
    /// unreadable solution passes nothing.
    pub fn run_tests(&self, workdir: &Path) -> (u32, u32) {
        let solution = std::fs::read(workdir.join(SOLUTION_FILE))
            .ok()
            .and_then(|raw| serde_json::from_slice::<Solution>(&raw).ok())
            .unwrap_or_default();
        self.score(&solution)
    }
}

pub fn write_solution(workdir: &Path, solution: &Solution) -> std::io::Result<()> {
    let json = serde_json::to_vec_pretty(solution).map_err(std::io::Error::other)?;
    std::fs::write(workdir.join(SOLUTION_FILE), json)
}

/// Every problem of an experiment, loaded up front.
#[derive(Debug, Clone, Default)]
pub struct ProblemSet {
    problems: BTreeMap<String, Problem>,
}

impl ProblemSet {
    pub fn load(dir: Option<&Path>, ids: &[String]) -> Result<Self, ProblemError> {
        let problems = ids
            .iter()
            .map(|id| {
                let p = match dir {
                    Some(dir) => Problem::load(dir, id)?,
                    None => Problem::synthetic(id),
                };
                Ok((id.clone(), p))
            })
            .collect::<Result<_, ProblemError>>()?;
        Ok(Self { problems })
    }

    pub fn get(&self, id: &str) -> Option<&Problem> {
        self.problems.get(id)
    }
}
