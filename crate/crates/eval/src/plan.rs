use std::fmt;
use std::path::PathBuf;

use botboard_core::model::{Phase, Variant};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig};

/// One cell of the run matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlannedRun {
    pub model_label: String,
    pub variant: Variant,
    pub phase: Phase,
    pub problem_id: String,
    pub repetition: u32,
}

impl PlannedRun {
    /// `<model>/<variant>-<phase>/<problem>-<rep>.json`, relative to the logs directory.
    pub fn log_relpath(&self) -> PathBuf {
        PathBuf::from(&self.model_label)
            .join(format!("{}-{}", self.variant, self.phase))
            .join(format!("{}-{}.json", self.problem_id, self.repetition))
    }

    pub fn pipeline(&self) -> PipelineKey {
        PipelineKey {
            model_label: self.model_label.clone(),
            variant: self.variant,
            repetition: self.repetition,
        }
    }
}

impl fmt::Display for PlannedRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}-{}/{}#{}",
            self.model_label, self.variant, self.phase, self.problem_id, self.repetition
        )
    }
}

/// A variant pipeline: every phase of one variant for one model and
/// repetition, sharing one team.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PipelineKey {
    pub model_label: String,
    pub variant: Variant,
    pub repetition: u32,
}

impl fmt::Display for PipelineKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.model_label, self.variant, self.repetition)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pipeline {
    pub key: PipelineKey,
    /// Phase order first, then problem order.
    pub runs: Vec<PlannedRun>,
}

/// The full matrix, ordered by model, repetition, variant, phase, problem.
pub fn plan_runs(config: &ExperimentConfig) -> Result<Vec<PlannedRun>, ConfigError> {
    config.validate()?;
    let phase_plan = config.phase_plan();
    let mut runs = Vec::new();
    for model in &config.model_labels {
        for repetition in 1..=config.repetitions {
            for (variant, phase) in &phase_plan {
                for problem in &config.problems {
                    runs.push(PlannedRun {
                        model_label: model.clone(),
                        variant: *variant,
                        phase: *phase,
                        problem_id: problem.clone(),
                        repetition,
                    });
                }
            }
        }
    }
    Ok(runs)
}

/// Groups planned runs into pipelines, keeping first-seen order.
pub fn pipelines(plan: &[PlannedRun]) -> Vec<Pipeline> {
    let mut out: Vec<Pipeline> = Vec::new();
    for run in plan {
        let key = run.pipeline();
        match out.iter_mut().find(|p| p.key == key) {
            Some(p) => p.runs.push(run.clone()),
            None => out.push(Pipeline {
                key,
                runs: vec![run.clone()],
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn config(problems: usize, reps: u32, variants: Vec<Variant>, models: usize) -> ExperimentConfig {
        ExperimentConfig::new(
            (0..problems).map(|i| format!("p{i:02}")).collect(),
            reps,
            variants,
            (0..models).map(|i| format!("model-{i}")).collect(),
            "ws",
        )
    }

    #[test]
    fn full_matrix_count() {
        let plan = plan_runs(&config(34, 3, Variant::ALL.to_vec(), 2)).unwrap();
        assert_eq!(plan.len(), 1428);
        let mut per_cell: BTreeMap<(String, Variant, Phase), usize> = BTreeMap::new();
        for r in &plan {
            *per_cell.entry((r.model_label.clone(), r.variant, r.phase)).or_default() += 1;
        }
        assert_eq!(per_cell.len(), 14);
        assert!(per_cell.values().all(|n| *n == 102));
    }

    #[test]
    fn single_configuration() {
        assert_eq!(
            plan_runs(&config(34, 3, vec![Variant::Baseline], 1)).unwrap().len(),
            102
        );
    }

    #[test]
    fn empty_problem_list_is_an_error() {
        assert!(matches!(
            plan_runs(&config(0, 3, vec![Variant::Baseline], 1)),
            Err(ConfigError::NoProblems)
        ));
    }

    #[test]
    fn pipelines_keep_phase_then_problem_order() {
        let plan = plan_runs(&config(2, 1, vec![Variant::Baseline, Variant::Journal], 1)).unwrap();
        let ps = pipelines(&plan);
        assert_eq!(ps.len(), 2);
        let journal: Vec<String> = ps[1]
            .runs
            .iter()
            .map(|r| format!("{}:{}", r.phase, r.problem_id))
            .collect();
        assert_eq!(journal, ["empty:p00", "empty:p01", "nonempty:p00", "nonempty:p01"]);
    }

    #[test]
    fn log_paths() {
        let plan = plan_runs(&config(1, 2, vec![Variant::Baseline, Variant::JournalSocial], 1)).unwrap();
        let paths: Vec<String> = plan.iter().map(|r| r.log_relpath().display().to_string()).collect();
        assert_eq!(paths[0], "model-0/baseline-none/p00-1.json");
        assert_eq!(paths[1], "model-0/journal-social-empty/p00-1.json");
        assert_eq!(paths[2], "model-0/journal-social-nonempty/p00-1.json");
        assert_eq!(paths[3], "model-0/baseline-none/p00-2.json");
    }
}
