use std::collections::BTreeMap;

use botboard_core::model::{RunRecord, Variant};
use serde::Serialize;

use crate::stats::{mean, std_dev, SigmaKind};
use crate::AnalysisError;

/// Problems whose mean baseline cost lies strictly above `mu + k * sigma`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardQuestionSet {
    pub model_label: String,
    pub k_sigma: f64,
    pub sigma_kind: SigmaKind,
    pub mu: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub members: Vec<String>,
    pub per_problem: BTreeMap<String, f64>,
}

impl HardQuestionSet {
    pub fn contains(&self, problem_id: &str) -> bool {
        self.members.iter().any(|m| m == problem_id)
    }
}

/// Selection over baseline records of one model. Infrastructure failures
/// and other variants are ignored.
pub fn select_hard_questions(
    baseline: &[RunRecord],
    k_sigma: f64,
    sigma_kind: SigmaKind,
) -> Result<HardQuestionSet, AnalysisError> {
    let mut costs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut label: Option<&str> = None;
    for r in baseline.iter().filter(|r| r.variant == Variant::Baseline && r.is_ok()) {
        match label {
            None => label = Some(&r.model_label),
            Some(l) if l != r.model_label => {
                return Err(AnalysisError::MixedModels(l.to_string(), r.model_label.clone()));
            }
            Some(_) => {}
        }
        costs.entry(r.problem_id.clone()).or_default().push(r.cost_usd);
    }
    let per_problem: BTreeMap<String, f64> = costs.into_iter().map(|(p, c)| (p, mean(&c))).collect();
    select_from_means(label.unwrap_or_default(), per_problem, k_sigma, sigma_kind)
}

pub fn select_from_means(
    model_label: &str,
    per_problem: BTreeMap<String, f64>,
    k_sigma: f64,
    sigma_kind: SigmaKind,
) -> Result<HardQuestionSet, AnalysisError> {
    if per_problem.len() < 2 {
        return Err(AnalysisError::InsufficientData(per_problem.len()));
    }
    let values: Vec<f64> = per_problem.values().copied().collect();
    let mu = mean(&values);
    let sigma = std_dev(&values, sigma_kind);
    let threshold = mu + k_sigma * sigma;
    let members = per_problem
        .iter()
        .filter(|(_, c)| **c > threshold)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(HardQuestionSet {
        model_label: model_label.to_string(),
        k_sigma,
        sigma_kind,
        mu,
        sigma,
        threshold,
        members,
        per_problem,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn means(values: &[f64]) -> BTreeMap<String, f64> {
        values.iter().enumerate().map(|(i, v)| (format!("p{i}"), *v)).collect()
    }

    #[test]
    fn hand_computed_fixture() {
        let set = select_from_means("m", means(&[1.0, 1.0, 1.0, 1.0, 10.0]), 0.5, SigmaKind::Population).unwrap();
        assert!((set.mu - 2.8).abs() < 1e-12);
        assert!((set.sigma - 3.6).abs() < 1e-12);
        assert!((set.threshold - 4.6).abs() < 1e-12);
        assert_eq!(set.members, ["p4"]);
    }

    #[test]
    fn equal_costs_select_nothing() {
        for k in [0.1, 0.5, 1.0, 3.0] {
            let set = select_from_means("m", means(&[0.3; 6]), k, SigmaKind::Population).unwrap();
            assert!(set.members.is_empty());
        }
    }

    #[test]
    fn too_few_problems() {
        assert_eq!(
            select_from_means("m", means(&[1.0]), 0.5, SigmaKind::Population),
            Err(AnalysisError::InsufficientData(1))
        );
    }

    #[test]
    fn stricter_k_selects_subset() {
        let costs = [
            0.21, 0.25, 0.31, 0.33, 0.38, 0.41, 0.44, 0.52, 0.61, 0.67, 0.83, 0.95, 1.12, 0.29, 0.27,
        ];
        let loose = select_from_means("m", means(&costs), 0.5, SigmaKind::Population).unwrap();
        let strict = select_from_means("m", means(&costs), 1.0, SigmaKind::Population).unwrap();
        assert!(strict.members.len() < loose.members.len());
        assert!(strict.members.iter().all(|m| loose.contains(m)));
    }
}
