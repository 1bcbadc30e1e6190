//! Repeated, stratified, subject-grouped k-fold plans.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::io::metadata::Group;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub c: usize,
    /// Subjects sorted by id, with their class.
    pub subjects: Vec<(String, Group)>,
    /// `assignments[r][s]` is the test fold of subject `s` in repetition `r`.
    pub assignments: Vec<Vec<usize>>,
}

/// Build `c` independent seeded partitions into `k` folds. Within each class
/// subjects are shuffled and dealt round-robin, the control deal continuing
/// where the disease deal stopped so total fold sizes stay within one.
pub fn make_fold_plan(subjects: &[(String, Group)], k: usize, c: usize, seed: u64) -> Result<FoldPlan, MlError> {
    if k < 2 || c < 1 {
        return Err(MlError::InvalidConfig(format!("need k >= 2 and c >= 1, got k = {k}, c = {c}")));
    }
    let mut subjects = subjects.to_vec();
    subjects.sort();
    subjects.dedup_by(|a, b| a.0 == b.0);

    let by_class = |g: Group| -> Vec<usize> {
        subjects.iter().enumerate().filter(|(_, s)| s.1 == g).map(|(i, _)| i).collect()
    };
    let disease = by_class(Group::Disease);
    let control = by_class(Group::Control);
    for (group, list) in [(Group::Disease, &disease), (Group::Control, &control)] {
        if list.len() < k {
            return Err(MlError::TooFewSubjects { group, found: list.len(), k });
        }
    }

    let mut assignments = Vec::with_capacity(c);
    for r in 0..c {
        let mut fold_of = vec![0usize; subjects.len()];
        let mut offset = 0usize;
        for (tag, list) in [(0u64, &disease), (1u64, &control)] {
            let mut order = list.clone();
            order.shuffle(&mut seed::rng(seed, &[seed::tag("folds"), r as u64, tag]));
            for (i, &s) in order.iter().enumerate() {
                fold_of[s] = (offset + i) % k;
            }
            offset = (offset + order.len()) % k;
        }
        assignments.push(fold_of);
    }
    Ok(FoldPlan { k, c, subjects, assignments })
}

impl FoldPlan {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subject_index(&self) -> HashMap<&str, usize> {
        self.subjects.iter().enumerate().map(|(i, (s, _))| (s.as_str(), i)).collect()
    }

    pub fn fold_of(&self, repetition: usize, subject: usize) -> usize {
        self.assignments[repetition][subject]
    }

    pub fn test_subjects(&self, repetition: usize, fold: usize) -> Vec<usize> {
        (0..self.subjects.len()).filter(|&s| self.assignments[repetition][s] == fold).collect()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        let d = self.subjects.iter().filter(|s| s.1 == Group::Disease).count();
        (d, self.subjects.len() - d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(nd: usize, nc: usize) -> Vec<(String, Group)> {
        (0..nd)
            .map(|i| (format!("d{i:03}"), Group::Disease))
            .chain((0..nc).map(|i| (format!("c{i:03}"), Group::Control)))
            .collect()
    }

    #[test]
    fn exact_divisibility() {
        let plan = make_fold_plan(&cohort(10, 10), 5, 3, 1).unwrap();
        for r in 0..3 {
            for f in 0..5 {
                let test = plan.test_subjects(r, f);
                let d = test.iter().filter(|&&s| plan.subjects[s].1 == Group::Disease).count();
                assert_eq!((d, test.len() - d), (2, 2));
            }
        }
    }

    #[test]
    fn too_few_subjects() {
        assert_eq!(
            make_fold_plan(&cohort(4, 4), 5, 1, 0).unwrap_err(),
            MlError::TooFewSubjects { group: Group::Disease, found: 4, k: 5 }
        );
    }

    #[test]
    fn repetitions_differ_and_seed_is_stable() {
        let a = make_fold_plan(&cohort(20, 20), 5, 2, 9).unwrap();
        assert_ne!(a.assignments[0], a.assignments[1]);
        assert_eq!(a, make_fold_plan(&cohort(20, 20), 5, 2, 9).unwrap());
    }
}
