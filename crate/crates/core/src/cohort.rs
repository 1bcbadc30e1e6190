//! Balanced, stratified subject-group selection.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::metadata::{Group, ScanRecord, Sex};
use crate::seed;

/// Width of the age strata, in years.
pub const AGE_BIN_YEARS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum CohortError {
    #[error("no scan records")]
    NoRecords,
    #[error("the {0} group is empty after filtering")]
    EmptyCohort(Group),
    #[error("subject {0} has scans with conflicting group or sex")]
    InconsistentSubject(String),
    #[error("invalid age range [{0}, {1}]")]
    BadAgeRange(f64, f64),
    #[error("subject {0} appears in both groups")]
    Overlap(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMember {
    pub subject_id: String,
    pub group: Group,
    /// Age at the subject's earliest in-range visit.
    pub age: f64,
    pub sex: Sex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub age_bin_start: f64,
    pub sex: Sex,
    pub disease: usize,
    pub control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub disease_subjects: Vec<String>,
    pub control_subjects: Vec<String>,
    pub age_range: [f64; 2],
    pub balanced: bool,
    pub seed: u64,
    /// Selected counts per (age bin, sex) cell.
    pub strata: Vec<Stratum>,
    pub members: Vec<CohortMember>,
}

pub fn age_bin(age: f64) -> f64 {
    (age / AGE_BIN_YEARS).floor() * AGE_BIN_YEARS
}

impl CohortSpec {
    pub fn contains(&self, subject_id: &str) -> bool {
        self.group_of(subject_id).is_some()
    }

    pub fn group_of(&self, subject_id: &str) -> Option<Group> {
        if self.disease_subjects.binary_search_by(|s| s.as_str().cmp(subject_id)).is_ok() {
            Some(Group::Disease)
        } else if self.control_subjects.binary_search_by(|s| s.as_str().cmp(subject_id)).is_ok() {
            Some(Group::Control)
        } else {
            None
        }
    }

    pub fn in_range(&self, age: f64) -> bool {
        age >= self.age_range[0] && age <= self.age_range[1]
    }

    /// Scans of selected subjects whose age falls inside the range.
    pub fn select_scans<'a>(&self, records: &'a [ScanRecord]) -> Vec<&'a ScanRecord> {
        records
            .iter()
            .filter(|r| self.contains(&r.subject_id) && self.in_range(r.age_at_scan))
            .collect()
    }

    /// Checks the structural invariants of a deserialized spec.
    pub fn validate(&self) -> Result<(), CohortError> {
        if self.disease_subjects.is_empty() {
            return Err(CohortError::EmptyCohort(Group::Disease));
        }
        if self.control_subjects.is_empty() {
            return Err(CohortError::EmptyCohort(Group::Control));
        }
        let d: BTreeSet<&String> = self.disease_subjects.iter().collect();
        if let Some(s) = self.control_subjects.iter().find(|s| d.contains(s)) {
            return Err(CohortError::Overlap(s.clone()));
        }
        Ok(())
    }
}

/// Select subjects with at least one scan inside `age_range`. With `balance`,
/// every (5-year age bin, sex) cell keeps `min(disease, control)` subjects per
/// group, drawn uniformly with a per-cell seeded shuffle.
pub fn select_cohort(
    records: &[ScanRecord],
    age_range: [f64; 2],
    balance: bool,
    seed: u64,
) -> Result<CohortSpec, CohortError> {
    if records.is_empty() {
        return Err(CohortError::NoRecords);
    }
    if !(age_range[0] <= age_range[1]) {
        return Err(CohortError::BadAgeRange(age_range[0], age_range[1]));
    }

    // subject -> (group, sex, earliest in-range visit)
    let mut subjects: BTreeMap<&str, (Group, Sex, Option<(chrono::NaiveDate, f64)>)> = BTreeMap::new();
    for r in records {
        let entry = subjects.entry(&r.subject_id).or_insert((r.group, r.sex, None));
        if entry.0 != r.group || entry.1 != r.sex {
            return Err(CohortError::InconsistentSubject(r.subject_id.clone()));
        }
        if r.age_at_scan >= age_range[0] && r.age_at_scan <= age_range[1] {
            let candidate = (r.visit_date, r.age_at_scan);
            if entry.2.is_none_or(|cur| candidate < cur) {
                entry.2 = Some(candidate);
            }
        }
    }

    let mut cells: BTreeMap<(i64, Sex), [Vec<CohortMember>; 2]> = BTreeMap::new();
    for (id, (group, sex, first)) in subjects {
        let Some((_, age)) = first else { continue };
        let bin = age_bin(age) as i64;
        let slot = usize::from(group == Group::Control);
        cells.entry((bin, sex)).or_default()[slot].push(CohortMember {
            subject_id: id.to_string(),
            group,
            age,
            sex,
        });
    }

    let mut members = Vec::new();
    let mut strata = Vec::new();
    for ((bin, sex), [mut disease, mut control]) in cells {
        if balance {
            let keep = disease.len().min(control.len());
            let sex_tag = match sex {
                Sex::M => 0,
                Sex::F => 1,
            };
            for (slot, list) in [&mut disease, &mut control].into_iter().enumerate() {
                let mut rng = seed::rng(seed, &[seed::tag("cohort"), bin as u64, sex_tag, slot as u64]);
                list.shuffle(&mut rng);
                list.truncate(keep);
                list.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
            }
        }
        if disease.is_empty() && control.is_empty() {
            continue;
        }
        strata.push(Stratum { age_bin_start: bin as f64, sex, disease: disease.len(), control: control.len() });
        members.extend(disease);
        members.extend(control);
    }
    members.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));

    let pick = |g: Group| -> Vec<String> {
        members.iter().filter(|m| m.group == g).map(|m| m.subject_id.clone()).collect()
    };
    let disease_subjects = pick(Group::Disease);
    let control_subjects = pick(Group::Control);
    if disease_subjects.is_empty() {
        return Err(CohortError::EmptyCohort(Group::Disease));
    }
    if control_subjects.is_empty() {
        return Err(CohortError::EmptyCohort(Group::Control));
    }
    Ok(CohortSpec { disease_subjects, control_subjects, age_range, balanced: balance, seed, strata, members })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDemographics {
    pub group: Group,
    pub age_counts: Vec<usize>,
    pub male: usize,
    pub female: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    /// Shared 5-year bin edges (`n + 1` entries).
    pub age_bin_edges: Vec<f64>,
    pub groups: Vec<GroupDemographics>,
}

pub fn demographics(spec: &CohortSpec) -> Demographics {
    let (lo, hi) = spec
        .members
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.age), hi.max(m.age)));
    let edges: Vec<f64> = if lo.is_finite() {
        let first = age_bin(lo);
        let n = ((age_bin(hi) - first) / AGE_BIN_YEARS).round() as usize + 1;
        (0..=n).map(|i| first + i as f64 * AGE_BIN_YEARS).collect()
    } else {
        Vec::new()
    };
    let groups = [Group::Disease, Group::Control]
        .into_iter()
        .map(|group| {
            let mut age_counts = vec![0usize; edges.len().saturating_sub(1)];
            let (mut male, mut female, mut total) = (0, 0, 0);
            for m in spec.members.iter().filter(|m| m.group == group) {
                let idx = ((age_bin(m.age) - edges[0]) / AGE_BIN_YEARS).round() as usize;
                age_counts[idx] += 1;
                total += 1;
                match m.sex {
                    Sex::M => male += 1,
                    Sex::F => female += 1,
                }
            }
            GroupDemographics { group, age_counts, male, female, total }
        })
        .collect();
    Demographics { age_bin_edges: edges, groups }
}
