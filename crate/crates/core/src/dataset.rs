//! On-disk dataset layout.
//!
//! ```text
//! <root>/dataset.json           name, atlas, feature config
//! <root>/metadata.csv           one row per scan
//! <root>/labels.json (+ .raw)   shared label volume, unless a scan overrides it
//! <root>/scans/<scan>/tracks.tck
//! <root>/scans/<scan>/<MEASURE>.json (+ .raw)
//! <root>/features/index.json    region -> CSV file
//! <root>/features/region_<label>.csv
//! ```
//!
//! Paths in per-scan overrides are relative to the root.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::Atlas;
use crate::cohort::CohortSpec;
use crate::features::{build_all_matrices, FeatureConfig, FeatureError, ScanInput};
use crate::geometry::Streamline;
use crate::io::metadata::{load_metadata, write_metadata, MetadataError, ScanRecord};
use crate::io::tck::{parse_tck, TckError};
use crate::io::volume::{load_labels, load_scalar, LabelVolume, ScalarVolume, VolumeError};
use crate::matrix::{FeatureMatrix, MatrixError};

pub const MANIFEST_FILE: &str = "dataset.json";
pub const METADATA_FILE: &str = "metadata.csv";
pub const LABELS_FILE: &str = "labels.json";
pub const FEATURES_DIR: &str = "features";
pub const FEATURE_INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("metadata: {0}")]
    Metadata(#[from] MetadataError),
    #[error("{path}: {source}")]
    Tracks { path: PathBuf, source: TckError },
    #[error("{path}: {source}")]
    Volume { path: PathBuf, source: VolumeError },
    #[error("region {region}: {source}")]
    Matrix { region: u32, source: MatrixError },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("dataset has no feature matrices; run extraction first")]
    NoFeatures,
    #[error("label volume atlas differs from the dataset atlas for scan {0}")]
    AtlasMismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(io_err(path))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub atlas: Atlas,
    #[serde(default)]
    pub features: FeatureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndexEntry {
    pub region: u32,
    pub name: String,
    pub file: String,
}

/// Streamlines and volumes of one scan.
#[derive(Debug, Clone)]
pub struct LoadedScan {
    pub streamlines: Vec<Streamline>,
    pub labels: LabelVolume,
    pub volumes: BTreeMap<String, ScalarVolume>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub records: Vec<ScanRecord>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_path_buf();
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest: DatasetManifest = serde_json::from_slice(&read(&manifest_path)?)
            .map_err(|e| DatasetError::Manifest { path: manifest_path, message: e.to_string() })?;
        let records = load_metadata(&read(&root.join(METADATA_FILE))?)?;
        Ok(Self { root, manifest, records })
    }

    /// Write the manifest and metadata, creating the root directory.
    pub fn create(root: impl AsRef<Path>, manifest: DatasetManifest, records: Vec<ScanRecord>) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_path_buf();
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write(&root.join(MANIFEST_FILE), &json)?;
        write(&root.join(METADATA_FILE), &write_metadata(&records))?;
        Ok(Self { root, manifest, records })
    }

    pub fn scan_dir(&self, scan_id: &str) -> PathBuf {
        self.root.join("scans").join(scan_id)
    }

    fn resolve(&self, over: Option<&String>, default: PathBuf) -> PathBuf {
        over.map_or(default, |p| self.root.join(p))
    }

    pub fn tracks_path(&self, r: &ScanRecord) -> PathBuf {
        self.resolve(r.files.tracks.as_ref(), self.scan_dir(&r.scan_id).join("tracks.tck"))
    }

    pub fn labels_path(&self, r: &ScanRecord) -> PathBuf {
        self.resolve(r.files.labels.as_ref(), self.root.join(LABELS_FILE))
    }

    pub fn volume_path(&self, r: &ScanRecord, measure: &str) -> PathBuf {
        self.resolve(r.files.volumes.get(measure), self.scan_dir(&r.scan_id).join(format!("{measure}.json")))
    }

    pub fn record(&self, scan_id: &str) -> Option<&ScanRecord> {
        self.records.iter().find(|r| r.scan_id == scan_id)
    }

    pub fn load_tracks(&self, r: &ScanRecord) -> Result<Vec<Streamline>, DatasetError> {
        let path = self.tracks_path(r);
        parse_tck(&read(&path)?).map_err(|source| DatasetError::Tracks { path, source })
    }

    pub fn load_label_volume(&self, r: &ScanRecord) -> Result<LabelVolume, DatasetError> {
        let path = self.labels_path(r);
        let labels = load_labels(&path).map_err(|source| DatasetError::Volume { path, source })?;
        if labels.atlas() != &self.manifest.atlas {
            return Err(DatasetError::AtlasMismatch(r.scan_id.clone()));
        }
        Ok(labels)
    }

    pub fn load_measure(&self, r: &ScanRecord, measure: &str) -> Result<ScalarVolume, DatasetError> {
        let path = self.volume_path(r, measure);
        if !path.exists() {
            return Err(FeatureError::MissingVolume { scan_id: r.scan_id.clone(), measure: measure.to_string() }.into());
        }
        load_scalar(&path).map_err(|source| DatasetError::Volume { path, source })
    }

    pub fn load_scan(&self, r: &ScanRecord) -> Result<LoadedScan, DatasetError> {
        let mut volumes = BTreeMap::new();
        for m in &self.manifest.features.measures {
            volumes.insert(m.clone(), self.load_measure(r, m)?);
        }
        Ok(LoadedScan { streamlines: self.load_tracks(r)?, labels: self.load_label_volume(r)?, volumes })
    }

    /// Compute per-region matrices from the raw scans.
    pub fn extract(&self, parallel: bool) -> Result<Vec<FeatureMatrix>, DatasetError> {
        let loaded: Vec<LoadedScan> = if parallel {
            self.records.par_iter().map(|r| self.load_scan(r)).collect::<Result<_, _>>()?
        } else {
            self.records.iter().map(|r| self.load_scan(r)).collect::<Result<_, _>>()?
        };
        let inputs: Vec<ScanInput<'_>> = self
            .records
            .iter()
            .zip(&loaded)
            .map(|(record, s)| ScanInput { record, streamlines: &s.streamlines, labels: &s.labels, volumes: &s.volumes })
            .collect();
        Ok(build_all_matrices(&inputs, &self.manifest.features, parallel)?)
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join(FEATURES_DIR)
    }

    pub fn has_matrices(&self) -> bool {
        self.features_dir().join(FEATURE_INDEX_FILE).exists()
    }

    pub fn write_matrices(&self, matrices: &[FeatureMatrix]) -> Result<(), DatasetError> {
        write_matrices(&self.features_dir(), matrices)
    }

    pub fn load_matrices(&self) -> Result<Vec<FeatureMatrix>, DatasetError> {
        if !self.has_matrices() {
            return Err(DatasetError::NoFeatures);
        }
        load_matrices(&self.features_dir())
    }
}

/// Write one CSV per region plus an index into `dir`.
pub fn write_matrices(dir: &Path, matrices: &[FeatureMatrix]) -> Result<(), DatasetError> {
    let mut index = Vec::with_capacity(matrices.len());
    for m in matrices {
        let file = format!("region_{:03}.csv", m.region);
        write(&dir.join(&file), &m.to_csv())?;
        index.push(FeatureIndexEntry { region: m.region, name: m.region_name.clone(), file });
    }
    let json = serde_json::to_vec_pretty(&index).expect("index serializes");
    write(&dir.join(FEATURE_INDEX_FILE), &json)
}

pub fn load_matrices(dir: &Path) -> Result<Vec<FeatureMatrix>, DatasetError> {
    let index_path = dir.join(FEATURE_INDEX_FILE);
    let index: Vec<FeatureIndexEntry> = serde_json::from_slice(&read(&index_path)?)
        .map_err(|e| DatasetError::Manifest { path: index_path, message: e.to_string() })?;
    index
        .iter()
        .map(|e| {
            FeatureMatrix::from_csv(e.region, &e.name, &read(&dir.join(&e.file))?)
                .map_err(|source| DatasetError::Matrix { region: e.region, source })
        })
        .collect()
}

/// Rows of selected subjects whose age is inside the cohort range.
pub fn restrict_to_cohort(m: &FeatureMatrix, spec: &CohortSpec) -> FeatureMatrix {
    let mut out = FeatureMatrix::new(m.region, m.region_name.clone(), m.feature_names.clone());
    out.rows = m
        .rows
        .iter()
        .filter(|r| spec.contains(&r.meta.subject_id) && spec.in_range(r.meta.age))
        .cloned()
        .collect();
    out
}

/// Subjects of a cohort in fold-plan form.
pub fn cohort_subjects(spec: &CohortSpec) -> Vec<(String, crate::io::metadata::Group)> {
    use crate::io::metadata::Group;
    spec.disease_subjects
        .iter()
        .map(|s| (s.clone(), Group::Disease))
        .chain(spec.control_subjects.iter().map(|s| (s.clone(), Group::Control)))
        .collect()
}

/// Content hash of a matrix set; identifies a dataset's features in cache keys.
pub fn fingerprint(matrices: &[FeatureMatrix]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for m in matrices {
        h.update(m.region.to_le_bytes());
        h.update(m.region_name.as_bytes());
        h.update(m.to_csv());
    }
    hex::encode(h.finalize())
}

/// Fold plan from the cohort, matrices restricted to it, then every region.
/// The CLI and the service both run through here.
pub fn run_cohort(
    matrices: &[FeatureMatrix],
    spec: &CohortSpec,
    config: &crate::ml::PipelineConfig,
    options: &crate::ml::RunOptions,
) -> Result<crate::ml::SaliencyReport, crate::ml::MlError> {
    let plan = crate::ml::make_fold_plan(&cohort_subjects(spec), config.k, config.c, config.seed)?;
    let restricted: Vec<FeatureMatrix> = matrices.iter().map(|m| restrict_to_cohort(m, spec)).collect();
    crate::ml::run_all_regions(&restricted, &plan, config, options)
}

/// Scan records reconstructed from matrix rows (union over regions, by scan id).
pub fn records_from_matrices(matrices: &[FeatureMatrix]) -> Vec<ScanRecord> {
    let mut by_scan: BTreeMap<&str, ScanRecord> = BTreeMap::new();
    for m in matrices {
        for r in &m.rows {
            by_scan.entry(r.meta.scan_id.as_str()).or_insert_with(|| ScanRecord {
                subject_id: r.meta.subject_id.clone(),
                scan_id: r.meta.scan_id.clone(),
                visit_date: r.meta.visit_date,
                age_at_scan: r.meta.age,
                sex: r.meta.sex,
                group: r.meta.group,
                files: Default::default(),
            });
        }
    }
    by_scan.into_values().collect()
}
