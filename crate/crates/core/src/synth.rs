//! Synthetic cohorts with planted group differences.
//!
//! Feature matrices are drawn directly: each region has a per-subject latent
//! vector, per-visit noise, a mild age trend on the anisotropy measures, and a
//! shift of `shift_sd` within-group standard deviations on the planted
//! features of disease subjects. With the canonical feature list the `dLR_*`
//! columns are computed from the homologue pair, so a planted left-side shift
//! also moves the pair's asymmetry features.
//!
//! Optionally a toy geometry is written as well: a label volume of 3x3x3-voxel
//! cubes, per-scan TCK files of cubic Bezier bundles between region
//! centroids, and per-scan measure volumes whose values are shifted inside the
//! planted regions for disease scans.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasRegion, Side};
use crate::dataset::{write, Dataset, DatasetError, DatasetManifest};
use crate::features::{FeatureConfig, DELTA_LR_PREFIX};
use crate::geometry::{Point3, Streamline};
use crate::io::metadata::{Group, ScanRecord, Sex};
use crate::io::tck::write_tck;
use crate::io::volume::{save_labels, save_scalar, Grid, LabelVolume, ScalarVolume};
use crate::matrix::{FeatureFlag, FeatureMatrix, FeatureRow, RowMeta};
use crate::seed;

pub const TRUTH_FILE: &str = "truth.json";

const STRUCTURES: [&str; 21] = [
    "Substantia-Nigra",
    "Fusiform",
    "Caudate",
    "Putamen",
    "Pallidum",
    "Thalamus",
    "Hippocampus",
    "Amygdala",
    "Accumbens",
    "Precentral",
    "Postcentral",
    "Superior-Frontal",
    "Middle-Frontal",
    "Inferior-Parietal",
    "Superior-Parietal",
    "Lingual",
    "Cuneus",
    "Insula",
    "Entorhinal",
    "Parahippocampal",
    "Cingulate",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid effect: {0}")]
    InvalidEffect(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    /// Region labels carrying the shift.
    pub regions: Vec<u32>,
    /// Feature names shifted in those regions.
    pub features: Vec<String>,
    /// Shift of the disease mean, in within-group standard deviations.
    pub shift_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_disease: usize,
    pub n_control: usize,
    /// Even; regions come in left/right pairs.
    pub n_regions: usize,
    /// 48 gives the canonical feature list; any other count gives `f00`, `f01`, ...
    pub features_per_region: usize,
    pub effect: Effect,
    pub seed: u64,
    /// Share of subjects with a follow-up visit.
    pub followup_fraction: f64,
    /// Correlation between features of the same three-feature block.
    pub block_correlation: f64,
    /// Write label volume, tracks and measure volumes.
    pub geometry: bool,
    pub fibers_per_bundle: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_disease: 68,
            n_control: 68,
            n_regions: 42,
            features_per_region: FeatureConfig::default().feature_names().len(),
            effect: Effect {
                regions: vec![1, 2],
                features: ["MFA_roi", "MMO_roi", "MRD_roi", "MFA_intra", "AFL_roi"].map(String::from).to_vec(),
                shift_sd: 1.0,
            },
            seed: 0,
            followup_fraction: 0.25,
            block_correlation: 0.3,
            geometry: false,
            fibers_per_bundle: 8,
        }
    }
}

/// Ground truth written next to a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SynthConfig,
    /// Region label -> features whose group means differ by construction.
    pub shifted: BTreeMap<u32, Vec<String>>,
}

pub fn synth_atlas(n_regions: usize) -> Atlas {
    let pairs = n_regions / 2;
    let mut regions = Vec::with_capacity(n_regions);
    for q in 0..pairs {
        let structure = STRUCTURES.get(q).map_or_else(|| format!("Region{q:02}"), |s| s.to_string());
        let (l, r) = (q as u32 + 1, (q + pairs) as u32 + 1);
        regions.push(AtlasRegion { label: l, name: format!("Left-{structure}"), hemisphere: Some(Side::Left), pair: Some(r) });
        regions.push(AtlasRegion { label: r, name: format!("Right-{structure}"), hemisphere: Some(Side::Right), pair: Some(l) });
    }
    Atlas::new(regions)
}

struct Layout {
    names: Vec<String>,
    /// Number of independently drawn columns; the rest are `dLR_` columns.
    base: usize,
    canonical: bool,
}

fn layout(cfg: &SynthConfig) -> Layout {
    let canonical_names = FeatureConfig::default().feature_names();
    if cfg.features_per_region == canonical_names.len() {
        let base = canonical_names.iter().filter(|n| !n.starts_with(DELTA_LR_PREFIX)).count();
        Layout { names: canonical_names, base, canonical: true }
    } else {
        let names = (0..cfg.features_per_region).map(|j| format!("f{j:02}")).collect();
        Layout { names, base: cfg.features_per_region, canonical: false }
    }
}

/// Location and scale of a canonical base feature (per-scope name without suffix).
fn feature_scale(name: &str) -> (f64, f64) {
    match name.split('_').next().unwrap_or("") {
        "FN" => (120.0, 25.0),
        "AFL" => (45.0, 8.0),
        "MFA" => (0.45, 0.04),
        "MMO" => (0.30, 0.08),
        "MRD" => (6.0e-4, 5.0e-5),
        "MS0" => (800.0, 80.0),
        "MAD" => (1.2e-3, 1.0e-4),
        "MMD" => (8.0e-4, 6.0e-5),
        _ => (0.0, 1.0),
    }
}

fn age_slope(name: &str) -> f64 {
    // z units per year around age 65.
    match name.split('_').next().unwrap_or("") {
        "MFA" | "MMO" => -0.03,
        _ => 0.0,
    }
}

fn validate(cfg: &SynthConfig, atlas: &Atlas, lay: &Layout) -> Result<(), SynthError> {
    if cfg.n_regions < 2 || !cfg.n_regions.is_multiple_of(2) {
        return Err(SynthError::InvalidConfig(format!("n_regions must be even and >= 2, got {}", cfg.n_regions)));
    }
    if cfg.n_disease == 0 || cfg.n_control == 0 {
        return Err(SynthError::InvalidConfig("both groups need subjects".into()));
    }
    if cfg.features_per_region == 0 {
        return Err(SynthError::InvalidConfig("features_per_region must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.block_correlation) || !(0.0..=1.0).contains(&cfg.followup_fraction) {
        return Err(SynthError::InvalidConfig("block_correlation must be in [0, 1), followup_fraction in [0, 1]".into()));
    }
    if !cfg.effect.shift_sd.is_finite() {
        return Err(SynthError::InvalidEffect(format!("shift {} is not finite", cfg.effect.shift_sd)));
    }
    for r in &cfg.effect.regions {
        if !atlas.contains(*r) {
            return Err(SynthError::InvalidEffect(format!("unknown region {r}")));
        }
    }
    for f in &cfg.effect.features {
        match lay.names.iter().position(|n| n == f) {
            Some(j) if j < lay.base => {}
            Some(_) => return Err(SynthError::InvalidEffect(format!("{f} is derived; plant the base feature"))),
            None => return Err(SynthError::InvalidEffect(format!("unknown feature {f}"))),
        }
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct Subject {
    id: String,
    group: Group,
    sex: Sex,
    visits: Vec<(String, NaiveDate, f64)>,
}

fn subjects(cfg: &SynthConfig) -> Vec<Subject> {
    let base_date = NaiveDate::from_ymd_opt(2011, 1, 1).expect("valid date");
    let total = cfg.n_disease + cfg.n_control;
    (0..total)
        .map(|i| {
            let mut rng = seed::rng(cfg.seed, &[seed::tag("subject"), i as u64]);
            // Alternate groups while both have subjects left.
            let paired = 2 * cfg.n_disease.min(cfg.n_control);
            let disease = if i < paired { i % 2 == 0 } else { cfg.n_disease > cfg.n_control };
            let group = if disease { Group::Disease } else { Group::Control };
            let sex = if rng.random::<f64>() < 0.5 { Sex::M } else { Sex::F };
            let mut age = rng.random_range(50.0..82.0);
            // Elderly women are under-represented.
            if sex == Sex::F && age >= 65.0 && rng.random::<f64>() < 0.75 {
                age = rng.random_range(50.0..65.0);
            }
            let age = (age * 10.0_f64).round() / 10.0;
            let id = format!("SUB{:04}", i + 1);
            let first = base_date + Duration::days(rng.random_range(0..1095));
            let mut visits = vec![(format!("{id}_V1"), first, age)];
            if rng.random::<f64>() < cfg.followup_fraction {
                let gap = rng.random_range(365..730);
                let later = ((age + gap as f64 / 365.25) * 10.0).round() / 10.0;
                visits.push((format!("{id}_V2"), first + Duration::days(gap), later));
            }
            Subject { id, group, sex, visits }
        })
        .collect()
}

fn group_counts_ok(subjects: &[Subject], cfg: &SynthConfig) -> bool {
    let d = subjects.iter().filter(|s| s.group == Group::Disease).count();
    d == cfg.n_disease && subjects.len() - d == cfg.n_control
}

fn records(subjects: &[Subject]) -> Vec<ScanRecord> {
    subjects
        .iter()
        .flat_map(|s| {
            s.visits.iter().map(|(scan, date, age)| ScanRecord {
                subject_id: s.id.clone(),
                scan_id: scan.clone(),
                visit_date: *date,
                age_at_scan: *age,
                sex: s.sex,
                group: s.group,
                files: Default::default(),
            })
        })
        .collect()
}

/// Base-feature values of every scan of every subject for one region.
fn region_values(cfg: &SynthConfig, lay: &Layout, subjects: &[Subject], region: u32, planted: &[usize]) -> Vec<Vec<f64>> {
    let rho = cfg.block_correlation;
    let mut out = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        let mut rng = seed::rng(cfg.seed, &[seed::tag("values"), u64::from(region), i as u64]);
        let blocks: Vec<f64> = (0..lay.base.div_ceil(3)).map(|_| normal(&mut rng)).collect();
        let latent: Vec<f64> = (0..lay.base)
            .map(|j| rho.sqrt() * blocks[j / 3] + (1.0 - rho).sqrt() * normal(&mut rng))
            .collect();
        for (_, _, age) in &s.visits {
            let row: Vec<f64> = (0..lay.base)
                .map(|j| {
                    // Subject latent dominates; visits add a little noise.
                    let mut z = 0.95_f64.sqrt() * latent[j] + 0.05_f64.sqrt() * normal(&mut rng);
                    if s.group == Group::Disease && planted.contains(&j) {
                        z += cfg.effect.shift_sd;
                    }
                    if lay.canonical {
                        z += age_slope(&lay.names[j]) * (age - 65.0);
                        let (mu, sd) = feature_scale(&lay.names[j]);
                        mu + sd * z
                    } else {
                        z
                    }
                })
                .collect();
            out.push(row);
        }
    }
    out
}

/// Feature matrices for every region, in label order.
pub fn synth_matrices(cfg: &SynthConfig) -> Result<(Atlas, Vec<ScanRecord>, Vec<FeatureMatrix>, Truth), SynthError> {
    let atlas = synth_atlas(cfg.n_regions);
    let lay = layout(cfg);
    validate(cfg, &atlas, &lay)?;
    let subjects = subjects(cfg);
    debug_assert!(group_counts_ok(&subjects, cfg));
    let records = records(&subjects);
    let planted_idx: Vec<usize> = cfg.effect.features.iter().filter_map(|f| lay.names.iter().position(|n| n == f)).collect();
    let effect_regions: BTreeSet<u32> = cfg.effect.regions.iter().copied().collect();

    let base: BTreeMap<u32, Vec<Vec<f64>>> = atlas
        .labels()
        .map(|r| {
            let planted: &[usize] = if effect_regions.contains(&r) { &planted_idx } else { &[] };
            (r, region_values(cfg, &lay, &subjects, r, planted))
        })
        .collect();

    let mut shifted: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    let mut matrices = Vec::with_capacity(cfg.n_regions);
    for region in atlas.regions() {
        let own = &base[&region.label];
        let mut m = FeatureMatrix::new(region.label, region.name.clone(), lay.names.clone());
        for (row_idx, record) in records.iter().enumerate() {
            let mut values = own[row_idx].clone();
            if lay.canonical {
                let pair = region.pair.expect("synthetic regions are paired");
                let (left, right) =
                    if region.hemisphere == Some(Side::Left) { (region.label, pair) } else { (pair, region.label) };
                for j in 0..lay.base {
                    values.push(base[&left][row_idx][j] - base[&right][row_idx][j]);
                }
            }
            let flags = vec![FeatureFlag::Ok; values.len()];
            m.push(FeatureRow { meta: RowMeta::from(record), values, flags }).expect("row width matches names");
        }
        let mut names: Vec<String> = Vec::new();
        let own_planted = effect_regions.contains(&region.label);
        let partner_planted = region.pair.is_some_and(|p| effect_regions.contains(&p));
        if own_planted {
            names.extend(cfg.effect.features.iter().cloned());
        }
        if lay.canonical && (own_planted || partner_planted) {
            names.extend(cfg.effect.features.iter().map(|f| format!("{DELTA_LR_PREFIX}{f}")));
        }
        if !names.is_empty() && cfg.effect.shift_sd != 0.0 {
            shifted.insert(region.label, names);
        }
        matrices.push(m);
    }
    let truth = Truth { config: cfg.clone(), shifted };
    Ok((atlas, records, matrices, truth))
}

/// Write a complete synthetic dataset to `root`.
pub fn synth_dataset(root: &Path, cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    let (atlas, records, matrices, truth) = synth_matrices(cfg)?;
    let manifest = DatasetManifest { name: format!("synthetic-{}", cfg.seed), atlas: atlas.clone(), features: FeatureConfig::default() };
    let dataset = Dataset::create(root, manifest, records)?;
    dataset.write_matrices(&matrices)?;
    write(&root.join(TRUTH_FILE), &serde_json::to_vec_pretty(&truth).expect("truth serializes"))?;
    if cfg.geometry {
        write_geometry(&dataset, cfg, &atlas)?;
    }
    Ok(dataset)
}

// Toy geometry: 2 mm voxels, cubes on a 3 x 7 grid per hemisphere.

const DIMS: [usize; 3] = [26, 28, 5];
const VOXEL_MM: f64 = 2.0;

fn grid() -> Grid {
    let mut affine = [0.0; 16];
    affine[0] = VOXEL_MM;
    affine[5] = VOXEL_MM;
    affine[10] = VOXEL_MM;
    affine[15] = 1.0;
    affine[3] = -25.0;
    affine[7] = -27.0;
    affine[11] = -4.0;
    Grid::new(DIMS, [VOXEL_MM; 3], affine).expect("toy affine is invertible")
}

/// First voxel corner of a region's 3x3x3 cube, or `None` past the toy grid.
fn cube(label: u32, pairs: usize) -> Option<[usize; 3]> {
    let idx = label as usize - 1;
    let (q, right) = if idx < pairs { (idx, false) } else { (idx - pairs, true) };
    if q >= 21 {
        return None;
    }
    let (c, r) = (q % 3, q / 3);
    let i = 1 + 4 * c;
    let i = if right { DIMS[0] - 1 - (i + 2) } else { i };
    Some([i, 4 * r, 1])
}

fn label_volume(atlas: &Atlas, pairs: usize) -> LabelVolume {
    let g = grid();
    let mut data = vec![0u32; g.len()];
    for label in atlas.labels() {
        let Some([i0, j0, k0]) = cube(label, pairs) else { continue };
        for k in k0..k0 + 3 {
            for j in j0..j0 + 3 {
                for i in i0..i0 + 3 {
                    data[g.index(i, j, k)] = label;
                }
            }
        }
    }
    LabelVolume::new(g, data, atlas.clone()).expect("toy labels are in the atlas")
}

fn point_in_cube(g: &Grid, corner: [usize; 3], rng: &mut ChaCha8Rng) -> Point3 {
    // Stay 0.4 voxel inside the outer faces so endpoints round into the cube.
    let v = [0, 1, 2].map(|a| corner[a] as f64 - 0.1 + rng.random::<f64>() * 2.2);
    g.voxel_to_world(v)
}

fn bezier(a: Point3, b: Point3, rng: &mut ChaCha8Rng, n: usize) -> Streamline {
    let mid = [0, 1, 2].map(|d| (a[d] + b[d]) / 2.0);
    let c1 = [0, 1, 2].map(|d| (2.0 * a[d] + mid[d]) / 3.0 + 0.8 * normal(rng));
    let c2 = [0, 1, 2].map(|d| (2.0 * b[d] + mid[d]) / 3.0 + 0.8 * normal(rng));
    let points = (0..n)
        .map(|s| {
            let t = s as f64 / (n - 1) as f64;
            let u = 1.0 - t;
            [0, 1, 2].map(|d| u * u * u * a[d] + 3.0 * u * u * t * c1[d] + 3.0 * u * t * t * c2[d] + t * t * t * b[d])
        })
        .collect();
    Streamline::new(points).expect("finite Bezier samples")
}

fn write_geometry(dataset: &Dataset, cfg: &SynthConfig, atlas: &Atlas) -> Result<(), SynthError> {
    let pairs = cfg.n_regions / 2;
    let labels = label_volume(atlas, pairs);
    let g = labels.grid().clone();
    let path = dataset.root.join(crate::dataset::LABELS_FILE);
    save_labels(&path, &labels).map_err(|source| DatasetError::Volume { path, source })?;
    let effect: BTreeSet<u32> = cfg.effect.regions.iter().copied().collect();
    let drawn: Vec<u32> = atlas.labels().filter(|&l| cube(l, pairs).is_some()).collect();

    for (n, record) in dataset.records.iter().enumerate() {
        let mut rng = seed::rng(cfg.seed, &[seed::tag("geometry"), n as u64]);
        let disease = record.group == Group::Disease;
        let mut fibers = Vec::new();
        for &l in &drawn {
            let own = cube(l, pairs).expect("drawn");
            let mut count = cfg.fibers_per_bundle;
            if disease && effect.contains(&l) {
                count = count.saturating_sub((cfg.effect.shift_sd * 2.0).round() as usize).max(1);
            }
            for _ in 0..count {
                let (a, b) = (point_in_cube(&g, own, &mut rng), point_in_cube(&g, own, &mut rng));
                fibers.push(bezier(a, b, &mut rng, 8));
            }
            // Inter-region bundles to the next region and to the homologue.
            let partners = [Some(l + 1).filter(|p| drawn.contains(p)), atlas.get(l).and_then(|r| r.pair).filter(|&p| p > l)];
            for p in partners.into_iter().flatten() {
                let other = cube(p, pairs).expect("drawn");
                for _ in 0..cfg.fibers_per_bundle / 2 {
                    let (a, b) = (point_in_cube(&g, own, &mut rng), point_in_cube(&g, other, &mut rng));
                    fibers.push(bezier(a, b, &mut rng, 12));
                }
            }
        }
        write(&dataset.tracks_path(record), &write_tck(&fibers))?;

        for measure in &dataset.manifest.features.measures {
            let (mu, sd) = feature_scale(&format!("M{measure}"));
            let mut vrng = seed::rng(cfg.seed, &[seed::tag("volume"), n as u64, seed::tag(measure)]);
            let mut data: Vec<f64> = (0..g.len()).map(|_| mu + 0.5 * sd * normal(&mut vrng)).collect();
            if disease && cfg.effect.shift_sd != 0.0 && (measure == "FA" || measure == "MO") {
                for (v, &label) in data.iter_mut().zip(labels.data()) {
                    if effect.contains(&label) {
                        *v -= cfg.effect.shift_sd * sd;
                    }
                }
            }
            let vol = ScalarVolume::new(g.clone(), data, measure.clone()).expect("grid-sized data");
            let path = dataset.volume_path(record, measure);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io { path: dir.to_path_buf(), source })?;
            }
            save_scalar(&path, &vol).map_err(|source| DatasetError::Volume { path, source })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cohort_shape() {
        let (atlas, records, matrices, truth) = synth_matrices(&SynthConfig::default()).unwrap();
        assert_eq!(atlas.regions().len(), 42);
        assert_eq!(matrices.len(), 42);
        let subjects: BTreeSet<(&str, Group)> = records.iter().map(|r| (r.subject_id.as_str(), r.group)).collect();
        assert_eq!(subjects.iter().filter(|s| s.1 == Group::Disease).count(), 68);
        assert_eq!(subjects.len(), 136);
        assert!(matrices.iter().all(|m| m.rows.len() == records.len() && m.n_features() == 48));
        assert!(truth.shifted.contains_key(&1) && truth.shifted.contains_key(&22));
    }

    #[test]
    fn delta_lr_is_left_minus_right() {
        let (_, _, matrices, _) = synth_matrices(&SynthConfig { followup_fraction: 0.0, ..Default::default() }).unwrap();
        let left = &matrices[0];
        let right = matrices.iter().find(|m| m.region == 22).unwrap();
        let j = left.feature_index("MFA_roi").unwrap();
        let d = left.feature_index("dLR_MFA_roi").unwrap();
        for (l, r) in left.rows.iter().zip(&right.rows) {
            assert_eq!(l.values[d], l.values[j] - r.values[j]);
            assert_eq!(r.values[d], l.values[d]);
        }
    }

    #[test]
    fn rejects_unknown_effect_feature() {
        let mut cfg = SynthConfig::default();
        cfg.effect.features = vec!["nope".into()];
        assert!(matches!(synth_matrices(&cfg), Err(SynthError::InvalidEffect(_))));
        cfg.effect.features = vec!["dLR_MFA_roi".into()];
        assert!(matches!(synth_matrices(&cfg), Err(SynthError::InvalidEffect(_))));
    }

    #[test]
    fn toy_cubes_are_mirrored() {
        let g = grid();
        let atlas = synth_atlas(42);
        for q in 1..=21u32 {
            let l = cube(q, 21).unwrap();
            let r = cube(q + 21, 21).unwrap();
            let cl = g.voxel_to_world([l[0] as f64 + 1.0, l[1] as f64 + 1.0, 2.0]);
            let cr = g.voxel_to_world([r[0] as f64 + 1.0, r[1] as f64 + 1.0, 2.0]);
            assert!(cl[0] < 0.0);
            assert_eq!(cl[0], -cr[0]);
            assert_eq!(cl[1], cr[1]);
        }
        let lv = label_volume(&atlas, 21);
        assert_eq!(lv.data().iter().filter(|&&v| v != 0).count(), 42 * 27);
    }
}
