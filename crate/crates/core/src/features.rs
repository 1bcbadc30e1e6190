//! Per-region tract and tensor features.
//!
//! Every region gets the same canonical list: fiber number (`FN`), average
//! fiber length (`AFL`) and one mean per tensor measure (`MFA`, `MMO`, ...),
//! each over three bundle scopes (`roi` = every fiber with an endpoint in the
//! region, `intra`, `inter`), followed by signed left-minus-right differences
//! (`dLR_*`) between the region's homologue pair.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{assign_with_sides, region_sides, BundleAssignment, ConnectionClass};
use crate::geometry::Streamline;
use crate::io::metadata::ScanRecord;
use crate::io::volume::{LabelVolume, ScalarVolume};
use crate::matrix::{FeatureFlag, FeatureMatrix, FeatureRow, MatrixError, RowMeta};

/// Tensor measures extracted by default.
pub const DEFAULT_MEASURES: [&str; 6] = ["FA", "MO", "RD", "S0", "AD", "MD"];

pub const DELTA_LR_PREFIX: &str = "dLR_";

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("scan {scan_id} has no {measure} volume")]
    MissingVolume { scan_id: String, measure: String },
    #[error("region {0} is not in the atlas")]
    UnknownRegion(u32),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Roi,
    Intra,
    Inter,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Roi, Scope::Intra, Scope::Inter];

    pub fn suffix(self) -> &'static str {
        match self {
            Scope::Roi => "roi",
            Scope::Intra => "intra",
            Scope::Inter => "inter",
        }
    }

    fn includes(self, a: &BundleAssignment, region: u32) -> bool {
        a.touches(region)
            && match self {
                Scope::Roi => true,
                Scope::Intra => a.class() == Some(ConnectionClass::Intra),
                Scope::Inter => a.class() == Some(ConnectionClass::Inter),
            }
    }
}

/// How per-vertex samples are pooled into a bundle mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorWeighting {
    /// Every in-bounds vertex counts once.
    #[default]
    Vertex,
    /// Mean of per-fiber means.
    Fiber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub measures: Vec<String>,
    #[serde(default)]
    pub weighting: TensorWeighting,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { measures: DEFAULT_MEASURES.iter().map(|s| s.to_string()).collect(), weighting: TensorWeighting::Vertex }
    }
}

impl FeatureConfig {
    /// Per-scope base features in canonical order.
    pub fn base_names(&self) -> Vec<String> {
        let mut names = vec!["FN".to_string(), "AFL".to_string()];
        names.extend(self.measures.iter().map(|m| format!("M{m}")));
        names
    }

    pub fn feature_names(&self) -> Vec<String> {
        let scoped: Vec<String> = Scope::ALL
            .iter()
            .flat_map(|s| self.base_names().into_iter().map(move |b| format!("{b}_{}", s.suffix())))
            .collect();
        let delta = scoped.iter().map(|n| format!("{DELTA_LR_PREFIX}{n}"));
        scoped.iter().cloned().chain(delta).collect()
    }
}

/// A value with its empty-bundle flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub flag: FeatureFlag,
}

impl Measured {
    pub fn ok(value: f64) -> Self {
        Self { value, flag: FeatureFlag::Ok }
    }

    pub fn empty() -> Self {
        Self { value: 0.0, flag: FeatureFlag::EmptyBundle }
    }

    pub fn is_ok(&self) -> bool {
        self.flag == FeatureFlag::Ok
    }
}

/// Feature values of one region in one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub region: u32,
    pub scan_id: String,
    pub values: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, FeatureFlag>,
}

impl FeatureVector {
    fn from_measured(region: u32, scan_id: &str, items: impl IntoIterator<Item = (String, Measured)>) -> Self {
        let mut values = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for (name, m) in items {
            values.insert(name.clone(), m.value);
            flags.insert(name, m.flag);
        }
        Self { region, scan_id: scan_id.to_string(), values, flags }
    }

    pub fn get(&self, name: &str) -> Option<Measured> {
        Some(Measured { value: *self.values.get(name)?, flag: *self.flags.get(name)? })
    }
}

/// Length and per-measure sample sums of one fiber.
#[derive(Debug, Clone, PartialEq)]
struct FiberSummary {
    length: f64,
    sums: Vec<f64>,
    counts: Vec<usize>,
}

fn summarize(s: &Streamline, volumes: &[&ScalarVolume]) -> FiberSummary {
    let mut sums = vec![0.0; volumes.len()];
    let mut counts = vec![0usize; volumes.len()];
    for (m, vol) in volumes.iter().enumerate() {
        for &p in s.points() {
            let sample = vol.sample(p);
            if sample.in_bounds {
                sums[m] += sample.value;
                counts[m] += 1;
            }
        }
    }
    FiberSummary { length: s.arc_length(), sums, counts }
}

fn tract_from_summaries<'a>(fibers: impl Iterator<Item = &'a FiberSummary>) -> (Measured, Measured) {
    let mut n = 0usize;
    let mut total = 0.0;
    for f in fibers {
        n += 1;
        total += f.length;
    }
    let afl = if n == 0 { Measured::empty() } else { Measured::ok(total / n as f64) };
    (Measured::ok(n as f64), afl)
}

fn tensor_from_summaries<'a>(
    fibers: impl Iterator<Item = &'a FiberSummary> + Clone,
    measure: usize,
    weighting: TensorWeighting,
) -> Measured {
    let (sum, n) = match weighting {
        TensorWeighting::Vertex => fibers.fold((0.0, 0usize), |(s, n), f| (s + f.sums[measure], n + f.counts[measure])),
        TensorWeighting::Fiber => fibers
            .filter(|f| f.counts[measure] > 0)
            .fold((0.0, 0usize), |(s, n), f| (s + f.sums[measure] / f.counts[measure] as f64, n + 1)),
    };
    if n == 0 {
        Measured::empty()
    } else {
        Measured::ok(sum / n as f64)
    }
}

/// `FN` and `AFL` of a bundle. An empty bundle has `FN = 0` and a flagged `AFL`.
pub fn tract_features(bundle: &[&Streamline]) -> BTreeMap<String, Measured> {
    let summaries: Vec<FiberSummary> = bundle.iter().map(|s| summarize(s, &[])).collect();
    let (fn_, afl) = tract_from_summaries(summaries.iter());
    BTreeMap::from([("FN".to_string(), fn_), ("AFL".to_string(), afl)])
}

/// `M<measure>` means over all in-bounds vertex samples of the bundle.
pub fn tensor_features(
    bundle: &[&Streamline],
    volumes: &[&ScalarVolume],
    weighting: TensorWeighting,
) -> BTreeMap<String, Measured> {
    let summaries: Vec<FiberSummary> = bundle.iter().map(|s| summarize(s, volumes)).collect();
    volumes
        .iter()
        .enumerate()
        .map(|(m, v)| (format!("M{}", v.measure_name()), tensor_from_summaries(summaries.iter(), m, weighting)))
        .collect()
}

/// Signed left-minus-right difference; flagged when either side is.
pub fn asymmetry_feature(left: Measured, right: Measured) -> Measured {
    if left.is_ok() && right.is_ok() {
        Measured::ok(left.value - right.value)
    } else {
        Measured::empty()
    }
}

/// In-memory inputs for one scan.
#[derive(Debug, Clone)]
pub struct ScanInput<'a> {
    pub record: &'a ScanRecord,
    pub streamlines: &'a [Streamline],
    pub labels: &'a LabelVolume,
    pub volumes: &'a BTreeMap<String, ScalarVolume>,
}

/// All region feature vectors of one scan, keyed by region label.
pub fn extract_scan(scan: &ScanInput<'_>, cfg: &FeatureConfig) -> Result<BTreeMap<u32, FeatureVector>, FeatureError> {
    let mut volumes = Vec::with_capacity(cfg.measures.len());
    for m in &cfg.measures {
        volumes.push(scan.volumes.get(m).ok_or_else(|| FeatureError::MissingVolume {
            scan_id: scan.record.scan_id.clone(),
            measure: m.clone(),
        })?);
    }
    let sides = region_sides(scan.labels);
    let assignments = assign_with_sides(scan.streamlines, scan.labels, &sides);
    let summaries: Vec<FiberSummary> = scan
        .streamlines
        .iter()
        .zip(&assignments)
        .map(|(s, a)| match a {
            BundleAssignment::Assigned { .. } => summarize(s, &volumes),
            BundleAssignment::Unassigned => FiberSummary { length: 0.0, sums: vec![], counts: vec![] },
        })
        .collect();

    let bases = cfg.base_names();
    let labels: Vec<u32> = scan.labels.atlas().labels().collect();
    let mut base: BTreeMap<u32, Vec<Measured>> = BTreeMap::new();
    for &region in &labels {
        let mut vals = Vec::with_capacity(bases.len() * 3);
        for scope in Scope::ALL {
            let members = || {
                summaries
                    .iter()
                    .zip(&assignments)
                    .filter(move |(_, a)| scope.includes(a, region))
                    .map(|(f, _)| f)
            };
            let (fn_, afl) = tract_from_summaries(members());
            vals.push(fn_);
            vals.push(afl);
            for m in 0..volumes.len() {
                vals.push(tensor_from_summaries(members(), m, cfg.weighting));
            }
        }
        base.insert(region, vals);
    }

    let pairs = scan.labels.atlas().homologues(&sides);
    let names = cfg.feature_names();
    let mut out = BTreeMap::new();
    for &region in &labels {
        let own = &base[&region];
        let delta: Vec<Measured> = match pairs.get(&region) {
            Some(&(left, right)) => base[&left].iter().zip(&base[&right]).map(|(&l, &r)| asymmetry_feature(l, r)).collect(),
            None => vec![Measured::empty(); own.len()],
        };
        let items = names.iter().cloned().zip(own.iter().chain(&delta).copied());
        out.insert(region, FeatureVector::from_measured(region, &scan.record.scan_id, items));
    }
    Ok(out)
}

/// Extract every scan, optionally in parallel. Output order follows `scans`.
pub fn extract_all(
    scans: &[ScanInput<'_>],
    cfg: &FeatureConfig,
    parallel: bool,
) -> Result<Vec<BTreeMap<u32, FeatureVector>>, FeatureError> {
    if parallel {
        scans.par_iter().map(|s| extract_scan(s, cfg)).collect()
    } else {
        scans.iter().map(|s| extract_scan(s, cfg)).collect()
    }
}

/// Assemble one region's matrix from per-scan extraction results.
pub fn assemble_matrix(
    region: u32,
    region_name: &str,
    records: &[&ScanRecord],
    extracted: &[BTreeMap<u32, FeatureVector>],
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let names = cfg.feature_names();
    let mut m = FeatureMatrix::new(region, region_name, names.clone());
    for (record, per_region) in records.iter().zip(extracted) {
        let fv = per_region.get(&region).ok_or(FeatureError::UnknownRegion(region))?;
        let mut values = Vec::with_capacity(names.len());
        let mut flags = Vec::with_capacity(names.len());
        for n in &names {
            let v = fv.get(n).unwrap_or_else(Measured::empty);
            values.push(v.value);
            flags.push(v.flag);
        }
        m.push(FeatureRow { meta: RowMeta::from(*record), values, flags })?;
    }
    Ok(m)
}

/// Feature matrix of a single region over the given scans.
pub fn build_feature_matrix(
    scans: &[ScanInput<'_>],
    region: u32,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let name = scans
        .first()
        .and_then(|s| s.labels.atlas().name(region).map(str::to_string))
        .ok_or(FeatureError::UnknownRegion(region))?;
    let extracted = extract_all(scans, cfg, false)?;
    let records: Vec<&ScanRecord> = scans.iter().map(|s| s.record).collect();
    assemble_matrix(region, &name, &records, &extracted, cfg)
}

/// One matrix per atlas region, in label order.
pub fn build_all_matrices(
    scans: &[ScanInput<'_>],
    cfg: &FeatureConfig,
    parallel: bool,
) -> Result<Vec<FeatureMatrix>, FeatureError> {
    let Some(first) = scans.first() else { return Ok(Vec::new()) };
    let extracted = extract_all(scans, cfg, parallel)?;
    let records: Vec<&ScanRecord> = scans.iter().map(|s| s.record).collect();
    first
        .labels
        .atlas()
        .regions()
        .iter()
        .map(|r| assemble_matrix(r.label, &r.name, &records, &extracted, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::volume::Grid;

    fn line(a: [f64; 3], b: [f64; 3]) -> Streamline {
        Streamline::new(vec![a, b]).unwrap()
    }

    #[test]
    fn fiber_number_and_length() {
        let f = line([0.0; 3], [3.0, 4.0, 0.0]);
        let t = tract_features(&[&f]);
        assert_eq!(t["FN"], Measured::ok(1.0));
        assert_eq!(t["AFL"], Measured::ok(5.0));

        let a = line([0.0; 3], [5.0, 0.0, 0.0]);
        let b = line([0.0; 3], [0.0, 7.0, 0.0]);
        assert_eq!(tract_features(&[&a, &b])["AFL"], Measured::ok(6.0));

        let empty = tract_features(&[]);
        assert_eq!(empty["FN"], Measured::ok(0.0));
        assert_eq!(empty["AFL"].flag, FeatureFlag::EmptyBundle);
    }

    #[test]
    fn tensor_means() {
        let g = Grid::identity([4, 2, 2]);
        let fa = ScalarVolume::new(g.clone(), vec![0.4; g.len()], "FA").unwrap();
        let f = line([0.0, 0.0, 0.0], [2.5, 1.0, 0.5]);
        let t = tensor_features(&[&f], &[&fa], TensorWeighting::Vertex);
        assert!((t["MFA"].value - 0.4).abs() < 1e-15);

        // f(x) = x: samples {0, 1} and {1, 2}.
        let ramp = ScalarVolume::new(g.clone(), (0..g.len()).map(|i| (i % 4) as f64).collect(), "X").unwrap();
        let a = line([0.0; 3], [1.0, 0.0, 0.0]);
        let b = line([1.0, 0.0, 0.0], [2.0, 0.0, 0.0]);
        assert_eq!(tensor_features(&[&a, &b], &[&ramp], TensorWeighting::Vertex)["MX"], Measured::ok(1.0));

        let outside = line([10.0, 0.0, 0.0], [11.0, 0.0, 0.0]);
        assert_eq!(tensor_features(&[&outside], &[&fa], TensorWeighting::Vertex)["MFA"].flag, FeatureFlag::EmptyBundle);
    }

    #[test]
    fn fiber_weighting_differs_from_vertex_weighting() {
        let g = Grid::identity([4, 1, 1]);
        let ramp = ScalarVolume::new(g, vec![0.0, 1.0, 2.0, 3.0], "X").unwrap();
        let short = line([0.0; 3], [1.0, 0.0, 0.0]);
        let long = Streamline::new(vec![[3.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let v = tensor_features(&[&short, &long], &[&ramp], TensorWeighting::Vertex)["MX"].value;
        let f = tensor_features(&[&short, &long], &[&ramp], TensorWeighting::Fiber)["MX"].value;
        assert!((v - 13.0 / 6.0).abs() < 1e-12);
        assert!((f - 1.75).abs() < 1e-12);
    }

    #[test]
    fn asymmetry() {
        assert_eq!(asymmetry_feature(Measured::ok(2.0), Measured::ok(2.0)), Measured::ok(0.0));
        assert_eq!(asymmetry_feature(Measured::ok(2.0), Measured::ok(1.5)), Measured::ok(0.5));
        assert_eq!(asymmetry_feature(Measured::ok(2.0), Measured::empty()).flag, FeatureFlag::EmptyBundle);
    }

    #[test]
    fn canonical_names() {
        let names = FeatureConfig::default().feature_names();
        assert_eq!(names.len(), 48);
        assert_eq!(names[0], "FN_roi");
        assert_eq!(names[8], "FN_intra");
        assert_eq!(names[24], "dLR_FN_roi");
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }
}
