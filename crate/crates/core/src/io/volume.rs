//! Scalar and label volumes: a JSON descriptor plus a raw little-endian grid.
//!
//! ```json
//! { "dims": [64, 64, 40], "voxel_size": [2, 2, 2],
//!   "affine": [2,0,0,-64, 0,2,0,-64, 0,0,2,-40, 0,0,0,1],
//!   "dtype": "f32", "kind": "scalar", "measure_name": "FA", "raw": "FA.raw" }
//! ```
//!
//! Voxels are stored x-fastest; the affine maps voxel indices to millimeters.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::Atlas;
use crate::geometry::Point3;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("bad descriptor: {0}")]
    Descriptor(String),
    #[error("raw data holds {actual} bytes, expected {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("affine 3x3 block is singular")]
    BadAffine,
    #[error("label {0} is not present in the atlas")]
    UnknownLabel(u32),
    #[error("negative label {0}")]
    NegativeLabel(i64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I16,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I16 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Scalar,
    Label,
}

/// On-disk descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeDescriptor {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub affine: [f64; 16],
    pub dtype: DType,
    pub kind: VolumeKind,
    #[serde(default)]
    pub measure_name: String,
    /// Raw file, relative to the descriptor. Defaults to the descriptor path with `.raw`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atlas: Option<Atlas>,
}

/// Voxel lattice shared by scalar and label volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    voxel_size: [f64; 3],
    affine: [f64; 16],
    linear: Matrix3<f64>,
    inverse: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Grid {
    pub fn new(dims: [usize; 3], voxel_size: [f64; 3], affine: [f64; 16]) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::Descriptor(format!("dims must be positive: {dims:?}")));
        }
        if voxel_size.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(VolumeError::Descriptor(format!("voxel_size must be positive: {voxel_size:?}")));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(VolumeError::BadAffine);
        }
        let linear = Matrix3::new(
            affine[0], affine[1], affine[2], //
            affine[4], affine[5], affine[6], //
            affine[8], affine[9], affine[10],
        );
        let inverse = linear.try_inverse().ok_or(VolumeError::BadAffine)?;
        if inverse.iter().any(|v| !v.is_finite()) {
            return Err(VolumeError::BadAffine);
        }
        let translation = Vector3::new(affine[3], affine[7], affine[11]);
        Ok(Self { dims, voxel_size, affine, linear, inverse, translation })
    }

    /// Unit voxels, identity affine.
    pub fn identity(dims: [usize; 3]) -> Self {
        let mut affine = [0.0; 16];
        affine[0] = 1.0;
        affine[5] = 1.0;
        affine[10] = 1.0;
        affine[15] = 1.0;
        Self::new(dims, [1.0; 3], affine).expect("identity affine is invertible")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn affine(&self) -> &[f64; 16] {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn voxel_to_world(&self, voxel: [f64; 3]) -> Point3 {
        let w = self.linear * Vector3::from(voxel) + self.translation;
        [w.x, w.y, w.z]
    }

    /// Continuous voxel coordinates of a world position.
    pub fn world_to_voxel(&self, p: Point3) -> [f64; 3] {
        let v = self.inverse * (Vector3::from(p) - self.translation);
        [v.x, v.y, v.z]
    }

    pub fn contains_voxel(&self, v: [i64; 3]) -> bool {
        (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a])
    }

    fn from_descriptor(d: &VolumeDescriptor) -> Result<Self, VolumeError> {
        Self::new(d.dims, d.voxel_size, d.affine)
    }

    pub fn descriptor(&self, dtype: DType, kind: VolumeKind, measure_name: &str) -> VolumeDescriptor {
        VolumeDescriptor {
            dims: self.dims,
            voxel_size: self.voxel_size,
            affine: self.affine,
            dtype,
            kind,
            measure_name: measure_name.to_string(),
            raw: None,
            atlas: None,
        }
    }
}

/// Per-voxel tensor measure (FA, MO, RD, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    grid: Grid,
    data: Vec<f64>,
    measure_name: String,
}

/// Result of sampling a volume at a world position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub in_bounds: bool,
}

impl ScalarVolume {
    pub fn new(grid: Grid, data: Vec<f64>, measure_name: impl Into<String>) -> Result<Self, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::SizeMismatch { expected: grid.len(), actual: data.len() });
        }
        Ok(Self { grid, data, measure_name: measure_name.into() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn measure_name(&self) -> &str {
        &self.measure_name
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    /// Trilinear interpolation at a world position. Positions outside the
    /// hull of voxel centers yield value 0 with `in_bounds == false`.
    pub fn sample(&self, p: Point3) -> Sample {
        const EPS: f64 = 1e-9;
        let v = self.grid.world_to_voxel(p);
        let dims = self.grid.dims;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let hi = (dims[a] - 1) as f64;
            if !(v[a] >= -EPS && v[a] <= hi + EPS) {
                return Sample { value: 0.0, in_bounds: false };
            }
            let c = v[a].clamp(0.0, hi);
            if dims[a] == 1 {
                base[a] = 0;
                frac[a] = 0.0;
            } else {
                let b = (c.floor() as usize).min(dims[a] - 2);
                base[a] = b;
                frac[a] = c - b as f64;
            }
        }
        let step = |a: usize| usize::from(dims[a] > 1);
        let mut value = 0.0;
        for dk in 0..=step(2) {
            let wk = if dk == 0 { 1.0 - frac[2] } else { frac[2] };
            for dj in 0..=step(1) {
                let wj = if dj == 0 { 1.0 - frac[1] } else { frac[1] };
                for di in 0..=step(0) {
                    let wi = if di == 0 { 1.0 - frac[0] } else { frac[0] };
                    let w = wi * wj * wk;
                    if w != 0.0 {
                        value += w * self.value(base[0] + di, base[1] + dj, base[2] + dk);
                    }
                }
            }
        }
        Sample { value, in_bounds: true }
    }
}

/// Integer parcellation with its atlas table. Label 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: Grid,
    data: Vec<u32>,
    atlas: Atlas,
}

impl LabelVolume {
    pub fn new(grid: Grid, data: Vec<u32>, atlas: Atlas) -> Result<Self, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::SizeMismatch { expected: grid.len(), actual: data.len() });
        }
        if let Some(&bad) = data.iter().find(|&&l| l != 0 && !atlas.contains(l)) {
            return Err(VolumeError::UnknownLabel(bad));
        }
        Ok(Self { grid, data, atlas })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn atlas(&self) -> &Atlas {
        &self.atlas
    }

    pub fn label_at(&self, v: [i64; 3]) -> Option<u32> {
        if !self.grid.contains_voxel(v) {
            return None;
        }
        Some(self.data[self.grid.index(v[0] as usize, v[1] as usize, v[2] as usize)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Scalar(ScalarVolume),
    Label(LabelVolume),
}

/// Decode a volume from descriptor text and raw bytes.
pub fn parse_volume(header: &[u8], raw: &[u8]) -> Result<Volume, VolumeError> {
    let d: VolumeDescriptor =
        serde_json::from_slice(header).map_err(|e| VolumeError::Descriptor(e.to_string()))?;
    decode(&d, raw)
}

fn decode(d: &VolumeDescriptor, raw: &[u8]) -> Result<Volume, VolumeError> {
    let grid = Grid::from_descriptor(d)?;
    let expected = grid.len() * d.dtype.size();
    if raw.len() != expected {
        return Err(VolumeError::SizeMismatch { expected, actual: raw.len() });
    }
    let values: Vec<f64> = match d.dtype {
        DType::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        DType::I16 => raw
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    match d.kind {
        VolumeKind::Scalar => {
            if d.measure_name.is_empty() {
                return Err(VolumeError::Descriptor("scalar volume without measure_name".into()));
            }
            Ok(Volume::Scalar(ScalarVolume::new(grid, values, d.measure_name.clone())?))
        }
        VolumeKind::Label => {
            let atlas = d
                .atlas
                .clone()
                .ok_or_else(|| VolumeError::Descriptor("label volume without atlas".into()))?;
            let mut labels = Vec::with_capacity(values.len());
            for v in values {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(VolumeError::NegativeLabel(v as i64));
                }
                labels.push(v as u32);
            }
            Ok(Volume::Label(LabelVolume::new(grid, labels, atlas)?))
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, VolumeError> {
    std::fs::read(path).map_err(|source| VolumeError::Io { path: path.to_path_buf(), source })
}

/// Load a descriptor and its companion raw file.
pub fn load_volume(descriptor: &Path) -> Result<Volume, VolumeError> {
    let header = read(descriptor)?;
    let d: VolumeDescriptor =
        serde_json::from_slice(&header).map_err(|e| VolumeError::Descriptor(format!("{}: {e}", descriptor.display())))?;
    let raw_path = match &d.raw {
        Some(r) => descriptor.parent().unwrap_or(Path::new(".")).join(r),
        None => descriptor.with_extension("raw"),
    };
    decode(&d, &read(&raw_path)?)
}

pub fn load_scalar(descriptor: &Path) -> Result<ScalarVolume, VolumeError> {
    match load_volume(descriptor)? {
        Volume::Scalar(v) => Ok(v),
        Volume::Label(_) => Err(VolumeError::Descriptor(format!(
            "{}: expected a scalar volume",
            descriptor.display()
        ))),
    }
}

pub fn load_labels(descriptor: &Path) -> Result<LabelVolume, VolumeError> {
    match load_volume(descriptor)? {
        Volume::Label(v) => Ok(v),
        Volume::Scalar(_) => Err(VolumeError::Descriptor(format!(
            "{}: expected a label volume",
            descriptor.display()
        ))),
    }
}

fn write_pair(descriptor_path: &Path, d: &VolumeDescriptor, raw: &[u8]) -> Result<(), VolumeError> {
    let raw_path = descriptor_path.with_extension("raw");
    let mut d = d.clone();
    d.raw = raw_path.file_name().map(|n| n.to_string_lossy().into_owned());
    let json = serde_json::to_vec_pretty(&d).expect("descriptor serializes");
    std::fs::write(descriptor_path, json)
        .map_err(|source| VolumeError::Io { path: descriptor_path.to_path_buf(), source })?;
    std::fs::write(&raw_path, raw).map_err(|source| VolumeError::Io { path: raw_path, source })
}

/// Write `<path>` (descriptor) and `<path>.raw` as float32.
pub fn save_scalar(path: &Path, v: &ScalarVolume) -> Result<(), VolumeError> {
    let d = v.grid.descriptor(DType::F32, VolumeKind::Scalar, &v.measure_name);
    let raw: Vec<u8> = v.data.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
    write_pair(path, &d, &raw)
}

/// Write `<path>` (descriptor with atlas) and `<path>.raw` as int16.
pub fn save_labels(path: &Path, v: &LabelVolume) -> Result<(), VolumeError> {
    let mut d = v.grid.descriptor(DType::I16, VolumeKind::Label, "labels");
    d.atlas = Some(v.atlas.clone());
    let raw: Vec<u8> = v.data.iter().flat_map(|&x| (x as i16).to_le_bytes()).collect();
    write_pair(path, &d, &raw)
}
