//! Fiber geometry with per-vertex measure values, and its binary encoding.
//!
//! Payload layout, all little-endian:
//! `[u32 index_len][index JSON][u32 n][n x f32 positions][u32 m][m x f32 values]`
//! where positions are `x, y, z` per vertex and `m = n / 3`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{assign_bundles, BundleAssignment};
use crate::geometry::Streamline;
use crate::io::volume::{LabelVolume, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    #[default]
    Direct,
    /// Difference from the control-group mean.
    Contrastive,
}

#[derive(Debug, Error, PartialEq)]
pub enum PayloadError {
    #[error("payload truncated")]
    Truncated,
    #[error("bad index: {0}")]
    Index(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberEntry {
    pub start_region: u32,
    pub end_region: u32,
    /// First vertex of the fiber in the vertex arrays.
    pub offset: usize,
    pub count: usize,
}

/// Assigned fibers of one scan touching `region` (all assigned fibers when
/// `None`), with raw sampled values; out-of-bounds vertices sample as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSet {
    pub fibers: Vec<FiberEntry>,
    pub positions: Vec<f32>,
    pub values: Vec<f64>,
}

pub fn collect_fibers(
    streamlines: &[Streamline],
    labels: &LabelVolume,
    volume: &ScalarVolume,
    region: Option<u32>,
) -> FiberSet {
    let assignments = assign_bundles(streamlines, labels);
    let mut set = FiberSet { fibers: Vec::new(), positions: Vec::new(), values: Vec::new() };
    for (s, a) in streamlines.iter().zip(&assignments) {
        let BundleAssignment::Assigned { start_region, end_region, .. } = *a else { continue };
        if region.is_some_and(|r| !a.touches(r)) {
            continue;
        }
        set.fibers.push(FiberEntry { start_region, end_region, offset: set.values.len(), count: s.len() });
        for p in s.points() {
            set.positions.extend(p.map(|c| c as f32));
            set.values.push(volume.sample(*p).value);
        }
    }
    set
}

/// `sign(v) ln(1 + |v|)`
pub fn log_scale(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

/// Display value: optional difference from a reference, then optional log scaling.
pub fn display_value(v: f64, reference: Option<f64>, log: bool) -> f64 {
    let d = v - reference.unwrap_or(0.0);
    if log {
        log_scale(d)
    } else {
        d
    }
}

impl FiberSet {
    /// Per-vertex display values. `references` maps a region to its control
    /// mean; each fiber uses `region` when given, else its start region.
    pub fn display_values(&self, mode: ColorMode, references: &BTreeMap<u32, f64>, region: Option<u32>, log: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        for f in &self.fibers {
            let reference = match mode {
                ColorMode::Direct => None,
                ColorMode::Contrastive => references.get(&region.unwrap_or(f.start_region)).copied(),
            };
            out.extend(self.values[f.offset..f.offset + f.count].iter().map(|&v| display_value(v, reference, log)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadIndex {
    pub scan_id: String,
    pub region: Option<u32>,
    pub measure: String,
    pub mode: ColorMode,
    pub log_scale: bool,
    pub n_vertices: usize,
    pub fibers: Vec<FiberEntry>,
    /// Shared colour range over the cohort.
    pub value_range: [f64; 2],
    /// Control means used in contrastive mode.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub references: BTreeMap<u32, f64>,
}

pub fn encode_payload(index: &PayloadIndex, positions: &[f32], values: &[f64]) -> Vec<u8> {
    let json = serde_json::to_vec(index).expect("index serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * (positions.len() + values.len()));
    out.extend((json.len() as u32).to_le_bytes());
    out.extend(&json);
    out.extend((positions.len() as u32).to_le_bytes());
    for p in positions {
        out.extend(p.to_le_bytes());
    }
    out.extend((values.len() as u32).to_le_bytes());
    for &v in values {
        out.extend((v as f32).to_le_bytes());
    }
    out
}

pub fn decode_payload(bytes: &[u8]) -> Result<(PayloadIndex, Vec<f32>, Vec<f32>), PayloadError> {
    fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8], PayloadError> {
        let s = bytes.get(*at..*at + n).ok_or(PayloadError::Truncated)?;
        *at += n;
        Ok(s)
    }
    fn len(bytes: &[u8], at: &mut usize) -> Result<usize, PayloadError> {
        Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().unwrap()) as usize)
    }
    fn floats(bytes: &[u8], at: &mut usize) -> Result<Vec<f32>, PayloadError> {
        let n = len(bytes, at)?;
        Ok(take(bytes, at, 4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
    let mut at = 0;
    let n = len(bytes, &mut at)?;
    let index = serde_json::from_slice(take(bytes, &mut at, n)?).map_err(|e| PayloadError::Index(e.to_string()))?;
    let positions = floats(bytes, &mut at)?;
    let values = floats(bytes, &mut at)?;
    Ok((index, positions, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transforms() {
        assert!((display_value(0.5, Some(0.3), false) - 0.2).abs() < 1e-15);
        assert_eq!(display_value(0.0, None, true), 0.0);
        assert_eq!(log_scale(-(1f64.exp() - 1.0)), -1.0);
    }

    #[test]
    fn payload_round_trip() {
        let index = PayloadIndex {
            scan_id: "s".into(),
            region: Some(3),
            measure: "FA".into(),
            mode: ColorMode::Direct,
            log_scale: false,
            n_vertices: 2,
            fibers: vec![FiberEntry { start_region: 3, end_region: 3, offset: 0, count: 2 }],
            value_range: [0.0, 1.0],
            references: BTreeMap::new(),
        };
        let bytes = encode_payload(&index, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], &[0.25, 0.5]);
        let (i, p, v) = decode_payload(&bytes).unwrap();
        assert_eq!(i, index);
        assert_eq!(p, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(v, vec![0.25, 0.5]);
        assert_eq!(decode_payload(&bytes[..bytes.len() - 1]), Err(PayloadError::Truncated));
    }
}
