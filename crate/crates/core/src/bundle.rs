//! Endpoint-based fiber bundling against an atlas parcellation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::atlas::Side;
use crate::geometry::{distance, Point3, Streamline};
use crate::io::volume::LabelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConnectionClass {
    Intra,
    Inter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FiberHemisphere {
    Left,
    Right,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum BundleAssignment {
    Assigned {
        start_region: u32,
        end_region: u32,
        class: ConnectionClass,
        hemisphere: FiberHemisphere,
    },
    Unassigned,
}

impl BundleAssignment {
    /// Whether this fiber has an endpoint in `region`.
    pub fn touches(&self, region: u32) -> bool {
        matches!(self, BundleAssignment::Assigned { start_region, end_region, .. }
            if *start_region == region || *end_region == region)
    }

    pub fn class(&self) -> Option<ConnectionClass> {
        match self {
            BundleAssignment::Assigned { class, .. } => Some(*class),
            BundleAssignment::Unassigned => None,
        }
    }
}

/// Side of every atlas region: the atlas override, else the sign of the
/// world-space x coordinate of the region centroid (negative = left).
pub fn region_sides(labels: &LabelVolume) -> BTreeMap<u32, Side> {
    let grid = labels.grid();
    let [nx, ny, nz] = grid.dims();
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let label = labels.data()[grid.index(i, j, k)];
                if label == 0 {
                    continue;
                }
                let w = grid.voxel_to_world([i as f64, j as f64, k as f64]);
                let e = sums.entry(label).or_insert((0.0, 0));
                e.0 += w[0];
                e.1 += 1;
            }
        }
    }
    labels
        .atlas()
        .regions()
        .iter()
        .map(|r| {
            let side = r.hemisphere.unwrap_or_else(|| match sums.get(&r.label) {
                Some(&(sum, n)) => {
                    let x = sum / n as f64;
                    if x < -1e-9 {
                        Side::Left
                    } else if x > 1e-9 {
                        Side::Right
                    } else {
                        Side::Midline
                    }
                }
                None => Side::Midline,
            });
            (r.label, side)
        })
        .collect()
}

/// Region label at an endpoint: nearest voxel, else the closest labeled voxel
/// in its 26-neighborhood.
pub fn endpoint_region(labels: &LabelVolume, p: Point3) -> Option<u32> {
    let grid = labels.grid();
    let v = grid.world_to_voxel(p);
    let center = [v[0].round() as i64, v[1].round() as i64, v[2].round() as i64];
    match labels.label_at(center) {
        Some(l) if l != 0 => return Some(l),
        _ => {}
    }
    let mut best: Option<(f64, u32)> = None;
    for dk in -1..=1i64 {
        for dj in -1..=1i64 {
            for di in -1..=1i64 {
                if di == 0 && dj == 0 && dk == 0 {
                    continue;
                }
                let n = [center[0] + di, center[1] + dj, center[2] + dk];
                let Some(label) = labels.label_at(n).filter(|&l| l != 0) else {
                    continue;
                };
                let w = grid.voxel_to_world([n[0] as f64, n[1] as f64, n[2] as f64]);
                let d = distance(&w, &p);
                let better = match best {
                    None => true,
                    Some((bd, bl)) => d < bd || (d == bd && label < bl),
                };
                if better {
                    best = Some((d, label));
                }
            }
        }
    }
    best.map(|(_, l)| l)
}

fn classify(start: u32, end: u32, sides: &BTreeMap<u32, Side>) -> BundleAssignment {
    let class = if start == end { ConnectionClass::Intra } else { ConnectionClass::Inter };
    let hemisphere = match (sides.get(&start), sides.get(&end)) {
        (Some(Side::Left), Some(Side::Left)) => FiberHemisphere::Left,
        (Some(Side::Right), Some(Side::Right)) => FiberHemisphere::Right,
        _ => FiberHemisphere::Cross,
    };
    BundleAssignment::Assigned { start_region: start, end_region: end, class, hemisphere }
}

pub fn assign_bundles(streamlines: &[Streamline], labels: &LabelVolume) -> Vec<BundleAssignment> {
    let sides = region_sides(labels);
    assign_with_sides(streamlines, labels, &sides)
}

pub fn assign_with_sides(
    streamlines: &[Streamline],
    labels: &LabelVolume,
    sides: &BTreeMap<u32, Side>,
) -> Vec<BundleAssignment> {
    streamlines
        .iter()
        .map(|s| {
            match (endpoint_region(labels, s.first()), endpoint_region(labels, s.last())) {
                (Some(a), Some(b)) => classify(a, b, sides),
                _ => BundleAssignment::Unassigned,
            }
        })
        .collect()
}
