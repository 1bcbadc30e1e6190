use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Hemisphere a region belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Midline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasRegion {
    pub label: u32,
    pub name: String,
    /// Explicit side; when absent it is derived from the region centroid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hemisphere: Option<Side>,
    /// Label of the contralateral homologue, used for left/right asymmetry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<u32>,
}

/// Label → region table of a parcellation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Atlas {
    regions: Vec<AtlasRegion>,
}

impl Atlas {
    pub fn new(mut regions: Vec<AtlasRegion>) -> Self {
        regions.sort_by_key(|r| r.label);
        regions.dedup_by_key(|r| r.label);
        Self { regions }
    }

    pub fn regions(&self) -> &[AtlasRegion] {
        &self.regions
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.regions.iter().map(|r| r.label)
    }

    pub fn get(&self, label: u32) -> Option<&AtlasRegion> {
        self.regions
            .binary_search_by_key(&label, |r| r.label)
            .ok()
            .map(|i| &self.regions[i])
    }

    pub fn contains(&self, label: u32) -> bool {
        self.get(label).is_some()
    }

    pub fn name(&self, label: u32) -> Option<&str> {
        self.get(label).map(|r| r.name.as_str())
    }

    /// Left/right homologue pairs as `(left, right)`, from explicit `pair`
    /// entries or `Left-`/`Right-` name prefixes.
    pub fn homologues(&self, sides: &BTreeMap<u32, Side>) -> BTreeMap<u32, (u32, u32)> {
        let by_name: BTreeMap<&str, u32> =
            self.regions.iter().map(|r| (r.name.as_str(), r.label)).collect();
        let mut out = BTreeMap::new();
        for r in &self.regions {
            let partner = r.pair.or_else(|| {
                let mirrored = if let Some(rest) = r.name.strip_prefix("Left-") {
                    format!("Right-{rest}")
                } else {
                    let rest = r.name.strip_prefix("Right-")?;
                    format!("Left-{rest}")
                };
                by_name.get(mirrored.as_str()).copied()
            });
            let Some(partner) = partner.filter(|p| self.contains(*p) && *p != r.label) else {
                continue;
            };
            let side = sides.get(&r.label).copied();
            let partner_side = sides.get(&partner).copied();
            let pair = match (side, partner_side) {
                (Some(Side::Left), Some(Side::Right)) => (r.label, partner),
                (Some(Side::Right), Some(Side::Left)) => (partner, r.label),
                _ => continue,
            };
            out.insert(pair.0, pair);
            out.insert(pair.1, pair);
        }
        out
    }
}
