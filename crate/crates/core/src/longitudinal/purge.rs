use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::memberships;
use crate::catalog::LibraryInstance;
use crate::corpus::CorpusIndex;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurgeRow {
    pub library_id: String,
    pub missing: u64,
    pub original: u64,
    pub removed_fraction: f64,
}

impl PurgeRow {
    pub fn from_counts(library_id: impl Into<String>, missing: u64, original: u64) -> Self {
        PurgeRow {
            library_id: library_id.into(),
            missing,
            original,
            removed_fraction: if original == 0 {
                0.0
            } else {
                missing as f64 / original as f64
            },
        }
    }
}

/// Removal rates per library for a set of apps that disappeared from the
/// store.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurgeTable {
    /// Sorted by removed fraction descending, then library id.
    pub rows: Vec<PurgeRow>,
    /// Missing apps with any catalog library over apps with any catalog
    /// library.
    pub pooled: PurgeRow,
    /// Unweighted mean of the per-library fractions.
    pub mean_fraction: f64,
    /// Missing ids that are not in the corpus; they affect no row.
    pub unknown_missing: Vec<String>,
}

pub fn purge_analysis(
    instances: &[LibraryInstance],
    index: &CorpusIndex,
    missing_ids: &BTreeSet<String>,
) -> PurgeTable {
    purge_from_memberships(memberships(instances), index, missing_ids)
}

pub fn purge_from_memberships<'a, I>(pairs: I, index: &CorpusIndex, missing_ids: &BTreeSet<String>) -> PurgeTable
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let unknown_missing: Vec<String> = missing_ids
        .iter()
        .filter(|id| index.app(id).is_none())
        .cloned()
        .collect();

    let mut by_lib: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (app, lib) in pairs {
        by_lib.entry(lib).or_default().insert(app);
    }
    let any_library: BTreeSet<&str> = by_lib.values().flatten().copied().collect();

    let mut rows: Vec<PurgeRow> = by_lib
        .iter()
        .map(|(lib, apps)| {
            let missing = apps.iter().filter(|a| missing_ids.contains(**a)).count() as u64;
            PurgeRow::from_counts(*lib, missing, apps.len() as u64)
        })
        .collect();
    rows.sort_by(|a, b| {
        b.removed_fraction
            .total_cmp(&a.removed_fraction)
            .then_with(|| a.library_id.cmp(&b.library_id))
    });

    let pooled_missing = any_library.iter().filter(|a| missing_ids.contains(**a)).count() as u64;
    let pooled = PurgeRow::from_counts("OVERALL_POOLED", pooled_missing, any_library.len() as u64);
    let mean_fraction = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.removed_fraction).sum::<f64>() / rows.len() as f64
    };

    PurgeTable {
        rows,
        pooled,
        mean_fraction,
        unknown_missing,
    }
}
