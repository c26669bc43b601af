use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{AnalysisError, Month, MonthlyLibraryState};
use crate::permissions::{CapabilitySet, Permission};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotRow {
    pub permission: Permission,
    pub snapshot_count: u64,
    pub series_count: u64,
    pub snapshot_fraction: f64,
    pub series_fraction: f64,
    /// `snapshot_fraction - series_fraction`, rounded once from the exact
    /// rational difference.
    pub delta: f64,
}

/// Prevalence of each permission in an undated snapshot against the dated
/// series at one month.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotComparison {
    pub month: Month,
    pub snapshot_libraries: u64,
    pub series_libraries: u64,
    pub rows: Vec<SnapshotRow>,
}

impl SnapshotComparison {
    /// Row for `permission`; all zeros when neither side has it.
    pub fn row(&self, permission: &Permission) -> SnapshotRow {
        self.rows
            .iter()
            .find(|r| &r.permission == permission)
            .cloned()
            .unwrap_or_else(|| SnapshotRow {
                permission: permission.clone(),
                snapshot_count: 0,
                series_count: 0,
                snapshot_fraction: 0.0,
                series_fraction: 0.0,
                delta: 0.0,
            })
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compare_snapshot(
    snapshot: &BTreeMap<String, CapabilitySet>,
    month: Month,
    states: &[MonthlyLibraryState],
) -> Result<SnapshotComparison, AnalysisError> {
    let mut series: BTreeMap<&str, BTreeSet<&Permission>> = BTreeMap::new();
    for s in states.iter().filter(|s| s.month == month) {
        series.entry(&s.library_id).or_default().extend(&s.permissions);
    }
    if series.is_empty() {
        return Err(AnalysisError::NoSeriesData(month));
    }

    let snap_total = snapshot.len() as u64;
    let series_total = series.len() as u64;
    let mut counts: BTreeMap<&Permission, (u64, u64)> = BTreeMap::new();
    for p in snapshot.values().flatten() {
        counts.entry(p).or_default().0 += 1;
    }
    for p in series.values().flatten() {
        counts.entry(p).or_default().1 += 1;
    }

    let rows = counts
        .into_iter()
        .map(|(p, (sc, tc))| {
            // a/b - c/d = (ad - cb) / bd, exact in integers
            let delta = if snap_total == 0 {
                -ratio(tc, series_total)
            } else {
                let num = sc as i128 * series_total as i128 - tc as i128 * snap_total as i128;
                let den = snap_total as i128 * series_total as i128;
                num as f64 / den as f64
            };
            SnapshotRow {
                permission: p.clone(),
                snapshot_count: sc,
                series_count: tc,
                snapshot_fraction: ratio(sc, snap_total),
                series_fraction: ratio(tc, series_total),
                delta,
            }
        })
        .collect();

    Ok(SnapshotComparison {
        month,
        snapshot_libraries: snap_total,
        series_libraries: series_total,
        rows,
    })
}
