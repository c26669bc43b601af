use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use super::table::{format_fraction, render};
use super::{
    parse_versions_json, read_text, ReportError, CAPABILITIES_FILE, MARKET_SHARE_FILE, SERIES_COUNTS_FILE,
    SERIES_PERCENT_FILE, SERIES_WEIGHTED_FILE, SNAPSHOT_FILE,
};
use crate::catalog::Catalog;
use crate::corpus::CorpusIndex;
use crate::fingerprint::{VersionGroup, VersionKey};
use crate::longitudinal::{
    compare_snapshot, date_versions, installs_from_memberships, monthly_states, permission_series,
    shares_from_totals, weighted_series, CountPoint, DatedVersion, FractionPoint, LibraryShare, Metric, Month,
    MonthlyLibraryState, SnapshotComparison, StateMode,
};
use crate::permissions::{capability_set, permission_count, CapabilitySet, DangerConfig, EquivalenceClasses, PermissionMap};

pub struct AnalyzeInputs<'a> {
    pub index: &'a CorpusIndex,
    pub groups: &'a [VersionGroup],
    pub catalog: &'a Catalog,
    pub map: &'a PermissionMap,
    pub danger: &'a DangerConfig,
    pub equivalence: &'a EquivalenceClasses,
    pub mode: StateMode,
    pub min_libraries: usize,
    /// Per-library capabilities of an undated snapshot, compared against the
    /// series at the given month.
    pub snapshot: Option<(&'a BTreeMap<String, CapabilitySet>, Month)>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub dated: Vec<DatedVersion>,
    pub capabilities: BTreeMap<VersionKey, CapabilitySet>,
    pub states: Vec<MonthlyLibraryState>,
    pub shares: Vec<LibraryShare>,
    pub snapshot: Option<SnapshotComparison>,
    /// Output file name to contents.
    pub files: BTreeMap<String, String>,
}

pub fn analyze(inputs: &AnalyzeInputs<'_>) -> Result<Analysis, ReportError> {
    let dated = date_versions(inputs.groups, inputs.index)?;
    let capabilities: BTreeMap<VersionKey, CapabilitySet> = inputs
        .groups
        .iter()
        .map(|g| (g.key.clone(), capability_set(&g.api_calls, inputs.map)))
        .collect();
    let states = monthly_states(&dated, &capabilities, inputs.mode)?;

    let pairs = inputs
        .groups
        .iter()
        .flat_map(|g| g.member_apps.iter().map(|a| (a.as_str(), g.key.library_id.as_str())));
    let shares = installs_from_memberships(pairs, inputs.index)?;

    let mut metrics: Vec<Metric> = states
        .iter()
        .flat_map(|s| s.permissions.iter())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|p| Metric::Permission(p.clone()))
        .collect();
    metrics.push(Metric::Dangerous(inputs.danger.clone()));

    let mut counts: Vec<CountPoint> = Vec::new();
    let mut percent: Vec<FractionPoint> = Vec::new();
    let mut weighted: Vec<FractionPoint> = Vec::new();
    for metric in &metrics {
        let series = permission_series(&states, metric, inputs.min_libraries);
        counts.extend(series.counts);
        percent.extend(series.fractions);
        weighted.extend(weighted_series(&states, &shares, metric, inputs.min_libraries).points);
    }
    counts.sort_by(|a, b| (a.month, &a.metric).cmp(&(b.month, &b.metric)));
    percent.sort_by(|a, b| (a.month, &a.metric).cmp(&(b.month, &b.metric)));
    weighted.sort_by(|a, b| (a.month, &a.metric).cmp(&(b.month, &b.metric)));

    let mut files = BTreeMap::new();
    files.insert(
        SERIES_COUNTS_FILE.to_string(),
        render(
            &["month", "metric", "count", "denominator"],
            counts.iter().map(|p| (p.month.to_string(), &p.metric, p.count, p.denominator)),
        ),
    );
    files.insert(SERIES_PERCENT_FILE.to_string(), render_fractions(&percent));
    files.insert(SERIES_WEIGHTED_FILE.to_string(), render_fractions(&weighted));
    files.insert(
        MARKET_SHARE_FILE.to_string(),
        render_market(&shares, |id| inputs.catalog.display_name(id).to_string()),
    );
    files.insert(
        CAPABILITIES_FILE.to_string(),
        render(
            &["library_id", "version_hash", "date", "supporting_apps", "permission_count", "permissions"],
            dated.iter().map(|d| {
                let caps = &capabilities[&d.key];
                (
                    &d.key.library_id,
                    d.key.hash_hex(),
                    d.date.to_string(),
                    d.supporting_apps,
                    permission_count(caps, inputs.equivalence),
                    caps.iter().map(|p| p.as_str()).collect::<Vec<_>>().join("|"),
                )
            }),
        ),
    );

    let snapshot = match inputs.snapshot {
        Some((snap, month)) => {
            let cmp = compare_snapshot(snap, month, &states)?;
            files.insert(SNAPSHOT_FILE.to_string(), render_snapshot(&cmp));
            Some(cmp)
        }
        None => None,
    };

    Ok(Analysis {
        dated,
        capabilities,
        states,
        shares,
        snapshot,
        files,
    })
}

fn render_fractions(points: &[FractionPoint]) -> String {
    render(
        &["month", "metric", "fraction", "denominator"],
        points
            .iter()
            .map(|p| (p.month.to_string(), &p.metric, format_fraction(p.fraction), p.denominator)),
    )
}

fn render_market(shares: &[LibraryShare], display: impl Fn(&str) -> String) -> String {
    let app_total: u64 = shares.iter().map(|s| s.app_count).sum();
    let install_total: u64 = shares.iter().map(|s| s.install_floor_total).sum();
    let total_share = if install_total == 0 { 0.0 } else { 1.0 };
    let rows = shares
        .iter()
        .map(|s| {
            (
                s.library_id.clone(),
                display(&s.library_id),
                s.app_count,
                s.install_floor_total,
                format_fraction(s.share),
            )
        })
        .chain([(
            "TOTALS".to_string(),
            String::new(),
            app_total,
            install_total,
            format_fraction(total_share),
        )]);
    render(
        &["library_id", "display_name", "app_count", "installs_floor_total", "share"],
        rows,
    )
}

fn render_snapshot(cmp: &SnapshotComparison) -> String {
    render(
        &[
            "month",
            "permission",
            "snapshot_count",
            "snapshot_libraries",
            "snapshot_fraction",
            "series_count",
            "series_libraries",
            "series_fraction",
            "delta",
        ],
        cmp.rows.iter().map(|r| {
            (
                cmp.month.to_string(),
                r.permission.as_str(),
                r.snapshot_count,
                cmp.snapshot_libraries,
                format_fraction(r.snapshot_fraction),
                r.series_count,
                cmp.series_libraries,
                format_fraction(r.series_fraction),
                format_fraction(r.delta),
            )
        }),
    )
}

/// One row of a per-library install table, as shipped in
/// `data/library_installs.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ReplayRow {
    pub library_id: String,
    pub display_name: String,
    pub app_count: u64,
    pub installs_floor_total: u64,
}

/// Market shares straight from a per-library install table, with no corpus.
/// Returns the shares and the rendered `market_share.csv`.
pub fn replay_market_share(text: &str, path: &Path) -> Result<(Vec<LibraryShare>, String), ReportError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows: Vec<ReplayRow> = Vec::new();
    for record in reader.deserialize() {
        rows.push(record.map_err(|e| ReportError::Input {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?);
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = rows.iter().find(|r| !seen.insert(r.library_id.as_str())) {
        return Err(ReportError::Input {
            path: path.to_path_buf(),
            reason: format!("library {} listed twice", dup.library_id),
        });
    }
    let names: BTreeMap<String, String> = rows
        .iter()
        .map(|r| (r.library_id.clone(), r.display_name.clone()))
        .collect();
    let shares = shares_from_totals(
        rows.into_iter()
            .map(|r| (r.library_id, r.app_count, r.installs_floor_total))
            .collect(),
    );
    let csv = render_market(&shares, |id| names[id].clone());
    Ok((shares, csv))
}

/// Per-library capability union over every version in a `versions.json`.
pub fn load_snapshot(path: &Path, map: &PermissionMap) -> Result<BTreeMap<String, CapabilitySet>, ReportError> {
    let groups = parse_versions_json(&read_text(path)?, path)?;
    let mut out: BTreeMap<String, CapabilitySet> = BTreeMap::new();
    for g in &groups {
        out.entry(g.key.library_id.clone())
            .or_default()
            .extend(capability_set(&g.api_calls, map));
    }
    Ok(out)
}
