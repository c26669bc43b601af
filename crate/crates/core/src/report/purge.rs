use std::collections::BTreeSet;

use super::table::{format_fraction, render};
use crate::corpus::CorpusIndex;
use crate::fingerprint::VersionGroup;
use crate::longitudinal::{purge_from_memberships, PurgeTable};

/// App ids, one per line. Blank lines and `#` comments are ignored.
pub fn parse_missing_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Purge table over the apps of `groups`, with its `purge_table.csv`
/// rendering. The pooled row carries its counts; the mean row only a
/// fraction.
pub fn purge_report(groups: &[VersionGroup], index: &CorpusIndex, missing: &BTreeSet<String>) -> (PurgeTable, String) {
    let pairs = groups
        .iter()
        .flat_map(|g| g.member_apps.iter().map(|a| (a.as_str(), g.key.library_id.as_str())));
    let table = purge_from_memberships(pairs, index, missing);

    let count = |n: u64| n.to_string();
    let rows = table
        .rows
        .iter()
        .chain([&table.pooled])
        .map(|r| {
            (
                r.library_id.clone(),
                count(r.missing),
                count(r.original),
                format_fraction(r.removed_fraction),
            )
        })
        .chain([(
            "OVERALL_MEAN".to_string(),
            String::new(),
            String::new(),
            format_fraction(table.mean_fraction),
        )]);
    let csv = render(&["library_id", "missing", "original", "removed_fraction"], rows);
    (table, csv)
}
