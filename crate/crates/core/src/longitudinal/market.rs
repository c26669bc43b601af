use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::catalog::LibraryInstance;
use crate::corpus::CorpusIndex;

/// Install accounting for one library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryShare {
    pub library_id: String,
    pub app_count: u64,
    /// Sum of install floors over the distinct apps embedding the library.
    pub install_floor_total: u64,
    /// Fraction of the install total over all libraries.
    pub share: f64,
}

/// `(app_id, library_id)` pairs of a set of instances.
pub fn memberships(instances: &[LibraryInstance]) -> Vec<(&str, &str)> {
    instances
        .iter()
        .map(|i| (i.app_id.as_str(), i.library_id.as_str()))
        .collect()
}

pub fn library_installs(instances: &[LibraryInstance], index: &CorpusIndex) -> Result<Vec<LibraryShare>, AnalysisError> {
    installs_from_memberships(memberships(instances), index)
}

/// Per-library distinct app counts and install floor totals. An app that
/// embeds a library twice counts once.
pub fn installs_from_memberships<'a, I>(pairs: I, index: &CorpusIndex) -> Result<Vec<LibraryShare>, AnalysisError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut apps: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (app, lib) in pairs {
        apps.entry(lib).or_default().insert(app);
    }
    let mut totals = Vec::with_capacity(apps.len());
    for (lib, members) in apps {
        let mut total = 0u64;
        for app in &members {
            let meta = index
                .app(app)
                .ok_or_else(|| AnalysisError::MissingAppMeta(app.to_string()))?;
            total += meta.installs_floor;
        }
        totals.push((lib.to_string(), members.len() as u64, total));
    }
    Ok(shares_from_totals(totals))
}

/// Shares from precomputed `(library_id, app_count, install_floor_total)`
/// rows, ordered by install total descending then library id. When every
/// total is zero all shares are zero.
pub fn shares_from_totals(rows: Vec<(String, u64, u64)>) -> Vec<LibraryShare> {
    let grand: u128 = rows.iter().map(|r| r.2 as u128).sum();
    let mut shares: Vec<LibraryShare> = rows
        .into_iter()
        .map(|(library_id, app_count, install_floor_total)| LibraryShare {
            share: if grand == 0 {
                0.0
            } else {
                install_floor_total as f64 / grand as f64
            },
            library_id,
            app_count,
            install_floor_total,
        })
        .collect();
    shares.sort_by(|a, b| {
        b.install_floor_total
            .cmp(&a.install_floor_total)
            .then_with(|| a.library_id.cmp(&b.library_id))
    });
    shares
}

/// Combined share of the `n` libraries with the most installs.
///
/// Computed from integer totals, so the result is nondecreasing in `n` and
/// exactly 1.0 once `n` covers every library with installs.
pub fn top_share(shares: &[LibraryShare], n: usize) -> f64 {
    let mut totals: Vec<u64> = shares.iter().map(|s| s.install_floor_total).collect();
    totals.sort_unstable_by(|a, b| b.cmp(a));
    let grand: u128 = totals.iter().map(|&t| t as u128).sum();
    if grand == 0 {
        return 0.0;
    }
    let top: u128 = totals.iter().take(n).map(|&t| t as u128).sum();
    top as f64 / grand as f64
}
