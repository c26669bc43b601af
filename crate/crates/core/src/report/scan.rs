use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_text, ReportError};
use crate::catalog::{extract_instances, Catalog, LibraryInstance};
use crate::corpus::CorpusIndex;
use crate::disasm::{parse_class_file, ApiSignature, ClassUnit};
use crate::fingerprint::{group_versions, VersionGroup, VersionKey};

pub const VERSIONS_FORMAT: &str = "libtrend.versions.v1";

#[derive(Debug, Clone)]
pub struct ScanResult {
    /// Sorted by app id, then library id.
    pub instances: Vec<LibraryInstance>,
    pub groups: Vec<VersionGroup>,
    /// Class files skipped in lenient mode.
    pub diagnostics: Vec<String>,
}

/// Parses every class file of every indexed app, attributes classes to
/// libraries and groups the instances into versions.
///
/// In strict mode the first unparsable file aborts the scan; otherwise it is
/// skipped and reported in `diagnostics`.
pub fn scan_corpus(index: &CorpusIndex, catalog: &Catalog, strict: bool) -> Result<ScanResult, ReportError> {
    let files: Vec<(&str, &Path)> = index
        .apps()
        .keys()
        .flat_map(|app| index.class_sources(app).iter().map(move |p| (app.as_str(), p.as_path())))
        .collect();

    let parsed: Vec<Result<(&str, ClassUnit), ReportError>> = files
        .par_iter()
        .map(|&(app, path)| {
            let text = read_text(path)?;
            parse_class_file(&text)
                .map(|unit| (app, unit))
                .map_err(|error| ReportError::Parse {
                    path: path.to_path_buf(),
                    error,
                })
        })
        .collect();

    let mut diagnostics = Vec::new();
    let mut apps: Vec<(&str, Vec<ClassUnit>)> = Vec::new();
    for result in parsed {
        match result {
            Ok((app, unit)) => match apps.last_mut() {
                Some((last, units)) if *last == app => units.push(unit),
                _ => apps.push((app, vec![unit])),
            },
            Err(e @ ReportError::Parse { .. }) if !strict => diagnostics.push(e.to_string()),
            Err(e) => return Err(e),
        }
    }

    let (instances, groups) = scan_apps(apps, catalog)?;
    Ok(ScanResult {
        instances,
        groups,
        diagnostics,
    })
}

/// The in-memory half of a scan, for callers that already hold parsed classes.
pub fn scan_apps<'a, I>(apps: I, catalog: &Catalog) -> Result<(Vec<LibraryInstance>, Vec<VersionGroup>), ReportError>
where
    I: IntoIterator<Item = (&'a str, Vec<ClassUnit>)>,
{
    let mut instances: Vec<LibraryInstance> = apps
        .into_iter()
        .flat_map(|(app, classes)| extract_instances(app, classes, catalog))
        .collect();
    instances.sort_by(|a, b| (&a.app_id, &a.library_id).cmp(&(&b.app_id, &b.library_id)));
    let groups = group_versions(&instances)?;
    Ok((instances, groups))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VersionRecord {
    key: VersionKey,
    library_id: String,
    content_hash: String,
    member_apps: BTreeSet<String>,
    api_calls: BTreeSet<ApiSignature>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VersionsFile {
    format: String,
    versions: Vec<VersionRecord>,
}

pub fn render_versions_json(groups: &[VersionGroup]) -> String {
    let mut versions: Vec<VersionRecord> = groups
        .iter()
        .map(|g| VersionRecord {
            key: g.key.clone(),
            library_id: g.key.library_id.clone(),
            content_hash: g.key.hash_hex(),
            member_apps: g.member_apps.clone(),
            api_calls: g.api_calls.clone(),
        })
        .collect();
    versions.sort_by(|a, b| a.key.cmp(&b.key));
    let file = VersionsFile {
        format: VERSIONS_FORMAT.to_string(),
        versions,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("plain data serializes");
    text.push('\n');
    text
}

pub fn parse_versions_json(text: &str, path: &Path) -> Result<Vec<VersionGroup>, ReportError> {
    let bad = |reason: String| ReportError::Input {
        path: path.to_path_buf(),
        reason,
    };
    let file: VersionsFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.format != VERSIONS_FORMAT {
        return Err(bad(format!("unsupported format {:?}", file.format)));
    }
    let mut groups = Vec::with_capacity(file.versions.len());
    for v in file.versions {
        if v.library_id != v.key.library_id || v.content_hash != v.key.hash_hex() {
            return Err(bad(format!("record {} disagrees with its key", v.key)));
        }
        if v.member_apps.is_empty() {
            return Err(bad(format!("record {} has no member apps", v.key)));
        }
        groups.push(VersionGroup {
            key: v.key,
            member_apps: v.member_apps,
            api_calls: v.api_calls,
        });
    }
    groups.sort_by(|a, b| a.key.cmp(&b.key));
    if groups.windows(2).any(|w| w[0].key == w[1].key) {
        return Err(bad("repeated version key".into()));
    }
    Ok(groups)
}
