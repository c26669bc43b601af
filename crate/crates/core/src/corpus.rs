//! On-disk corpus format: a root directory of per-app bundles.
//!
//! Each immediate subdirectory of the corpus root is one bundle:
//!
//! ```text
//! <root>/<bundle>/meta.json
//! <root>/<bundle>/classes/**/*.dsm
//! ```
//!
//! Loading only reads `meta.json` and enumerates class files; the class files
//! themselves are parsed later by [`crate::disasm`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

/// Earliest plausible app release date (first commercial Android handset).
pub const ANDROID_EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(2008, 9, 1) {
    Some(d) => d,
    None => panic!("invalid epoch"),
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("malformed app metadata: {0}")]
    MalformedMeta(String),
    #[error("installs_ceiling {ceiling} is below installs_floor {floor}")]
    BadInstallBound { floor: u64, ceiling: u64 },
    #[error("malformed install range {0:?}")]
    MalformedRange(String),
    #[error("no valid app bundle under {0}")]
    EmptyCorpus(PathBuf),
    #[error("bundle {bundle}: {reason}")]
    Bundle { bundle: PathBuf, reason: String },
    #[error("cannot read corpus root {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// Store metadata for one app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppMeta {
    pub app_id: String,
    pub release_date: NaiveDate,
    pub installs_floor: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub installs_ceiling: Option<u64>,
    #[serde(default)]
    pub removed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl AppMeta {
    pub fn new(app_id: impl Into<String>, release_date: NaiveDate, installs_floor: u64) -> Self {
        AppMeta {
            app_id: app_id.into(),
            release_date,
            installs_floor,
            installs_ceiling: None,
            removed: false,
            title: None,
        }
    }

    /// Serializes to the `meta.json` schema.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("AppMeta serializes")
    }
}

// Wire shape of meta.json. Dates and bounds are checked after decoding so the
// error can say which rule was broken.
#[derive(Deserialize)]
struct RawMeta {
    app_id: Option<String>,
    release_date: Option<String>,
    installs_floor: Option<u64>,
    installs_ceiling: Option<u64>,
    installs_range: Option<String>,
    #[serde(default)]
    removed: Option<bool>,
    title: Option<String>,
}

/// Parses one `meta.json` document. Unknown keys are ignored.
pub fn parse_app_meta(text: &str) -> Result<AppMeta, CorpusError> {
    let raw: RawMeta =
        serde_json::from_str(text).map_err(|e| CorpusError::MalformedMeta(e.to_string()))?;

    let app_id = raw
        .app_id
        .ok_or_else(|| CorpusError::MalformedMeta("missing key `app_id`".into()))?;
    if app_id.is_empty() {
        return Err(CorpusError::MalformedMeta("`app_id` is empty".into()));
    }
    let date_text = raw
        .release_date
        .ok_or_else(|| CorpusError::MalformedMeta("missing key `release_date`".into()))?;
    let release_date = NaiveDate::parse_from_str(&date_text, "%Y-%m-%d").map_err(|e| {
        CorpusError::MalformedMeta(format!("release_date {date_text:?}: {e}"))
    })?;

    let (installs_floor, installs_ceiling) = match (raw.installs_floor, raw.installs_range) {
        (Some(floor), _) => (floor, raw.installs_ceiling),
        (None, Some(range)) => {
            let (floor, ceiling) = parse_install_range(&range)?;
            (floor, raw.installs_ceiling.or(Some(ceiling)))
        }
        (None, None) => {
            return Err(CorpusError::MalformedMeta(
                "missing key `installs_floor`".into(),
            ))
        }
    };
    if let Some(ceiling) = installs_ceiling {
        if ceiling < installs_floor {
            return Err(CorpusError::BadInstallBound {
                floor: installs_floor,
                ceiling,
            });
        }
    }

    Ok(AppMeta {
        app_id,
        release_date,
        installs_floor,
        installs_ceiling,
        removed: raw.removed.unwrap_or(false),
        title: raw.title,
    })
}

/// Parses a store install bucket such as `"1,000 - 5,000"` into
/// `(floor, ceiling)`. The floor is always the smaller endpoint.
///
/// Accepted separators are `-`, `--` and `–` (en dash), with optional
/// surrounding whitespace. Numbers may use `,` thousands separators.
pub fn parse_install_range(text: &str) -> Result<(u64, u64), CorpusError> {
    let bad = || CorpusError::MalformedRange(text.to_string());
    let trimmed = text.trim();

    let (left, right) = if let Some((l, r)) = trimmed.split_once('–') {
        (l, r)
    } else if let Some((l, r)) = trimmed.split_once("--") {
        (l, r)
    } else if let Some((l, r)) = trimmed.split_once('-') {
        (l, r)
    } else {
        return Err(bad());
    };

    let a = parse_grouped_number(left.trim()).ok_or_else(bad)?;
    let b = parse_grouped_number(right.trim()).ok_or_else(bad)?;
    Ok((a.min(b), a.max(b)))
}

// Digits with optional well-formed `,` thousands grouping.
fn parse_grouped_number(s: &str) -> Option<u64> {
    if s.is_empty() {
        return None;
    }
    let groups: Vec<&str> = s.split(',').collect();
    let (head, tail) = groups.split_first()?;
    let all_digits = |g: &str| !g.is_empty() && g.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(head) || (!tail.is_empty() && head.len() > 3) {
        return None;
    }
    if tail.iter().any(|g| g.len() != 3 || !all_digits(g)) {
        return None;
    }
    groups.concat().parse().ok()
}

/// A second bundle that declared an already-indexed `app_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowedBundle {
    pub app_id: String,
    pub bundle: PathBuf,
}

/// Immutable index over a loaded corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusIndex {
    apps: BTreeMap<String, AppMeta>,
    class_sources: BTreeMap<String, Vec<PathBuf>>,
    shadowed: Vec<ShadowedBundle>,
}

impl CorpusIndex {
    pub fn builder() -> CorpusIndexBuilder {
        CorpusIndexBuilder::default()
    }

    pub fn apps(&self) -> &BTreeMap<String, AppMeta> {
        &self.apps
    }

    pub fn app(&self, app_id: &str) -> Option<&AppMeta> {
        self.apps.get(app_id)
    }

    pub fn class_sources(&self, app_id: &str) -> &[PathBuf] {
        self.class_sources
            .get(app_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Bundles dropped because their `app_id` was already taken.
    pub fn shadowed(&self) -> &[ShadowedBundle] {
        &self.shadowed
    }

    pub fn len(&self) -> usize {
        self.apps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apps.is_empty()
    }
}

/// Accumulates apps in insertion order; the first claimant of an `app_id`
/// wins and later ones are recorded as shadowed.
#[derive(Debug, Default)]
pub struct CorpusIndexBuilder {
    index: CorpusIndex,
}

impl CorpusIndexBuilder {
    pub fn add(mut self, meta: AppMeta, bundle: impl Into<PathBuf>, classes: Vec<PathBuf>) -> Self {
        self.push(meta, bundle.into(), classes);
        self
    }

    fn push(&mut self, meta: AppMeta, bundle: PathBuf, mut classes: Vec<PathBuf>) {
        if self.index.apps.contains_key(&meta.app_id) {
            self.index.shadowed.push(ShadowedBundle {
                app_id: meta.app_id,
                bundle,
            });
            return;
        }
        classes.sort();
        self.index.class_sources.insert(meta.app_id.clone(), classes);
        self.index.apps.insert(meta.app_id.clone(), meta);
    }

    pub fn build(self) -> CorpusIndex {
        self.index
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Abort on the first malformed bundle instead of collecting diagnostics.
    pub strict: bool,
}

/// A bundle skipped during lenient loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleDiagnostic {
    pub bundle: PathBuf,
    pub reason: String,
}

impl fmt::Display for BundleDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.bundle.display(), self.reason)
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub index: CorpusIndex,
    pub diagnostics: Vec<BundleDiagnostic>,
}

/// Loads every bundle under `root`.
///
/// Bundles are visited in sorted directory-name order so the index does not
/// depend on filesystem enumeration order. Bundle parsing runs in parallel.
pub fn load_corpus(root: &Path, opts: LoadOptions) -> Result<LoadedCorpus, CorpusError> {
    let io_err = |e: std::io::Error| CorpusError::Io {
        path: root.to_path_buf(),
        reason: e.to_string(),
    };
    let mut bundles = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        if entry.file_type().map_err(io_err)?.is_dir() {
            bundles.push(entry.path());
        }
    }
    bundles.sort();

    let loaded: Vec<_> = bundles
        .par_iter()
        .map(|dir| (dir.clone(), load_bundle(dir)))
        .collect();

    let mut builder = CorpusIndex::builder();
    let mut diagnostics = Vec::new();
    for (dir, result) in loaded {
        match result {
            Ok((meta, classes)) => builder.push(meta, dir, classes),
            Err(reason) => {
                if opts.strict {
                    return Err(CorpusError::Bundle {
                        bundle: dir,
                        reason,
                    });
                }
                diagnostics.push(BundleDiagnostic {
                    bundle: dir,
                    reason,
                });
            }
        }
    }

    let index = builder.build();
    if index.is_empty() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(LoadedCorpus { index, diagnostics })
}

fn load_bundle(dir: &Path) -> Result<(AppMeta, Vec<PathBuf>), String> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| format!("cannot read meta.json: {e}"))?;
    let meta = parse_app_meta(&text).map_err(|e| e.to_string())?;

    let classes_dir = dir.join("classes");
    let mut classes = Vec::new();
    if classes_dir.is_dir() {
        for entry in WalkDir::new(&classes_dir).sort_by_file_name() {
            let entry = entry.map_err(|e| format!("cannot list classes: {e}"))?;
            let path = entry.path();
            if entry.file_type().is_file() && path.extension().is_some_and(|x| x == "dsm") {
                classes.push(path.to_path_buf());
            }
        }
    }
    Ok((meta, classes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    DuplicateId { app_id: String, bundle: PathBuf },
    NoClassFiles { app_id: String },
    DateBeforeAndroid { app_id: String, date: NaiveDate },
    DateAfterRun { app_id: String, date: NaiveDate },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateId { app_id, bundle } => write!(
                f,
                "duplicate-id\t{app_id}\tbundle {} repeats an indexed app_id",
                bundle.display()
            ),
            Finding::NoClassFiles { app_id } => write!(f, "no-classes\t{app_id}"),
            Finding::DateBeforeAndroid { app_id, date } => {
                write!(f, "pre-android-date\t{app_id}\t{date}")
            }
            Finding::DateAfterRun { app_id, date } => write!(f, "future-date\t{app_id}\t{date}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Reports suspicious entries in an index. `run_date` bounds release dates
/// from above.
pub fn validate_corpus(index: &CorpusIndex, run_date: NaiveDate) -> ValidationReport {
    let mut findings: Vec<Finding> = index
        .shadowed()
        .iter()
        .map(|s| Finding::DuplicateId {
            app_id: s.app_id.clone(),
            bundle: s.bundle.clone(),
        })
        .collect();

    for (app_id, meta) in index.apps() {
        if index.class_sources(app_id).is_empty() {
            findings.push(Finding::NoClassFiles {
                app_id: app_id.clone(),
            });
        }
        if meta.release_date < ANDROID_EPOCH {
            findings.push(Finding::DateBeforeAndroid {
                app_id: app_id.clone(),
                date: meta.release_date,
            });
        } else if meta.release_date > run_date {
            findings.push(Finding::DateAfterRun {
                app_id: app_id.clone(),
                date: meta.release_date,
            });
        }
    }
    ValidationReport { findings }
}
