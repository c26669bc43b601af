//! Pipeline orchestration and serialization of results.
//!
//! Every output is a pure function of the corpus bytes and the run
//! configuration: rows are sorted, fractions carry six decimals, lines end in
//! `\n`, and no timestamps are written. Files are replaced atomically.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::catalog::{load_catalog, Catalog, CatalogError};
use crate::corpus::CorpusError;
use crate::disasm::ParseError;
use crate::fingerprint::FingerprintError;
use crate::longitudinal::{AnalysisError, StateMode};
use crate::permissions::{load_permission_map, DangerConfig, EquivalenceClasses, PermissionError, PermissionMap};

mod analyze;
mod purge;
mod scan;
mod table;

pub use analyze::{analyze, load_snapshot, replay_market_share, AnalyzeInputs, Analysis, ReplayRow};
pub use purge::{parse_missing_list, purge_report};
pub use scan::{parse_versions_json, render_versions_json, scan_apps, scan_corpus, ScanResult};
pub use table::format_fraction;

pub const VERSIONS_FILE: &str = "versions.json";
pub const SERIES_COUNTS_FILE: &str = "series_counts.csv";
pub const SERIES_PERCENT_FILE: &str = "series_percent.csv";
pub const SERIES_WEIGHTED_FILE: &str = "series_weighted.csv";
pub const MARKET_SHARE_FILE: &str = "market_share.csv";
pub const CAPABILITIES_FILE: &str = "capabilities.csv";
pub const PURGE_FILE: &str = "purge_table.csv";
pub const SNAPSHOT_FILE: &str = "snapshot_comparison.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {error}")]
    Parse { path: PathBuf, error: ParseError },
    #[error("catalog {path}: {error}")]
    Catalog { path: PathBuf, error: CatalogError },
    #[error("permission map {path}: {error}")]
    Permission { path: PathBuf, error: PermissionError },
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn read_text(path: &Path) -> Result<String, ReportError> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ReportError::MissingFile(path.to_path_buf())
        } else {
            ReportError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

/// Settings for one pipeline run. Deserializes from the run-config JSON;
/// absent keys take defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_root: Option<PathBuf>,
    /// Bundled catalog when absent.
    pub catalog_path: Option<PathBuf>,
    pub permission_map_path: Option<PathBuf>,
    /// Bundled dangerous set when absent.
    pub danger_config: Option<DangerConfig>,
    pub equivalence_classes: EquivalenceClasses,
    pub state_mode: StateMode,
    pub min_libraries: usize,
    pub output_dir: PathBuf,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_root: None,
            catalog_path: None,
            permission_map_path: None,
            danger_config: None,
            equivalence_classes: EquivalenceClasses::default(),
            state_mode: StateMode::default(),
            min_libraries: 5,
            output_dir: PathBuf::from("out"),
            strict: false,
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ReportError> {
        let text = read_text(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| ReportError::Input {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.corpus_root.as_mut().map(rebase);
        cfg.catalog_path.as_mut().map(rebase);
        cfg.permission_map_path.as_mut().map(rebase);
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.min_libraries < 1 {
            return Err(ReportError::Config("min_libraries must be at least 1".into()));
        }
        for path in [&self.corpus_root, &self.catalog_path, &self.permission_map_path]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(ReportError::MissingFile(path.clone()));
            }
        }
        Ok(())
    }

    pub fn corpus_root(&self) -> Result<&Path, ReportError> {
        self.corpus_root
            .as_deref()
            .ok_or_else(|| ReportError::Config("no corpus root given".into()))
    }

    pub fn load_catalog(&self) -> Result<Catalog, ReportError> {
        match &self.catalog_path {
            None => Ok(Catalog::bundled()),
            Some(path) => load_catalog(&read_text(path)?).map_err(|error| ReportError::Catalog {
                path: path.clone(),
                error,
            }),
        }
    }

    pub fn load_permission_map(&self) -> Result<PermissionMap, ReportError> {
        let path = self
            .permission_map_path
            .as_ref()
            .ok_or_else(|| ReportError::Config("no permission map given".into()))?;
        load_permission_map(&read_text(path)?).map_err(|error| ReportError::Permission {
            path: path.clone(),
            error,
        })
    }

    pub fn danger(&self) -> DangerConfig {
        self.danger_config.clone().unwrap_or_default()
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Writes every named file under `dir`.
pub fn write_outputs(dir: &Path, files: &BTreeMap<String, String>) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
