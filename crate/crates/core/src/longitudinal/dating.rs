use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::CorpusIndex;
use crate::fingerprint::{VersionGroup, VersionKey};

/// A version with its latest possible release date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatedVersion {
    pub key: VersionKey,
    /// Earliest release date among the apps that embed this version.
    pub date: NaiveDate,
    pub supporting_apps: usize,
}

/// Dates each version by its earliest host app: a library version must exist
/// before the first app that ships it.
pub fn date_versions(groups: &[VersionGroup], index: &CorpusIndex) -> Result<Vec<DatedVersion>, AnalysisError> {
    groups
        .iter()
        .map(|group| {
            let mut earliest: Option<NaiveDate> = None;
            for app in &group.member_apps {
                let meta = index
                    .app(app)
                    .ok_or_else(|| AnalysisError::MissingAppMeta(app.clone()))?;
                earliest = Some(earliest.map_or(meta.release_date, |d| d.min(meta.release_date)));
            }
            let date = earliest.ok_or_else(|| AnalysisError::MissingAppMeta(String::new()))?;
            Ok(DatedVersion {
                key: group.key.clone(),
                date,
                supporting_apps: group.member_apps.len(),
            })
        })
        .collect()
}
