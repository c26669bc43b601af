//! Dating, monthly permission series, market share, purge correlation and
//! snapshot comparison.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::VersionKey;

mod dating;
mod market;
mod purge;
mod series;
mod snapshot;

pub use dating::{date_versions, DatedVersion};
pub use market::{
    installs_from_memberships, library_installs, memberships, shares_from_totals, top_share, LibraryShare,
};
pub use purge::{purge_analysis, purge_from_memberships, PurgeRow, PurgeTable};
pub use series::{
    monthly_states, permission_series, weighted_series, CountPoint, FractionPoint, Metric,
    MonthlyLibraryState, Series, StateMode, WeightedSeries, DANGEROUS_LABEL,
};
pub use snapshot::{compare_snapshot, SnapshotComparison, SnapshotRow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("no metadata for app {0}")]
    MissingAppMeta(String),
    #[error("no capability set for version {0}")]
    MissingCapabilities(VersionKey),
    #[error("no series data for {0}")]
    NoSeriesData(Month),
    #[error("invalid month {0:?}")]
    InvalidMonth(String),
}

/// Calendar month, displayed as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Month { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Month {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Month {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Month {
                year: self.year,
                month: self.month + 1,
            }
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnalysisError::InvalidMonth(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Month::new(year, month).ok_or_else(bad)
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
