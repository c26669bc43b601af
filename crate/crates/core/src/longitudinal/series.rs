use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, DatedVersion, LibraryShare, Month};
use crate::fingerprint::VersionKey;
use crate::permissions::{CapabilitySet, DangerConfig, Permission};

/// Label of the aggregate "any dangerous permission" metric.
pub const DANGEROUS_LABEL: &str = "DANGEROUS";

/// How a library's monthly state is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateMode {
    /// Union over the versions dated in that month; no state otherwise.
    #[default]
    ReleasedInMonth,
    /// As above, and months without a release repeat the latest union.
    CarryForward,
}

impl fmt::Display for StateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateMode::ReleasedInMonth => "released-in-month",
            StateMode::CarryForward => "carry-forward",
        })
    }
}

impl FromStr for StateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "released-in-month" => Ok(StateMode::ReleasedInMonth),
            "carry-forward" => Ok(StateMode::CarryForward),
            other => Err(format!(
                "unknown state mode {other:?} (expected released-in-month or carry-forward)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthlyLibraryState {
    pub library_id: String,
    pub month: Month,
    pub permissions: CapabilitySet,
}

/// Per-library monthly capability states, sorted by month then library.
///
/// In carry-forward mode every library keeps a state from its first release
/// month up to the last month that has any release in `dated`.
pub fn monthly_states(
    dated: &[DatedVersion],
    caps: &BTreeMap<VersionKey, CapabilitySet>,
    mode: StateMode,
) -> Result<Vec<MonthlyLibraryState>, AnalysisError> {
    let mut released: BTreeMap<(&str, Month), CapabilitySet> = BTreeMap::new();
    for version in dated {
        let set = caps
            .get(&version.key)
            .ok_or_else(|| AnalysisError::MissingCapabilities(version.key.clone()))?;
        released
            .entry((version.key.library_id.as_str(), Month::of(version.date)))
            .or_default()
            .extend(set.iter().cloned());
    }

    let mut states: Vec<MonthlyLibraryState> = match mode {
        StateMode::ReleasedInMonth => released
            .into_iter()
            .map(|((lib, month), permissions)| MonthlyLibraryState {
                library_id: lib.to_string(),
                month,
                permissions,
            })
            .collect(),
        StateMode::CarryForward => {
            let Some(last) = released.keys().map(|(_, m)| *m).max() else {
                return Ok(Vec::new());
            };
            let mut by_lib: BTreeMap<&str, Vec<(Month, CapabilitySet)>> = BTreeMap::new();
            for ((lib, month), set) in released {
                by_lib.entry(lib).or_default().push((month, set));
            }
            let mut out = Vec::new();
            for (lib, releases) in by_lib {
                let mut month = releases[0].0;
                let mut next = 0;
                let mut current: &CapabilitySet = &releases[0].1;
                while month <= last {
                    if next < releases.len() && releases[next].0 == month {
                        current = &releases[next].1;
                        next += 1;
                    }
                    out.push(MonthlyLibraryState {
                        library_id: lib.to_string(),
                        month,
                        permissions: current.clone(),
                    });
                    month = month.succ();
                }
            }
            out
        }
    };
    states.sort_by(|a, b| (a.month, &a.library_id).cmp(&(b.month, &b.library_id)));
    Ok(states)
}

/// What a series counts: libraries able to use one permission, or able to use
/// any permission in the dangerous set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Metric {
    Permission(Permission),
    Dangerous(DangerConfig),
}

impl Metric {
    pub fn label(&self) -> String {
        match self {
            Metric::Permission(p) => p.to_string(),
            Metric::Dangerous(_) => DANGEROUS_LABEL.to_string(),
        }
    }

    pub fn matches(&self, caps: &CapabilitySet) -> bool {
        match self {
            Metric::Permission(p) => caps.contains(p),
            Metric::Dangerous(cfg) => caps.iter().any(|p| cfg.contains(p)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountPoint {
    pub month: Month,
    pub metric: String,
    pub count: u64,
    pub denominator: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionPoint {
    pub month: Month,
    pub metric: String,
    pub fraction: f64,
    pub denominator: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    /// One point per month that has any library state.
    pub counts: Vec<CountPoint>,
    /// Only months with at least `min_libraries` library states.
    pub fractions: Vec<FractionPoint>,
}

fn by_month(states: &[MonthlyLibraryState]) -> BTreeMap<Month, Vec<&MonthlyLibraryState>> {
    let mut months: BTreeMap<Month, Vec<&MonthlyLibraryState>> = BTreeMap::new();
    for s in states {
        months.entry(s.month).or_default().push(s);
    }
    months
}

pub fn permission_series(states: &[MonthlyLibraryState], metric: &Metric, min_libraries: usize) -> Series {
    let label = metric.label();
    let mut series = Series::default();
    for (month, month_states) in by_month(states) {
        let libraries: BTreeSet<&str> = month_states.iter().map(|s| s.library_id.as_str()).collect();
        let hits: BTreeSet<&str> = month_states
            .iter()
            .filter(|s| metric.matches(&s.permissions))
            .map(|s| s.library_id.as_str())
            .collect();
        let denominator = libraries.len() as u64;
        let count = hits.len() as u64;
        series.counts.push(CountPoint {
            month,
            metric: label.clone(),
            count,
            denominator,
        });
        if libraries.len() >= min_libraries {
            series.fractions.push(FractionPoint {
                month,
                metric: label.clone(),
                fraction: count as f64 / denominator as f64,
                denominator,
            });
        }
    }
    series
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedSeries {
    pub points: Vec<FractionPoint>,
    /// Libraries with states but no market share; they weigh nothing.
    pub unweighted_libraries: BTreeSet<String>,
}

/// Install-weighted share of libraries able to use the metric, with weights
/// fixed across months at each library's install floor total.
pub fn weighted_series(
    states: &[MonthlyLibraryState],
    shares: &[LibraryShare],
    metric: &Metric,
    min_libraries: usize,
) -> WeightedSeries {
    let weights: BTreeMap<&str, u128> = shares
        .iter()
        .map(|s| (s.library_id.as_str(), s.install_floor_total as u128))
        .collect();
    let label = metric.label();
    let mut out = WeightedSeries::default();
    for (month, month_states) in by_month(states) {
        let mut libraries: BTreeMap<&str, bool> = BTreeMap::new();
        for s in month_states {
            *libraries.entry(s.library_id.as_str()).or_default() |= metric.matches(&s.permissions);
        }
        if libraries.len() < min_libraries {
            continue;
        }
        let mut total: u128 = 0;
        let mut hit: u128 = 0;
        for (lib, matched) in &libraries {
            let w = match weights.get(lib) {
                Some(w) => *w,
                None => {
                    out.unweighted_libraries.insert(lib.to_string());
                    0
                }
            };
            total += w;
            if *matched {
                hit += w;
            }
        }
        if total == 0 {
            continue;
        }
        out.points.push(FractionPoint {
            month,
            metric: label.clone(),
            fraction: hit as f64 / total as f64,
            denominator: libraries.len() as u64,
        });
    }
    out
}
