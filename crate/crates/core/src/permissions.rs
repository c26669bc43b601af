//! API-to-permission mapping and capability sets.
//!
//! The mapping file has one row per framework method:
//!
//! ```text
//! android.telephony.TelephonyManager.getDeviceId()<TAB>READ_PHONE_STATE
//! android.location.LocationManager.getLastKnownLocation(...)<TAB>ACCESS_FINE_LOCATION|ACCESS_COARSE_LOCATION
//! ```
//!
//! A row lists `;`-separated groups; each group is a `|`-separated set of
//! alternatives, any one of which satisfies the call. Capability sets take
//! the maximal view: every alternative of every group counts.
//!
//! A parameter list written literally as `(...)` matches every overload of
//! that method.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disasm::ApiSignature;

/// Parameter list that matches any overload.
pub const ANY_OVERLOAD: &str = "...";

const ANDROID_PREFIX: &str = "android.permission.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PermissionError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: API {api} mapped twice")]
    DuplicateApi { line: usize, api: String },
    #[error("line {line}: empty permission group")]
    EmptyGroup { line: usize },
    #[error("invalid permission name {0:?}")]
    InvalidPermission(String),
    #[error("permission {0} appears in two equivalence classes")]
    OverlappingEquivClasses(Permission),
}

/// Uppercase permission name such as `READ_PHONE_STATE`. The
/// `android.permission.` namespace prefix is accepted and stripped.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Permission(String);

impl Permission {
    pub fn new(name: &str) -> Result<Self, PermissionError> {
        let bare = name.strip_prefix(ANDROID_PREFIX).unwrap_or(name);
        if bare.is_empty() || !bare.bytes().all(|b| b.is_ascii_uppercase() || b == b'_') {
            return Err(PermissionError::InvalidPermission(name.to_string()));
        }
        Ok(Permission(bare.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Permission {
    type Err = PermissionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Permission::new(s)
    }
}

impl TryFrom<String> for Permission {
    type Error = PermissionError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Permission::new(&s)
    }
}

impl From<Permission> for String {
    fn from(p: Permission) -> String {
        p.0
    }
}

/// Alternatives, any one of which suffices for a call.
pub type PermissionGroup = BTreeSet<Permission>;

/// Maximal set of permissions a version is able to exercise.
pub type CapabilitySet = BTreeSet<Permission>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PermissionMap {
    entries: BTreeMap<ApiSignature, Vec<PermissionGroup>>,
}

impl PermissionMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn groups(&self, api: &ApiSignature) -> Option<&[PermissionGroup]> {
        self.entries.get(api).map(Vec::as_slice)
    }

    /// Exact row plus any `(...)` wildcard row for the same method.
    fn matching_rows<'a>(&'a self, api: &ApiSignature) -> impl Iterator<Item = &'a PermissionGroup> {
        let exact = self.entries.get(api);
        let wildcard = if api.params() == ANY_OVERLOAD {
            None
        } else {
            ApiSignature::parse(&format!("{}({ANY_OVERLOAD})", api.member_path()))
                .ok()
                .and_then(|w| self.entries.get(&w))
        };
        exact.into_iter().chain(wildcard).flatten()
    }

    pub fn is_mapped(&self, api: &ApiSignature) -> bool {
        self.matching_rows(api).next().is_some()
    }

    /// Capabilities of a call set, plus the calls the map does not cover.
    pub fn resolve<'a, I>(&self, api_calls: I) -> Resolution
    where
        I: IntoIterator<Item = &'a ApiSignature>,
    {
        let mut res = Resolution::default();
        for api in api_calls {
            let mut mapped = false;
            for group in self.matching_rows(api) {
                mapped = true;
                res.capabilities.extend(group.iter().cloned());
            }
            if !mapped {
                res.unmapped.insert(api.clone());
            }
        }
        res
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolution {
    pub capabilities: CapabilitySet,
    pub unmapped: BTreeSet<ApiSignature>,
}

/// Parses the mapping file. Blank lines and `#` comments are skipped.
pub fn load_permission_map(text: &str) -> Result<PermissionMap, PermissionError> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let malformed = |reason: String| PermissionError::MalformedRow { line, reason };
        let Some((api_text, groups_text)) = raw.split_once('\t') else {
            return Err(malformed("expected `api<TAB>groups`".into()));
        };
        let api = ApiSignature::parse(api_text.trim()).map_err(|e| malformed(e.to_string()))?;

        let mut groups = Vec::new();
        for group_text in groups_text.split(';') {
            let mut group = PermissionGroup::new();
            for name in group_text.split('|').map(str::trim).filter(|s| !s.is_empty()) {
                group.insert(Permission::new(name).map_err(|e| malformed(e.to_string()))?);
            }
            if group.is_empty() {
                return Err(PermissionError::EmptyGroup { line });
            }
            groups.push(group);
        }
        if entries.contains_key(&api) {
            return Err(PermissionError::DuplicateApi {
                line,
                api: api.to_string(),
            });
        }
        entries.insert(api, groups);
    }
    Ok(PermissionMap { entries })
}

/// Union of every alternative of every group for each mapped call.
/// Unmapped calls contribute nothing.
pub fn capability_set<'a, I>(api_calls: I, map: &PermissionMap) -> CapabilitySet
where
    I: IntoIterator<Item = &'a ApiSignature>,
{
    map.resolve(api_calls).capabilities
}

/// Permissions treated as dangerous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DangerConfig {
    pub dangerous: BTreeSet<Permission>,
}

/// Permissions that expose personal data, let a library watch the user,
/// spend money or touch system state.
pub const DEFAULT_DANGEROUS: [&str; 23] = [
    "GET_TASKS",
    "READ_SOCIAL_STREAM",
    "WRITE_SOCIAL_STREAM",
    "READ_CONTACTS",
    "WRITE_CONTACTS",
    "READ_SYNC_SETTINGS",
    "GET_ACCOUNTS",
    "CHANGE_WIFI_STATE",
    "CAMERA",
    "RECORD_AUDIO",
    "READ_HISTORY_BOOKMARKS",
    "KILL_BACKGROUND_PROCESSES",
    "SEND_SMS",
    "WRITE_HISTORY_BOOKMARKS",
    "WRITE_EXTERNAL_STORAGE",
    "MANAGE_ACCOUNTS",
    "WRITE_SYNC_SETTINGS",
    "AUTHENTICATE_ACCOUNTS",
    "RESTART_PACKAGES",
    "BLUETOOTH",
    "BLUETOOTH_ADMIN",
    "BROADCAST_STICKY",
    "MODIFY_AUDIO_SETTINGS",
];

impl Default for DangerConfig {
    fn default() -> Self {
        DangerConfig {
            dangerous: DEFAULT_DANGEROUS
                .iter()
                .map(|p| Permission::new(p).unwrap())
                .collect(),
        }
    }
}

impl DangerConfig {
    pub fn new<I, S>(names: I) -> Result<Self, PermissionError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let dangerous = names
            .into_iter()
            .map(|n| Permission::new(n.as_ref()))
            .collect::<Result<_, _>>()?;
        Ok(DangerConfig { dangerous })
    }

    pub fn contains(&self, p: &Permission) -> bool {
        self.dangerous.contains(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DangerClassification {
    pub dangerous_subset: BTreeSet<Permission>,
    pub is_dangerous: bool,
}

pub fn classify_dangerous(caps: &CapabilitySet, cfg: &DangerConfig) -> DangerClassification {
    let dangerous_subset: BTreeSet<Permission> = caps.intersection(&cfg.dangerous).cloned().collect();
    DangerClassification {
        is_dangerous: !dangerous_subset.is_empty(),
        dangerous_subset,
    }
}

/// Disjoint classes of interchangeable permissions, counted once each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct EquivalenceClasses {
    classes: Vec<BTreeSet<Permission>>,
}

impl EquivalenceClasses {
    pub fn new(classes: Vec<BTreeSet<Permission>>) -> Result<Self, PermissionError> {
        let mut seen = BTreeSet::new();
        for p in classes.iter().flatten() {
            if !seen.insert(p) {
                return Err(PermissionError::OverlappingEquivClasses(p.clone()));
            }
        }
        Ok(EquivalenceClasses { classes })
    }

    /// Fine/coarse location as one class, and the social-stream and contacts
    /// family as another.
    pub fn location_and_contacts() -> Self {
        let class = |names: &[&str]| names.iter().map(|n| Permission::new(n).unwrap()).collect();
        EquivalenceClasses::new(vec![
            class(&["ACCESS_FINE_LOCATION", "ACCESS_COARSE_LOCATION"]),
            class(&[
                "READ_SOCIAL_STREAM",
                "WRITE_SOCIAL_STREAM",
                "READ_CONTACTS",
                "WRITE_CONTACTS",
            ]),
        ])
        .unwrap()
    }

    pub fn classes(&self) -> &[BTreeSet<Permission>] {
        &self.classes
    }
}

impl<'de> Deserialize<'de> for EquivalenceClasses {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let classes = Vec::<BTreeSet<Permission>>::deserialize(d)?;
        EquivalenceClasses::new(classes).map_err(serde::de::Error::custom)
    }
}

/// Number of equivalence classes touched plus permissions outside any class.
pub fn permission_count(caps: &CapabilitySet, equiv: &EquivalenceClasses) -> usize {
    let touched = equiv
        .classes
        .iter()
        .filter(|class| !class.is_disjoint(caps))
        .count();
    let unclassified = caps
        .iter()
        .filter(|p| !equiv.classes.iter().any(|c| c.contains(*p)))
        .count();
    touched + unclassified
}
