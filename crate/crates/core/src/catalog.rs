//! Ad-library catalog: package prefixes per library, and partitioning an
//! app's classes into per-library instances.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::disasm::ClassUnit;

/// The bundled catalog, one row per published library.
pub const DEFAULT_CATALOG_TSV: &str = include_str!("../catalog/libraries.tsv");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: prefix `{prefix}` already belongs to `{existing}`")]
    DuplicatePrefix {
        line: usize,
        prefix: String,
        existing: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub library_id: String,
    pub display_name: String,
    pub package_prefixes: Vec<String>,
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    library: Option<usize>,
    children: BTreeMap<String, TrieNode>,
}

/// Library catalog with a package-segment trie for prefix lookups.
#[derive(Debug, Default, Clone)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
    root: TrieNode,
}

impl Catalog {
    /// Builds a catalog, rejecting prefixes claimed by two libraries.
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, CatalogError> {
        let mut catalog = Catalog::default();
        for (i, entry) in entries.into_iter().enumerate() {
            catalog.insert(entry, i + 1)?;
        }
        Ok(catalog)
    }

    /// The bundled catalog.
    pub fn bundled() -> Self {
        load_catalog(DEFAULT_CATALOG_TSV).expect("bundled catalog is well formed")
    }

    fn insert(&mut self, entry: CatalogEntry, line: usize) -> Result<(), CatalogError> {
        if self.entries.iter().any(|e| e.library_id == entry.library_id) {
            return Err(CatalogError::MalformedRow {
                line,
                reason: format!("library id `{}` listed twice", entry.library_id),
            });
        }
        let idx = self.entries.len();
        for prefix in &entry.package_prefixes {
            if !is_dotted(prefix) {
                return Err(CatalogError::MalformedRow {
                    line,
                    reason: format!("invalid package prefix {prefix:?}"),
                });
            }
            let mut node = &mut self.root;
            for seg in prefix.split('.') {
                node = node.children.entry(seg.to_string()).or_default();
            }
            match node.library {
                Some(other) if other != idx => {
                    return Err(CatalogError::DuplicatePrefix {
                        line,
                        prefix: prefix.clone(),
                        existing: self.entries[other].library_id.clone(),
                    })
                }
                _ => node.library = Some(idx),
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn entry(&self, library_id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.library_id == library_id)
    }

    pub fn display_name<'a>(&'a self, library_id: &'a str) -> &'a str {
        self.entry(library_id)
            .map(|e| e.display_name.as_str())
            .unwrap_or(library_id)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest catalog prefix of `class_name` on dot boundaries, with the
    /// owning library id.
    pub fn lookup(&self, class_name: &str) -> Option<(&str, String)> {
        let mut node = &self.root;
        let mut best = None;
        let mut depth = 0;
        for seg in class_name.split('.') {
            match node.children.get(seg) {
                Some(next) => {
                    node = next;
                    depth += 1;
                    if let Some(lib) = node.library {
                        best = Some((lib, depth));
                    }
                }
                None => break,
            }
        }
        best.map(|(lib, depth)| {
            let prefix: Vec<&str> = class_name.split('.').take(depth).collect();
            (self.entries[lib].library_id.as_str(), prefix.join("."))
        })
    }
}

fn is_dotted(s: &str) -> bool {
    !s.is_empty()
        && s.split('.').all(|seg| {
            let mut chars = seg.chars();
            matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_' || c == '$')
                && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
        })
}

/// Parses the catalog TSV: `library_id<TAB>display_name<TAB>prefix[,prefix...]`.
/// Blank lines and `#` comments are skipped.
pub fn load_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let mut catalog = Catalog::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        let malformed = |reason: &str| CatalogError::MalformedRow {
            line,
            reason: reason.to_string(),
        };
        let [id, name, prefixes] = cols[..] else {
            return Err(malformed("expected 3 tab-separated columns"));
        };
        let id = id.trim();
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(malformed("library id must be a nonempty slug"));
        }
        let mut package_prefixes: Vec<String> = Vec::new();
        for p in prefixes.split(',').map(str::trim) {
            if !package_prefixes.iter().any(|q| q == p) {
                package_prefixes.push(p.to_string());
            }
        }
        catalog.insert(
            CatalogEntry {
                library_id: id.to_string(),
                display_name: name.trim().to_string(),
                package_prefixes,
            },
            line,
        )?;
    }
    Ok(catalog)
}

/// Longest-prefix match of a dotted class name against the catalog.
pub fn match_package<'a>(class_name: &str, catalog: &'a Catalog) -> Option<&'a str> {
    catalog.lookup(class_name).map(|(id, _)| id)
}

/// The classes of one app attributed to one catalog library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryInstance {
    pub app_id: String,
    pub library_id: String,
    /// Shortest catalog prefix that matched a class of this instance.
    pub matched_prefix: String,
    /// Sorted by class name.
    pub classes: Vec<ClassUnit>,
}

/// Groups an app's classes by matched library. Unmatched classes are dropped.
/// Output is sorted by library id, and classes within an instance by name.
pub fn extract_instances(
    app_id: &str,
    classes: impl IntoIterator<Item = ClassUnit>,
    catalog: &Catalog,
) -> Vec<LibraryInstance> {
    let mut grouped: BTreeMap<String, (String, Vec<ClassUnit>)> = BTreeMap::new();
    for class in classes {
        let Some((lib, prefix)) = catalog.lookup(&class.class_name) else {
            continue;
        };
        let slot = grouped
            .entry(lib.to_string())
            .or_insert_with(|| (prefix.clone(), Vec::new()));
        // a library with several prefixes (or nested ones) reports the shortest
        if prefix.len() < slot.0.len() || (prefix.len() == slot.0.len() && prefix < slot.0) {
            slot.0 = prefix;
        }
        slot.1.push(class);
    }
    grouped
        .into_iter()
        .map(|(library_id, (matched_prefix, mut classes))| {
            classes.sort_by(|a, b| a.class_name.cmp(&b.class_name));
            LibraryInstance {
                app_id: app_id.to_string(),
                library_id,
                matched_prefix,
                classes,
            }
        })
        .collect()
}
