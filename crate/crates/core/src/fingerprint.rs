//! Register-normalized content hashing of library instances.
//!
//! The canonical stream is one record per class, in class-name order:
//!
//! ```text
//! <class_name> \n
//! <super_name or empty> \n
//! <field name> <descriptor> \n        (declaration order)
//! <method name> <descriptor> \n       (declaration order)
//! \t<opcode> <operand> ... \n          (each instruction of that method)
//! \x1e
//! ```
//!
//! Every register operand (`v\d+`, `p\d+`) is written as `R`. Flags are not
//! part of the stream. Field and method lines cannot be confused because the
//! parser only admits method descriptors starting with `(`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::LibraryInstance;
use crate::disasm::{extract_api_invocations, ApiSignature, ClassUnit, Operand};

pub const REGISTER_TOKEN: &str = "R";
pub const RECORD_SEPARATOR: u8 = 0x1e;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("members of {key} have different canonical streams ({first_app} vs {other_app})")]
    HashCollisionSuspected {
        key: VersionKey,
        first_app: String,
        other_app: String,
    },
    #[error("app {app_id} contributes two instances of {library_id}")]
    DuplicateInstance { app_id: String, library_id: String },
    #[error("invalid version key {0:?}")]
    InvalidKey(String),
}

/// Identity of one observed library version.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionKey {
    pub library_id: String,
    pub content_hash: [u8; 32],
}

impl VersionKey {
    pub fn hash_hex(&self) -> String {
        hex::encode(self.content_hash)
    }
}

impl fmt::Display for VersionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.library_id, self.hash_hex())
    }
}

impl FromStr for VersionKey {
    type Err = FingerprintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FingerprintError::InvalidKey(s.to_string());
        let (lib, hash) = s.rsplit_once(':').ok_or_else(bad)?;
        if lib.is_empty() || hash.len() != 64 || hash.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(bad());
        }
        let mut content_hash = [0u8; 32];
        hex::decode_to_slice(hash, &mut content_hash).map_err(|_| bad())?;
        Ok(VersionKey {
            library_id: lib.to_string(),
            content_hash,
        })
    }
}

impl Serialize for VersionKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn push_class(out: &mut Vec<u8>, class: &ClassUnit) {
    out.extend_from_slice(class.class_name.as_bytes());
    out.push(b'\n');
    if let Some(sup) = &class.super_name {
        out.extend_from_slice(sup.as_bytes());
    }
    out.push(b'\n');
    for field in &class.fields {
        out.extend_from_slice(field.name.as_bytes());
        out.push(b' ');
        out.extend_from_slice(field.descriptor.as_bytes());
        out.push(b'\n');
    }
    for method in &class.methods {
        out.extend_from_slice(method.name.as_bytes());
        out.push(b' ');
        out.extend_from_slice(method.descriptor.as_bytes());
        out.push(b'\n');
        for instr in &method.body {
            out.push(b'\t');
            out.extend_from_slice(instr.opcode.as_bytes());
            for op in &instr.operands {
                out.push(b' ');
                let text = match op {
                    Operand::Register(_) => REGISTER_TOKEN,
                    other => other.as_str(),
                };
                out.extend_from_slice(text.as_bytes());
            }
            out.push(b'\n');
        }
    }
    out.push(RECORD_SEPARATOR);
}

/// Canonical byte stream of an instance with register names erased.
pub fn canonicalize(instance: &LibraryInstance) -> Vec<u8> {
    let mut classes: Vec<&ClassUnit> = instance.classes.iter().collect();
    classes.sort_by(|a, b| a.class_name.cmp(&b.class_name));
    let mut out = Vec::new();
    for class in classes {
        push_class(&mut out, class);
    }
    out
}

fn key_for(library_id: &str, stream: &[u8]) -> VersionKey {
    VersionKey {
        library_id: library_id.to_string(),
        content_hash: Sha256::digest(stream).into(),
    }
}

/// SHA-256 of the canonical stream, tagged with the library id.
pub fn fingerprint(instance: &LibraryInstance) -> VersionKey {
    key_for(&instance.library_id, &canonicalize(instance))
}

/// All instances sharing one version key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionGroup {
    pub key: VersionKey,
    pub member_apps: BTreeSet<String>,
    pub api_calls: BTreeSet<ApiSignature>,
}

/// Groups instances by version key, sorted by key.
///
/// Every member's canonical stream is compared against the first member's,
/// so a digest collision surfaces as an error rather than a silent merge.
pub fn group_versions(instances: &[LibraryInstance]) -> Result<Vec<VersionGroup>, FingerprintError> {
    group_with(instances, key_for)
}

fn group_with(
    instances: &[LibraryInstance],
    key_fn: impl Fn(&str, &[u8]) -> VersionKey + Sync,
) -> Result<Vec<VersionGroup>, FingerprintError> {
    let hashed: Vec<(VersionKey, Vec<u8>)> = instances
        .par_iter()
        .map(|inst| {
            let stream = canonicalize(inst);
            (key_fn(&inst.library_id, &stream), stream)
        })
        .collect();

    struct Slot<'a> {
        stream: Vec<u8>,
        first: &'a LibraryInstance,
        members: BTreeSet<String>,
    }

    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut slots: BTreeMap<VersionKey, Slot<'_>> = BTreeMap::new();
    for (inst, (key, stream)) in instances.iter().zip(hashed) {
        if !seen.insert((&inst.app_id, &inst.library_id)) {
            return Err(FingerprintError::DuplicateInstance {
                app_id: inst.app_id.clone(),
                library_id: inst.library_id.clone(),
            });
        }
        match slots.get_mut(&key) {
            Some(slot) => {
                if slot.stream != stream {
                    // report the pair independently of input order
                    let (a, b) = if slot.first.app_id <= inst.app_id {
                        (&slot.first.app_id, &inst.app_id)
                    } else {
                        (&inst.app_id, &slot.first.app_id)
                    };
                    return Err(FingerprintError::HashCollisionSuspected {
                        key,
                        first_app: a.clone(),
                        other_app: b.clone(),
                    });
                }
                slot.members.insert(inst.app_id.clone());
            }
            None => {
                slots.insert(
                    key,
                    Slot {
                        stream,
                        first: inst,
                        members: BTreeSet::from([inst.app_id.clone()]),
                    },
                );
            }
        }
    }

    Ok(slots
        .into_iter()
        .map(|(key, slot)| VersionGroup {
            key,
            member_apps: slot.members,
            api_calls: slot.first.classes.iter().flat_map(extract_api_invocations).collect(),
        })
        .collect())
}
