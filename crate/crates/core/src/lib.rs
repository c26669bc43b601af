//! Mining the permission history of ad libraries embedded in mobile apps.
//!
//! The pipeline runs over a corpus of per-app bundles:
//!
//! 1. [`corpus`] loads app metadata and enumerates disassembled classes.
//! 2. [`disasm`] parses each class and records framework invocations.
//! 3. [`catalog`] attributes classes to known ad libraries by package prefix.
//! 4. [`fingerprint`] hashes each library instance with register names erased,
//!    so copies of one version collapse to one key.
//! 5. [`permissions`] maps invoked APIs to the permissions they can exercise.
//! 6. [`longitudinal`] dates versions by their earliest host app and builds
//!    monthly, install-weighted and market-share tables.
//! 7. [`report`] ties the stages together and writes CSV/JSON outputs.
//!
//! The guide under `book/` walks through each stage; its code samples are
//! compiled and run as doc tests of this crate.

pub mod catalog;
pub mod corpus;
pub mod disasm;
pub mod fingerprint;
pub mod longitudinal;
pub mod permissions;
pub mod report;

pub use catalog::{extract_instances, load_catalog, match_package, Catalog, LibraryInstance};
pub use corpus::{load_corpus, parse_app_meta, parse_install_range, validate_corpus, AppMeta, CorpusIndex};
pub use disasm::{extract_api_invocations, parse_class_file, ApiSignature, ClassUnit};
pub use fingerprint::{canonicalize, fingerprint, group_versions, VersionGroup, VersionKey};
pub use longitudinal::Month;
pub use permissions::{
    capability_set, classify_dangerous, load_permission_map, permission_count, CapabilitySet, DangerConfig,
    EquivalenceClasses, Permission, PermissionMap,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/disassembly.md")]
    mod disassembly {}
    #[doc = include_str!("../../../book/src/catalog.md")]
    mod catalog {}
    #[doc = include_str!("../../../book/src/fingerprints.md")]
    mod fingerprints {}
    #[doc = include_str!("../../../book/src/permissions.md")]
    mod permissions {}
    #[doc = include_str!("../../../book/src/series.md")]
    mod series {}
    #[doc = include_str!("../../../book/src/market.md")]
    mod market {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
