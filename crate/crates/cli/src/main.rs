use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use libtrend::corpus::{load_corpus, validate_corpus, LoadOptions, LoadedCorpus};
use libtrend::fingerprint::{canonicalize, fingerprint, VersionGroup};
use libtrend::longitudinal::{Month, StateMode};
use libtrend::report::{
    analyze, load_snapshot, parse_missing_list, parse_versions_json, purge_report, render_versions_json,
    replay_market_share, scan_corpus, write_atomic, write_outputs, AnalyzeInputs, ReportError, RunConfig,
    MARKET_SHARE_FILE, PURGE_FILE, VERSIONS_FILE,
};

#[derive(Parser)]
#[command(name = "libtrend", version, about = "Permission trends of ad libraries embedded in apps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, attribute and hash library code; writes versions.json.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Also write each version's canonical stream to this directory.
        #[arg(long, value_name = "DIR")]
        emit_canonical: Option<PathBuf>,
    },
    /// Date versions and write series, capability and market-share tables.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Read versions from this file instead of <out>/versions.json.
        #[arg(long, value_name = "FILE")]
        versions: Option<PathBuf>,
        /// Only compute market share from a per-library install table.
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
        /// versions.json of an undated snapshot to compare against the series.
        #[arg(long, value_name = "FILE", requires = "snapshot_month")]
        snapshot: Option<PathBuf>,
        #[arg(long, value_name = "YYYY-MM", requires = "snapshot")]
        snapshot_month: Option<Month>,
    },
    /// Removal rates per library for apps gone from the store.
    Purge {
        #[command(flatten)]
        common: Common,
        /// App ids, one per line. Defaults to apps whose metadata says removed.
        #[arg(long, value_name = "FILE")]
        missing: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        versions: Option<PathBuf>,
    },
    /// Check the corpus for duplicate ids, empty bundles and odd dates.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Upper bound for release dates; defaults to today (UTC).
        #[arg(long, value_name = "YYYY-MM-DD")]
        run_date: Option<NaiveDate>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    catalog: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    perm_map: Option<PathBuf>,
    #[arg(long)]
    state_mode: Option<StateMode>,
    #[arg(long, value_name = "N")]
    min_libraries: Option<usize>,
    #[arg(long)]
    strict: bool,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, ReportError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.corpus {
            cfg.corpus_root = Some(p.clone());
        }
        if let Some(p) = &self.catalog {
            cfg.catalog_path = Some(p.clone());
        }
        if let Some(p) = &self.perm_map {
            cfg.permission_map_path = Some(p.clone());
        }
        if let Some(m) = self.state_mode {
            cfg.state_mode = m;
        }
        if let Some(n) = self.min_libraries {
            cfg.min_libraries = n;
        }
        if let Some(p) = &self.out {
            cfg.output_dir = p.clone();
        }
        cfg.strict |= self.strict;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load(cfg: &RunConfig) -> Result<LoadedCorpus, ReportError> {
    let loaded = load_corpus(cfg.corpus_root()?, LoadOptions { strict: cfg.strict })?;
    for d in &loaded.diagnostics {
        eprintln!("skipped bundle {d}");
    }
    Ok(loaded)
}

fn versions(cfg: &RunConfig, loaded: &LoadedCorpus, explicit: Option<&Path>) -> Result<Vec<VersionGroup>, ReportError> {
    let default = cfg.output_dir.join(VERSIONS_FILE);
    let path = match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => default.exists().then_some(default),
    };
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|source| match source.kind() {
                std::io::ErrorKind::NotFound => ReportError::MissingFile(path.clone()),
                _ => ReportError::Io {
                    path: path.clone(),
                    source,
                },
            })?;
            parse_versions_json(&text, &path)
        }
        None => {
            let scan = scan_corpus(&loaded.index, &cfg.load_catalog()?, cfg.strict)?;
            for d in &scan.diagnostics {
                eprintln!("skipped class {d}");
            }
            Ok(scan.groups)
        }
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<ExitCode, ReportError> {
    match cli.command {
        Command::Scan { common, emit_canonical } => {
            let cfg = common.config()?;
            let loaded = load(&cfg)?;
            let scan = scan_corpus(&loaded.index, &cfg.load_catalog()?, cfg.strict)?;
            for d in &scan.diagnostics {
                eprintln!("skipped class {d}");
            }
            let path = cfg.output_dir.join(VERSIONS_FILE);
            write_atomic(&path, render_versions_json(&scan.groups).as_bytes())?;
            report_written(&[path]);
            if let Some(dir) = emit_canonical {
                let mut done = BTreeSet::new();
                for inst in &scan.instances {
                    let key = fingerprint(inst);
                    if done.insert(key.clone()) {
                        let file = dir.join(format!("{}_{}.canon", key.library_id, key.hash_hex()));
                        write_atomic(&file, &canonicalize(inst))?;
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            common,
            versions: versions_path,
            replay,
            snapshot,
            snapshot_month,
        } => {
            let cfg = common.config()?;
            if let Some(path) = replay {
                let text = std::fs::read_to_string(&path).map_err(|_| ReportError::MissingFile(path.clone()))?;
                let (_, csv) = replay_market_share(&text, &path)?;
                let out = cfg.output_dir.join(MARKET_SHARE_FILE);
                write_atomic(&out, csv.as_bytes())?;
                report_written(&[out]);
                return Ok(ExitCode::SUCCESS);
            }
            let loaded = load(&cfg)?;
            let groups = versions(&cfg, &loaded, versions_path.as_deref())?;
            let catalog = cfg.load_catalog()?;
            let map = cfg.load_permission_map()?;
            let danger = cfg.danger();
            let snap = match &snapshot {
                Some(p) => Some(load_snapshot(p, &map)?),
                None => None,
            };
            let analysis = analyze(&AnalyzeInputs {
                index: &loaded.index,
                groups: &groups,
                catalog: &catalog,
                map: &map,
                danger: &danger,
                equivalence: &cfg.equivalence_classes,
                mode: cfg.state_mode,
                min_libraries: cfg.min_libraries,
                snapshot: snap.as_ref().zip(snapshot_month),
            })?;
            report_written(&write_outputs(&cfg.output_dir, &analysis.files)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Purge {
            common,
            missing,
            versions: versions_path,
        } => {
            let cfg = common.config()?;
            let loaded = load(&cfg)?;
            let missing_ids = match &missing {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).map_err(|_| ReportError::MissingFile(path.clone()))?;
                    parse_missing_list(&text)
                }
                None => loaded
                    .index
                    .apps()
                    .values()
                    .filter(|m| m.removed)
                    .map(|m| m.app_id.clone())
                    .collect(),
            };
            let groups = versions(&cfg, &loaded, versions_path.as_deref())?;
            let (table, csv) = purge_report(&groups, &loaded.index, &missing_ids);
            for id in &table.unknown_missing {
                eprintln!("missing app {id} is not in the corpus; ignored");
            }
            let out = cfg.output_dir.join(PURGE_FILE);
            write_atomic(&out, csv.as_bytes())?;
            report_written(&[out]);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { common, run_date } => {
            let cfg = common.config()?;
            let loaded = load(&cfg)?;
            let today = run_date.unwrap_or_else(|| chrono::Utc::now().date_naive());
            let report = validate_corpus(&loaded.index, today);
            for d in &loaded.diagnostics {
                println!("malformed-bundle\t{}\t{}", d.bundle.display(), d.reason);
            }
            for f in &report.findings {
                println!("{f}");
            }
            let clean = report.is_clean() && loaded.diagnostics.is_empty();
            if clean {
                println!("ok\t{} apps", loaded.index.len());
            }
            Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
