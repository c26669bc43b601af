//! Synthetic corpus with known ground truth.
//!
//! Each library has a handful of versions with a true release date. Apps
//! released later embed a released version, sometimes with methods stripped,
//! and every embedded copy gets its registers renamed. The generator writes
//! `.dsm` text itself rather than going through the crate's printer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use libtrend::Catalog;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(library_id, version index, stripped-method mask)`; mask 0 is the full
/// version.
pub type Label = (String, usize, u32);

pub const PERMISSIONS: [&str; 14] = [
    "INTERNET",
    "ACCESS_NETWORK_STATE",
    "READ_PHONE_STATE",
    "ACCESS_FINE_LOCATION",
    "ACCESS_COARSE_LOCATION",
    "VIBRATE",
    "CAMERA",
    "RECORD_AUDIO",
    "GET_TASKS",
    "READ_CONTACTS",
    "GET_ACCOUNTS",
    "SEND_SMS",
    "WRITE_EXTERNAL_STORAGE",
    "BLUETOOTH",
];

const API_COUNT: usize = 48;
const REMOVABLE: u32 = 4;

pub struct SynthCorpus {
    _dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub map_path: PathBuf,
    pub map_text: String,
    /// Label of every embedded library copy, keyed by `(app, library)`.
    pub labels: BTreeMap<(String, String), Label>,
    pub true_dates: BTreeMap<Label, NaiveDate>,
    /// Framework methods invoked by each label's code.
    pub label_apis: BTreeMap<Label, BTreeSet<String>>,
    /// Each label's code with every register written as `R`.
    pub label_text: BTreeMap<Label, String>,
    pub app_dates: BTreeMap<String, NaiveDate>,
    pub libraries: usize,
}

struct Method {
    name: String,
    /// Opcode and operands; registers are `%N` placeholders.
    body: Vec<(String, Vec<String>)>,
}

struct Class {
    name: String,
    fields: Vec<(String, String)>,
    methods: Vec<Method>,
}

struct Version {
    date: NaiveDate,
    classes: Vec<Class>,
    variants: Vec<u32>,
}

fn api(i: usize) -> String {
    let params = ["", "int", "java.lang.String", "int, long"][i % 4];
    format!("android.synth{}.Service{}.op{}({})", i % 6, i / 3, i, params)
}

fn random_date(rng: &mut ChaCha8Rng, from: NaiveDate, days: i64) -> NaiveDate {
    from + Duration::days(rng.gen_range(0..days))
}

fn random_method(rng: &mut ChaCha8Rng, name: String, salt: usize) -> Method {
    let mut body = Vec::new();
    for k in 0..rng.gen_range(2..7) {
        match rng.gen_range(0..4) {
            0 | 1 => {
                let mut ops = vec![api(rng.gen_range(0..API_COUNT))];
                for _ in 0..rng.gen_range(0..3) {
                    ops.push(format!("%{}", rng.gen_range(0..6)));
                }
                body.push(("invoke".to_string(), ops));
            }
            2 => body.push((
                "const".to_string(),
                vec![format!("%{}", rng.gen_range(0..6)), format!("{}", salt * 100 + k)],
            )),
            _ => body.push((
                "move".to_string(),
                vec![format!("%{}", rng.gen_range(0..6)), format!("%{}", rng.gen_range(0..6))],
            )),
        }
    }
    body.push(("return-void".to_string(), vec![]));
    Method { name, body }
}

fn render_class(class: &Class, strip: &BTreeSet<&str>, regs: &[String]) -> String {
    let mut out = format!(".class {}\n.super java.lang.Object\n", class.name);
    for (name, desc) in &class.fields {
        let _ = writeln!(out, ".field private {name} {desc}");
    }
    for m in class.methods.iter().filter(|m| !strip.contains(m.name.as_str())) {
        let _ = writeln!(out, ".method public {} ()V", m.name);
        for (op, operands) in &m.body {
            let ops: Vec<String> = operands
                .iter()
                .map(|o| match o.strip_prefix('%') {
                    Some(n) => regs[n.parse::<usize>().unwrap()].clone(),
                    None => o.clone(),
                })
                .collect();
            let _ = writeln!(out, "    {} {}", op, ops.join(" "));
        }
        out.push_str(".end method\n");
    }
    out.push_str(".end class\n");
    out
}

fn stripped<'a>(version: &'a Version, mask: u32) -> BTreeSet<&'a str> {
    (0..REMOVABLE)
        .filter(|b| mask & (1 << b) != 0)
        .map(|b| removable_name(version, b))
        .collect()
}

// The removable methods are the last one of each class, cycling.
fn removable_name(version: &Version, bit: u32) -> &str {
    let class = &version.classes[bit as usize % version.classes.len()];
    let idx = class.methods.len() - 1 - (bit as usize / version.classes.len()).min(class.methods.len() - 1);
    &class.methods[idx].name
}

fn label_apis(version: &Version, mask: u32) -> BTreeSet<String> {
    let strip = stripped(version, mask);
    version
        .classes
        .iter()
        .flat_map(|c| c.methods.iter())
        .filter(|m| !strip.contains(m.name.as_str()))
        .flat_map(|m| m.body.iter())
        .filter(|(op, _)| op == "invoke")
        .map(|(_, ops)| ops[0].replace(' ', ""))
        .collect()
}

fn register_names(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut pool: Vec<String> = (0..16).map(|i| format!("v{i}")).chain((0..4).map(|i| format!("p{i}"))).collect();
    pool.shuffle(rng);
    pool.truncate(6);
    pool
}

fn permission_map(rng: &mut ChaCha8Rng) -> String {
    let mut text = String::from("# synthetic permission map\n");
    for i in 0..API_COUNT {
        // every sixth API stays unmapped
        if i % 6 == 5 {
            continue;
        }
        let sig = api(i);
        let sig = if i % 7 == 3 {
            format!("{}(...)", &sig[..sig.find('(').unwrap()])
        } else {
            sig
        };
        let groups: Vec<String> = (0..rng.gen_range(1..3))
            .map(|_| {
                let k = rng.gen_range(1..3);
                let mut alts: Vec<&str> = PERMISSIONS.choose_multiple(rng, k).copied().collect();
                alts.sort();
                alts.join("|")
            })
            .collect();
        let _ = writeln!(text, "{sig}\t{}", groups.join(";"));
    }
    text
}

fn write_file(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

pub fn generate(seed: u64, apps: usize, libraries: usize) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let catalog = Catalog::bundled();
    let epoch = NaiveDate::from_ymd_opt(2009, 6, 1).unwrap();

    let mut libs: Vec<(String, Vec<Version>)> = Vec::new();
    for entry in catalog.entries().iter().take(libraries) {
        let prefix = &entry.package_prefixes[0];
        let mut dates: Vec<NaiveDate> = (0..rng.gen_range(3..7)).map(|_| random_date(&mut rng, epoch, 1400)).collect();
        dates.sort();
        let mut versions = Vec::new();
        for (v, date) in dates.into_iter().enumerate() {
            let classes: Vec<Class> = (0..rng.gen_range(1..4))
                .map(|c| Class {
                    name: format!("{prefix}.synth.C{c}"),
                    fields: (0..rng.gen_range(0..3)).map(|f| (format!("f{f}"), "I".to_string())).collect(),
                    methods: (0..rng.gen_range(2..5))
                        .map(|m| random_method(&mut rng, format!("m{c}_{m}"), v * 10 + c))
                        .collect(),
                })
                .collect();
            for class in &classes {
                assert_eq!(catalog.lookup(&class.name).map(|(id, _)| id), Some(entry.library_id.as_str()));
            }
            let mut version = Version {
                date,
                classes,
                variants: vec![0],
            };
            // stripped variants must differ from each other in content
            let mut seen: BTreeSet<BTreeSet<String>> = BTreeSet::from([BTreeSet::new()]);
            for _ in 0..2 {
                let mask = rng.gen_range(1..(1u32 << REMOVABLE));
                let strip: BTreeSet<String> = stripped(&version, mask).into_iter().map(String::from).collect();
                if seen.insert(strip) {
                    version.variants.push(mask);
                }
            }
            versions.push(version);
        }
        libs.push((entry.library_id.clone(), versions));
    }

    let map_text = permission_map(&mut rng);
    let map_path = dir.path().join("permission_map.tsv");
    fs::write(&map_path, &map_text).unwrap();

    let mut out = SynthCorpus {
        _dir: dir,
        corpus: corpus.clone(),
        map_path,
        map_text,
        labels: BTreeMap::new(),
        true_dates: BTreeMap::new(),
        label_apis: BTreeMap::new(),
        label_text: BTreeMap::new(),
        app_dates: BTreeMap::new(),
        libraries,
    };
    let floors = [100u64, 1_000, 10_000, 100_000, 1_000_000];
    for i in 0..apps {
        let app_id = format!("com.synthapps.app{i:05}");
        let date = random_date(&mut rng, epoch + Duration::days(60), 1500);
        let bundle = corpus.join(format!("bundle{i:05}"));
        write_file(
            &bundle.join("meta.json"),
            &format!(
                r#"{{"app_id":"{app_id}","release_date":"{date}","installs_floor":{}}}"#,
                floors[rng.gen_range(0..floors.len())]
            ),
        );
        let own = Class {
            name: format!("com.synthapps.app{i:05}.Main"),
            fields: vec![],
            methods: vec![random_method(&mut rng, "onCreate".into(), i)],
        };
        write_file(
            &bundle.join("classes/Main.dsm"),
            &render_class(&own, &BTreeSet::new(), &register_names(&mut rng)),
        );

        let mut picks: Vec<usize> = (0..libs.len()).collect();
        picks.shuffle(&mut rng);
        picks.truncate(rng.gen_range(1..5));
        for l in picks {
            let (lib_id, versions) = &libs[l];
            let released: Vec<usize> = (0..versions.len()).filter(|&v| versions[v].date <= date).collect();
            let Some(&v) = released.choose(&mut rng) else {
                continue;
            };
            let version = &versions[v];
            let mask = if rng.gen_bool(0.8) {
                0
            } else {
                *version.variants.choose(&mut rng).unwrap()
            };
            let strip = stripped(version, mask);
            let regs = register_names(&mut rng);
            for (c, class) in version.classes.iter().enumerate() {
                write_file(
                    &bundle.join(format!("classes/{lib_id}/C{c}.dsm")),
                    &render_class(class, &strip, &regs),
                );
            }
            let label: Label = (lib_id.clone(), v, mask);
            out.true_dates.insert(label.clone(), version.date);
            out.label_apis
                .entry(label.clone())
                .or_insert_with(|| label_apis(version, mask));
            out.label_text.entry(label.clone()).or_insert_with(|| {
                let anon = vec!["R".to_string(); 6];
                version.classes.iter().map(|c| render_class(c, &strip, &anon)).collect()
            });
            out.labels.insert((app_id.clone(), lib_id.clone()), label);
        }
        out.app_dates.insert(app_id, date);
    }
    out
}

/// Capability set of a set of API signatures by scanning the map text row
/// by row, independent of the crate's map loader.
pub fn oracle_capabilities(map_text: &str, apis: &BTreeSet<String>) -> BTreeSet<String> {
    let mut caps = BTreeSet::new();
    for api in apis {
        let api_stem = &api[..api.find('(').unwrap()];
        for row in map_text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
            let (sig, groups) = row.split_once('\t').unwrap();
            let sig = sig.replace(' ', "");
            let hit = sig == *api || sig.strip_suffix("(...)") == Some(api_stem);
            if hit {
                caps.extend(groups.split(['|', ';']).map(String::from));
            }
        }
    }
    caps
}
