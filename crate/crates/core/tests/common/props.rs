//! Strategies and property bodies shared by the acceptance run and the
//! property test target.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use libtrend::catalog::Catalog;
use libtrend::corpus::{AppMeta, CorpusIndex};
use libtrend::disasm::{parse_class_file, ApiSignature, ClassUnit};
use libtrend::longitudinal::{
    permission_series, shares_from_totals, top_share, weighted_series, Metric, Month, MonthlyLibraryState, StateMode,
};
use libtrend::permissions::{capability_set, load_permission_map, DangerConfig, EquivalenceClasses, Permission, PermissionMap};
use libtrend::report::{analyze, render_versions_json, scan_apps, AnalyzeInputs};
use libtrend::{extract_instances, fingerprint};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const APIS: [&str; 10] = [
    "android.telephony.TelephonyManager.getDeviceId()",
    "android.location.LocationManager.getLastKnownLocation(java.lang.String)",
    "android.location.LocationManager.requestLocationUpdates(java.lang.String,long)",
    "android.net.ConnectivityManager.getActiveNetworkInfo()",
    "android.os.Vibrator.vibrate(long)",
    "android.hardware.Camera.open()",
    "android.accounts.AccountManager.getAccounts()",
    "java.net.URL.openConnection()",
    "java.lang.String.valueOf(int)",
    "android.util.Log.d(java.lang.String,java.lang.String)",
];

pub const MAP_TEXT: &str = "\
android.telephony.TelephonyManager.getDeviceId()\tREAD_PHONE_STATE
android.location.LocationManager.getLastKnownLocation(...)\tACCESS_FINE_LOCATION|ACCESS_COARSE_LOCATION
android.location.LocationManager.requestLocationUpdates(java.lang.String,long)\tACCESS_FINE_LOCATION;INTERNET
android.net.ConnectivityManager.getActiveNetworkInfo()\tACCESS_NETWORK_STATE
android.os.Vibrator.vibrate(long)\tVIBRATE
android.hardware.Camera.open()\tCAMERA
android.accounts.AccountManager.getAccounts()\tGET_ACCOUNTS
java.net.URL.openConnection()\tINTERNET
";

pub const PERMS: [&str; 8] = [
    "INTERNET",
    "READ_PHONE_STATE",
    "ACCESS_FINE_LOCATION",
    "VIBRATE",
    "CAMERA",
    "GET_ACCOUNTS",
    "SEND_SMS",
    "BLUETOOTH",
];

pub fn map() -> PermissionMap {
    load_permission_map(MAP_TEXT).unwrap()
}

/// Instruction with logical register numbers.
#[derive(Debug, Clone)]
pub enum Ins {
    Move(u8, u8),
    Const(u8, u16),
    Invoke(usize, Vec<u8>),
    Return,
}

#[derive(Debug, Clone)]
pub struct ClassModel {
    pub name: String,
    pub methods: Vec<Vec<Ins>>,
}

fn ins() -> impl Strategy<Value = Ins> {
    prop_oneof![
        (0u8..8, 0u8..8).prop_map(|(a, b)| Ins::Move(a, b)),
        (0u8..8, any::<u16>()).prop_map(|(a, k)| Ins::Const(a, k)),
        (0..APIS.len(), prop::collection::vec(0u8..8, 0..3)).prop_map(|(i, r)| Ins::Invoke(i, r)),
        Just(Ins::Return),
    ]
}

pub fn class_model(prefix: &'static str) -> impl Strategy<Value = ClassModel> {
    (
        "[A-Z][a-z]{0,5}",
        prop::collection::vec(prop::collection::vec(ins(), 0..6), 0..4),
    )
        .prop_map(move |(n, methods)| ClassModel {
            name: format!("{prefix}.{n}"),
            methods,
        })
}

/// Eight distinct register names in random order.
pub fn register_names() -> impl Strategy<Value = Vec<String>> {
    let pool: Vec<String> = (0..24).map(|i| format!("v{i}")).chain((0..6).map(|i| format!("p{i}"))).collect();
    Just(pool).prop_shuffle().prop_map(|mut p| {
        p.truncate(8);
        p
    })
}

pub fn render(model: &ClassModel, regs: &[String]) -> String {
    let r = |i: &u8| regs[*i as usize].as_str();
    let mut out = format!(".class {}\n", model.name);
    for (m, body) in model.methods.iter().enumerate() {
        out.push_str(&format!(".method public m{m} ()V\n"));
        for i in body {
            let line = match i {
                Ins::Move(a, b) => format!("move {} {}", r(a), r(b)),
                Ins::Const(a, k) => format!("const {} {k}", r(a)),
                Ins::Invoke(api, rs) => {
                    let ops: Vec<&str> = rs.iter().map(r).collect();
                    format!("invoke {} {}", APIS[*api], ops.join(" "))
                }
                Ins::Return => "return-void".to_string(),
            };
            out.push_str("    ");
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out.push_str(".end method\n");
    }
    out.push_str(".end class\n");
    out
}

pub fn prop_renaming_invariance(
    (classes, a, b): (Vec<ClassModel>, Vec<String>, Vec<String>),
) -> Result<(), TestCaseError> {
    let catalog = Catalog::bundled();
    let parse = |regs: &[String]| -> Vec<ClassUnit> {
        classes
            .iter()
            .map(|c| parse_class_file(&render(c, regs)).unwrap())
            .collect()
    };
    let ia = extract_instances("x", parse(&a), &catalog);
    let ib = extract_instances("x", parse(&b), &catalog);
    prop_assert_eq!(ia.len(), ib.len());
    for (x, y) in ia.iter().zip(&ib) {
        prop_assert_eq!(fingerprint(x), fingerprint(y));
    }
    Ok(())
}

pub fn renaming_input() -> impl Strategy<Value = (Vec<ClassModel>, Vec<String>, Vec<String>)> {
    (
        prop::collection::vec(class_model("com.flurry.android"), 1..4),
        register_names(),
        register_names(),
    )
}

/// A small app: id, date offset in days, install floor, and for each of
/// three libraries either nothing or a version index.
#[derive(Debug, Clone)]
pub struct AppModel {
    pub id: String,
    pub day: i64,
    pub floor: u64,
    pub versions: [Option<usize>; 3],
    pub regs: Vec<String>,
}

const PROP_LIBS: [&str; 3] = ["com.flurry.sdk", "com.mopub.ads", "com.inmobi.core"];

pub fn corpus_input() -> impl Strategy<Value = (Vec<[ClassModel; 3]>, Vec<AppModel>, Vec<usize>)> {
    let versions = prop::collection::vec(
        (class_model(PROP_LIBS[0]), class_model(PROP_LIBS[1]), class_model(PROP_LIBS[2])).prop_map(|(a, b, c)| [a, b, c]),
        1..4,
    );
    versions.prop_flat_map(|versions| {
        let n = versions.len();
        let app = (0i64..900, 1u64..1_000_000, [prop::option::of(0..n), prop::option::of(0..n), prop::option::of(0..n)], register_names());
        let apps = prop::collection::vec(app, 1..10).prop_map(|apps| {
            apps.into_iter()
                .enumerate()
                .map(|(i, (day, floor, versions, regs))| AppModel {
                    id: format!("app{i}"),
                    day,
                    floor,
                    versions,
                    regs,
                })
                .collect::<Vec<_>>()
        });
        (Just(versions), apps).prop_flat_map(|(versions, apps)| {
            let order: Vec<usize> = (0..apps.len()).collect();
            (Just(versions), Just(apps), Just(order).prop_shuffle())
        })
    })
}

fn outputs(versions: &[[ClassModel; 3]], apps: &[&AppModel]) -> (String, BTreeMap<String, String>) {
    let base = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let catalog = Catalog::bundled();
    let map = map();
    let index = apps
        .iter()
        .fold(CorpusIndex::builder(), |b, a| {
            b.add(AppMeta::new(&a.id, base + chrono::Duration::days(a.day), a.floor), &a.id, vec![])
        })
        .build();
    let parsed: Vec<(&str, Vec<ClassUnit>)> = apps
        .iter()
        .map(|a| {
            let classes = (0..3)
                .filter_map(|l| a.versions[l].map(|v| parse_class_file(&render(&versions[v][l], &a.regs)).unwrap()))
                .collect();
            (a.id.as_str(), classes)
        })
        .collect();
    let (_, groups) = scan_apps(parsed, &catalog).unwrap();
    let danger = DangerConfig::default();
    let equivalence = EquivalenceClasses::default();
    let analysis = analyze(&AnalyzeInputs {
        index: &index,
        groups: &groups,
        catalog: &catalog,
        map: &map,
        danger: &danger,
        equivalence: &equivalence,
        mode: StateMode::CarryForward,
        min_libraries: 1,
        snapshot: None,
    })
    .unwrap();
    (render_versions_json(&groups), analysis.files)
}

pub fn prop_order_determinism(
    (versions, apps, order): (Vec<[ClassModel; 3]>, Vec<AppModel>, Vec<usize>),
) -> Result<(), TestCaseError> {
    let forward: Vec<&AppModel> = apps.iter().collect();
    let shuffled: Vec<&AppModel> = order.iter().map(|&i| &apps[i]).collect();
    let (va, fa) = outputs(&versions, &forward);
    let (vb, fb) = outputs(&versions, &shuffled);
    prop_assert_eq!(va, vb);
    prop_assert_eq!(fa, fb);
    Ok(())
}

fn sigs(idx: &BTreeSet<usize>) -> Vec<ApiSignature> {
    idx.iter().map(|&i| ApiSignature::parse(APIS[i]).unwrap()).collect()
}

pub fn api_subsets() -> impl Strategy<Value = (BTreeSet<usize>, BTreeSet<usize>)> {
    let set = prop::collection::btree_set(0..APIS.len(), 0..APIS.len());
    (set.clone(), set)
}

pub fn prop_capability_algebra((a, b): (BTreeSet<usize>, BTreeSet<usize>)) -> Result<(), TestCaseError> {
    let map = map();
    let ca = capability_set(&sigs(&a), &map);
    let cb = capability_set(&sigs(&b), &map);
    let union: BTreeSet<usize> = a.union(&b).copied().collect();
    let cu = capability_set(&sigs(&union), &map);
    prop_assert!(ca.is_subset(&cu));
    prop_assert!(cb.is_subset(&cu));
    let joined: BTreeSet<Permission> = ca.union(&cb).cloned().collect();
    prop_assert_eq!(cu, joined);
    Ok(())
}

/// Random monthly states: `(library, month offset, permission mask)`.
pub fn states_input() -> impl Strategy<Value = Vec<MonthlyLibraryState>> {
    prop::collection::vec((0usize..14, 0u32..8, 0u32..(1 << PERMS.len())), 0..80).prop_map(|raw| {
        let mut seen = BTreeSet::new();
        let mut out: Vec<MonthlyLibraryState> = raw
            .into_iter()
            .filter(|(l, m, _)| seen.insert((*l, *m)))
            .map(|(l, m, mask)| MonthlyLibraryState {
                library_id: format!("lib{l:02}"),
                month: Month::new(2011, 1 + m).unwrap(),
                permissions: (0..PERMS.len())
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| Permission::new(PERMS[b]).unwrap())
                    .collect(),
            })
            .collect();
        out.sort_by(|a, b| (a.month, &a.library_id).cmp(&(b.month, &b.library_id)));
        out
    })
}

fn metrics() -> Vec<Metric> {
    PERMS
        .iter()
        .map(|p| Metric::Permission(Permission::new(p).unwrap()))
        .chain([Metric::Dangerous(DangerConfig::default())])
        .collect()
}

pub fn prop_uniform_weights((states, weight, min): (Vec<MonthlyLibraryState>, u64, usize)) -> Result<(), TestCaseError> {
    let libs: BTreeSet<&str> = states.iter().map(|s| s.library_id.as_str()).collect();
    let shares = shares_from_totals(libs.iter().map(|l| (l.to_string(), 1, weight)).collect());
    for metric in metrics() {
        let plain = permission_series(&states, &metric, min).fractions;
        let weighted = weighted_series(&states, &shares, &metric, min).points;
        prop_assert_eq!(plain.len(), weighted.len());
        for (p, w) in plain.iter().zip(&weighted) {
            prop_assert_eq!(p.month, w.month);
            prop_assert_eq!(p.denominator, w.denominator);
            prop_assert_eq!(p.fraction, w.fraction);
        }
    }
    Ok(())
}

pub fn prop_fraction_threshold((states, min): (Vec<MonthlyLibraryState>, usize)) -> Result<(), TestCaseError> {
    let mut per_month: BTreeMap<Month, u64> = BTreeMap::new();
    for s in &states {
        *per_month.entry(s.month).or_default() += 1;
    }
    for metric in metrics() {
        let series = permission_series(&states, &metric, min);
        prop_assert_eq!(series.counts.len(), per_month.len());
        let emitted: BTreeSet<Month> = series.fractions.iter().map(|f| f.month).collect();
        let eligible: BTreeSet<Month> = per_month.iter().filter(|(_, n)| **n >= min as u64).map(|(m, _)| *m).collect();
        prop_assert_eq!(emitted, eligible);
        prop_assert!(series.fractions.iter().all(|f| f.denominator >= min as u64));
    }
    Ok(())
}

pub fn totals_input() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(prop_oneof![Just(0u64), 0u64..1_000, 0u64..30_000_000_000], 1..70)
}

pub fn prop_top_share(totals: Vec<u64>) -> Result<(), TestCaseError> {
    let shares = shares_from_totals(
        totals
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("l{i}"), 1, *t))
            .collect(),
    );
    let mut prev = 0.0;
    for n in 0..=totals.len() + 2 {
        let s = top_share(&shares, n);
        prop_assert!(s >= prev, "top_share({}) = {} < {}", n, s, prev);
        prop_assert!(s <= 1.0);
        prev = s;
    }
    if totals.iter().any(|t| *t > 0) {
        prop_assert_eq!(top_share(&shares, totals.len()), 1.0);
    }
    Ok(())
}
