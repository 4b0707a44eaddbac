//! Shared generators and independent oracles for the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use wrangle::anomaly::{AnomalyIndex, AnomalyRecord, DetectorConfig};
use wrangle::groups::{GroupKey, GroupSpec};
use wrangle::session::Extensions;
use wrangle::{CellRef, CellValue, ColumnKind, CsvOptions, RepairAction, Session, Table};

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/income.csv")
}

pub fn fixture_bytes() -> Vec<u8> {
    std::fs::read(fixture_path()).expect("fixture is bundled")
}

pub fn fixture_session() -> Session {
    Session::from_csv(
        &fixture_bytes(),
        "income.csv",
        CsvOptions::default(),
        DetectorConfig::default(),
        None,
        Extensions::default(),
    )
    .expect("fixture loads")
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

const KEYS: [&str; 9] = [
    "a",
    "b",
    "c",
    "USA",
    "United States of America",
    "Bhutan",
    "Bhuthan",
    "Lesotho",
    "",
];
const TEXTS: [&str; 8] = ["12k", "$1,200", "abc", "1.5M", "€30", "n/a", "-7K", "x,y"];

/// Random CSV with planted missing cells, text cells, outliers and rare keys.
pub fn random_csv(rng: &mut StdRng) -> String {
    let rows = rng.gen_range(1..=200);
    let n_cat = rng.gen_range(1..=3);
    let n_num = rng.gen_range(1..=3);
    let mut out = String::new();
    let names: Vec<String> = (0..n_cat)
        .map(|i| format!("cat{i}"))
        .chain((0..n_num).map(|i| format!("num{i}")))
        .collect();
    out.push_str(&names.join(","));
    out.push('\n');
    // per-column key pools: a few common keys plus rare ones
    let pools: Vec<Vec<&str>> = (0..n_cat)
        .map(|_| {
            let mut k = KEYS.to_vec();
            k.shuffle(rng);
            k.truncate(rng.gen_range(1..=KEYS.len()));
            k
        })
        .collect();
    for _ in 0..rows {
        let mut fields = Vec::new();
        for pool in &pools {
            // squared index skews toward the head so tail keys stay small
            let x: f64 = rng.gen();
            let idx = ((x * x) * pool.len() as f64) as usize;
            fields.push(quote(pool[idx.min(pool.len() - 1)]));
        }
        for _ in 0..n_num {
            let p: f64 = rng.gen();
            let f = if p < 0.05 {
                ["", "NA"][rng.gen_range(0..2)].to_string()
            } else if p < 0.09 {
                quote(TEXTS[rng.gen_range(0..TEXTS.len())])
            } else if p < 0.11 {
                format!("{}", rng.gen_range(5_000..50_000))
            } else if p < 0.5 {
                format!("{}", rng.gen_range(0..200))
            } else {
                format!("{:.2}", rng.gen_range(-50.0..150.0))
            };
            fields.push(f);
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// One detector finding in a comparable form: `(type, group_by, target, key, cells)`.
pub type Finding = (String, String, String, Option<String>, Vec<(usize, String)>);

pub fn findings(records: &[AnomalyRecord]) -> BTreeSet<Finding> {
    records
        .iter()
        .map(|r| {
            (
                r.kind.to_string(),
                r.group.group_by.clone(),
                r.group.target.clone(),
                match &r.group.key {
                    GroupKey::Value(v) => Some(v.clone()),
                    GroupKey::Missing => None,
                },
                r.cells.iter().map(|c| (c.row, c.column.clone())).collect(),
            )
        })
        .collect()
}

/// Brute-force scan of the four built-in detectors.
pub fn detector_oracle(table: &Table, specs: &[GroupSpec], config: &DetectorConfig) -> BTreeSet<Finding> {
    let mut out = BTreeSet::new();
    for spec in specs {
        let by = &table.column(&spec.group_by).unwrap().cells;
        let target = &table.column(&spec.target).unwrap().cells;
        let mut groups: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
        for (r, c) in by.iter().enumerate() {
            let key = match c {
                CellValue::Missing => None,
                CellValue::Text(s) => Some(s.clone()),
                CellValue::Number(v) => Some(wrangle::table::format_number(*v)),
            };
            groups.entry(key).or_default().push(r);
        }
        groups.retain(|_, rows| rows.len() >= spec.min_support);

        let nums: Vec<f64> = target.iter().filter_map(|c| c.as_number()).collect();
        let (mean, std) = if nums.is_empty() {
            (0.0, 0.0)
        } else {
            let n = nums.len() as f64;
            let mut s = 0.0;
            for v in &nums {
                s += v;
            }
            let m = s / n;
            let mut ss = 0.0;
            for v in &nums {
                ss += (v - m) * (v - m);
            }
            (m, (ss / n).sqrt())
        };

        for (key, rows) in &groups {
            let f = |t: &str, cells: Vec<(usize, String)>| {
                (t.to_string(), spec.group_by.clone(), spec.target.clone(), key.clone(), cells)
            };
            for &r in rows {
                let cell = vec![(r, spec.target.clone())];
                match &target[r] {
                    CellValue::Missing => {
                        out.insert(f("missing_value", cell));
                    }
                    CellValue::Text(_) => {
                        out.insert(f("type_mismatch", cell));
                    }
                    CellValue::Number(v) => {
                        if std > 0.0 && (v - mean).abs() > config.outlier_sigma * std {
                            out.insert(f("outlier", cell));
                        }
                    }
                }
            }
            if rows.len() < config.incomplete_threshold {
                out.insert(f("incomplete_group", Vec::new()));
            }
        }
    }
    out
}

/// by_type and by_group are transposes of each other and the counts add up
/// to the record list.
pub fn check_index(records: &[AnomalyRecord], index: &AnomalyIndex) -> Result<(), String> {
    let mut expected: BTreeMap<_, BTreeMap<_, usize>> = BTreeMap::new();
    for r in records {
        *expected
            .entry(r.group.clone())
            .or_default()
            .entry(r.kind.clone())
            .or_default() += 1;
    }
    if index.counts != expected {
        return Err("counts disagree with a recount of the records".into());
    }
    for (t, groups) in &index.by_type {
        for g in groups {
            if !index.by_group.get(g).is_some_and(|ts| ts.contains(t)) {
                return Err(format!("{t} lists {g} but by_group does not"));
            }
        }
    }
    for (g, types) in &index.by_group {
        for t in types {
            if !index.by_type.get(t).is_some_and(|gs| gs.contains(g)) {
                return Err(format!("{g} lists {t} but by_type does not"));
            }
        }
        if !expected.contains_key(g) {
            return Err(format!("{g} indexed without records"));
        }
    }
    let total: usize = index.counts.values().flat_map(|m| m.values()).sum();
    if total != records.len() {
        return Err(format!("count total {total} != {} records", records.len()));
    }
    Ok(())
}

/// Every cell bit-identical, names and kinds equal.
pub fn bit_exact(a: &Table, b: &Table) -> bool {
    a.row_count() == b.row_count()
        && a.columns().len() == b.columns().len()
        && a.columns().zip(b.columns()).all(|(x, y)| {
            x.name == y.name && x.kind == y.kind && x.cells.iter().zip(&y.cells).all(|(p, q)| p.bit_eq(q))
        })
}

/// Textbook dynamic-programming edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Random session from a random CSV: `None` when the table has no usable spec.
pub fn random_session(rng: &mut StdRng) -> Option<(String, Session)> {
    let csv = random_csv(rng);
    let session = Session::from_csv(
        csv.as_bytes(),
        "random.csv",
        CsvOptions::default(),
        DetectorConfig::default(),
        None,
        Extensions::default(),
    )
    .ok()?;
    Some((csv, session))
}

/// A plausible action for the session's current state, from suggestions or
/// drawn directly.
pub fn random_action(rng: &mut StdRng, s: &Session) -> Option<RepairAction> {
    let t = s.table();
    match rng.gen_range(0..10) {
        0 if t.row_count() > 1 => {
            let mut rows: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..t.row_count())).collect();
            rows.sort_unstable();
            rows.dedup();
            Some(RepairAction::RemoveRows { rows })
        }
        1 => {
            let cat: Vec<&str> = t
                .columns()
                .filter(|c| c.kind == ColumnKind::Categorical)
                .map(|c| c.name.as_str())
                .collect();
            let col = t.column(cat.choose(rng)?).ok()?;
            let keys: BTreeSet<&str> = col.cells.iter().filter_map(|c| c.as_text()).collect();
            let keys: Vec<&str> = keys.into_iter().collect();
            let src = keys.choose(rng)?;
            let dst = keys.choose(rng)?;
            (src != dst).then(|| RepairAction::MergeGroups {
                column: col.name.clone(),
                source_key: src.to_string(),
                dest_key: dst.to_string(),
            })
        }
        2 => {
            let num: Vec<&str> = t
                .columns()
                .filter(|c| c.kind == ColumnKind::Numeric)
                .map(|c| c.name.as_str())
                .collect();
            let name = num.choose(rng)?;
            let missing: Vec<CellRef> = t
                .column(name)
                .ok()?
                .cells
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_missing())
                .map(|(r, _)| CellRef::new(r, *name))
                .collect();
            (!missing.is_empty()).then_some(RepairAction::ImputeColumnMean { cells: missing })
        }
        _ => {
            let record = s.records().choose(rng)?;
            let options = s.suggest(record).ok()?;
            options.choose(rng).cloned()
        }
    }
}

pub fn python3() -> Option<&'static str> {
    Command::new("python3")
        .arg("--version")
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|_| "python3")
}

/// Runs a generated script on `input`, returning the output CSV bytes.
pub fn run_script(dir: &Path, source: &str, input: &[u8]) -> Result<Vec<u8>, String> {
    let script = dir.join("replay.py");
    let inp = dir.join("in.csv");
    let out = dir.join("out.csv");
    std::fs::write(&script, source).map_err(|e| e.to_string())?;
    std::fs::write(&inp, input).map_err(|e| e.to_string())?;
    let o = Command::new("python3")
        .arg(&script)
        .arg(&inp)
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    std::fs::read(&out).map_err(|e| e.to_string())
}

/// Script output reloaded with the session's kinds, compared at tol 1e-9.
pub fn script_matches(session: &Session, output: &[u8]) -> Result<(), String> {
    let loaded = wrangle::load_csv(output, session.csv_options()).map_err(|e| e.to_string())?;
    let typed = loaded.coerce_kinds(&session.table().kinds()).map_err(|e| e.to_string())?;
    if wrangle::table_equals(&typed, session.table(), 1e-9) {
        Ok(())
    } else {
        Err(format!(
            "script output differs:\n--- script\n{}\n--- session\n{}",
            String::from_utf8_lossy(output),
            wrangle::serialize_csv(session.table(), session.csv_options())
        ))
    }
}

/// Validates `value` against a named schema of the shipped API description.
pub fn schema_validate(name: &str, value: &serde_json::Value) -> Result<(), String> {
    let doc: serde_json::Value =
        serde_json::from_str(include_str!("../../../../docs/openapi.json")).expect("api description parses");
    let schema = serde_json::json!({
        "$ref": format!("#/components/schemas/{name}"),
        "components": doc["components"],
    });
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("{name}: {}", errors.join("; ")))
    }
}

pub struct TestServer {
    pub base: String,
    pub http: reqwest::Client,
}

impl TestServer {
    pub async fn start(config: wrangle::server::ServerConfig) -> TestServer {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(wrangle::server::serve_on(listener, config, Extensions::default()));
        TestServer {
            base: format!("http://{addr}"),
            http: reqwest::Client::new(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> (u16, serde_json::Value) {
        let r = self.http.get(self.url(path)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(serde_json::Value::Null))
    }

    pub async fn post(&self, path: &str, body: &serde_json::Value) -> (u16, serde_json::Value) {
        let r = self.http.post(self.url(path)).json(body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(serde_json::Value::Null))
    }

    pub async fn upload(&self, name: &str, bytes: Vec<u8>) -> (u16, serde_json::Value) {
        let r = self
            .http
            .post(self.url(&format!("/api/datasets?name={name}")))
            .body(bytes)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(serde_json::Value::Null))
    }
}
