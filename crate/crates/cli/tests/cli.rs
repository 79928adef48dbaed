use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otsopf"))
}

fn case_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(format!("{name}.m"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    if !out.stderr.is_empty() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn schema() -> Value {
    let text = include_str!("../data/report.schema.json");
    serde_json::from_str(text).unwrap()
}

/// Validates the keyword subset the report schema uses: type, const, enum,
/// required, properties, additionalProperties (schema form), items,
/// minItems/maxItems, oneOf and local `$ref`.
fn validate(root: &Value, schema: &Value, value: &Value, path: &str) -> Result<(), String> {
    let fail = |msg: String| Err(format!("{path}: {msg}"));
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let name = r.trim_start_matches("#/$defs/");
        return validate(root, &root["$defs"][name], value, path);
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let ok = types.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            _ => false,
        });
        if !ok {
            return fail(format!("expected {types:?}, found {value}"));
        }
    }
    if let Some(c) = schema.get("const") {
        if c != value {
            return fail(format!("expected {c}, found {value}"));
        }
    }
    if let Some(e) = schema.get("enum").and_then(Value::as_array) {
        if !e.contains(value) {
            return fail(format!("{value} not in {e:?}"));
        }
    }
    if let Some(obj) = value.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return fail(format!("missing required {key}"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (key, v) in obj {
            let sub = format!("{path}.{key}");
            match props.and_then(|p| p.get(key)) {
                Some(s) => validate(root, s, v, &sub)?,
                None => {
                    if let Some(extra) = schema.get("additionalProperties").filter(|a| a.is_object()) {
                        validate(root, extra, v, &sub)?;
                    }
                }
            }
        }
    }
    if let Some(arr) = value.as_array() {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (arr.len() as u64) < min {
                return fail(format!("fewer than {min} items"));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (arr.len() as u64) > max {
                return fail(format!("more than {max} items"));
            }
        }
        if let Some(items) = schema.get("items") {
            for (k, v) in arr.iter().enumerate() {
                validate(root, items, v, &format!("{path}[{k}]"))?;
            }
        }
    }
    if let Some(branches) = schema.get("oneOf").and_then(Value::as_array) {
        let matches = branches.iter().filter(|b| validate(root, b, value, path).is_ok()).count();
        if matches != 1 {
            return fail(format!("matches {matches} oneOf branches"));
        }
    }
    Ok(())
}

fn assert_schema_valid(report: &Value) {
    let s = schema();
    validate(&s, &s, report, "$").unwrap_or_else(|e| panic!("report violates schema: {e}"));
}

fn strip_runtime(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.contains("runtime"));
            map.values_mut().for_each(strip_runtime);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_runtime),
        _ => {}
    }
}

fn objective(report: &Value) -> f64 {
    report["run"]["objective"].as_f64().expect("objective present")
}

#[test]
fn run_dc_case9_reports_golden_objective() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dc.json");
    let csv = dir.path().join("buses.csv");
    let res = run(&[
        "run",
        "--case",
        case_path("case9").to_str().unwrap(),
        "--formulation",
        "dc",
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    let report = read_json(&out);
    assert_schema_valid(&report);
    assert_eq!(report["report_version"], 1);
    assert_eq!(report["run"]["status"], "optimal");
    // Golden value from the first verified run.
    assert!((objective(&report) - 5216.0266).abs() < 1e-3, "{}", objective(&report));
    let metrics = &report["run"]["metrics"];
    assert_eq!(metrics["lmp"].as_array().unwrap().len(), 9);
    let total = metrics["total_cost"].as_f64().unwrap();
    assert!((total - objective(&report)).abs() <= 1e-6 * total);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("bus,vm,va_rad,lmp"));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn bundled_case_name_is_accepted() {
    let res = run(&["run", "--case", "case9", "--formulation", "socp-mce"]);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("AC check         feasible"), "{stdout}");
}

#[test]
fn zero_budget_matches_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let nominal = dir.path().join("nom.json");
    let ots = dir.path().join("ots.json");
    let case = case_path("case9");
    let case = case.to_str().unwrap();
    assert_eq!(run(&["run", "--case", case, "--formulation", "socp-mce", "--out", nominal.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(
        run(&["run", "--case", case, "--formulation", "ots-misocp", "--nsw", "0", "--out", ots.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let (a, b) = (objective(&read_json(&nominal)), objective(&read_json(&ots)));
    assert!((a - b).abs() <= 1e-7 * a.abs(), "{a} vs {b}");
    let report = read_json(&ots);
    assert_schema_valid(&report);
    assert_eq!(report["run"]["topology_connected"], true);
}

#[test]
fn bad_path_exits_one() {
    let res = run(&["run", "--case", "/no/such/case.m", "--formulation", "dc"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("cannot read case"));
}

#[test]
fn invalid_options_exit_one() {
    assert_eq!(run(&["run", "--case", "case9", "--big-m=-1"]).status.code(), Some(1));
    assert_eq!(run(&["run", "--case", "case9", "--workers", "0"]).status.code(), Some(1));
    assert_eq!(run(&["run", "--case", "case9", "--time-limit", "0"]).status.code(), Some(1));
}

#[test]
fn switchable_sidecar_is_applied_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let sw = dir.path().join("sw.txt");
    std::fs::write(&sw, "# two lines\n0\n3\n").unwrap();
    let out = dir.path().join("r.json");
    let res = run(&[
        "run", "--case", "case9", "--formulation", "ots-misocp", "--switchable", sw.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(read_json(&out)["case"]["switchable"], 2);

    std::fs::write(&sw, "99\n").unwrap();
    let res = run(&["run", "--case", "case9", "--switchable", sw.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("out of range"));
}

#[test]
fn infeasible_case_exits_two() {
    let mut net = otsopf::cases::load("case9").unwrap();
    for bus in &mut net.buses {
        bus.p_demand *= 10.0;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heavy.json");
    std::fs::write(&path, otsopf::caseio::serialize_json(&net)).unwrap();
    let out = dir.path().join("r.json");
    let res = run(&["run", "--case", path.to_str().unwrap(), "--formulation", "dc", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let report = read_json(&out);
    assert_schema_valid(&report);
    assert_eq!(report["run"]["status"], "infeasible");
    assert!(report["run"]["metrics"].is_null());
}

#[test]
fn identical_runs_reproduce_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}.json"));
        let res = run(&["run", "--case", "case9", "--formulation", "ots-misocp", "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
        let mut v = read_json(&out);
        strip_runtime(&mut v);
        reports.push(v);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn compare_default_sweep_lists_every_formulation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cmp.csv");
    let out = dir.path().join("cmp.json");
    let res = run(&["compare", "--case", "case9", "--csv", csv.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# gap_vs_best_bound"));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["formulation", "runtime_s", "objective", "gap_vs_best_bound", "ac_feasible", "status"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    let solved: Vec<_> = rows.iter().filter(|r| !r[2].is_empty()).collect();
    assert_eq!(solved.len(), 5);
    let unsupported = rows.iter().filter(|r| &r[5] == "unsupported: requires nonconvex solver").count();
    assert_eq!(unsupported, 4);
    let names: Vec<&str> = solved.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(names, ["dc", "socp", "socp-mce", "dc-ots", "ots-misocp"]);
    for r in &solved {
        let gap: f64 = r[3].parse().unwrap();
        assert!(gap.is_finite() && gap >= 0.0);
    }
    // socp is the reference bound of the fixed-topology class.
    assert!(solved[1][3].parse::<f64>().unwrap() < 1e-8);
    let report = read_json(&out);
    assert_schema_valid(&report);
}

#[test]
fn compare_single_formulation_has_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    let res = run(&["compare", "--case", "case9", "--formulation", "socp-mce", "--csv", csv.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][3], "0");
    assert_eq!(&rows[0][4], "true");
}

#[test]
fn compare_time_limited_row_carries_status() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tl.csv");
    let res = run(&[
        "compare", "--case", "case39", "--formulation", "socp-mce,ots-misocp", "--time-limit", "2", "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(&rows[0][5], "optimal");
    assert_eq!(&rows[1][5], "time_limit");
    assert!(!rows[1][2].is_empty(), "incumbent objective reported");
}

#[test]
fn ots_study_emits_table_and_monotone_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study.json");
    let csv = dir.path().join("study.csv");
    let res = run(&[
        "ots-study", "--case", "case9", "--nsw", "0,1,2,none", "--out", out.to_str().unwrap(), "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8(res.stdout).unwrap();
    for label in [
        "Total generation cost ($/h)",
        "Congestion rent ($/h)",
        "Average LMP ($/MWh)",
        "Average |FMP| ($/MWh)",
        "LMP standard deviation ($/MWh)",
        "No. of congested lines",
        "Optimal no. of open lines",
    ] {
        assert!(stdout.contains(label), "{label} missing");
    }
    assert!(stdout.contains("(out of 9 total)"));
    let report = read_json(&out);
    assert_schema_valid(&report);
    assert_eq!(report["monotone"], true);
    let budgets = report["budgets"].as_array().unwrap();
    assert_eq!(budgets.len(), 4);
    // A zero budget reproduces the nominal dispatch; prices come from a
    // different program, so they agree only to solver accuracy.
    for row in budgets[0]["table"]["rows"].as_array().unwrap() {
        if let (Some(a), Some(b)) = (row["nominal"].as_f64(), row["ots"].as_f64()) {
            assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0), "{row}");
        }
    }
    let objs: Vec<f64> = budgets.iter().map(|b| b["run"]["objective"].as_f64().unwrap()).collect();
    for w in objs.windows(2) {
        assert!(w[1] <= w[0] + 1e-6 * w[0].abs());
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 7);
}
