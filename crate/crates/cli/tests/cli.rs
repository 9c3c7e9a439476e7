use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use trajfuse::metrics::{rand_index, Partition};

fn trajfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajfuse"))
        .args(args)
        .env_remove(trajfuse_cli::OUT_DIR_ENV)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = trajfuse(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("gen");
    let mut args = vec![
        "generate",
        "--groups",
        "2",
        "--sep",
        "far",
        "--n",
        "20",
        "--t",
        "10",
        "-o",
        s(&out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn read_column(path: &Path, column: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == column)
        .unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].to_string())
        .collect()
}

fn labels(path: &Path) -> Vec<usize> {
    read_column(path, "group")
        .iter()
        .map(|g| g.parse().unwrap())
        .collect()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(trajfuse(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(trajfuse(&["fit", "--tau"]).status.code(), Some(2));
    assert_eq!(trajfuse(&["--help"]).status.code(), Some(0));
}

#[test]
fn pipeline_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = trajfuse(&["fit", "-i", s(&missing), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "io");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("missing.csv"));

    let data = generate(dir.path(), &[]);
    let out = trajfuse(&[
        "fit",
        "-i",
        s(&data.join("data.csv")),
        "-o",
        s(dir.path()),
        "--tau",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "config");

    let out = trajfuse(&["fit", "-o", s(dir.path())]);
    assert_eq!(error_json(&out)["error"]["kind"], "config");
}

#[test]
fn noiseless_data_recovered_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &["--sigma", "0", "--rho", "0"]);
    let fit_dir = dir.path().join("fit");
    ok(&["fit", "-i", s(&data.join("data.csv")), "-o", s(&fit_dir)]);
    assert_eq!(summary(&fit_dir)["k_hat"], 2);
    let truth = Partition::new(&labels(&data.join("truth.csv")));
    let est = Partition::new(&labels(&fit_dir.join("membership.csv")));
    assert_eq!(rand_index(&truth, &est).unwrap(), 1.0);
    assert_eq!(
        read_column(&data.join("truth.csv"), "id"),
        read_column(&fit_dir.join("membership.csv"), "id")
    );
}

#[test]
fn fit_writes_artifacts_matching_schema() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &[]);
    let fit_dir = dir.path().join("fit");
    ok(&[
        "fit",
        "-i",
        s(&data.join("data.csv")),
        "-o",
        s(&fit_dir),
        "--band-points",
        "11",
        "--seed",
        "5",
    ]);
    for f in ["membership.csv", "curves.csv", "path.csv", "summary.json"] {
        assert!(fit_dir.join(f).exists(), "{f} missing");
    }
    let sum = summary(&fit_dir);
    let schema: Value =
        serde_json::from_str(include_str!("../schema/summary.schema.json")).unwrap();
    let obj = sum.as_object().unwrap();
    for key in schema["required"].as_array().unwrap() {
        assert!(
            obj.contains_key(key.as_str().unwrap()),
            "summary lacks {key}"
        );
    }
    let props = schema["properties"].as_object().unwrap();
    for (key, value) in obj {
        let prop = props
            .get(key)
            .unwrap_or_else(|| panic!("unexpected key {key}"));
        let types: Vec<&str> = match &prop["type"] {
            Value::String(t) => vec![t.as_str()],
            Value::Array(ts) => ts.iter().map(|t| t.as_str().unwrap()).collect(),
            _ => continue,
        };
        let actual = match value {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Number(n) if n.is_u64() || n.is_i64() => "integer",
            Value::Number(_) => "number",
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        };
        assert!(
            types.contains(&actual) || (actual == "integer" && types.contains(&"number")),
            "{key}: {actual} not in {types:?}"
        );
    }
    assert_eq!(sum["seed"], 5);
    assert_eq!(sum["n_subjects"], 20);
    let k = sum["k_hat"].as_u64().unwrap() as usize;
    assert_eq!(read_column(&fit_dir.join("curves.csv"), "t").len(), 11 * k);
    assert_eq!(read_column(&fit_dir.join("path.csv"), "lambda").len(), 40);
}

#[test]
fn path_rows_follow_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &[]);
    let out = dir.path().join("path");
    ok(&[
        "path",
        "-i",
        s(&data.join("data.csv")),
        "-o",
        s(&out),
        "--grid-size",
        "2",
        "--trace-iterations",
    ]);
    let lambdas = read_column(&out.join("path.csv"), "lambda");
    assert_eq!(lambdas, vec!["0.05", "2.0"]);
    // grid x subjects x basis dimension
    assert_eq!(
        read_column(&out.join("trace.csv"), "value").len(),
        2 * 20 * 4
    );
    assert!(!read_column(&out.join("iterations.csv"), "primal").is_empty());
}

#[test]
fn standardized_fit_is_scale_free() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &[]);
    let mut r = csv::Reader::from_path(data.join("data.csv")).unwrap();
    let scaled = dir.path().join("scaled.csv");
    let mut w = csv::Writer::from_path(&scaled).unwrap();
    w.write_record(["subject", "visit", "y"]).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let y: f64 = rec[2].parse().unwrap();
        w.write_record([&rec[0], &rec[1], &(100.0 * y + 50.0).to_string()])
            .unwrap();
    }
    w.flush().unwrap();
    let out = dir.path().join("fit");
    ok(&[
        "fit",
        "-i",
        s(&scaled),
        "-o",
        s(&out),
        "--standardize",
        "--id-column",
        "subject",
        "--time-column",
        "visit",
        "--value-column",
        "y",
    ]);
    let sum = summary(&out);
    assert_eq!(sum["k_hat"], 2);
    let sd = &sum["config"]["standardization"]["sd"];
    assert!(sd.as_f64().unwrap() > 10.0);
}

#[test]
fn single_subject_is_one_group() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.csv");
    std::fs::write(
        &file,
        "id,time,value\na,0,1.0\na,0.3,1.2\na,0.6,0.9\na,0.9,1.4\na,1.2,1.1\n",
    )
    .unwrap();
    let out = dir.path().join("fit");
    ok(&["fit", "-i", s(&file), "-o", s(&out)]);
    assert_eq!(summary(&out)["k_hat"], 1);
    assert_eq!(
        std::fs::read_to_string(out.join("membership.csv")).unwrap(),
        "id,group\na,0\n"
    );
}

#[test]
fn seeded_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "generate",
            "--n",
            "12",
            "--t",
            "8",
            "--unbalanced",
            "--seed",
            "3",
            "-o",
            s(&out),
        ]);
        std::fs::read(out.join("data.csv")).unwrap()
    };
    assert_eq!(gen("a"), gen("b"));
    let data = generate(dir.path(), &["--seed", "3"]);
    let fit = |name: &str| {
        let out = dir.path().join(name);
        ok(&["fit", "-i", s(&data.join("data.csv")), "-o", s(&out)]);
        (
            std::fs::read(out.join("membership.csv")).unwrap(),
            std::fs::read(out.join("curves.csv")).unwrap(),
        )
    };
    assert_eq!(fit("fa"), fit("fb"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), &[]);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[data]\ninput = {:?}\n[path]\ngrid_size = 3\n[selection]\ncriterion = \"known-k\"\nk = 1\n",
            s(&data.join("data.csv"))
        ),
    )
    .unwrap();
    let out = dir.path().join("fit");
    ok(&[
        "fit",
        "--config",
        s(&cfg),
        "-o",
        s(&out),
        "--grid-size",
        "5",
    ]);
    let sum = summary(&out);
    assert_eq!(sum["k_hat"], 1);
    assert_eq!(sum["config"]["run"]["path"]["grid_size"], 5);
    assert_eq!(read_column(&out.join("path.csv"), "lambda").len(), 5);

    std::fs::write(&cfg, "[penalty]\nlamda = 1.0\n").unwrap();
    let bad = trajfuse(&["fit", "--config", s(&cfg)]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(error_json(&bad)["error"]["kind"], "config");
}

#[test]
fn simulate_writes_report_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&[
        "simulate",
        "--n",
        "16",
        "--t",
        "8",
        "--reps",
        "2",
        "--grid-size",
        "10",
        "-o",
        s(&out),
    ]);
    assert_eq!(read_column(&out.join("report.csv"), "k_hat").len(), 2);
    let agg: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aggregate.json")).unwrap())
            .unwrap();
    assert_eq!(agg["config"]["simulate"]["reps"], 2);
}
