use std::path::PathBuf;
use std::process::{Command, Output};

use claim_endorse::fixtures;
use serde_json::Value;
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t1.csv"), fixtures::TABLE1_CSV).unwrap();
        std::fs::write(
            dir.path().join("schema.json"),
            serde_json::to_string(&fixtures::table1_schema()).unwrap(),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("task.json"),
            serde_json::to_string(&fixtures::table1_task()).unwrap(),
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_endorse"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }
}

const DATA: [&str; 4] = ["--data", "t1.csv", "--schema", "schema.json"];

fn with_data<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![cmd];
    args.extend(DATA);
    args.extend(extra);
    args
}

fn lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn of_type<'a>(records: &'a [Value], kind: &str) -> Vec<&'a Value> {
    records.iter().filter(|r| r["type"] == kind).collect()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line");
    serde_json::from_str(line).unwrap()
}

fn describe(pred: &Value) -> Vec<(String, String)> {
    pred.as_array()
        .unwrap()
        .iter()
        .map(|p| (p[0].as_str().unwrap().to_owned(), p[1].as_str().unwrap().to_owned()))
        .collect()
}

#[test]
fn ingest_reports_roles() {
    let ws = Workspace::new();
    let summary: Value = serde_json::from_str(&ws.ok(&with_data("ingest", &[]))).unwrap();
    assert_eq!(summary["rows"], 10);
    assert_eq!(summary["aggregate"], "Income");
    assert_eq!(summary["group_by"], "EducationLevel");
    assert_eq!(summary["attributes"].as_array().unwrap().len(), 6);
}

#[test]
fn precompute_is_byte_identical() {
    let ws = Workspace::new();
    ws.ok(&with_data("precompute", &["--m", "2", "--out", "a.json"]));
    ws.ok(&with_data("precompute", &["--m", "2", "--out", "b.json"]));
    assert_eq!(ws.read("a.json"), ws.read("b.json"));
    let cache: Value = serde_json::from_str(&ws.read("a.json")).unwrap();
    assert_eq!(cache["combos"].as_array().unwrap().len(), 6);
}

#[test]
fn endorse_streams_the_running_example() {
    let ws = Workspace::new();
    ws.ok(&with_data("precompute", &["--m", "1", "--out", "cache.json"]));
    let out = ws.ok(&with_data(
        "endorse",
        &["--task", "task.json", "--cache", "cache.json", "--strategy", "merged"],
    ));
    let records = lines(&out);
    assert_eq!(records.first().unwrap()["type"], "header");
    assert_eq!(records.last().unwrap()["type"], "summary");
    let events = of_type(&records, "event");
    let cs = events
        .iter()
        .find(|e| describe(&e["predicate"]) == [("Occupation".to_owned(), "CS&Math".to_owned())])
        .expect("CS&Math refinement streamed");
    assert_eq!(cs["agg1"], 92.5);
    assert_eq!(cs["agg2"], 76.0);
    assert_eq!(cs["n1"], 2);
    assert_eq!(cs["n2"], 2);
    for key in ["coverage", "statsig", "embsim", "mi", "anova", "average"] {
        assert!(cs["scores"].get(key).is_some(), "missing score {key}");
    }
}

#[test]
fn every_strategy_flag_runs() {
    let ws = Workspace::new();
    for strategy in ["anova", "mi", "statsig", "coverage", "serial", "merged", "sample", "sample:0.5", "random", "exhaustive"] {
        let out = ws.ok(&with_data("endorse", &["--task", "task.json", "--strategy", strategy]));
        let records = lines(&out);
        assert_eq!(records[0]["strategy"].as_str().unwrap().split(':').next(), strategy.split(':').next());
        assert_eq!(of_type(&records, "event").len(), 2, "{strategy}");
    }
    let out = ws.ok(&with_data("endorse", &["--task", "task.json", "--strategy", "sample", "--sample", "0.25"]));
    assert_eq!(lines(&out)[0]["strategy"], "sample:0.25");
}

#[test]
fn zero_deadline_gives_summary_only() {
    let ws = Workspace::new();
    let out = ws.ok(&with_data("endorse", &["--task", "task.json", "--deadline-ms", "0"]));
    let records = lines(&out);
    assert!(of_type(&records, "event").is_empty());
    let summary = of_type(&records, "summary");
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0]["stop_reason"], "deadline");
}

#[test]
fn missing_cache_is_built_and_written() {
    let ws = Workspace::new();
    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--cache", "fresh.json"]));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no precompute cache"));
    assert!(ws.path("fresh.json").exists());
}

#[test]
fn stale_cache_is_rejected() {
    let ws = Workspace::new();
    ws.ok(&with_data("precompute", &["--m", "1", "--out", "cache.json"]));
    let edited = fixtures::TABLE1_CSV.replace("72\n", "73\n");
    std::fs::write(ws.path("t1.csv"), edited).unwrap();
    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--cache", "cache.json"]));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["kind"], "cache");
}

#[test]
fn shallow_cache_is_rejected() {
    let ws = Workspace::new();
    ws.ok(&with_data("precompute", &["--m", "1", "--out", "cache.json"]));
    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--cache", "cache.json", "--m", "2"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_two_with_fields() {
    let ws = Workspace::new();
    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--k", "0"]));
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "validation");
    assert_eq!(err["fields"][0]["field"], "config.k");

    std::fs::write(
        ws.path("bad.json"),
        r#"{"query":{"function":"average"},"claim":{"g1":"PhD","g2":"Bachelor's degree"}}"#,
    )
    .unwrap();
    let out = ws.run(&with_data("endorse", &["--task", "bad.json"]));
    assert_eq!(out.status.code(), Some(2));

    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--strategy", "fastest"]));
    assert_eq!(out.status.code(), Some(2));
    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--strategy", "mi", "--sample", "0.1"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_errors_exit_three() {
    let ws = Workspace::new();
    let out = ws.run(&["endorse", "--data", "missing.csv", "--schema", "schema.json", "--task", "task.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "io");
    let out = ws.run(&with_data("endorse", &["--task", "missing.json"]));
    assert_eq!(out.status.code(), Some(3));
    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--out", "no/such/dir/out.jsonl"]));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn generality_filters_nested_top_k() {
    let ws = Workspace::new();
    // At m = 2, Occupation=CS&Math and its refinement by Sex=F both endorse.
    let top = |extra: &[&str]| -> Vec<Vec<(String, String)>> {
        let mut args = vec!["--task", "task.json", "--m", "2"];
        args.extend(extra);
        let records = lines(&ws.ok(&with_data("endorse", &args)));
        let summary = of_type(&records, "summary")[0].clone();
        summary["topk"]["average"]["items"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| describe(&i["predicate"]))
            .collect()
    };
    let nested = |items: &[Vec<(String, String)>]| {
        items.iter().any(|a| {
            items
                .iter()
                .any(|b| a.len() < b.len() && a.iter().all(|atom| b.contains(atom)))
        })
    };
    assert!(nested(&top(&[])));
    let general = top(&["--generality"]);
    assert!(!general.is_empty());
    assert!(!nested(&general));
}

#[test]
fn oracle_footer_and_eval_round_trip() {
    let ws = Workspace::new();
    ws.ok(&with_data("oracle", &["--task", "task.json", "--m", "2", "--k", "1000", "--out", "oracle.jsonl"]));
    let records = lines(&ws.read("oracle.jsonl"));
    let footer = records.last().unwrap();
    assert_eq!(footer["type"], "footer");
    // With k larger than the number of refinements the footer sums every event.
    let events = of_type(&records, "event");
    for key in ["anova", "mi", "statsig", "coverage", "average"] {
        let total: f64 = events
            .iter()
            .map(|e| e["scores"][key].as_f64().unwrap_or(0.0).max(0.0))
            .sum();
        let s_full = footer["s_full"][key].as_f64().unwrap();
        assert!((total - s_full).abs() < 1e-9, "{key}: {total} vs {s_full}");
    }

    let report: Value = serde_json::from_str(&ws.ok(&["eval", "--log", "oracle.jsonl", "--oracle", "oracle.jsonl"])).unwrap();
    for (_, r) in report["final_recall"].as_object().unwrap() {
        assert_eq!(r.as_f64().unwrap(), 1.0);
    }
}

#[test]
fn truncated_log_gives_partial_recall() {
    let ws = Workspace::new();
    ws.ok(&with_data("oracle", &["--task", "task.json", "--out", "oracle.jsonl"]));
    let text = ws.read("oracle.jsonl");
    // Header and first event only.
    let kept: Vec<&str> = text.lines().take(2).collect();
    std::fs::write(ws.path("short.jsonl"), kept.join("\n")).unwrap();
    let report: Value = serde_json::from_str(&ws.ok(&["eval", "--log", "short.jsonl", "--oracle", "oracle.jsonl"])).unwrap();
    let recalls: Vec<f64> = report["final_recall"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(recalls.iter().all(|&r| (0.0..=1.0).contains(&r)));
    assert!(recalls.iter().any(|&r| r < 1.0));
}

#[test]
fn eval_rejects_logs_of_another_task() {
    let ws = Workspace::new();
    ws.ok(&with_data("oracle", &["--task", "task.json", "--out", "oracle.jsonl"]));
    ws.ok(&with_data("endorse", &["--task", "task.json", "--k", "3", "--out", "run.jsonl"]));
    let out = ws.run(&["eval", "--log", "run.jsonl", "--oracle", "oracle.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["kind"], "eval");
}

#[test]
fn eval_compares_seeded_strategies() {
    let ws = Workspace::new();
    let out = ws.ok(&with_data(
        "eval",
        &["--task", "task.json", "--strategies", "merged,random", "--seeds", "0,1,2"],
    ));
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["unit"], "combinations");
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows[0]["strategy"], "merged");
    assert_eq!(rows[0]["runs"], 1);
    assert_eq!(rows[1]["strategy"], "random");
    assert_eq!(rows[1]["runs"], 3);
}

#[test]
fn embeddings_enable_the_embsim_score() {
    let ws = Workspace::new();
    let table = serde_json::json!({
        "dimension": 2,
        "entries": {
            "Income": [1.0, 0.0],
            "Sex": [0.0, 1.0],
            "Occupation": [1.0, 1.0],
            "Quarter Of Birth": [0.0, 1.0],
            "Sex M": [0.0, 1.0],
            "Occupation CS & Math": [1.0, 0.0],
        }
    });
    std::fs::write(ws.path("emb.json"), table.to_string()).unwrap();
    let out = ws.ok(&with_data("endorse", &["--task", "task.json", "--embeddings", "emb.json", "--strategy", "embsim"]));
    let records = lines(&out);
    let events = of_type(&records, "event");
    let cs = events
        .iter()
        .find(|e| e["predicate"][0][1] == "CS&Math")
        .unwrap();
    assert_eq!(cs["scores"]["embsim"].as_f64().unwrap(), 1.0);

    std::fs::write(ws.path("bad_emb.json"), r#"{"dimension": 3, "entries": {"Income": [1.0]}}"#).unwrap();
    let out = ws.run(&with_data("endorse", &["--task", "task.json", "--embeddings", "bad_emb.json"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_lines_parse_independently() {
    let ws = Workspace::new();
    ws.ok(&with_data("endorse", &["--task", "task.json", "--m", "2", "--out", "run.jsonl"]));
    let text = ws.read("run.jsonl");
    assert!(text.ends_with('\n'));
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["type"].is_string());
    }
}
