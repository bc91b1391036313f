//! Runs the `dpalign` binary over the corpus and compares verdicts and exit
//! codes with `corpus/manifest.toml`. Every JSON report is validated
//! against `docs/report.schema.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Deserialize;
use serde_json::Value;

#[derive(Deserialize)]
struct Manifest {
    program: Vec<Entry>,
}

#[derive(Deserialize)]
struct Entry {
    file: String,
    verdict: String,
    #[serde(default)]
    budgets: BTreeMap<String, String>,
    m1: Option<String>,
    m2: Option<String>,
    replay: Option<String>,
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(name: &str) -> String {
    root().join("corpus").join(name).display().to_string()
}

fn input(name: &str) -> String {
    root()
        .join("corpus/inputs")
        .join(name)
        .display()
        .to_string()
}

fn manifest() -> Manifest {
    toml::from_str(&std::fs::read_to_string(root().join("corpus/manifest.toml")).unwrap()).unwrap()
}

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(
        &std::fs::read_to_string(root().join("docs/report.schema.json")).unwrap(),
    )
    .unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

struct Run {
    code: i32,
    stdout: String,
}

fn dpalign(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_dpalign"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
    }
}

/// Run with `--json`, validate the report, and return it with the exit code.
fn json(args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let r = dpalign(&all);
    let v: Value = serde_json::from_str(&r.stdout).unwrap_or_else(|e| panic!("{e}: {}", r.stdout));
    let errors: Vec<String> = validator().iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(
        errors.is_empty(),
        "report for {args:?} violates the schema: {errors:?}"
    );
    assert_eq!(v["exit_code"], r.code, "{args:?}");
    (r.code, v)
}

fn exit_for(verdict: &str) -> i32 {
    match verdict {
        "PASS" | "CONSISTENT" => 0,
        "FAIL" | "FALSIFIED" => 1,
        "INCONCLUSIVE" => 2,
        other => panic!("unknown verdict {other}"),
    }
}

#[test]
fn check_verdicts_match_the_manifest() {
    for e in manifest().program {
        let file = corpus(&e.file);
        let (code, v) = json(&["check", &file]);
        assert_eq!(v["verdict"], e.verdict.as_str(), "{}", e.file);
        assert_eq!(code, exit_for(&e.verdict), "{}", e.file);
        // Text mode agrees.
        assert_eq!(dpalign(&["check", &file]).code, code, "{}", e.file);
        for (budget, verdict) in &e.budgets {
            let (code, v) = json(&["verify", &file, "--budget", budget]);
            assert_eq!(
                v["verdict"],
                verdict.as_str(),
                "{} with budget {budget}",
                e.file
            );
            assert_eq!(code, exit_for(verdict));
        }
    }
}

#[test]
fn interpreter_batteries_match_the_manifest() {
    for e in manifest().program {
        let file = corpus(&e.file);
        let Some(m1) = e.m1.as_deref().map(input) else {
            continue;
        };
        let m2 = e.m2.as_deref().map(input);
        let mut args = vec![
            "test", &file, "--mode", "faithful", "--trials", "200", "--m1", &m1,
        ];
        if let Some(m2) = &m2 {
            args.extend(["--m2", m2]);
        }
        let (code, v) = json(&args);
        assert_eq!(code, 0, "faithfulness of {}: {v}", e.file);
        if let (Some(expected), Some(m2)) = (&e.replay, &m2) {
            let (code, v) = json(&[
                "test", &file, "--mode", "replay", "--trials", "200", "--m1", &m1, "--m2", m2,
            ]);
            assert_eq!(v["verdict"], expected.as_str(), "replay of {}: {v}", e.file);
            assert_eq!(code, exit_for(expected));
        }
    }
}

#[test]
fn sparse_vector_check_cites_the_budget() {
    let r = dpalign(&["check", &corpus("sparsevector.ldp")]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("v_eps <= eps: PASS"), "{}", r.stdout);
    assert!(r.stdout.contains("havoc eta1; /*inst*/"));
}

#[test]
fn usage_and_parse_errors_exit_3() {
    let dir = std::env::temp_dir().join(format!("dpalign-golden-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let empty = dir.join("empty.ldp");
    std::fs::write(&empty, "").unwrap();
    let (code, v) = json(&["check", empty.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(v["error"].as_str().unwrap().contains("syntax error"));
    assert_eq!(dpalign(&["check", "/nonexistent.ldp"]).code, 3);
    assert_eq!(dpalign(&["frobnicate"]).code, 3);
    assert_eq!(
        dpalign(&["--timeout", "0", "check", &corpus("sparsevector.ldp")]).code,
        3
    );
    assert_eq!(dpalign(&["--help"]).code, 0);

    let bad = dir.join("bad.json");
    std::fs::write(&bad, "[1, 2]").unwrap();
    let sv = corpus("sparsevector.ldp");
    assert_eq!(
        dpalign(&[
            "test",
            &sv,
            "--mode",
            "faithful",
            "--m1",
            bad.to_str().unwrap()
        ])
        .code,
        3
    );
    // Inputs two apart violate the precondition.
    let far = dir.join("far.json");
    std::fs::write(&far, r#"{"T": 4, "N": 1, "eps": 1, "q": [4, 3, 5]}"#).unwrap();
    let args = [
        "test",
        &sv,
        "--mode",
        "replay",
        "--m1",
        &input("sv_d1.json"),
        "--m2",
        far.to_str().unwrap(),
    ];
    assert_eq!(dpalign(&args).code, 3);
    // Replay needs a second memory.
    assert_eq!(
        dpalign(&[
            "test",
            &sv,
            "--mode",
            "replay",
            "--m1",
            &input("sv_d1.json")
        ])
        .code,
        3
    );
}

#[test]
fn config_file_sets_defaults() {
    let dir = std::env::temp_dir().join(format!("dpalign-config-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("dpalign.toml");
    std::fs::write(&cfg, "trials = 17\nformat = \"json\"\n").unwrap();
    let sv = corpus("sparsevector.ldp");
    let args = [
        "--config",
        cfg.to_str().unwrap(),
        "test",
        &sv,
        "--mode",
        "faithful",
        "--m1",
        &input("sv_d1.json"),
    ];
    let r = dpalign(&args);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["result"]["trials"], 17);
    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    assert_eq!(
        dpalign(&["--config", cfg.to_str().unwrap(), "check", &sv]).code,
        3
    );
}

#[test]
fn infer_reports() {
    let (code, v) = json(&["infer", &corpus("partialsum.ldp")]);
    assert_eq!(code, 0);
    assert_eq!(v["environment"]["sum"], "num[*]");
    assert_eq!(v["environment"]["eta"], "num[-^sum]");

    // Fully annotated programs come back as written.
    let (_, v) = json(&["infer", &corpus("sparsevector.ldp")]);
    assert_eq!(v["environment"]["eta2"], "num[q[i] + eta2 >= tT ? 2 : 0]");
    assert_eq!(v["environment"]["eta1"], "num[1]");
    assert_eq!(v["residual"], serde_json::json!([]));

    let (code, v) = json(&["infer", &corpus("sparsevector_infer.ldp"), "--minimize"]);
    assert_eq!(code, 0, "{v}");
    let m = &v["minimize"];
    assert_eq!(m["outcome"]["outcome"], "optimal");
    assert_eq!(
        m["outcome"]["assignment"],
        serde_json::json!({"eta1": "1", "eta2.f": "0", "eta2.t": "2"})
    );
    assert_eq!(m["resulting_budget"], "eps");
}

#[test]
fn trace_dump_is_json_lines() {
    let dir = std::env::temp_dir().join(format!("dpalign-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("trace.jsonl");
    let sv = corpus("sparsevector.ldp");
    let args = [
        "test",
        &sv,
        "--mode",
        "faithful",
        "--trials",
        "5",
        "--m1",
        &input("sv_d1.json"),
        "--m2",
        &input("sv_d2.json"),
        "--trace",
        trace.to_str().unwrap(),
    ];
    assert_eq!(dpalign(&args).code, 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    assert_eq!(lines[0]["site"], "eta1");
    // Only a draw whose distance reads past the end of `q` (and so ends
    // the run) may lack an aligned value.
    for (k, l) in lines.iter().enumerate() {
        let keys: &[&str] = if k + 1 < lines.len() {
            &["site", "draw", "aligned", "cost"]
        } else {
            &["site", "draw"]
        };
        for key in keys {
            assert!(l.get(*key).is_some(), "{l}");
        }
    }
    // Threshold noise moves by one and costs eps / 2.
    let d = lines[0]["draw"].as_f64().unwrap();
    assert!((lines[0]["aligned"].as_f64().unwrap() - d - 1.0).abs() < 1e-12);
    assert!((lines[0]["cost"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}
