//! End-to-end tests of the `skeletal` binary: exit codes, output
//! determinism, artifact emission, and JSON report schema conformance.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skeletal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_fixture(mode: &str, prot: &str, goal: &str, extra: &[&str]) -> Output {
    let prot = fixture(prot);
    let goal = fixture(goal);
    let mut args = vec![mode, prot.to_str().unwrap(), goal.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn exit_code_achieved() {
    let out = run_fixture("check", "blanchet.prot", "goal-a-auth.goal", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_code_counterexample() {
    let out = run_fixture("check", "blanchet.prot", "goal-b-auth.goal", &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_code_bound_exceeded() {
    let out = run_fixture("check", "blanchet.prot", "goal-a-secrecy.goal", &["--max-states", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_code_input_errors() {
    // missing file
    let out = run(&["check", "/nonexistent.prot", "/nonexistent.goal"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    // malformed goal
    let dir = tempdir("badgoal");
    let bad = dir.join("bad.goal");
    std::fs::write(&bad, "(defgoal broken").unwrap();
    let prot = fixture("blanchet.prot");
    let out = run(&["check", prot.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    // zero bound
    let out = run_fixture("check", "blanchet.prot", "goal-a-auth.goal", &["--max-strands", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn output_is_byte_deterministic() {
    for (mode, prot, goal) in [
        ("cs", "blanchet.prot", "goal-b-auth.goal"),
        ("shapes", "blanchet.prot", "goal-b-auth.goal"),
        ("check", "blanchet.prot", "goal-a-auth.goal"),
        ("check", "blanchet-fix.prot", "goal-b-secrecy.goal"),
    ] {
        let a = run_fixture(mode, prot, goal, &[]);
        let b = run_fixture(mode, prot, goal, &[]);
        assert_eq!(a.stdout, b.stdout, "{mode} {prot} {goal} output differs between runs");
        assert_eq!(a.status.code(), b.status.code());
    }
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("skeletal-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn check_emits_dot_and_json_artifacts() {
    let dir = tempdir("artifacts");
    let json = dir.join("report.json");
    let dots = dir.join("dots");
    let out = run_fixture(
        "check",
        "blanchet.prot",
        "goal-b-auth.goal",
        &["--json", json.to_str().unwrap(), "--dot", dots.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["verdict"], "counterexample");
    for name in ["start.dot", "shape-0.dot", "counterexample.dot"] {
        let dot = std::fs::read_to_string(dots.join(name)).unwrap();
        assert!(dot.starts_with("digraph"), "{name} is not a graphviz file");
    }
}

#[test]
fn json_reports_conform_to_schema() {
    let schema: Value = serde_json::from_str(skeletal::fixtures::VERDICT_SCHEMA).unwrap();
    for (prot, goal, code) in [
        ("blanchet.prot", "goal-a-auth.goal", 0),
        ("blanchet.prot", "goal-a-secrecy.goal", 0),
        ("blanchet.prot", "goal-b-auth.goal", 1),
        ("blanchet.prot", "goal-b-auth-weak.goal", 0),
        ("blanchet.prot", "goal-b-secrecy.goal", 1),
        ("blanchet-fix.prot", "goal-b-auth.goal", 0),
        ("blanchet-fix.prot", "goal-b-secrecy.goal", 0),
    ] {
        let dir = tempdir("schema");
        let json = dir.join(format!("{}-{}.json", prot, goal));
        let out = run_fixture("check", prot, goal, &["--json", json.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(code), "{prot} {goal}");
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        let mut errors = Vec::new();
        validate(&report, &schema, &schema, "$", &mut errors);
        assert!(errors.is_empty(), "{prot} {goal}: schema violations: {errors:?}");
    }
}

/// Structural validator for the subset of JSON Schema the report schema
/// uses: type, enum, required, properties, additionalProperties,
/// items, minItems, maxItems, minimum, and local $ref.
fn validate(value: &Value, schema: &Value, root: &Value, path: &str, errors: &mut Vec<String>) {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let target = r
            .strip_prefix("#/")
            .and_then(|p| p.split('/').try_fold(root, |v, k| v.get(k)))
            .unwrap_or_else(|| panic!("unresolvable $ref {r}"));
        validate(value, target, root, path, errors);
        return;
    }
    if let Some(t) = schema.get("type").and_then(Value::as_str) {
        let ok = match t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
            "boolean" => value.is_boolean(),
            "number" => value.is_number(),
            other => panic!("unsupported type {other}"),
        };
        if !ok {
            errors.push(format!("{path}: expected {t}, got {value}"));
            return;
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: {value} not in {allowed:?}"));
        }
    }
    if let Some(min) = schema.get("minimum").and_then(Value::as_i64) {
        if value.as_i64().is_some_and(|v| v < min) {
            errors.push(format!("{path}: {value} below minimum {min}"));
        }
    }
    if let Some(obj) = value.as_object() {
        if let Some(req) = schema.get("required").and_then(Value::as_array) {
            for k in req.iter().filter_map(Value::as_str) {
                if !obj.contains_key(k) {
                    errors.push(format!("{path}: missing required key {k}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, v) in obj {
            let sub = props.and_then(|p| p.get(k));
            match sub {
                Some(s) => validate(v, s, root, &format!("{path}.{k}"), errors),
                None => match schema.get("additionalProperties") {
                    Some(Value::Bool(false)) => {
                        errors.push(format!("{path}: unexpected key {k}"));
                    }
                    Some(s @ Value::Object(_)) => {
                        validate(v, s, root, &format!("{path}.{k}"), errors)
                    }
                    _ => {}
                },
            }
        }
    }
    if let Some(arr) = value.as_array() {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (arr.len() as u64) < min {
                errors.push(format!("{path}: fewer than {min} items"));
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (arr.len() as u64) > max {
                errors.push(format!("{path}: more than {max} items"));
            }
        }
        if let Some(items) = schema.get("items") {
            for (i, v) in arr.iter().enumerate() {
                validate(v, items, root, &format!("{path}[{i}]"), errors);
            }
        }
    }
}

#[test]
fn cs_reports_unsatisfiable_hypotheses() {
    let dir = tempdir("unsat");
    let goal = dir.join("contradictory.goal");
    std::fs::write(
        &goal,
        r#"(defgoal contradictory
             (forall ((a b name) (k skey) (n node))
               (implies (and (p "init" 1 n (a a) (b b) (k k)) (non k))
                 (false))))"#,
    )
    .unwrap();
    let prot = fixture("blanchet.prot");
    let out = run(&["cs", prot.to_str().unwrap(), goal.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("unsatisfiable"));
}
