use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tempora(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempora")).args(args).current_dir(root()).output().expect("spawn tempora")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn ok(args: &[&str]) -> Output {
    let out = tempora(args);
    assert_eq!(code(&out), 0, "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn train_sim(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--config", "configs/demo.toml", "train-sim", "--samples", "data/demo_samples.jsonl", "-o", s(dir)];
    args.extend_from_slice(extra);
    tempora(&args)
}

#[test]
fn demo_run_reproduces_golden_report() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    assert_eq!(code(&train_sim(&dir, &[])), 0);
    for (produced, golden) in [("report.jsonl", "demo_report.jsonl"), ("summary.json", "demo_summary.json")] {
        let got = fs::read(dir.join(produced)).unwrap();
        let want = fs::read(root().join("crates/cli/tests/golden").join(golden)).unwrap();
        assert!(got == want, "{produced} differs from golden {golden}");
    }
}

#[test]
fn toml_and_json_configs_are_equivalent() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--config", "configs/demo.toml", "train-sim", "--samples", "data/demo_samples.jsonl", "--steps", "5", "-o", s(&a)]);
    ok(&["--config", "configs/demo.json", "train-sim", "--samples", "data/demo_samples.jsonl", "--steps", "5", "-o", s(&b)]);
    for f in ["report.jsonl", "summary.json", "checkpoint.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_config_and_seed() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    ok(&["--config", "configs/demo.toml", "--seed", "99", "train-sim", "--steps", "3", "--beta", "0.5", "-o", s(&dir)]);
    let summary: Value = serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 99);
    assert_eq!(summary["config"]["steps"], 3);
    assert_eq!(summary["config"]["grpo"]["beta"], 0.5);
    assert_eq!(summary["steps_run"], 3);
}

#[test]
fn score_worked_example() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("rewards.jsonl");
    let run = ok(&[
        "score",
        "--samples",
        "data/worked_example_samples.jsonl",
        "--responses",
        "data/worked_example_responses.jsonl",
        "-o",
        s(&out),
        "--json",
    ]);
    let rows = jsonl(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["iou"].as_f64().unwrap(), 0.5);
    assert!((rows[0]["tiou"].as_f64().unwrap() - 5.0 / 18.0).abs() < 1e-6);
    assert_eq!(rows[0]["format"], 1);
    assert_eq!(stdout_json(&run)["n"], 1);
}

#[test]
fn score_empty_input_fails_with_empty_output() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = tmp.path().join("rewards.jsonl");
    let run = tempora(&["score", "--samples", "data/demo_samples.jsonl", "--responses", s(&empty), "-o", s(&out), "--json"]);
    assert_eq!(code(&run), 1);
    assert_eq!(stdout_json(&run)["n"], 0);
    assert_eq!(fs::read(&out).unwrap(), b"");
}

#[test]
fn score_isolates_malformed_lines() {
    let tmp = TempDir::new().unwrap();
    let responses = tmp.path().join("responses.jsonl");
    fs::write(
        &responses,
        concat!(
            "{\"sample_id\":\"train-00\",\"text\":\"<think>x</think> <answer>1 to 2</answer>\"}\n",
            "{\"sample_id\":\"train-01\",\"text\":\n",
            "{\"sample_id\":\"train-02\",\"text\":\"<answer>3 to 9</answer>\"}\n",
        ),
    )
    .unwrap();
    let out = tmp.path().join("rewards.jsonl");
    let run = tempora(&["score", "--samples", "data/demo_samples.jsonl", "--responses", s(&responses), "-o", s(&out), "--json"]);
    assert_eq!(code(&run), 1);
    let summary = stdout_json(&run);
    assert_eq!(summary["n"], 2);
    assert_eq!(summary["errors"][0]["line"], 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 2"));
    let rows = jsonl(&out);
    assert_eq!(rows.iter().map(|r| r["line"].as_u64().unwrap()).collect::<Vec<_>>(), [1, 3]);
    assert_eq!(rows[1]["format"], 0);
}

#[test]
fn evaluate_all_correct_predictions() {
    let tmp = TempDir::new().unwrap();
    let preds = tmp.path().join("preds.jsonl");
    let lines: Vec<String> = jsonl(&root().join("data/demo_samples.jsonl"))
        .iter()
        .map(|s| serde_json::json!({ "sample_id": s["id"], "pred": s["gt"] }).to_string())
        .collect();
    fs::write(&preds, lines.join("\n")).unwrap();
    let out = tmp.path().join("eval.json");
    let run = ok(&["evaluate", "--samples", "data/demo_samples.jsonl", "--predictions", s(&preds), "-o", s(&out), "--json"]);
    let report = stdout_json(&run);
    let recall: Vec<f64> = report["r1"].as_array().unwrap().iter().map(|r| r["percent"].as_f64().unwrap()).collect();
    assert_eq!(recall, [100.0, 100.0, 100.0]);
    assert_eq!(report, serde_json::from_slice::<Value>(&fs::read(&out).unwrap()).unwrap());
    assert!(String::from_utf8_lossy(&ok(&["evaluate", "--samples", "data/demo_samples.jsonl", "--predictions", s(&preds)]).stdout)
        .contains("R1@0.5"));
}

#[test]
fn gaussian_filter_on_synthetic_pool() {
    let tmp = TempDir::new().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    ok(&["synth", "difficulty-pool", "--seed", "5", "-o", s(&pool)]);
    let out = tmp.path().join("selected.jsonl");
    let run = ok(&["filter", "--samples", s(&pool), "-o", s(&out), "--json"]);
    let summary = stdout_json(&run);
    assert_eq!(summary["pool"], 100_000);
    assert_eq!(summary["selected"], 2500);
    let mean = summary["mean_difficulty"].as_f64().unwrap();
    assert!((mean - 0.3).abs() <= 0.05, "mean difficulty {mean}");
    assert_eq!(jsonl(&out).len(), 2500);
}

#[test]
fn filter_scores_difficulty_from_predictions() {
    let tmp = TempDir::new().unwrap();
    let preds = tmp.path().join("preds.jsonl");
    let lines: Vec<String> = jsonl(&root().join("data/demo_samples.jsonl"))
        .iter()
        .map(|s| serde_json::json!({ "sample_id": s["id"], "pred": s["gt"] }).to_string())
        .collect();
    fs::write(&preds, lines.join("\n")).unwrap();
    let run = ok(&["filter", "--samples", "data/demo_samples.jsonl", "--predictions", s(&preds), "--target-count", "4", "--json"]);
    let summary = stdout_json(&run);
    assert_eq!(summary["selected"], 4);
    assert_eq!(summary["mean_difficulty"], 1.0);
    let missing = tempora(&["filter", "--samples", "data/demo_samples.jsonl"]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn cold_start_output_passes_parse_check() {
    let tmp = TempDir::new().unwrap();
    let (sources, pairs) = (tmp.path().join("sources.jsonl"), tmp.path().join("pairs.jsonl"));
    ok(&["synth", "cold-start", "-o", s(&sources)]);
    ok(&["cold-start", "--sources", s(&sources), "-o", s(&pairs)]);
    let report = stdout_json(&ok(&["parse-check", "--input", s(&pairs), "--json"]));
    assert_eq!(report["checked"], 150);
    assert_eq!(report["format_ok_percent"], 100.0);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let p = |name: &str| tmp.path().join(name);
    ok(&["synth", "benchmark-pool", "--count", "3000", "-o", s(&p("pool.jsonl"))]);
    for run in ["a", "b"] {
        ok(&["--config", "configs/demo.toml", "train-sim", "--steps", "10", "-o", s(&p(&format!("train-{run}")))]);
        ok(&["curate", "--pool", s(&p("pool.jsonl")), "--total", "300", "-o", s(&p(&format!("curate-{run}")))]);
        ok(&["synth", "difficulty-pool", "--count", "5000", "-o", s(&p(&format!("d-{run}.jsonl")))]);
        ok(&["filter", "--samples", s(&p(&format!("d-{run}.jsonl"))), "--strategy", "uniform", "--target-count", "500", "-o", s(&p(&format!("f-{run}.jsonl")))]);
    }
    for f in ["report.jsonl", "summary.json", "checkpoint.json", "removed_log.csv"] {
        assert_eq!(fs::read(p("train-a").join(f)).unwrap(), fs::read(p("train-b").join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read(p("d-a.jsonl")).unwrap(), fs::read(p("d-b.jsonl")).unwrap());
    assert_eq!(fs::read(p("f-a.jsonl")).unwrap(), fs::read(p("f-b.jsonl")).unwrap());
    for f in ["curated.jsonl", "balance.json"] {
        assert_eq!(fs::read(p("curate-a").join(f)).unwrap(), fs::read(p("curate-b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn validation_failures_write_nothing() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    let bad = train_sim(&dir, &["--steps", "0"]);
    assert_eq!(code(&bad), 1);
    assert!(!dir.exists());

    let bad_config = tmp.path().join("bad.toml");
    fs::write(&bad_config, "[trainer]\nlearning_rate = -1.0\n").unwrap();
    let run = tempora(&["--config", s(&bad_config), "train-sim", "-o", s(&dir)]);
    assert_eq!(code(&run), 1);
    assert!(!dir.exists());

    let eval_out = tmp.path().join("eval.json");
    let run = tempora(&[
        "evaluate",
        "--samples",
        "data/demo_samples.jsonl",
        "--predictions",
        "data/worked_example_responses.jsonl",
        "-o",
        s(&eval_out),
    ]);
    assert_eq!(code(&run), 1);
    assert!(!eval_out.exists());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1, "only bad.toml should remain");
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = TempDir::new().unwrap();
    let missing = tempora(&["score", "--samples", "no/such/file.jsonl", "--responses", "data/worked_example_responses.jsonl"]);
    assert_eq!(code(&missing), 2);

    let target = tmp.path().join("out.jsonl");
    fs::write(tmp.path().join("out.jsonl.lock"), "1").unwrap();
    let locked = tempora(&["synth", "training-set", "-o", s(&target)]);
    assert_eq!(code(&locked), 2);
    assert!(!target.exists());
    fs::remove_file(tmp.path().join("out.jsonl.lock")).unwrap();
    ok(&["synth", "training-set", "-o", s(&target)]);
    assert!(!tmp.path().join("out.jsonl.lock").exists());
}

#[test]
fn unknown_flags_are_errors_and_help_lists_flags() {
    assert_eq!(code(&tempora(&["train-sim", "--stepz", "3"])), 1);
    assert_eq!(code(&tempora(&["--bogus"])), 1);
    let help = String::from_utf8(ok(&["train-sim", "--help"]).stdout).unwrap();
    for flag in [
        "--samples",
        "--steps",
        "--epochs",
        "--learning-rate",
        "--beta",
        "--group-size",
        "--aggregation",
        "--clip-epsilon",
        "--grid-size",
        "--curriculum",
        "--easy-threshold",
        "--iou-statistic",
        "--rescore",
        "--short-think-bias",
        "--seed",
        "--config",
        "--output",
        "--json",
        "--verbose",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn curriculum_removes_only_easy_samples() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    ok(&["--config", "configs/curriculum.toml", "train-sim", "-o", s(&dir)]);
    let csv = fs::read_to_string(dir.join("removed_log.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,id,iou"));
    let ious: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!ious.is_empty());
    assert!(ious.iter().all(|&iou| iou > 0.7), "{ious:?}");
}

#[test]
fn aggregation_modes_give_different_objective_traces() {
    let tmp = TempDir::new().unwrap();
    let trace = |mode: &str| {
        let dir = tmp.path().join(mode);
        assert_eq!(code(&train_sim(&dir, &["--steps", "2", "--aggregation", mode])), 0);
        jsonl(&dir.join("report.jsonl")).iter().map(|r| r["objective"].as_f64().unwrap()).collect::<Vec<_>>()
    };
    let (sample, token) = (trace("sample-level"), trace("token-level"));
    assert_ne!(sample[0], token[0]);
    assert_ne!(sample[1], token[1]);
}

#[test]
fn objective_on_mixed_length_groups() {
    let tmp = TempDir::new().unwrap();
    let rollouts = tmp.path().join("rollouts.jsonl");
    let response = |total: f64, n: usize| {
        serde_json::json!({
            "text": "",
            "reward": { "iou": 0.0, "tiou": 0.0, "format": 0, "total": total },
            "logp_current": vec![-1.0; n],
            "logp_old": vec![-1.0; n],
            "logp_ref": vec![-1.0; n],
        })
    };
    let group = serde_json::json!({ "sample_id": "g", "responses": [response(1.0, 1), response(0.0, 3)] });
    fs::write(&rollouts, format!("{group}\n")).unwrap();
    let value = |mode: &str| {
        stdout_json(&ok(&["objective", "--rollouts", s(&rollouts), "--beta", "0", "--aggregation", mode, "--json"]))["value"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(value("sample-level"), 0.0);
    assert_eq!(value("token-level"), -0.5);
}

#[test]
fn annotate_with_builtin_and_external_annotator() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a.jsonl"), tmp.path().join("b.jsonl"));
    ok(&["annotate", "--samples", "data/demo_samples.jsonl", "-o", s(&a)]);
    let external = format!("{} annotate-serve", env!("CARGO_BIN_EXE_tempora"));
    let run = ok(&["annotate", "--samples", "data/demo_samples.jsonl", "--command", &external, "--concurrency", "2", "-o", s(&b), "--json"]);
    assert_eq!(stdout_json(&run)["labeled"], 16);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(jsonl(&a).iter().all(|s| s["category"].is_string()));
}
