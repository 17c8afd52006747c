use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use latentkd::eval::EvalResult;
use latentkd::pipeline::StageReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latentkd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--in", "x.jsonl"]).status.code(), Some(1));
    assert_eq!(
        run(&["gen-synth", "--seed", "seven", "--out", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = run(&[
        "pretrain-student",
        "--in",
        s(&missing),
        "--out",
        s(&dir.path().join("s.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"game_id\": 1}\n").unwrap();
    let out = run(&["stats", "--in", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "learning_rate = -1.0\n").unwrap();
    let out = run(&["pretrain-student", "--config", s(&cfg), "--in", s(&bad), "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["gen-synth", "--seed", "7", "--out", s(a.path())]);
    ok(&["gen-synth", "--seed", "7", "--out", s(b.path())]);
    for name in [
        "transcripts.jsonl",
        "validation.jsonl",
        "walkthroughs.jsonl",
        "held_out.jsonl",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name}");
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let c = tempfile::tempdir().unwrap();
    ok(&["gen-synth", "--seed", "8", "--out", s(c.path())]);
    assert_ne!(
        std::fs::read(a.path().join("transcripts.jsonl")).unwrap(),
        std::fs::read(c.path().join("transcripts.jsonl")).unwrap()
    );
}

#[test]
fn stats_writes_cdf_table() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = repo().join("crates/core/tests/fixtures/corpus_5.jsonl");
    let cdf = dir.path().join("cdf.csv");
    let stdout = ok(&["stats", "--in", s(&fixture), "--out", s(&cdf)]);
    let record: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(record["transcripts"]["mean_steps_per_reward"], 3.0);
    assert_eq!(
        std::fs::read_to_string(&cdf).unwrap(),
        "rank_fraction,normalized_score\n0.2,0\n0.4,0.25\n0.6,0.5\n0.8,0.8\n1,1\n"
    );
}

#[test]
fn intent_tag_reads_stdin() {
    let mut child = bin()
        .arg("intent-tag")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"north\ntake coal\nput coal in furnace\nlook\nxyzzy\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "north\tnavigate\ntake coal\thoard\nput coal in furnace\tinteract\nlook\texamine\nxyzzy\tother\n"
    );
}

#[test]
fn gradcheck_passes() {
    let stdout = ok(&["gradcheck", "--seed", "1"]);
    let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    for l in lines {
        assert!(l["max_relative_error"].as_f64().unwrap() < 1e-4, "{l}");
    }
}

#[test]
fn scripted_run_emits_eval_result() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let config = repo().join("configs/benchmark.toml");
    let common = ["--config", s(&config), "--seed", "3"];
    let log = p("run.jsonl");

    ok(&["gen-synth", "--seed", "3", "--out", s(dir.path())]);
    let stage = |args: &[&str]| {
        let mut all: Vec<&str> = args.to_vec();
        all.extend(common);
        all.extend(["--log", s(&log)]);
        let report: StageReport = serde_json::from_str(ok(&all).trim()).unwrap();
        assert!(report.final_loss.is_finite());
    };
    let (tr, wt) = (p("transcripts.jsonl"), p("walkthroughs.jsonl"));
    let (s1, t2, t3, s4) = (p("s1.ckpt"), p("t2.ckpt"), p("t3.ckpt"), p("s4.ckpt"));
    stage(&["pretrain-student", "--in", s(&tr), "--out", s(&s1)]);
    stage(&["pretrain-teacher", "--in", s(&tr), "--out", s(&t2)]);
    stage(&["finetune-teacher", "--in", s(&wt), "--teacher", s(&t2), "--out", s(&t3)]);
    stage(&[
        "distill",
        "--in",
        s(&wt),
        "--teacher",
        s(&t3),
        "--student",
        s(&s1),
        "--out",
        s(&s4),
    ]);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);

    let csv = p("eval.csv");
    let stdout = ok(&[
        "eval",
        "--in",
        s(&p("held_out.jsonl")),
        "--model",
        s(&s4),
        "--out",
        s(&csv),
    ]);
    let result: EvalResult = serde_json::from_str(stdout.trim()).unwrap();
    let hits = result.correct.iter().filter(|&&c| c).count();
    assert_eq!(result.overall, hits as f64 / result.correct.len() as f64);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("game_id,difficulty,n_samples,mean_valid_actions,recall_at_1\n"));
    assert_eq!(table.lines().count(), result.games.len() + 2);

    let validation: serde_json::Value = serde_json::from_str(&ok(&[
        "validate-9neg",
        "--seed",
        "3",
        "--in",
        s(&p("validation.jsonl")),
        "--model",
        s(&t2),
    ]))
    .unwrap();
    let r = validation["recall_at_1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&r));

    std::fs::write(p("a.json"), &stdout).unwrap();
    let test: serde_json::Value =
        serde_json::from_str(&ok(&["t-test", "--a", s(&p("a.json")), "--b", s(&p("a.json"))])).unwrap();
    assert_eq!(test["p_value"], 1.0);

    assert!(started.elapsed() < Duration::from_secs(300));
}
