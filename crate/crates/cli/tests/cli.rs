use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edf_cli::{CheckReport, ConsistencyReport, TestName};
use edf_core::Outcome;

const GAMMA_A: &str = r#"{"name": "gamma_a", "tasks": [{"c": 1, "d": 2, "t": 4}, {"c": 2, "d": 4, "t": 6}]}"#;
const GAMMA_B: &str = r#"{"name": "gamma_b", "tasks": [{"c": 2, "d": 2, "t": 4}, {"c": 1, "d": 2, "t": 5}]}"#;

fn edfeas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edfeas")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn fixtures() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "gamma_a.json", GAMMA_A).display().to_string();
    let b = write(dir.path(), "gamma_b.json", GAMMA_B).display().to_string();
    (dir, a, b)
}

#[test]
fn check_reports_witness_and_stats() {
    let (_dir, a, b) = fixtures();
    let out = edfeas(&["check", &b, "--test", "pd"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("witness=2"));

    let out = edfeas(&["check", &a, "--test", "devi", "--stats"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("intervals_checked=2"), "{text}");
    for field in ["level_reached=1", "revisions=0", "horizon_used="] {
        assert!(text.contains(field), "{text}");
    }

    assert_eq!(code(&edfeas(&["check", &b, "--test", "devi"])), 2);
}

#[test]
fn usage_errors_exit_64() {
    let (_dir, a, _) = fixtures();
    assert_eq!(code(&edfeas(&["check", &a, "--test", "superpos", "--level", "0"])), 64);
    assert_eq!(code(&edfeas(&["check", &a, "--test", "pd", "--level", "2"])), 64);
    assert_eq!(code(&edfeas(&["check", &a, "--test", "superpos", "--level-cap", "2"])), 64);
    assert_eq!(code(&edfeas(&["check", &a, "--test", "nosuch"])), 64);
    assert_eq!(code(&edfeas(&["frobnicate"])), 64);
    assert_eq!(code(&edfeas(&[])), 64);
    assert_eq!(code(&edfeas(&["--help"])), 0);
}

#[test]
fn input_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"tasks": [{"c": 3, "d": 2, "t": 2}]}"#);
    assert_eq!(code(&edfeas(&["check", bad.to_str().unwrap()])), 65);
    let junk = write(dir.path(), "junk.json", "not json");
    assert_eq!(code(&edfeas(&["check", junk.to_str().unwrap()])), 65);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&edfeas(&["check", missing.to_str().unwrap()])), 74);
    // Utilization bound needs implicit deadlines.
    let a = write(dir.path(), "a.json", GAMMA_A);
    assert_eq!(code(&edfeas(&["check", a.to_str().unwrap(), "--test", "ll"])), 65);
}

#[test]
fn horizon_unavailable_exits_70() {
    // Full load with a hyperperiod beyond 64 bits.
    let (p1, p2, p3) = (4_194_301u64, 4_194_287u64, 4_194_277u64);
    let text = format!(
        r#"{{"tasks": [{{"c": {}, "d": {}, "t": {}}}, {{"c": {}, "d": {}, "t": {}}}, {{"c": {}, "d": {}, "t": {}}}]}}"#,
        5_864_034_052_795u64,
        p1 * p2,
        p1 * p2,
        2_197_007u64,
        p2 * p3,
        p2 * p3,
        11_728_037_946_571u64,
        p1 * p3,
        p1 * p3
    );
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "full.json", &text);
    let path = path.to_str().unwrap();
    assert_eq!(code(&edfeas(&["check", path, "--test", "pd"])), 70);
    assert_eq!(code(&edfeas(&["check", path, "--test", "oracle-sim"])), 70);
    assert_eq!(code(&edfeas(&["check", path, "--test", "devi"])), 0);
}

#[test]
fn json_output_round_trips() {
    let (_dir, a, b) = fixtures();
    for (file, test) in [(&b, "pd"), (&a, "dynamic"), (&a, "oracle-sim"), (&b, "superpos")] {
        let out = edfeas(&["check", file, "--test", test, "--format", "json"]);
        let text = stdout(&out);
        let report: CheckReport = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&report).unwrap(), text.trim_end());
        assert_eq!(report.test.name(), test);
        let expected = match report.verdict.outcome {
            Outcome::Feasible => 0,
            Outcome::Infeasible => 1,
            Outcome::Unknown => 2,
        };
        assert_eq!(code(&out), expected);
    }
    let out = edfeas(&["check", &b, "--test", "pd", "--format", "json"]);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["witness"], 2);
    assert_eq!(value["outcome"], "infeasible");
    assert!(value["stats"]["intervals_checked"].is_u64());
}

#[test]
fn check_all_reports_consistency() {
    let (_dir, a, b) = fixtures();
    let out = edfeas(&["check", &a, "--test", "all"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("consistent: yes"));

    let out = edfeas(&["check", &b, "--test", "all", "--format", "json"]);
    assert_eq!(code(&out), 1);
    let report: ConsistencyReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.consistent);
    let tests: Vec<TestName> = report.results.iter().map(|r| r.test).collect();
    assert!(tests.contains(&TestName::OracleSim) && tests.contains(&TestName::Allapprox));
    assert!(report.skipped.iter().any(|(t, _)| *t == TestName::Ll));
}

#[test]
fn gen_writes_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    for out_dir in [&x, &y] {
        let out = edfeas(&["gen", "--count", "3", "--seed", "7", "--out-dir", out_dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
        assert!(stdout(&out).contains("mean="));
    }
    for i in 0..3 {
        let name = format!("7-{i}.json");
        let first = fs::read(x.join(&name)).unwrap();
        assert_eq!(first, fs::read(y.join(&name)).unwrap());
        let ts = edf_core::parse_taskset(std::str::from_utf8(&first).unwrap()).unwrap();
        assert_eq!(ts.name(), Some(format!("7-{i}").as_str()));
    }
}

#[test]
fn gen_gap_zero_and_bad_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("zero");
    let out = edfeas(&["gen", "--count", "4", "--gap", "0", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for entry in fs::read_dir(&out_dir).unwrap() {
        let ts = edf_core::parse_taskset(&fs::read_to_string(entry.unwrap().path()).unwrap()).unwrap();
        assert!(ts.all_implicit_deadlines());
    }
    let bad = dir.path().join("bad");
    assert_eq!(code(&edfeas(&["gen", "--t-min", "10", "--t-max", "5", "--out-dir", bad.to_str().unwrap()])), 65);
    assert!(!bad.exists());
    assert_eq!(code(&edfeas(&["gen", "--u-min", "lots"])), 64);
}

#[test]
fn gen_rematerializes_bench_sets() {
    let dir = tempfile::tempdir().unwrap();
    let out = edfeas(&[
        "gen",
        "--experiment",
        "utilization",
        "--index",
        "1000004",
        "--seed",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("3-1000004.json")).unwrap();
    let expected = edf_bench::materialize(edf_bench::Experiment::Utilization, 3, 1_000_004).unwrap();
    assert_eq!(edf_core::parse_taskset(&text).unwrap().tasks(), expected.tasks());
    assert_eq!(code(&edfeas(&["gen", "--experiment", "utilization", "--index", "9000000"])), 65);
}

#[test]
fn bench_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let run = |out: &Path, jobs: &str| {
        edfeas(&[
            "bench",
            "--experiment",
            "utilization",
            "--sets",
            "3",
            "--seed",
            "1",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let first = run(&a, "1");
    assert_eq!(code(&first), 0);
    assert_eq!(stdout(&first).lines().count(), 3);
    assert_eq!(code(&run(&b, "2")), 0);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 5);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    assert_eq!(code(&edfeas(&["bench", "--experiment", "fig10"])), 64);
    assert_eq!(code(&edfeas(&["bench", "--experiment", "utilization", "--sets", "0"])), 64);
    let unwritable = dir.path().join("missing/dir/out.csv");
    let out = edfeas(&["bench", "--experiment", "utilization", "--sets", "1", "--out", unwritable.to_str().unwrap()]);
    assert_eq!(code(&out), 74);
}

#[test]
fn bench_period_ratio_row_count() {
    let out = edfeas(&["bench", "--experiment", "period-ratio", "--sets", "2", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 5 * 5);
    assert!(text.starts_with(
        "experiment,param,algorithm,sets,avg_iterations,max_iterations,accept_rate,infeasible_rate,excluded\n"
    ));
}
