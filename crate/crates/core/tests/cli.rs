use std::io::Write;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvetrace"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn problem_file(json: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    f.write_all(json.as_bytes()).unwrap();
    f
}

#[test]
fn help_and_list_succeed() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let list = run(&["--list"]);
    assert_eq!(list.status.code(), Some(0));
    let text = stdout(&list);
    for id in ["T1", "T6", "T11", "EX2", "EX4"] {
        assert!(text.contains(id), "{id} missing from the list");
    }
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--problem", "T12"]).status.code(), Some(1));
    assert_eq!(
        run(&["--problem", "T1", "--reorder", "sideways"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["--problem", "T1", "--thresh", "1", "--step", "0.1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn malformed_file_exits_2() {
    let f = problem_file("{ \"variables\": [\"x\"], ");
    assert_eq!(run(&["--system", f.path().to_str().unwrap()]).status.code(), Some(2));
    let f =
        problem_file(r#"{"variables": ["x", "y"], "equations": ["x + z", "y"], "lower": [-1, -1], "upper": [1, 1]}"#);
    assert_eq!(run(&["--system", f.path().to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unsolvable_ordering_exits_3() {
    // neither of the first two equations involves x or y
    let f = problem_file(
        r#"{"variables": ["x", "y", "z"], "equations": ["z - 1", "z^2 - 1", "x + y"],
            "lower": [-2, -2, -2], "upper": [2, 2, 2]}"#,
    );
    let out = run(&["--system", f.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solves_a_problem_file_and_writes_outputs() {
    let f = problem_file(
        r#"{"variables": ["x", "y"], "equations": ["x^2 + y^2 - 1", "x - y"],
            "lower": [-2, -2], "upper": [2, 2]}"#,
    );
    let dir = tempfile::tempdir().unwrap();
    let sols = dir.path().join("sols.json");
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "--system",
        f.path().to_str().unwrap(),
        "--solutions",
        sols.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--oracle",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("2 matched"), "{}", stdout(&out));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sols).unwrap()).unwrap();
    assert_eq!(json.to_string().matches("\"residual\"").count(), 2);
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.lines().count() > 10);
}

#[test]
fn t9_without_the_row_swap_finds_nothing() {
    let out = run(&["--problem", "T9", "--reorder", "none"]);
    assert_eq!(out.status.code(), Some(0));
    let row = stdout(&out).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split_whitespace().nth(3), Some("0"), "{row}");
    let out = run(&["--problem", "T9"]);
    let row = stdout(&out).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split_whitespace().nth(3), Some("1"), "{row}");
}
