//! Runs the `wnl` binary on the documents in `tests/data` and compares its
//! text and JSON output with `tests/golden`. Set `WNL_UPDATE_GOLDENS=1` to
//! rewrite the golden files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn dir(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(sub)
}

fn wnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wnl")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn golden(name: &str, actual: &str) {
    let path = dir("golden").join(name);
    if std::env::var_os("WNL_UPDATE_GOLDENS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, want, "output differs from {}", path.display());
}

/// Runs `command` on `data/<file>.json`, checks the exit code and both goldens.
fn case(name: &str, command: &[&str], file: &str, exit: i32) {
    let json = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("{name}.json"));
    let input = dir("data").join(format!("{file}.json"));
    let mut args = command.to_vec();
    args.extend([input.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    let out = wnl(&args);
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(code(&out), exit, "{name}: {stdout}{}", String::from_utf8_lossy(&out.stderr));
    golden(&format!("{name}.txt"), &stdout);
    let mut report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let timings = report.as_object_mut().unwrap().remove("timings").expect("timings are reported");
    assert!(timings.as_object().unwrap().contains_key("total"));
    assert_eq!(report["version"], 1);
    golden(&format!("{name}.json"), &(serde_json::to_string_pretty(&report).unwrap() + "\n"));
}

#[test]
fn first_order_constant_operator_passes() {
    case("jacobi_dx", &["jacobi"], "kdv_dx", 0);
}

#[test]
fn third_order_local_operator_passes_schouten() {
    case("jacobi_kdv_second_op", &["jacobi", "--backend=op"], "kdv_second", 0);
}

#[test]
fn opaque_metric_operator_passes_pva() {
    case("jacobi_opaque_g_pva", &["jacobi", "--backend", "pva"], "opaque_g", 0);
}

#[test]
fn translation_tail_passes_dist() {
    case("jacobi_sine_tail_dist", &["jacobi", "--backend=dist"], "sine_tail", 0);
}

#[test]
fn flat_metric_with_identity_tail_fails() {
    case("jacobi_flat_tail", &["jacobi"], "flat_tail_fail", 1);
}

#[test]
fn jacobi_refuses_non_skew_operators() {
    case("jacobi_not_skew", &["jacobi"], "not_skew", 1);
}

#[test]
fn skew_conditions_of_the_symbolic_operator() {
    case("skew_hydro_symbolic", &["skew"], "hydro_symbolic", 1);
}

#[test]
fn skew_passes_for_the_opaque_metric_operator() {
    case("skew_opaque_g", &["skew"], "opaque_g", 0);
}

#[test]
fn conditions_explain_the_flat_tail_failure() {
    case("conditions_flat_tail", &["conditions"], "flat_tail_fail", 1);
}

#[test]
fn conditions_hold_for_the_translation_tail() {
    case("conditions_sine_tail", &["conditions"], "sine_tail", 0);
}

#[test]
fn compare_cross_checks_every_backend() {
    case("compare_flat_tail", &["compare", "--pairwise"], "flat_tail_fail", 1);
}

#[test]
fn compare_the_symbolic_operator() {
    case("compare_hydro_symbolic", &["compare"], "hydro_symbolic", 1);
}

#[test]
fn adjoint_document() {
    case("adjoint_opaque_g", &["adjoint"], "opaque_g", 0);
}

#[test]
fn adjoint_output_is_a_loadable_document() {
    let input = dir("data").join("sine_tail.json");
    let out = wnl(&["adjoint", input.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let adj = wnl_cli::load_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let p = wnl_cli::load_str(&std::fs::read_to_string(input).unwrap()).unwrap();
    assert_eq!(adj.op, p.op.adjoint());
}

fn error_case(args: &[&str], needle: &str) {
    let out = wnl(args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(code(&out), 2, "{args:?}: {stderr}");
    assert!(stderr.contains(needle), "{args:?}: {stderr}");
    assert!(out.stdout.is_empty());
}

fn data(file: &str) -> String {
    dir("data").join(format!("{file}.json")).to_str().unwrap().to_string()
}

#[test]
fn input_errors_exit_with_two() {
    error_case(&["skew", &data("bad_sigma")], "local[0].sigma");
    error_case(&["skew", &data("bad_index")], "index 3 out of range 1..=2");
    error_case(&["skew", &data("unknown_symbol")], "unknown symbol `h`");
    error_case(&["skew", &data("bad_json")], "line 2, column");
    error_case(&["conditions", &data("kdv_second")], "not of hydrodynamic type");
    error_case(&["jacobi", "--backend=foo", &data("kdv_dx")], "invalid value 'foo'");
    error_case(&["skew", &data("does_not_exist")], "does_not_exist");
    error_case(&["frobnicate"], "unrecognized subcommand");
}

#[test]
fn reads_standard_input() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_wnl"))
        .args(["jacobi", "--backend=pva", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let text = std::fs::read_to_string(data("sine_tail")).unwrap();
    child.stdin.take().unwrap().write_all(text.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "jacobi [pva]: PASS\n");
}

#[test]
fn sequential_mode_prints_the_same_report() {
    let f = data("flat_tail_fail");
    let par = wnl(&["jacobi", &f]);
    let seq = wnl(&["jacobi", &f, "--sequential"]);
    assert_eq!(code(&seq), 1);
    assert_eq!(par.stdout, seq.stdout);
}
