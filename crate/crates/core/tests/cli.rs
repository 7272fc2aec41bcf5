use std::fs;
use std::io::Cursor;
use std::path::Path;

use codetations::cli::{run, Io, EXIT_ERROR, EXIT_FINDINGS, EXIT_OK, EXIT_USAGE};
use codetations::StoreRoot;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(repo: &Path, args: &[&str], stdin: &str) -> Run {
    let mut input = Cursor::new(stdin.as_bytes().to_vec());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut io = Io {
        stdin: &mut input,
        stdout: &mut out,
        stderr: &mut err,
    };
    let mut argv = vec!["codetations", "--repo", repo.to_str().unwrap()];
    argv.extend_from_slice(args);
    let code = run(argv, &mut io);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn repo(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.rs"), text).unwrap();
    dir
}

#[test]
fn init_is_idempotent() {
    let dir = repo("");
    assert_eq!(cli(dir.path(), &["init"], "").stdout, "initialized .codetations\n");
    assert_eq!(cli(dir.path(), &["init"], "").stdout, "already initialized\n");
    assert!(dir.path().join(".codetations/config.json").is_file());
}

#[test]
fn help_and_version_exit_zero() {
    let dir = repo("");
    let help = cli(dir.path(), &["--help"], "");
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("reattach"));
    assert_eq!(cli(dir.path(), &["--version"], "").code, EXIT_OK);
    assert_eq!(cli(dir.path(), &[], "").code, EXIT_USAGE);
}

#[test]
fn human_readable_listing() {
    let dir = repo("let total = items.len();\n");
    let id = cli(dir.path(), &["add", "m.rs", "--match", "items.len()", "--data", "{\"text\":\"n\"}"], "").stdout;
    let id = id.trim();
    let list = cli(dir.path(), &["list", "m.rs"], "");
    assert!(list.stdout.starts_with(id), "{}", list.stdout);
    assert!(list.stdout.contains("[12,23)"));
    assert!(list.stdout.contains("\"items.len()\""));
    let show = cli(dir.path(), &["show", "m.rs", &id[..6]], "");
    assert!(show.stdout.contains("data:   {\"text\":\"n\"}"), "{}", show.stdout);
    assert_eq!(cli(dir.path(), &["list", "other.rs"], "").stdout, "other.rs: no annotations\n");
}

#[test]
fn bad_data_is_an_operation_error() {
    let dir = repo("abc");
    let r = cli(dir.path(), &["add", "m.rs", "--start", "0", "--end", "1", "--data", "{oops"], "");
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.stderr.starts_with("error: invalid: --data is not JSON"), "{}", r.stderr);
    let r = cli(dir.path(), &["add", "m.rs", "--start", "2", "--end", "1"], "");
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn interactive_reattach_decline_keeps_sidecar() {
    let dir = repo("fn a() {}\nfn b() {}\n");
    cli(dir.path(), &["add", "m.rs", "--match", "fn b()"], "");
    let sidecar = StoreRoot::new(dir.path()).sidecar_abs("m.rs").unwrap();
    let before = fs::read(&sidecar).unwrap();
    fs::write(dir.path().join("m.rs"), "fn a() {}\n\nfn b () {}\n").unwrap();

    let r = cli(dir.path(), &["reattach", "m.rs"], "n\n");
    assert_eq!(r.code, EXIT_FINDINGS);
    assert!(r.stdout.contains("accept? [y/N]"));
    assert_eq!(fs::read(&sidecar).unwrap(), before);

    let r = cli(dir.path(), &["reattach", "m.rs"], "y\n");
    assert_eq!(r.code, EXIT_OK, "{}", r.stdout);
    assert!(r.stdout.contains("applied 1 proposals"));
    assert_eq!(cli(dir.path(), &["check", "m.rs"], "").stdout, "m.rs: fresh (0 orphaned)\n");
}

#[test]
fn threshold_and_strategy_flags() {
    let dir = repo("let alpha = compute(1);\n");
    cli(dir.path(), &["add", "m.rs", "--match", "compute(1)"], "");
    fs::write(dir.path().join("m.rs"), "let alpha = compute(2);\n").unwrap();

    let exact = cli(dir.path(), &["reattach", "m.rs", "--strategy", "exact", "--yes"], "");
    assert_eq!(exact.code, EXIT_FINDINGS, "{}", exact.stdout);
    assert!(exact.stdout.contains("orphaned (no candidate)"));

    let strict = cli(dir.path(), &["reattach", "m.rs", "--threshold", "0.999", "--yes"], "");
    assert_eq!(strict.code, EXIT_FINDINGS);
    assert!(strict.stdout.contains("orphaned (best score"));

    assert_eq!(cli(dir.path(), &["reattach", "m.rs", "--threshold", "1.5"], "").code, EXIT_ERROR);
    let fuzzy = cli(dir.path(), &["reattach", "m.rs", "--yes"], "");
    assert_eq!(fuzzy.code, EXIT_OK, "{}", fuzzy.stdout);
}

#[test]
fn semantic_without_provider_falls_back_with_warning() {
    let dir = repo("let alpha = compute(1);\n");
    cli(dir.path(), &["add", "m.rs", "--match", "compute(1)"], "");
    fs::write(dir.path().join("m.rs"), "let alpha = compute(11);\n").unwrap();
    let r = cli(dir.path(), &["reattach", "m.rs", "--strategy", "semantic", "--yes"], "");
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stderr.contains("no completion provider configured"), "{}", r.stderr);

    let r = cli(dir.path(), &["reattach", "m.rs", "--strategy", "semantic", "--provider", "carrier-pigeon"], "");
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn semantic_with_mock_provider() {
    let dir = repo("fn main() {\n    let v = load();\n}\n");
    cli(dir.path(), &["add", "m.rs", "--match", "let v = load();"], "");
    fs::write(dir.path().join("m.rs"), "fn main() {\n    let v = load()?;\n}\n").unwrap();
    let r = cli(dir.path(), &["reattach", "m.rs", "--strategy", "semantic", "--provider", "mock", "--yes"], "");
    assert_eq!(r.code, EXIT_OK, "{}{}", r.stdout, r.stderr);
    let check = cli(dir.path(), &["check", "--json"], "");
    assert_eq!(check.code, EXIT_OK);
}

#[test]
fn binary_reports_usage_errors_on_stderr() {
    let dir = repo("");
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_codetations"))
        .args(["--repo", dir.path().to_str().unwrap(), "move", "m.rs"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));
}
