//! Process-driver integration: sentinel segmentation against the real
//! embedded SQLite shell, crash/hang detection against a scripted fake
//! shell, and the golden reset byte sequences.

use std::path::PathBuf;
use std::time::Duration;

use sqlfuzz_core::case::TestCase;
use sqlfuzz_core::exec::{
    execute, CoverageOracle, Driver, DriverKind, ProcessDriver, SignalOrExit, StatementStatus,
    TargetConfig, CLIENT_SERVER_RESET_PRELUDE, EMBEDDED_OPEN_TEST, EMBEDDED_OPEN_TMP,
};

fn sqlite_shell_path() -> PathBuf {
    let mut path = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    path.pop();
    path.pop();
    path.push("target");
    path.push(if cfg!(debug_assertions) { "debug" } else { "release" });
    path.push("sqlite-shell");
    assert!(
        path.exists(),
        "sqlite-shell binary missing at {}; build the workspace first",
        path.display()
    );
    path
}

fn fake_shell_config(work: &tempfile::TempDir) -> TargetConfig {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fake_shell.sh");
    TargetConfig {
        kind: DriverKind::ClientServer,
        command: PathBuf::from("/bin/sh"),
        args: vec![script.to_string_lossy().into_owned()],
        statement_timeout_ms: 700,
        work_dir: Some(work.path().to_path_buf()),
        coverage_map_path: None,
        map_size: 65_536,
        prelude_override: None,
        error_marker: true,
    }
}

fn sqlite_config(work: &tempfile::TempDir) -> TargetConfig {
    TargetConfig {
        kind: DriverKind::Embedded,
        command: sqlite_shell_path(),
        args: vec![],
        statement_timeout_ms: 5_000,
        work_dir: Some(work.path().to_path_buf()),
        coverage_map_path: None,
        map_size: 65_536,
        prelude_override: None,
        error_marker: true,
    }
}

#[test]
fn sqlite_statements_get_per_statement_status() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(sqlite_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    // schema statements partition ahead of operations, so execution order is
    // CREATE, INSERT, SELECT t0, SELECT missing
    let case = TestCase::from_statements([
        "CREATE TABLE t0 (c0 INT);",
        "SELECT * FROM t0;",
        "SELECT * FROM missing;",
        "INSERT INTO t0 VALUES (1);",
    ]);
    let mut oracle = CoverageOracle::behavioral();
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert!(outcome.crash.is_none());
    assert_eq!(outcome.per_statement.len(), 4);
    assert_eq!(outcome.per_statement[0].status, StatementStatus::Ok);
    assert_eq!(outcome.per_statement[1].status, StatementStatus::Ok);
    assert_eq!(outcome.per_statement[2].status, StatementStatus::Ok);
    assert_eq!(outcome.per_statement[3].status, StatementStatus::Error);
    let message = outcome.per_statement[3].message.as_deref().unwrap();
    assert!(message.contains("no such table: missing"), "got: {message}");
}

#[test]
fn embedded_reset_isolates_cases() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(sqlite_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    let mut oracle = CoverageOracle::behavioral();
    let create = TestCase::from_statements(["CREATE TABLE t0 (c0 INT);"]);
    assert!(execute(&mut driver, &create, &mut oracle).unwrap().is_clean());

    driver.reset_environment().unwrap();
    let probe = TestCase::from_statements(["SELECT * FROM t0;"]);
    let outcome = execute(&mut driver, &probe, &mut oracle).unwrap();
    assert_eq!(outcome.per_statement[0].status, StatementStatus::Error, "t0 must be gone");

    // the reset alternation is exactly .open tmp.db / .open test.db
    let log = driver.full_send_log();
    let opens: Vec<&String> =
        log.iter().filter(|l| l.starts_with(".open")).collect();
    assert_eq!(opens[0], EMBEDDED_OPEN_TMP);
    assert_eq!(opens[1], EMBEDDED_OPEN_TEST);
    assert_eq!(opens[2], EMBEDDED_OPEN_TMP);
    assert_eq!(opens[3], EMBEDDED_OPEN_TEST);
}

#[test]
fn client_server_prelude_is_golden() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(fake_shell_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    let log = driver.full_send_log();
    assert_eq!(log[0], "DROP DATABASE IF EXISTS test_db; CREATE DATABASE test_db; USE test_db;");
    assert_eq!(log[0], CLIENT_SERVER_RESET_PRELUDE);
}

#[test]
fn fake_shell_error_lines_are_attributed() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(fake_shell_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    let case = TestCase::from_statements(["SELECT ok;", "SELECT FAILME;", "SELECT ok2;"]);
    let mut oracle = CoverageOracle::behavioral();
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert_eq!(outcome.per_statement[0].status, StatementStatus::Ok);
    assert_eq!(outcome.per_statement[1].status, StatementStatus::Error);
    assert_eq!(outcome.per_statement[1].code, Some(1064), "mysql-style code parsed");
    assert_eq!(outcome.per_statement[2].status, StatementStatus::Ok);
}

#[test]
fn signal_crash_detected_with_stable_dedup_key() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(fake_shell_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    let case = TestCase::from_statements(["SELECT 1;", "SELECT BOOM;", "SELECT 2;"]);
    let mut oracle = CoverageOracle::behavioral();
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    let crash = outcome.crash.expect("crash evidence");
    assert_eq!(crash.trigger_index, 1);
    assert_eq!(crash.signal_or_exit, SignalOrExit::Signal(libc_sigsegv()));
    assert!(crash.diagnostic_tail.iter().any(|l| l.contains("SEGV")));
    let first_key = crash.dedup_key.clone();
    assert_eq!(outcome.per_statement.len(), 1, "statements stop at the crash");

    // relaunch, replay: same site yields the same dedup key, new generation
    let generation = driver.session_generation();
    driver.reset_environment().unwrap();
    assert_eq!(driver.session_generation(), generation + 1);
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert_eq!(outcome.crash.expect("reproduces").dedup_key, first_key);
}

fn libc_sigsegv() -> i32 {
    11
}

#[test]
fn hang_is_a_crash_event_with_its_own_key() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(fake_shell_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    let case = TestCase::from_statements(["SELECT SLEEPME;"]);
    let mut oracle = CoverageOracle::behavioral();
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    let crash = outcome.crash.expect("hang evidence");
    assert_eq!(crash.signal_or_exit, SignalOrExit::Hang);
    assert!(crash.diagnostic_tail.last().unwrap().contains("timed out"));
}

#[test]
fn unterminated_quote_is_failed_locally_not_sent() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(sqlite_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    let before = driver.send_log().len();
    let case = TestCase::from_statements(["SELECT 'unterminated;"]);
    let mut oracle = CoverageOracle::behavioral();
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert_eq!(outcome.per_statement[0].status, StatementStatus::Error);
    assert_eq!(driver.send_log().len(), before, "statement never hit the wire");
    // session is still usable
    let ok = TestCase::from_statements(["SELECT 1;"]);
    assert!(execute(&mut driver, &ok, &mut oracle).unwrap().is_clean());
}

#[test]
fn coverage_map_file_is_consumed_when_configured() {
    let work = tempfile::tempdir().unwrap();
    let map_path = work.path().join("cov.map");
    std::fs::write(&map_path, vec![0u8; 65_536]).unwrap();
    let mut config = sqlite_config(&work);
    config.coverage_map_path = Some(map_path.clone());
    let mut driver = ProcessDriver::launch(config).unwrap();
    driver.reset_environment().unwrap();
    let mut oracle = CoverageOracle::shared_map(65_536);
    let case = TestCase::from_statements(["SELECT 1;"]);
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert_eq!(outcome.coverage_new_edges, 0, "all-zero map has nothing new");

    let mut map = vec![0u8; 65_536];
    map[7] = 1;
    map[4_096] = 64;
    std::fs::write(&map_path, &map).unwrap();
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert_eq!(outcome.coverage_new_edges, 2);
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert_eq!(outcome.coverage_new_edges, 0, "idempotent on an unchanged map");
}

#[test]
fn statement_timeout_default_and_elapsed_recorded() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = ProcessDriver::launch(sqlite_config(&work)).unwrap();
    driver.reset_environment().unwrap();
    let case = TestCase::from_statements(["SELECT 1;"]);
    let mut oracle = CoverageOracle::behavioral();
    let outcome = execute(&mut driver, &case, &mut oracle).unwrap();
    assert!(outcome.per_statement[0].elapsed < Duration::from_secs(5));
}
