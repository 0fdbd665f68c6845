//! Repair-pipeline integration: the captured diagnostic corpus classifies
//! 100% against hand labels, and every repair fixture converges to a clean
//! execution on stock SQLite within the model-call budget.

use std::path::PathBuf;

use serde::Deserialize;

use sqlfuzz_core::case::TestCase;
use sqlfuzz_core::exec::{CoverageOracle, Driver, DriverKind, ProcessDriver, TargetConfig};
use sqlfuzz_core::llm::{MockScript, ModelParams, PromptKind, ScriptedClient};
use sqlfuzz_core::repair::{repair_loop, ClassifierTable, ErrorCategory};
use sqlfuzz_core::schema::SchemaContext;

fn fixture(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(path)
}

fn sqlite_shell() -> PathBuf {
    let mut path = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    path.pop();
    path.pop();
    path.push("target");
    path.push(if cfg!(debug_assertions) { "debug" } else { "release" });
    path.push("sqlite-shell");
    path
}

fn sqlite_driver(work: &tempfile::TempDir) -> ProcessDriver {
    ProcessDriver::launch(TargetConfig {
        kind: DriverKind::Embedded,
        command: sqlite_shell(),
        args: vec![],
        statement_timeout_ms: 5_000,
        work_dir: Some(work.path().to_path_buf()),
        coverage_map_path: None,
        map_size: 65_536,
        prelude_override: None,
        error_marker: true,
    })
    .expect("driver launches")
}

#[derive(Deserialize)]
struct CorpusEntry {
    dialect: String,
    #[serde(default)]
    code: Option<i64>,
    message: String,
    label: String,
}

#[test]
fn captured_corpus_classifies_100_percent() {
    let text = std::fs::read_to_string(fixture("errors/corpus.jsonl")).unwrap();
    let sqlite = ClassifierTable::builtin("sqlite").unwrap();
    let mysql = ClassifierTable::builtin("mysql_subset").unwrap();
    let mut total = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let entry: CorpusEntry = serde_json::from_str(line).unwrap();
        let table = match entry.dialect.as_str() {
            "sqlite" => &sqlite,
            "mysql_subset" => &mysql,
            other => panic!("unknown dialect {other}"),
        };
        let expected = ErrorCategory::parse(&entry.label)
            .unwrap_or_else(|| panic!("bad label {}", entry.label));
        let (got, _) = table.classify(entry.code, &entry.message);
        assert_eq!(
            got, expected,
            "misclassified [{:?}] {:?} (dialect {})",
            entry.code, entry.message, entry.dialect
        );
        total += 1;
    }
    assert!(total >= 50, "corpus must hold at least 50 labeled diagnostics, found {total}");
}

#[derive(Deserialize)]
struct RepairFixture {
    name: String,
    case: Vec<String>,
    script: Vec<sqlfuzz_core::llm::ScriptEntry>,
    #[serde(default)]
    expect_model_calls: Option<usize>,
}

#[test]
fn repair_fixtures_converge_on_stock_sqlite() {
    let text = std::fs::read_to_string(fixture("repair/repair_cases.json")).unwrap();
    let fixtures: Vec<RepairFixture> = serde_json::from_str(&text).unwrap();
    assert!(fixtures.len() >= 10, "need at least 10 repair fixtures");

    let table = ClassifierTable::builtin("sqlite").unwrap();
    let params = ModelParams::default();
    for fx in fixtures {
        let work = tempfile::tempdir().unwrap();
        let mut driver = sqlite_driver(&work);
        driver.reset_environment().unwrap();
        let mut oracle = CoverageOracle::behavioral();
        let client = ScriptedClient::new(MockScript { entries: fx.script.clone() });
        let mut context = SchemaContext::default();
        let case = TestCase::from_statements(fx.case.clone());
        let report = repair_loop(
            case,
            &mut driver,
            &mut oracle,
            &table,
            &client,
            &params,
            &mut context,
            3,
        )
        .unwrap_or_else(|e| panic!("{}: {e}", fx.name));
        assert!(
            report.outcome.is_clean(),
            "{}: final execution not clean: {:?}",
            fx.name,
            report.outcome.per_statement
        );
        assert!(!report.repair_failed, "{}: repair flagged as failed", fx.name);
        assert!(report.model_calls <= 3, "{}: budget exceeded", fx.name);
        if let Some(expected) = fx.expect_model_calls {
            assert_eq!(report.model_calls, expected, "{}: model call count", fx.name);
        }
    }
}

#[test]
fn repair_that_keeps_introducing_errors_exhausts_the_budget() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = sqlite_driver(&work);
    driver.reset_environment().unwrap();
    let mut oracle = CoverageOracle::behavioral();
    // every "fix" references yet another missing table
    let script = MockScript {
        entries: vec![
            sqlfuzz_core::llm::ScriptEntry {
                kind: Some(PromptKind::Repair),
                matcher: Some("no such table: t9".into()),
                response: sqlfuzz_core::llm::ScriptResponse::Statements(vec![
                    "SELECT * FROM t8;".into(),
                ]),
            },
            sqlfuzz_core::llm::ScriptEntry {
                kind: Some(PromptKind::Repair),
                matcher: Some("no such table: t8".into()),
                response: sqlfuzz_core::llm::ScriptResponse::Statements(vec![
                    "SELECT * FROM t7;".into(),
                ]),
            },
            sqlfuzz_core::llm::ScriptEntry {
                kind: Some(PromptKind::Repair),
                matcher: Some("no such table: t7".into()),
                response: sqlfuzz_core::llm::ScriptResponse::Statements(vec![
                    "SELECT * FROM t6;".into(),
                ]),
            },
        ],
    };
    let client = ScriptedClient::new(script);
    let table = ClassifierTable::builtin("sqlite").unwrap();
    let mut context = SchemaContext::default();
    let case = TestCase::from_statements(["SELECT * FROM t9;"]);
    let report = repair_loop(
        case,
        &mut driver,
        &mut oracle,
        &table,
        &client,
        &ModelParams::default(),
        &mut context,
        3,
    )
    .unwrap();
    assert!(report.repair_failed);
    assert_eq!(report.model_calls, 3, "exactly max_rounds model calls");
    assert_eq!(client.log.count_of(PromptKind::Repair), 3);
}

#[test]
fn semantic_repair_registers_new_definitions_into_context() {
    let work = tempfile::tempdir().unwrap();
    let mut driver = sqlite_driver(&work);
    driver.reset_environment().unwrap();
    let mut oracle = CoverageOracle::behavioral();
    let client = ScriptedClient::new(MockScript {
        entries: vec![sqlfuzz_core::llm::ScriptEntry {
            kind: Some(PromptKind::Repair),
            matcher: None,
            response: sqlfuzz_core::llm::ScriptResponse::Statements(vec![
                "CREATE TABLE t9 (c0 INT);".into(),
                "SELECT * FROM t9;".into(),
            ]),
        }],
    });
    let table = ClassifierTable::builtin("sqlite").unwrap();
    let mut context = SchemaContext::default();
    let case = TestCase::from_statements(["SELECT * FROM t9;"]);
    let report = repair_loop(
        case,
        &mut driver,
        &mut oracle,
        &table,
        &client,
        &ModelParams::default(),
        &mut context,
        3,
    )
    .unwrap();
    assert!(report.outcome.is_clean());
    assert!(context.contains("t9"), "repair inserted t9 must land in the schema context");
}
