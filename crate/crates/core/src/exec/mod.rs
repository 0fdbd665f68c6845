//! Target execution: drivers for client-server and embedded DBMS shells,
//! crash detection, state reset, and coverage accounting. Exactly one
//! execution thread owns a driver; that is the determinism backbone.

mod coverage;
mod fake;
mod process;

pub use coverage::{bucketize, CoverageOracle, CoverageSample, DEFAULT_MAP_SIZE};
pub use fake::{FakeAction, FakeDriver, FakeRule};
pub use process::{ProcessDriver, TargetConfig};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::case::{StatementKind, TestCase};
use crate::sqltext::mask_volatile;

/// Exact reset prelude sent to client-server targets.
pub const CLIENT_SERVER_RESET_PRELUDE: &str =
    "DROP DATABASE IF EXISTS test_db; CREATE DATABASE test_db; USE test_db;";

/// Dot-command pair used to alternate database files on embedded targets.
pub const EMBEDDED_OPEN_TMP: &str = ".open tmp.db";
pub const EMBEDDED_OPEN_TEST: &str = ".open test.db";

/// Number of trailing stderr lines kept as crash evidence.
pub const DIAGNOSTIC_TAIL_LINES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    ClientServer,
    Embedded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementResult {
    pub status: StatementStatus,
    pub code: Option<i64>,
    pub message: Option<String>,
    pub elapsed: Duration,
}

impl StatementResult {
    pub fn ok(elapsed: Duration) -> Self {
        StatementResult { status: StatementStatus::Ok, code: None, message: None, elapsed }
    }

    pub fn error(code: Option<i64>, message: impl Into<String>, elapsed: Duration) -> Self {
        StatementResult {
            status: StatementStatus::Error,
            code,
            message: Some(message.into()),
            elapsed,
        }
    }

    pub fn is_error(&self) -> bool {
        self.status == StatementStatus::Error
    }

    /// Behavioral code surrogate: the numeric code when the engine reports
    /// one, otherwise a stable hash of the masked diagnostic text.
    pub fn behavior_code(&self) -> i64 {
        if self.status == StatementStatus::Ok {
            return 0;
        }
        if let Some(code) = self.code {
            return code;
        }
        match &self.message {
            Some(msg) => stable_hash(&mask_volatile(msg)),
            None => -1,
        }
    }
}

fn stable_hash(text: &str) -> i64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (i64::from_le_bytes(bytes)).unsigned_abs().min(i64::MAX as u64) as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalOrExit {
    Signal(i32),
    Exit(i32),
    /// Statement timeout with the session still alive.
    Hang,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashEvidence {
    pub trigger_index: usize,
    pub signal_or_exit: SignalOrExit,
    pub diagnostic_tail: Vec<String>,
    /// Hash of the masked diagnostic tail; stable across reruns of the same
    /// crash site.
    pub dedup_key: String,
}

impl CrashEvidence {
    pub fn new(signal_or_exit: SignalOrExit, diagnostic_tail: Vec<String>) -> Self {
        let dedup_key = dedup_key_for(&signal_or_exit, &diagnostic_tail);
        CrashEvidence { trigger_index: 0, signal_or_exit, diagnostic_tail, dedup_key }
    }
}

pub fn dedup_key_for(signal_or_exit: &SignalOrExit, tail: &[String]) -> String {
    let mut hasher = Sha256::new();
    match signal_or_exit {
        SignalOrExit::Signal(s) => hasher.update(format!("signal:{s}\n")),
        SignalOrExit::Exit(c) => hasher.update(format!("exit:{c}\n")),
        SignalOrExit::Hang => hasher.update("hang\n"),
    }
    for line in tail {
        hasher.update(mask_volatile(line));
        hasher.update("\n");
    }
    let digest = hasher.finalize();
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub per_statement: Vec<StatementResult>,
    pub crash: Option<CrashEvidence>,
    pub coverage_new_edges: u64,
    pub session_generation: u64,
}

impl ExecutionOutcome {
    pub fn is_clean(&self) -> bool {
        self.crash.is_none() && self.per_statement.iter().all(|r| !r.is_error())
    }

    pub fn error_indices(&self) -> Vec<usize> {
        self.per_statement
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_error())
            .map(|(i, _)| i)
            .collect()
    }
}

/// One statement's fate inside the driver.
#[derive(Debug)]
pub enum StepResult {
    Completed(StatementResult),
    Crashed(CrashEvidence),
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("target session is dead")]
    SessionDead,
    #[error("failed to launch target: {0}")]
    Spawn(String),
    #[error("target io failure: {0}")]
    Io(String),
}

/// A DBMS under test. Implementations own their child process exclusively.
pub trait Driver: Send {
    fn kind(&self) -> DriverKind;

    /// Reset state between cases. A dead session is relaunched first
    /// (increments the session generation), then the reset sequence runs.
    fn reset_environment(&mut self) -> Result<(), DriverError>;

    /// Kill and relaunch the target, bumping the session generation.
    fn restart(&mut self) -> Result<(), DriverError>;

    fn session_generation(&self) -> u64;

    fn run_statement(&mut self, sql: &str) -> Result<StepResult, DriverError>;

    /// Shared-map bytes after a case, when the target exposes one.
    fn coverage_map(&mut self) -> Option<Vec<u8>> {
        None
    }

    /// Exact statement stream sent in the current session generation.
    fn send_log(&self) -> Vec<String>;
}

/// Drive a full case: statements in order over the persistent session,
/// stopping at the first crash, then fold the case's coverage sample into
/// the oracle.
pub fn execute(
    driver: &mut dyn Driver,
    case: &TestCase,
    oracle: &mut CoverageOracle,
) -> Result<ExecutionOutcome, DriverError> {
    let mut per_statement = Vec::with_capacity(case.statement_count());
    let mut crash = None;
    let mut pairs: Vec<(StatementKind, i64)> = Vec::with_capacity(case.statement_count());
    for (index, stmt) in case.all_statements().enumerate() {
        match driver.run_statement(&stmt.text)? {
            StepResult::Completed(result) => {
                pairs.push((stmt.kind, result.behavior_code()));
                per_statement.push(result);
            }
            StepResult::Crashed(mut evidence) => {
                evidence.trigger_index = index;
                crash = Some(evidence);
                break;
            }
        }
    }
    let map = driver.coverage_map();
    let coverage_new_edges =
        oracle.delta(&CoverageSample { map: map.as_deref(), pairs: &pairs });
    Ok(ExecutionOutcome {
        per_statement,
        crash,
        coverage_new_edges,
        session_generation: driver.session_generation(),
    })
}

/// Retention gate: new coverage beyond the threshold, or any crash.
pub fn is_interesting(outcome: &ExecutionOutcome, threshold: u64) -> bool {
    outcome.coverage_new_edges > threshold || outcome.crash.is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_key_is_stable_under_masking() {
        let a = CrashEvidence::new(
            SignalOrExit::Signal(11),
            vec!["fault at 0xdeadbeef in page 4821".into()],
        );
        let b = CrashEvidence::new(
            SignalOrExit::Signal(11),
            vec!["fault at 0xfeedf00d in page 77".into()],
        );
        assert_eq!(a.dedup_key, b.dedup_key);
        let c = CrashEvidence::new(SignalOrExit::Signal(6), vec!["fault at 0x1 in page 1".into()]);
        assert_ne!(a.dedup_key, c.dedup_key);
    }

    #[test]
    fn interesting_iff_new_coverage_or_crash() {
        let outcome = ExecutionOutcome {
            per_statement: vec![],
            crash: None,
            coverage_new_edges: 0,
            session_generation: 1,
        };
        assert!(!is_interesting(&outcome, 0));
        let outcome = ExecutionOutcome { coverage_new_edges: 5, ..outcome.clone() };
        assert!(is_interesting(&outcome, 0));
        let crashed = ExecutionOutcome {
            per_statement: vec![],
            crash: Some(CrashEvidence::new(SignalOrExit::Signal(11), vec![])),
            coverage_new_edges: 0,
            session_generation: 1,
        };
        assert!(is_interesting(&crashed, 0));
    }
}
