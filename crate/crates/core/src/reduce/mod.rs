//! Replay-guided crash validation and dependency-preserving reduction:
//! confirm a crash in isolation or against the full session history, then
//! alternate sequence-level delta debugging with backward per-statement
//! simplification until a fixed point, emitting a replay-verified PoC.

mod ddmin;
mod simplify;

pub use ddmin::{ddmin_statements, DdminError};
pub use simplify::simplify_statement;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::TestCase;
use crate::exec::{CrashEvidence, Driver, DriverError, ExecutionOutcome, StepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashClass {
    /// The case alone reproduces the crash after a fresh restart.
    Isolated,
    /// Only the full session history replayed in order reproduces it.
    StateDependent,
    NonReproducible,
}

/// Every statement executed in the current session generation, with case
/// boundaries. Cleared whenever the target restarts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExecutionHistory {
    entries: Vec<HistoryEntry>,
    generation: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub case_id: u64,
    pub statements: Vec<String>,
}

impl ExecutionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the executed prefix of a case (crash trigger included). A
    /// session-generation change empties the history first.
    pub fn record_case(&mut self, case_id: u64, case: &TestCase, outcome: &ExecutionOutcome) {
        if outcome.session_generation != self.generation {
            self.entries.clear();
            self.generation = outcome.session_generation;
        }
        let mut executed = outcome.per_statement.len();
        if outcome.crash.is_some() {
            executed += 1; // the trigger statement ran
        }
        let statements: Vec<String> =
            case.all_statements().take(executed).map(|s| s.text.clone()).collect();
        if !statements.is_empty() {
            self.entries.push(HistoryEntry { case_id, statements });
        }
    }

    pub fn note_restart(&mut self, generation: u64) {
        self.entries.clear();
        self.generation = generation;
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    /// Flattened statement stream in execution order.
    pub fn statements(&self) -> Vec<String> {
        self.entries.iter().flat_map(|e| e.statements.iter().cloned()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("target unavailable: {0}")]
    TargetUnavailable(#[from] DriverError),
}

/// Restart + reset + replay; the crash evidence if the stream crashes.
fn replay(driver: &mut dyn Driver, statements: &[String]) -> Result<Option<CrashEvidence>, ReduceError> {
    driver.restart()?;
    driver.reset_environment()?;
    for (index, stmt) in statements.iter().enumerate() {
        match driver.run_statement(stmt)? {
            StepResult::Completed(_) => {}
            StepResult::Crashed(mut evidence) => {
                evidence.trigger_index = index;
                return Ok(Some(evidence));
            }
        }
    }
    Ok(None)
}

/// Replay the case alone, then the full history. Crash in step one means
/// Isolated; only-in-step-two means StateDependent; neither reproduces means
/// NonReproducible.
pub fn validate_crash(
    case: &TestCase,
    history: &ExecutionHistory,
    driver: &mut dyn Driver,
) -> Result<CrashClass, ReduceError> {
    let case_statements: Vec<String> =
        case.all_statements().map(|s| s.text.clone()).collect();
    if replay(driver, &case_statements)?.is_some() {
        return Ok(CrashClass::Isolated);
    }
    if !history.is_empty() && replay(driver, &history.statements())?.is_some() {
        return Ok(CrashClass::StateDependent);
    }
    Ok(CrashClass::NonReproducible)
}

/// A validated, minimized crash reproducer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PocReport {
    pub statements: Vec<String>,
    pub crash_class: CrashClass,
    pub evidence: CrashEvidence,
    pub reduction_log: Vec<String>,
    pub original_case_id: u64,
    /// Set when the confirmation replays disagreed; the report then carries
    /// the unreduced input.
    pub oracle_flaky: bool,
}

impl PocReport {
    /// Serialize as a directory: poc.sql, meta.json, reduction.log.
    pub fn write_to_dir(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut sql = String::new();
        for stmt in &self.statements {
            sql.push_str(stmt.trim_end());
            if !stmt.trim_end().ends_with(';') {
                sql.push(';');
            }
            sql.push('\n');
        }
        std::fs::write(dir.join("poc.sql"), sql)?;
        let meta = serde_json::json!({
            "crash_class": self.crash_class,
            "dedup_key": self.evidence.dedup_key,
            "signal_or_exit": self.evidence.signal_or_exit,
            "trigger_index": self.evidence.trigger_index,
            "statement_count": self.statements.len(),
            "original_case_id": self.original_case_id,
            "oracle_flaky": self.oracle_flaky,
        });
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        std::fs::write(dir.join("reduction.log"), self.reduction_log.join("\n") + "\n")?;
        Ok(())
    }
}

const CONFIRMATION_REPLAYS: usize = 3;

/// Reduce a crashing statement stream (the case alone for Isolated crashes,
/// the full history for StateDependent ones) to a 1-minimal PoC whose replay
/// reproduces the same dedup key.
pub fn reduce(
    statements: &[String],
    driver: &mut dyn Driver,
    evidence: &CrashEvidence,
    crash_class: CrashClass,
    original_case_id: u64,
) -> Result<PocReport, ReduceError> {
    let mut log = Vec::new();
    let target_key = evidence.dedup_key.clone();

    // flaky-oracle policy: confirm before spending reduction effort
    for attempt in 0..CONFIRMATION_REPLAYS {
        match replay(driver, statements)? {
            Some(ev) if ev.dedup_key == target_key => {}
            other => {
                log.push(format!(
                    "confirmation replay {} failed ({})",
                    attempt + 1,
                    match other {
                        Some(ev) => format!("different crash {}", ev.dedup_key),
                        None => "no crash".to_string(),
                    }
                ));
                return Ok(PocReport {
                    statements: statements.to_vec(),
                    crash_class,
                    evidence: evidence.clone(),
                    reduction_log: log,
                    original_case_id,
                    oracle_flaky: true,
                });
            }
        }
    }
    log.push(format!("confirmed {CONFIRMATION_REPLAYS}x before reduction"));

    let mut current: Vec<String> = statements.to_vec();
    let mut final_evidence = evidence.clone();
    loop {
        let mut changed = false;

        // statement-sequence delta debugging
        {
            let mut driver_error: Option<ReduceError> = None;
            let mut oracle = |candidate: &[String]| -> bool {
                if driver_error.is_some() {
                    return false;
                }
                match replay(driver, candidate) {
                    Ok(Some(ev)) => ev.dedup_key == target_key,
                    Ok(None) => false,
                    Err(e) => {
                        driver_error = Some(e);
                        false
                    }
                }
            };
            let ddmin_result = ddmin_statements(&current, &mut oracle);
            if let Some(e) = driver_error.take() {
                return Err(e);
            }
            match ddmin_result {
                Ok((minimal, calls)) => {
                    if minimal.len() < current.len() {
                        log.push(format!(
                            "ddmin: {} -> {} statements ({} oracle calls)",
                            current.len(),
                            minimal.len(),
                            calls
                        ));
                        current = minimal;
                        changed = true;
                    } else {
                        log.push(format!("ddmin: no change ({calls} oracle calls)"));
                    }
                }
                Err(DdminError::OracleFlaky) => {
                    log.push("oracle turned flaky mid-reduction".into());
                    return Ok(PocReport {
                        statements: current,
                        crash_class,
                        evidence: final_evidence,
                        reduction_log: log,
                        original_case_id,
                        oracle_flaky: true,
                    });
                }
            }
        }

        // backward per-statement structural simplification
        for idx in (0..current.len()).rev() {
            let original = current[idx].clone();
            let mut err: Option<ReduceError> = None;
            let (simplified, accepted, rejected) = {
                let current_ref = &current;
                let mut test = |candidate: &str| -> bool {
                    if err.is_some() {
                        return false;
                    }
                    let mut trial: Vec<String> = current_ref.clone();
                    trial[idx] = candidate.to_string();
                    match replay(driver, &trial) {
                        Ok(Some(ev)) => ev.dedup_key == target_key,
                        Ok(None) => false,
                        Err(e) => {
                            err = Some(e);
                            false
                        }
                    }
                };
                simplify_statement(&original, &mut test)
            };
            if let Some(e) = err.take() {
                return Err(e);
            }
            if simplified != original {
                log.push(format!(
                    "simplify[{idx}]: {} -> {} bytes ({accepted} accepted, {rejected} rejected)",
                    original.len(),
                    simplified.len()
                ));
                current[idx] = simplified;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    // emit-time verification: reproduction with matching key and statement
    // 1-minimality via a removal sweep
    match replay(driver, &current)? {
        Some(ev) if ev.dedup_key == target_key => final_evidence = ev,
        _ => {
            log.push("emit-time replay failed to reproduce".into());
            return Ok(PocReport {
                statements: current,
                crash_class,
                evidence: final_evidence,
                reduction_log: log,
                original_case_id,
                oracle_flaky: true,
            });
        }
    }
    if current.len() > 1 {
        for skip in 0..current.len() {
            let without: Vec<String> = current
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, s)| s.clone())
                .collect();
            let still_crashes = matches!(
                replay(driver, &without)?,
                Some(ev) if ev.dedup_key == target_key
            );
            assert!(
                !still_crashes,
                "removal sweep found a redundant statement after ddmin: index {skip}"
            );
        }
        log.push(format!("sweep: confirmed 1-minimal at {} statements", current.len()));
    }

    Ok(PocReport {
        statements: current,
        crash_class,
        evidence: final_evidence,
        reduction_log: log,
        original_case_id,
        oracle_flaky: false,
    })
}
