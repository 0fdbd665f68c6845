//! Scripted in-process driver for exercising crash detection, replay
//! classification, and reduction without a real target.

use std::time::Duration;

use super::{
    CrashEvidence, Driver, DriverError, DriverKind, SignalOrExit, StatementResult, StepResult,
};

#[derive(Debug, Clone)]
pub enum FakeAction {
    Error { code: Option<i64>, message: String },
    Crash { signal: i32, diagnostic: String },
}

/// One scripted behavior. Rules are checked in order per statement; the
/// first applicable rule fires.
#[derive(Debug, Clone)]
pub struct FakeRule {
    /// Substring of the statement that arms this rule.
    pub trigger: String,
    /// Substring some earlier statement of the same session must contain.
    pub requires_prior: Option<String>,
    /// Cap on total firings across the driver's lifetime (None = unlimited);
    /// a cap of 1 models a non-reproducible crash.
    pub max_fires: Option<u32>,
    pub action: FakeAction,
}

impl FakeRule {
    pub fn error_on(trigger: &str, message: &str) -> Self {
        FakeRule {
            trigger: trigger.into(),
            requires_prior: None,
            max_fires: None,
            action: FakeAction::Error { code: None, message: message.into() },
        }
    }

    pub fn crash_on(trigger: &str, signal: i32, diagnostic: &str) -> Self {
        FakeRule {
            trigger: trigger.into(),
            requires_prior: None,
            max_fires: None,
            action: FakeAction::Crash { signal, diagnostic: diagnostic.into() },
        }
    }

    pub fn with_prior(mut self, prior: &str) -> Self {
        self.requires_prior = Some(prior.into());
        self
    }

    pub fn once(mut self) -> Self {
        self.max_fires = Some(1);
        self
    }
}

pub struct FakeDriver {
    kind: DriverKind,
    rules: Vec<FakeRule>,
    fires: Vec<u32>,
    session_statements: Vec<String>,
    generation: u64,
    dead: bool,
}

impl FakeDriver {
    pub fn new(rules: Vec<FakeRule>) -> Self {
        let fires = vec![0; rules.len()];
        FakeDriver {
            kind: DriverKind::Embedded,
            rules,
            fires,
            session_statements: Vec::new(),
            generation: 1,
            dead: false,
        }
    }

    pub fn with_kind(mut self, kind: DriverKind) -> Self {
        self.kind = kind;
        self
    }
}

impl Driver for FakeDriver {
    fn kind(&self) -> DriverKind {
        self.kind
    }

    fn reset_environment(&mut self) -> Result<(), DriverError> {
        if self.dead {
            self.restart()?;
        }
        Ok(())
    }

    fn restart(&mut self) -> Result<(), DriverError> {
        self.dead = false;
        self.generation += 1;
        self.session_statements.clear();
        Ok(())
    }

    fn session_generation(&self) -> u64 {
        self.generation
    }

    fn run_statement(&mut self, sql: &str) -> Result<StepResult, DriverError> {
        if self.dead {
            return Err(DriverError::SessionDead);
        }
        self.session_statements.push(sql.to_string());
        let prior = &self.session_statements[..self.session_statements.len() - 1];
        for (idx, rule) in self.rules.iter().enumerate() {
            if !sql.contains(&rule.trigger) {
                continue;
            }
            if let Some(needed) = &rule.requires_prior {
                if !prior.iter().any(|p| p.contains(needed.as_str())) {
                    continue;
                }
            }
            if let Some(cap) = rule.max_fires {
                if self.fires[idx] >= cap {
                    continue;
                }
            }
            self.fires[idx] += 1;
            return Ok(match &rule.action {
                FakeAction::Error { code, message } => StepResult::Completed(
                    StatementResult::error(*code, message.clone(), Duration::ZERO),
                ),
                FakeAction::Crash { signal, diagnostic } => {
                    self.dead = true;
                    StepResult::Crashed(CrashEvidence::new(
                        SignalOrExit::Signal(*signal),
                        vec![diagnostic.clone()],
                    ))
                }
            });
        }
        Ok(StepResult::Completed(StatementResult::ok(Duration::ZERO)))
    }

    fn send_log(&self) -> Vec<String> {
        self.session_statements.clone()
    }
}
