//! Child-process driver speaking to an interactive DBMS shell over pipes.
//!
//! Per-statement output is segmented with sentinel probes: after each
//! statement the driver issues `SELECT 'SQLFUZZ_DONE_<n>';` (confirmed on
//! stdout) and, for engines that report unknown columns, `SELECT
//! SQLFUZZ_ERR_<n>;` (confirmed on stderr). Everything on stderr before the
//! error sentinel belongs to the statement, so no banner parsing or timing
//! heuristics are involved.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    CrashEvidence, Driver, DriverError, DriverKind, SignalOrExit, StatementResult, StepResult,
    CLIENT_SERVER_RESET_PRELUDE, DEFAULT_MAP_SIZE, DIAGNOSTIC_TAIL_LINES, EMBEDDED_OPEN_TEST,
    EMBEDDED_OPEN_TMP,
};
use crate::sqltext::{mask_volatile, tokenize, TokenKind};

fn default_map_size() -> usize {
    DEFAULT_MAP_SIZE
}

fn default_timeout_ms() -> u64 {
    5_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetConfig {
    pub kind: DriverKind,
    pub command: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub statement_timeout_ms: u64,
    /// Working directory for the child; embedded database files live here.
    #[serde(default)]
    pub work_dir: Option<PathBuf>,
    /// File exposing the target's edge-coverage map, read after each case.
    #[serde(default)]
    pub coverage_map_path: Option<PathBuf>,
    #[serde(default = "default_map_size")]
    pub map_size: usize,
    /// Replacement for the standard client-server reset prelude.
    #[serde(default)]
    pub prelude_override: Option<String>,
    /// Whether the target reports unknown columns on stderr, enabling the
    /// stderr sentinel. Disable for dumb echo targets.
    #[serde(default = "default_true")]
    pub error_marker: bool,
}

fn default_true() -> bool {
    true
}

impl TargetConfig {
    pub fn statement_timeout(&self) -> Duration {
        Duration::from_millis(self.statement_timeout_ms)
    }
}

#[derive(Debug)]
struct SentLine {
    generation: u64,
    text: String,
    control: bool,
}

pub struct ProcessDriver {
    config: TargetConfig,
    work_dir: PathBuf,
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    stdout_rx: Option<Receiver<String>>,
    stderr_rx: Option<Receiver<String>>,
    generation: u64,
    sentinel: u64,
    sent: Vec<SentLine>,
    stderr_history: VecDeque<String>,
}

static WORK_DIR_SEQ: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

impl ProcessDriver {
    pub fn launch(config: TargetConfig) -> Result<Self, DriverError> {
        let work_dir = match &config.work_dir {
            Some(dir) => dir.clone(),
            None => std::env::temp_dir().join(format!(
                "sqlfuzz-target-{}-{}",
                std::process::id(),
                WORK_DIR_SEQ.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
            )),
        };
        std::fs::create_dir_all(&work_dir)
            .map_err(|e| DriverError::Spawn(format!("work dir: {e}")))?;
        let mut driver = ProcessDriver {
            config,
            work_dir,
            child: None,
            stdin: None,
            stdout_rx: None,
            stderr_rx: None,
            generation: 0,
            sentinel: 0,
            sent: Vec::new(),
            stderr_history: VecDeque::new(),
        };
        driver.spawn()?;
        Ok(driver)
    }

    pub fn work_dir(&self) -> &std::path::Path {
        &self.work_dir
    }

    /// Every line sent since launch, control lines included.
    pub fn full_send_log(&self) -> Vec<String> {
        self.sent.iter().map(|l| l.text.clone()).collect()
    }

    fn spawn(&mut self) -> Result<(), DriverError> {
        // resolve before current_dir changes what a relative path means
        let command = if self.config.command.components().count() > 1 {
            std::fs::canonicalize(&self.config.command)
                .unwrap_or_else(|_| self.config.command.clone())
        } else {
            self.config.command.clone()
        };
        let mut child = Command::new(&command)
            .args(&self.config.args)
            .current_dir(&self.work_dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| DriverError::Spawn(format!("{}: {e}", command.display())))?;
        let stdin = child.stdin.take().ok_or_else(|| DriverError::Spawn("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| DriverError::Spawn("no stdout".into()))?;
        let stderr = child.stderr.take().ok_or_else(|| DriverError::Spawn("no stderr".into()))?;
        self.stdout_rx = Some(reader_channel(stdout));
        self.stderr_rx = Some(reader_channel(stderr));
        self.stdin = Some(stdin);
        self.child = Some(child);
        self.generation += 1;
        self.stderr_history.clear();
        Ok(())
    }

    fn kill_child(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        self.stdin = None;
        self.stdout_rx = None;
        self.stderr_rx = None;
    }

    fn alive(&mut self) -> bool {
        match &mut self.child {
            Some(child) => matches!(child.try_wait(), Ok(None)),
            None => false,
        }
    }

    fn exit_status(&mut self) -> SignalOrExit {
        use std::os::unix::process::ExitStatusExt;
        let status = match self.child.take() {
            Some(mut child) => child.wait().ok(),
            None => None,
        };
        self.stdin = None;
        match status {
            Some(s) => {
                if let Some(sig) = s.signal() {
                    SignalOrExit::Signal(sig)
                } else {
                    SignalOrExit::Exit(s.code().unwrap_or(-1))
                }
            }
            None => SignalOrExit::Exit(-1),
        }
    }

    fn push_stderr(&mut self, line: String) {
        if self.stderr_history.len() >= 200 {
            self.stderr_history.pop_front();
        }
        self.stderr_history.push_back(line);
    }

    fn stderr_tail(&self) -> Vec<String> {
        let skip = self.stderr_history.len().saturating_sub(DIAGNOSTIC_TAIL_LINES);
        self.stderr_history.iter().skip(skip).cloned().collect()
    }

    fn write_line(&mut self, text: &str, control: bool) -> std::io::Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "no stdin"))?;
        stdin.write_all(text.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()?;
        self.sent.push(SentLine { generation: self.generation, text: text.to_string(), control });
        Ok(())
    }

    fn drain_stderr(&mut self) -> Vec<String> {
        let mut drained = Vec::new();
        if let Some(rx) = &self.stderr_rx {
            while let Ok(line) = rx.try_recv() {
                drained.push(line);
            }
        }
        for line in &drained {
            self.push_stderr(line.clone());
        }
        drained
    }

    /// Crash evidence from the target dying, with remaining output drained.
    fn death_evidence(&mut self) -> CrashEvidence {
        self.drain_stderr();
        // allow late pipe flushes to land
        if let Some(rx) = self.stderr_rx.take() {
            while let Ok(line) = rx.recv_timeout(Duration::from_millis(40)) {
                self.push_stderr(line);
            }
        }
        let status = self.exit_status();
        self.stdout_rx = None;
        self.stderr_rx = None;
        CrashEvidence::new(status, self.stderr_tail())
    }

    fn hang_evidence(&mut self, statement: &str, timeout: Duration) -> CrashEvidence {
        self.drain_stderr();
        let mut tail = self.stderr_tail();
        tail.push(format!(
            "statement timed out after {}ms: {}",
            timeout.as_millis(),
            mask_volatile(statement)
        ));
        self.kill_child();
        CrashEvidence::new(SignalOrExit::Hang, tail)
    }

    /// Send one payload line and confirm it was processed via the sentinel
    /// probes. Statement error text is whatever landed on stderr first.
    fn step(&mut self, payload: &str, control: bool) -> Result<StepResult, DriverError> {
        if !self.alive() {
            return Err(DriverError::SessionDead);
        }
        let started = Instant::now();
        let timeout = self.config.statement_timeout();
        self.sentinel += 1;
        let done_token = format!("SQLFUZZ_DONE_{}", self.sentinel);
        let err_token = format!("SQLFUZZ_ERR_{}", self.sentinel);

        let send = |driver: &mut Self| -> std::io::Result<()> {
            driver.write_line(payload, control)?;
            driver.write_line(&format!("SELECT '{done_token}';"), true)?;
            if driver.config.error_marker {
                driver.write_line(&format!("SELECT {err_token};"), true)?;
            }
            Ok(())
        };
        if send(self).is_err() {
            return Ok(StepResult::Crashed(self.death_evidence()));
        }

        // wait for the stdout sentinel
        let deadline = started + timeout;
        loop {
            let remaining = match deadline.checked_duration_since(Instant::now()) {
                Some(r) => r,
                None => return Ok(StepResult::Crashed(self.hang_evidence(payload, timeout))),
            };
            let rx = self.stdout_rx.as_ref().expect("stdout channel");
            match rx.recv_timeout(remaining) {
                Ok(line) if line.contains(&done_token) => break,
                Ok(_) => continue, // result rows
                Err(RecvTimeoutError::Timeout) => {
                    return Ok(StepResult::Crashed(self.hang_evidence(payload, timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Ok(StepResult::Crashed(self.death_evidence()))
                }
            }
        }

        // collect stderr attributed to this statement
        let mut error_lines: Vec<String> = Vec::new();
        if self.config.error_marker {
            loop {
                let remaining = match deadline.checked_duration_since(Instant::now()) {
                    Some(r) => r,
                    None => return Ok(StepResult::Crashed(self.hang_evidence(payload, timeout))),
                };
                let rx = self.stderr_rx.as_ref().expect("stderr channel");
                match rx.recv_timeout(remaining) {
                    Ok(line) if line.contains(&err_token) => break,
                    Ok(line) => {
                        self.push_stderr(line.clone());
                        error_lines.push(line);
                    }
                    Err(RecvTimeoutError::Timeout) => {
                        return Ok(StepResult::Crashed(self.hang_evidence(payload, timeout)))
                    }
                    Err(RecvTimeoutError::Disconnected) => {
                        return Ok(StepResult::Crashed(self.death_evidence()))
                    }
                }
            }
        } else {
            // no stderr sentinel: drain with a short settle window
            for _ in 0..2 {
                error_lines.extend(self.drain_stderr());
                std::thread::sleep(Duration::from_millis(1));
            }
            error_lines.extend(self.drain_stderr());
        }

        let elapsed = started.elapsed();
        if error_lines.is_empty() {
            Ok(StepResult::Completed(StatementResult::ok(elapsed)))
        } else {
            let message = error_lines.join("\n");
            let code = parse_error_code(&error_lines[0]);
            Ok(StepResult::Completed(StatementResult::error(code, message, elapsed)))
        }
    }

    fn reset_sequence(&mut self) -> Result<Option<CrashEvidence>, DriverError> {
        match self.config.kind {
            DriverKind::ClientServer => {
                let prelude = self
                    .config
                    .prelude_override
                    .clone()
                    .unwrap_or_else(|| CLIENT_SERVER_RESET_PRELUDE.to_string());
                match self.step(&prelude, true)? {
                    StepResult::Crashed(ev) => Ok(Some(ev)),
                    StepResult::Completed(_) => Ok(None),
                }
            }
            DriverKind::Embedded => {
                if let StepResult::Crashed(ev) = self.step(EMBEDDED_OPEN_TMP, true)? {
                    return Ok(Some(ev));
                }
                let test_db = self.work_dir.join("test.db");
                let _ = std::fs::write(&test_db, b"");
                match self.step(EMBEDDED_OPEN_TEST, true)? {
                    StepResult::Crashed(ev) => Ok(Some(ev)),
                    StepResult::Completed(_) => Ok(None),
                }
            }
        }
    }
}

fn reader_channel<R: std::io::Read + Send + 'static>(pipe: R) -> Receiver<String> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(pipe);
        let mut line = String::new();
        loop {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    let trimmed = line.trim_end_matches(['\n', '\r']).to_string();
                    if tx.send(trimmed).is_err() {
                        break;
                    }
                }
            }
        }
    });
    rx
}

fn parse_error_code(line: &str) -> Option<i64> {
    // mysql-style "ERROR 1054 (42S22): ..."
    let rest = line.strip_prefix("ERROR ")?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Statements that would desynchronize the line protocol are failed locally
/// instead of being sent.
fn unsendable(sql: &str) -> Option<&'static str> {
    if sql.contains("SQLFUZZ_") {
        return Some("statement collides with the sentinel namespace");
    }
    if let Some(last) = tokenize(sql).last() {
        let open_quote = matches!(
            last.kind,
            TokenKind::SingleQuoted | TokenKind::DoubleQuoted | TokenKind::BacktickQuoted
        ) && {
            let tok = last.text(sql);
            tok.len() < 2 || !tok.ends_with(tok.chars().next().unwrap())
        };
        if open_quote {
            return Some("unterminated quote would swallow the session");
        }
    }
    None
}

impl Driver for ProcessDriver {
    fn kind(&self) -> DriverKind {
        self.config.kind
    }

    fn reset_environment(&mut self) -> Result<(), DriverError> {
        if !self.alive() {
            self.restart()?;
        }
        match self.reset_sequence()? {
            None => Ok(()),
            Some(_) => {
                // target died during reset: relaunch once and retry
                self.restart()?;
                match self.reset_sequence()? {
                    None => Ok(()),
                    Some(_) => Err(DriverError::SessionDead),
                }
            }
        }
    }

    fn restart(&mut self) -> Result<(), DriverError> {
        self.kill_child();
        self.spawn()
    }

    fn session_generation(&self) -> u64 {
        self.generation
    }

    fn run_statement(&mut self, sql: &str) -> Result<StepResult, DriverError> {
        if let Some(reason) = unsendable(sql) {
            return Ok(StepResult::Completed(StatementResult::error(
                None,
                reason,
                Duration::ZERO,
            )));
        }
        let mut payload = sql.trim_end().to_string();
        if !payload.starts_with('.') && !payload.ends_with(';') {
            payload.push(';');
        }
        self.step(&payload, false)
    }

    fn coverage_map(&mut self) -> Option<Vec<u8>> {
        let path = self.config.coverage_map_path.as_ref()?;
        std::fs::read(path).ok()
    }

    fn send_log(&self) -> Vec<String> {
        self.sent
            .iter()
            .filter(|l| l.generation == self.generation && !l.control)
            .map(|l| l.text.clone())
            .collect()
    }
}

impl Drop for ProcessDriver {
    fn drop(&mut self) {
        self.kill_child();
    }
}
