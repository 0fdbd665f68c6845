//! Minimal sqlite3-style shell over the system SQLite library.
//!
//! Reads SQL statements (semicolon-terminated, quote-aware) and dot commands
//! from stdin. Result rows go to stdout pipe-separated; errors go to stderr
//! in the CLI's batch format (`Parse error near line N: ...` /
//! `Runtime error near line N: ...`). Used as the embedded fuzzing target.

use std::io::{BufRead, Write};

use rusqlite::types::ValueRef;
use rusqlite::Connection;

const MAX_PRINTED_ROWS: usize = 10_000;

struct Shell {
    conn: Connection,
    line_no: u64,
}

impl Shell {
    fn open(path: &str) -> rusqlite::Result<Connection> {
        if path == ":memory:" {
            Connection::open_in_memory()
        } else {
            Connection::open(path)
        }
    }

    fn dot_command(&mut self, line: &str) {
        let mut parts = line.split_whitespace();
        let cmd = parts.next().unwrap_or("");
        match cmd {
            ".open" => {
                let target = parts.next().unwrap_or(":memory:");
                match Self::open(target) {
                    Ok(conn) => self.conn = conn,
                    Err(e) => {
                        eprintln!("Error: unable to open database \"{target}\": {e}");
                    }
                }
            }
            ".exit" | ".quit" => std::process::exit(0),
            other => {
                eprintln!("Error: unknown command or invalid arguments: \"{other}\". Enter \".help\" for help");
            }
        }
        let _ = std::io::stderr().flush();
    }

    fn run_statement(&mut self, sql: &str) {
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        let mut stmt = match self.conn.prepare(sql) {
            Ok(stmt) => stmt,
            Err(e) => {
                eprintln!("Parse error near line {}: {}", self.line_no, message_of(&e));
                let _ = std::io::stderr().flush();
                return;
            }
        };
        let n_cols = stmt.column_count();
        let mut rows = stmt.raw_query().mapped(|row| {
            let mut fields = Vec::with_capacity(n_cols);
            for i in 0..n_cols {
                fields.push(render_value(row.get_ref(i)?));
            }
            Ok(fields.join("|"))
        });
        let mut printed = 0usize;
        loop {
            match rows.next() {
                None => break,
                Some(Ok(line)) => {
                    if printed < MAX_PRINTED_ROWS {
                        let _ = writeln!(out, "{line}");
                    }
                    printed += 1;
                }
                Some(Err(e)) => {
                    eprintln!("Runtime error near line {}: {}", self.line_no, message_of(&e));
                    break;
                }
            }
        }
        let _ = out.flush();
        let _ = std::io::stderr().flush();
    }
}

fn message_of(err: &rusqlite::Error) -> String {
    match err {
        rusqlite::Error::SqliteFailure(_, Some(msg)) => msg.clone(),
        other => other.to_string(),
    }
}

fn render_value(value: ValueRef<'_>) -> String {
    match value {
        ValueRef::Null => String::new(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) => f.to_string(),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
        ValueRef::Blob(b) => String::from_utf8_lossy(b).into_owned(),
    }
}

/// Byte offset just past the first semicolon that sits outside single/double
/// quotes and comments, if any.
fn complete_statement_end(buf: &str) -> Option<usize> {
    let bytes = buf.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b';' => return Some(i + 1),
            b'\'' | b'"' | b'`' => {
                let quote = bytes[i];
                i += 1;
                while i < bytes.len() {
                    if bytes[i] == quote {
                        if quote == b'\'' && bytes.get(i + 1) == Some(&b'\'') {
                            i += 2;
                            continue;
                        }
                        break;
                    }
                    i += 1;
                }
                if i >= bytes.len() {
                    return None; // unterminated quote: wait for more input
                }
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i += 1;
            }
            _ => {}
        }
        i += 1;
    }
    None
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let initial = args.first().map(String::as_str).unwrap_or(":memory:");
    let conn = Shell::open(initial).unwrap_or_else(|e| {
        eprintln!("Error: unable to open database \"{initial}\": {e}");
        std::process::exit(1);
    });
    let mut shell = Shell { conn, line_no: 0 };

    let stdin = std::io::stdin();
    let mut buffer = String::new();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        shell.line_no += 1;
        if buffer.trim().is_empty() && line.trim_start().starts_with('.') {
            shell.dot_command(line.trim());
            continue;
        }
        buffer.push_str(&line);
        buffer.push('\n');
        while let Some(end) = complete_statement_end(&buffer) {
            let stmt: String = buffer.drain(..end).collect();
            let stmt = stmt.trim();
            if !stmt.is_empty() && stmt != ";" {
                shell.run_statement(stmt);
            }
        }
    }
}
