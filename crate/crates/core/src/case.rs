//! Test cases: an ordered schema-initialization part plus an ordered
//! operation part, the unit everything downstream consumes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sqltext::keywords;

/// Coarse statement tag. `SchemaInit` is reserved for statements that build
/// the convention-named schema (`t<k>`, `v<k>`) so that mutation can unify
/// schemas across parents without parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    SchemaInit,
    Select,
    Dml,
    Ddl,
    Admin,
    Feature,
    Other,
}

/// Keywords that mark a statement as touching a vendor-specific feature.
/// Feature statements are never dropped by syntax-aware filtering.
pub const FEATURE_KEYWORDS: &[&str] = &[
    "GTID", "PROCEDURE", "HISTOGRAM", "INSTALL", "KILL", "RESET", "COMPONENT", "CALL", "BINLOG",
    "REPLICA",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub text: String,
    pub kind: StatementKind,
    pub feature_flags: BTreeSet<String>,
}

impl Statement {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let words = keywords(&text);
        // prefix match so plural forms (GTIDS, PROCEDURES) raise the flag too
        let feature_flags: BTreeSet<String> = words
            .iter()
            .flat_map(|w| {
                FEATURE_KEYWORDS.iter().filter(move |k| w.starts_with(*k)).map(|k| k.to_string())
            })
            .collect();
        let kind = classify(&words, &feature_flags);
        Statement { text, kind, feature_flags }
    }

    /// Rebuild kind and flags after the text was rewritten in place.
    pub fn reclassified(text: impl Into<String>) -> Self {
        Self::new(text)
    }

    pub fn is_schema_init(&self) -> bool {
        self.kind == StatementKind::SchemaInit
    }
}

fn classify(words: &[String], flags: &BTreeSet<String>) -> StatementKind {
    if is_schema_init_words(words) {
        return StatementKind::SchemaInit;
    }
    if !flags.is_empty() {
        return StatementKind::Feature;
    }
    match words.first().map(String::as_str) {
        Some("SELECT") | Some("WITH") | Some("VALUES") => StatementKind::Select,
        Some("INSERT") | Some("UPDATE") | Some("DELETE") | Some("REPLACE") => StatementKind::Dml,
        Some("CREATE") | Some("ALTER") | Some("DROP") => StatementKind::Ddl,
        Some("SET") | Some("PRAGMA") | Some("ANALYZE") | Some("VACUUM") | Some("ATTACH")
        | Some("DETACH") | Some("REINDEX") | Some("BEGIN") | Some("COMMIT") | Some("ROLLBACK")
        | Some("SAVEPOINT") | Some("RELEASE") | Some("FLUSH") | Some("SHOW") | Some("USE")
        | Some("EXPLAIN") | Some("DESC") | Some("DESCRIBE") => StatementKind::Admin,
        _ => StatementKind::Other,
    }
}

/// schema_init iff the statement begins with CREATE TABLE/VIEW or INSERT INTO
/// and targets a convention-named object (t<k> or v<k>).
fn is_schema_init_words(words: &[String]) -> bool {
    let target_idx = match (words.first().map(String::as_str), words.get(1).map(String::as_str)) {
        (Some("CREATE"), Some("TABLE")) | (Some("CREATE"), Some("VIEW")) => 2,
        (Some("INSERT"), Some("INTO")) => 2,
        _ => return false,
    };
    // skip IF NOT EXISTS
    let mut idx = target_idx;
    if words.get(idx).map(String::as_str) == Some("IF") {
        while idx < words.len() && words.get(idx).map(String::as_str) != Some("EXISTS") {
            idx += 1;
        }
        idx += 1;
    }
    words.get(idx).is_some_and(|w| is_convention_name(w))
}

fn is_convention_name(word: &str) -> bool {
    word.len() >= 2
        && matches!(word.as_bytes()[0], b'T' | b'V')
        && word[1..].bytes().all(|b| b.is_ascii_digit())
}

/// A multi-statement test case: schema part (the paper's S) and operation
/// part (the paper's O). `lineage` carries the pool ids of mutation parents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TestCase {
    pub schema_part: Vec<Statement>,
    pub op_part: Vec<Statement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lineage: Vec<u64>,
}

impl TestCase {
    /// Partition raw statements into schema and operation parts, preserving
    /// relative order within each part.
    pub fn from_statements<I, S>(stmts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut case = TestCase::default();
        for s in stmts {
            let stmt = Statement::new(s);
            if stmt.is_schema_init() {
                case.schema_part.push(stmt);
            } else {
                case.op_part.push(stmt);
            }
        }
        case
    }

    /// Execution order: schema part first, then operations.
    pub fn all_statements(&self) -> impl Iterator<Item = &Statement> {
        self.schema_part.iter().chain(self.op_part.iter())
    }

    pub fn statement_count(&self) -> usize {
        self.schema_part.len() + self.op_part.len()
    }

    /// Statement at a flat index over schema_part ++ op_part.
    pub fn statement(&self, index: usize) -> Option<&Statement> {
        if index < self.schema_part.len() {
            self.schema_part.get(index)
        } else {
            self.op_part.get(index - self.schema_part.len())
        }
    }

    pub fn statement_mut(&mut self, index: usize) -> Option<&mut Statement> {
        if index < self.schema_part.len() {
            self.schema_part.get_mut(index)
        } else {
            let idx = index - self.schema_part.len();
            self.op_part.get_mut(idx)
        }
    }

    /// Remove statements by flat index, highest first so indices stay valid.
    pub fn remove_statements(&mut self, indices: &[usize]) {
        let mut sorted: Vec<usize> = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for idx in sorted.into_iter().rev() {
            if idx < self.schema_part.len() {
                self.schema_part.remove(idx);
            } else if idx - self.schema_part.len() < self.op_part.len() {
                self.op_part.remove(idx - self.schema_part.len());
            }
        }
    }

    /// Render as one SQL text block, one statement per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for stmt in self.all_statements() {
            out.push_str(stmt.text.trim_end());
            if !stmt.text.trim_end().ends_with(';') {
                out.push(';');
            }
            out.push('\n');
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.schema_part.is_empty() && self.op_part.is_empty()
    }
}
