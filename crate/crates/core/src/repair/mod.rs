//! Hybrid error repair: tag DBMS errors to statements, classify them into
//! the error taxonomy, and route each through syntax-aware filtering (SAF),
//! rule-based repair (RBR), or semantic-aware repair (SAR) in an iterative
//! execute-repair loop.

mod rbr;

pub use rbr::rule_repair;

use std::collections::HashMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{StatementKind, TestCase};
use crate::exec::{execute, CoverageOracle, Driver, DriverError, ExecutionOutcome};
use crate::llm::{
    build_repair_prompt, parse_sql_array, ModelClient, ModelParams, RepairAnnotation,
};
use crate::schema::SchemaContext;
use crate::sqltext::nesting_depth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    Syntax,
    DuplicateDefinition,
    UnsupportedFeature,
    PluginComponent,
    InappropriateSetting,
    Formattable,
    InvalidObjectReference,
    PreconditionsMissing,
    IncorrectFeatureUsage,
    ViolateConstraints,
    Unknown,
}

pub const ALL_CATEGORIES: [ErrorCategory; 11] = [
    ErrorCategory::Syntax,
    ErrorCategory::DuplicateDefinition,
    ErrorCategory::UnsupportedFeature,
    ErrorCategory::PluginComponent,
    ErrorCategory::InappropriateSetting,
    ErrorCategory::Formattable,
    ErrorCategory::InvalidObjectReference,
    ErrorCategory::PreconditionsMissing,
    ErrorCategory::IncorrectFeatureUsage,
    ErrorCategory::ViolateConstraints,
    ErrorCategory::Unknown,
];

impl ErrorCategory {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "syntax" => ErrorCategory::Syntax,
            "duplicate-definition" => ErrorCategory::DuplicateDefinition,
            "unsupported-feature" => ErrorCategory::UnsupportedFeature,
            "plugin-component" => ErrorCategory::PluginComponent,
            "inappropriate-setting" => ErrorCategory::InappropriateSetting,
            "formattable" => ErrorCategory::Formattable,
            "invalid-object-reference" => ErrorCategory::InvalidObjectReference,
            "preconditions-missing" => ErrorCategory::PreconditionsMissing,
            "incorrect-feature-usage" => ErrorCategory::IncorrectFeatureUsage,
            "violate-constraints" => ErrorCategory::ViolateConstraints,
            "unknown" => ErrorCategory::Unknown,
            _ => return None,
        })
    }
}

/// The three handling tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Saf,
    Rbr,
    Sar,
}

/// Total routing per the error-handling strategy matrix. Syntax errors go
/// through the filter (kept candidates escalate to SAR); duplicate
/// definitions and unsupported features are filtered out; plugin, setting,
/// and formattable errors take rule-based repair; everything
/// semantic-shaped, including the unknown long tail, goes to the model.
pub fn route(category: ErrorCategory) -> Route {
    match category {
        ErrorCategory::Syntax
        | ErrorCategory::DuplicateDefinition
        | ErrorCategory::UnsupportedFeature => Route::Saf,
        ErrorCategory::PluginComponent
        | ErrorCategory::InappropriateSetting
        | ErrorCategory::Formattable => Route::Rbr,
        ErrorCategory::InvalidObjectReference
        | ErrorCategory::PreconditionsMissing
        | ErrorCategory::IncorrectFeatureUsage
        | ErrorCategory::ViolateConstraints
        | ErrorCategory::Unknown => Route::Sar,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub statement_index: usize,
    pub code: Option<i64>,
    pub message: String,
    pub category: ErrorCategory,
    pub suggestion: Option<String>,
}

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("invalid classifier table at line {line}: {message}")]
    BadTable { line: usize, message: String },
    #[error("classifier table must end with an unknown catch-all rule")]
    MissingCatchAll,
    #[error(transparent)]
    Driver(#[from] DriverError),
}

#[derive(Debug)]
struct ClassifierRule {
    pattern: Regex,
    category: ErrorCategory,
    suggestion: Option<String>,
}

/// Ordered first-match-wins pattern table mapping diagnostics to categories,
/// with optional per-rule and per-category suggestion templates.
#[derive(Debug)]
pub struct ClassifierTable {
    pub dialect: String,
    rules: Vec<ClassifierRule>,
    defaults: HashMap<ErrorCategory, String>,
}

const SQLITE_RULES: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../errors/sqlite.rules"));
const MYSQL_SUBSET_RULES: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../errors/mysql_subset.rules"));

impl ClassifierTable {
    pub fn from_text(dialect: &str, text: &str) -> Result<Self, RepairError> {
        let mut rules = Vec::new();
        let mut defaults = HashMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| RepairError::BadTable {
                line: line_no + 1,
                message: message.to_string(),
            };
            if let Some(rest) = line.strip_prefix("default ") {
                let (cat_name, suggestion) =
                    rest.split_once(' ').ok_or_else(|| bad("default needs a suggestion"))?;
                let category =
                    ErrorCategory::parse(cat_name).ok_or_else(|| bad("unknown category"))?;
                defaults.insert(category, suggestion.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("rule ") {
                let (cat_name, rest) =
                    rest.split_once(' ').ok_or_else(|| bad("rule needs a pattern"))?;
                let category =
                    ErrorCategory::parse(cat_name).ok_or_else(|| bad("unknown category"))?;
                let rest = rest.trim_start();
                let (pattern_text, suggestion) =
                    parse_slash_pattern(rest).ok_or_else(|| bad("pattern must be /.../"))?;
                let pattern = Regex::new(&pattern_text)
                    .map_err(|e| bad(&format!("bad regex: {e}")))?;
                rules.push(ClassifierRule {
                    pattern,
                    category,
                    suggestion: if suggestion.is_empty() {
                        None
                    } else {
                        Some(suggestion.to_string())
                    },
                });
            } else {
                return Err(bad("expected 'rule' or 'default'"));
            }
        }
        match rules.last() {
            Some(last) if last.category == ErrorCategory::Unknown => {}
            _ => return Err(RepairError::MissingCatchAll),
        }
        Ok(ClassifierTable { dialect: dialect.to_string(), rules, defaults })
    }

    pub fn load(dialect: &str, path: &std::path::Path) -> Result<Self, RepairError> {
        let text = std::fs::read_to_string(path).map_err(|e| RepairError::BadTable {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_text(dialect, &text)
    }

    pub fn builtin(dialect: &str) -> Result<Self, RepairError> {
        match dialect {
            "sqlite" => Self::from_text("sqlite", SQLITE_RULES),
            "mysql_subset" => Self::from_text("mysql_subset", MYSQL_SUBSET_RULES),
            other => Err(RepairError::BadTable {
                line: 0,
                message: format!("unknown dialect: {other}"),
            }),
        }
    }

    /// First matching rule wins; the trailing catch-all guarantees a result.
    pub fn classify(&self, code: Option<i64>, message: &str) -> (ErrorCategory, Option<String>) {
        let haystack = match code {
            Some(c) => format!("[{c}] {message}"),
            None => message.to_string(),
        };
        for rule in &self.rules {
            if let Some(captures) = rule.pattern.captures(&haystack) {
                let suggestion = rule
                    .suggestion
                    .as_ref()
                    .map(|template| {
                        let mut out = String::new();
                        captures.expand(template, &mut out);
                        out
                    })
                    .or_else(|| self.defaults.get(&rule.category).cloned());
                return (rule.category, suggestion);
            }
        }
        (ErrorCategory::Unknown, None)
    }
}

/// Extract `/pattern/` honoring `\/` escapes; the remainder is a suggestion.
fn parse_slash_pattern(rest: &str) -> Option<(String, &str)> {
    let rest = rest.strip_prefix('/')?;
    let bytes = rest.as_bytes();
    let mut pattern = String::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if bytes.get(i + 1) == Some(&b'/') => {
                pattern.push('/');
                i += 2;
            }
            b'/' => {
                return Some((pattern, rest[i + 1..].trim()));
            }
            _ => {
                let ch = rest[i..].chars().next().expect("in-bounds char");
                pattern.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    None
}

/// Map per-statement errors back to the statements that caused them.
pub fn tag_errors(
    outcome: &ExecutionOutcome,
    testcase: &TestCase,
    table: &ClassifierTable,
) -> Vec<ErrorRecord> {
    let mut records = Vec::new();
    for (index, result) in outcome.per_statement.iter().enumerate() {
        if !result.is_error() || index >= testcase.statement_count() {
            continue;
        }
        let message = result.message.clone().unwrap_or_default();
        let (category, suggestion) = table.classify(result.code, &message);
        records.push(ErrorRecord {
            statement_index: index,
            code: result.code,
            message,
            category,
            suggestion,
        });
    }
    records
}

/// What syntax-aware filtering decided for one round.
#[derive(Debug, Default)]
pub struct FilterDecision {
    /// Statement indices (pre-removal) to drop from the case.
    pub drop_indices: Vec<usize>,
    /// Records that remain actionable, still indexed against the pre-removal
    /// case.
    pub retained: Vec<ErrorRecord>,
}

/// SAF: discard trivially-broken SELECTs (nesting depth < 3, no feature
/// flags) and all duplicate-definition / unsupported-feature statements;
/// feature statements are always retained.
pub fn syntax_filter(testcase: &TestCase, records: &[ErrorRecord]) -> FilterDecision {
    let mut decision = FilterDecision::default();
    for record in records {
        let Some(stmt) = testcase.statement(record.statement_index) else {
            continue;
        };
        match record.category {
            ErrorCategory::DuplicateDefinition | ErrorCategory::UnsupportedFeature => {
                decision.drop_indices.push(record.statement_index);
            }
            ErrorCategory::Syntax => {
                let is_select = matches!(stmt.kind, StatementKind::Select);
                if is_select && stmt.feature_flags.is_empty() && nesting_depth(&stmt.text) < 3 {
                    decision.drop_indices.push(record.statement_index);
                } else {
                    decision.retained.push(record.clone());
                }
            }
            _ => decision.retained.push(record.clone()),
        }
    }
    decision
}

/// SAR: wrap the offending statements in repair markers, ask the model for
/// the fully fixed case, and register any new definitions into the schema
/// context. Client or parse failures leave the case unmodified.
pub fn semantic_repair(
    testcase: &TestCase,
    records: &[ErrorRecord],
    context: &mut SchemaContext,
    client: &dyn ModelClient,
    params: &ModelParams,
    dialect: &str,
) -> Result<TestCase, RepairFailed> {
    let annotations: Vec<RepairAnnotation> = records
        .iter()
        .map(|r| RepairAnnotation {
            index: r.statement_index,
            error_message: r.message.clone(),
            suggestion: r.suggestion.clone(),
        })
        .collect();
    let prompt = build_repair_prompt(testcase, &annotations, dialect)
        .map_err(|e| RepairFailed(e.to_string()))?;
    let response =
        client.complete(&prompt, params).map_err(|e| RepairFailed(e.to_string()))?;
    let statements = parse_sql_array(&response).map_err(|e| RepairFailed(e.to_string()))?;
    if statements.is_empty() {
        return Err(RepairFailed("model returned an empty case".into()));
    }
    let repaired = TestCase {
        lineage: testcase.lineage.clone(),
        ..TestCase::from_statements(statements)
    };
    for stmt in repaired.all_statements() {
        context.register(&stmt.text);
    }
    Ok(repaired)
}

#[derive(Debug, Error)]
#[error("semantic repair failed: {0}")]
pub struct RepairFailed(pub String);

/// Outcome of a full repair loop.
#[derive(Debug)]
pub struct RepairReport {
    pub case: TestCase,
    pub outcome: ExecutionOutcome,
    /// Model calls actually spent.
    pub model_calls: usize,
    /// Coverage novelty accumulated across every round's execution.
    pub total_new_edges: u64,
    pub repair_failed: bool,
    /// Statements dropped by syntax-aware filtering.
    pub statements_dropped: usize,
    /// Records fixed by rule-based repair.
    pub rbr_fixes: usize,
    /// Error categories observed across rounds.
    pub categories_seen: Vec<(ErrorCategory, usize)>,
}

/// Iterative execute → tag → filter → RBR → SAR loop. Each round executes
/// against a freshly reset environment; at most `max_rounds` model calls are
/// spent; the loop stops as soon as a round has no SAR-routed errors left
/// and no pending changes.
pub fn repair_loop(
    testcase: TestCase,
    driver: &mut dyn Driver,
    oracle: &mut CoverageOracle,
    table: &ClassifierTable,
    client: &dyn ModelClient,
    params: &ModelParams,
    context: &mut SchemaContext,
    max_rounds: usize,
) -> Result<RepairReport, RepairError> {
    let dialect = table.dialect.clone();
    let mut case = testcase;
    let mut model_calls = 0usize;
    let mut total_new_edges = 0u64;
    let mut repair_failed = false;
    let mut statements_dropped = 0usize;
    let mut rbr_fixes = 0usize;
    let mut categories: HashMap<ErrorCategory, usize> = HashMap::new();

    let max_iterations = max_rounds * 2 + 2;
    let mut outcome;
    let mut iteration = 0;
    loop {
        driver.reset_environment()?;
        outcome = execute(driver, &case, oracle)?;
        total_new_edges += outcome.coverage_new_edges;
        iteration += 1;

        if outcome.crash.is_some() {
            break;
        }
        let records = tag_errors(&outcome, &case, table);
        if records.is_empty() {
            break;
        }
        for r in &records {
            *categories.entry(r.category).or_insert(0) += 1;
        }
        if iteration > max_iterations {
            repair_failed = true;
            break;
        }

        // SAF
        let decision = syntax_filter(&case, &records);
        let mut changed = false;
        let dropped = decision.drop_indices.clone();
        if !dropped.is_empty() {
            statements_dropped += dropped.len();
            case.remove_statements(&dropped);
            changed = true;
            if case.is_empty() {
                break;
            }
        }
        // remap retained record indices past the removals
        let remap = |old: usize| old - dropped.iter().filter(|d| **d < old).count();
        let retained: Vec<ErrorRecord> = decision
            .retained
            .into_iter()
            .map(|mut r| {
                r.statement_index = remap(r.statement_index);
                r
            })
            .collect();

        // RBR, escalating unfixed records to SAR
        let mut sar_records: Vec<ErrorRecord> = Vec::new();
        for record in retained {
            match route(record.category) {
                Route::Rbr => {
                    let stmt = case
                        .statement(record.statement_index)
                        .expect("remapped index in range")
                        .clone();
                    match rule_repair(&record, &stmt, &dialect) {
                        Some(fixed) => {
                            *case
                                .statement_mut(record.statement_index)
                                .expect("remapped index in range") = fixed;
                            rbr_fixes += 1;
                            changed = true;
                        }
                        None => sar_records.push(record),
                    }
                }
                _ => sar_records.push(record),
            }
        }

        if sar_records.is_empty() {
            if changed {
                continue; // re-execute the filtered/patched case
            }
            break;
        }
        if model_calls >= max_rounds {
            repair_failed = true;
            break;
        }
        model_calls += 1;
        match semantic_repair(&case, &sar_records, context, client, params, &dialect) {
            Ok(repaired) => {
                if repaired == case && !changed {
                    repair_failed = true;
                    break;
                }
                case = repaired;
            }
            Err(_) => {
                repair_failed = true;
                break;
            }
        }
    }

    let mut categories_seen: Vec<(ErrorCategory, usize)> = categories.into_iter().collect();
    categories_seen.sort_by_key(|(c, _)| format!("{c:?}"));
    Ok(RepairReport {
        case,
        outcome,
        model_calls,
        total_new_edges,
        repair_failed,
        statements_dropped,
        rbr_fixes,
        categories_seen,
    })
}
