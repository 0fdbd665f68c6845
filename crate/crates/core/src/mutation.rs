//! Logic-shifting progressive mutation: schema unification, probabilistic
//! sequence crossover, drop filtering, and dialect-aware predicate/join
//! rewrites. Everything operates on statement text through the quote-aware
//! scanner; no AST is built.

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{Statement, TestCase};
use crate::sqltext::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MutationConfig {
    /// Probability of drawing from the first parent when both remain.
    pub crossover_bias: f64,
    /// Lower bound of the per-statement drop probability.
    pub drop_low: f64,
    /// Upper bound of the per-statement drop probability.
    pub drop_high: f64,
    /// Chance a matched rewrite site is actually rewritten.
    pub rewrite_probability: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            crossover_bias: 0.5,
            drop_low: 0.2,
            drop_high: 0.4,
            rewrite_probability: 0.5,
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), MutationError> {
        if !(0.0..=1.0).contains(&self.drop_low)
            || !(0.0..=1.0).contains(&self.drop_high)
            || self.drop_low > self.drop_high
        {
            return Err(MutationError::InvalidConfig(
                "need 0 <= drop_low <= drop_high <= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_bias)
            || !(0.0..=1.0).contains(&self.rewrite_probability)
        {
            return Err(MutationError::InvalidConfig("probabilities must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MutationError {
    #[error("invalid mutation config: {0}")]
    InvalidConfig(String),
    #[error("invalid rewrite rules: {0}")]
    InvalidRules(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteCategory {
    Predicate,
    Join,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RewriteTarget {
    pub text: String,
    /// Dialects where this replacement is legal.
    pub dialects: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RewriteRule {
    pub category: RewriteCategory,
    pub from: String,
    pub to: Vec<RewriteTarget>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RewriteRuleSet {
    pub rules: Vec<RewriteRule>,
}

const SQLITE_REWRITES: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../rewrites/sqlite.toml"));
const MYSQL_SUBSET_REWRITES: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../rewrites/mysql_subset.toml"));

impl RewriteRuleSet {
    pub fn from_toml(text: &str) -> Result<Self, MutationError> {
        let set: RewriteRuleSet =
            toml::from_str(text).map_err(|e| MutationError::InvalidRules(e.to_string()))?;
        for rule in &set.rules {
            if rule.to.iter().any(|t| t.text.eq_ignore_ascii_case(&rule.from)) {
                return Err(MutationError::InvalidRules(format!(
                    "rule '{}' lists itself as a replacement",
                    rule.from
                )));
            }
        }
        Ok(set)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, MutationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MutationError::InvalidRules(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn builtin(dialect: &str) -> Result<Self, MutationError> {
        match dialect {
            "sqlite" => Self::from_toml(SQLITE_REWRITES),
            "mysql_subset" => Self::from_toml(MYSQL_SUBSET_REWRITES),
            other => Err(MutationError::InvalidRules(format!("unknown dialect: {other}"))),
        }
    }
}

/// Table the statement targets, by the naming convention: `CREATE TABLE t0`
/// or `INSERT INTO t0`. Views count as schema targets too.
fn schema_target(text: &str) -> Option<String> {
    static PATTERNS: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = PATTERNS.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:CREATE\s+(?:TEMP\s+|TEMPORARY\s+)?(?:TABLE|VIEW)\s+(?:IF\s+NOT\s+EXISTS\s+)?|INSERT\s+INTO\s+)([A-Za-z_][A-Za-z0-9_]*)",
        )
        .expect("static regex")
    });
    re.captures(text).map(|c| c[1].to_ascii_lowercase())
}

enum SchemaGroup {
    Named(String),
    Verbatim(Statement),
}

fn group_schema(part: &[Statement]) -> (Vec<SchemaGroup>, indexmap::IndexMap<String, Vec<Statement>>) {
    let mut order = Vec::new();
    let mut groups: indexmap::IndexMap<String, Vec<Statement>> = indexmap::IndexMap::new();
    for stmt in part {
        match schema_target(&stmt.text) {
            Some(name) => {
                if !groups.contains_key(&name) {
                    order.push(SchemaGroup::Named(name.clone()));
                }
                groups.entry(name).or_default().push(stmt.clone());
            }
            None => order.push(SchemaGroup::Verbatim(stmt.clone())),
        }
    }
    (order, groups)
}

/// Algorithm lines 3-11: for each table defined in either parent, keep
/// exactly one definition group (CREATE plus its INSERTs), chosen at random
/// when both parents define it. Statements whose target cannot be extracted
/// are carried verbatim in parent order.
pub fn unify_schemas(
    s1: &[Statement],
    s2: &[Statement],
    rng: &mut impl Rng,
) -> Vec<Statement> {
    let (order1, groups1) = group_schema(s1);
    let (order2, groups2) = group_schema(s2);
    let mut out = Vec::new();
    let mut emitted: std::collections::HashSet<String> = std::collections::HashSet::new();
    for item in order1 {
        match item {
            SchemaGroup::Named(name) => {
                let group = if groups2.contains_key(&name) && rng.random_bool(0.5) {
                    &groups2[&name]
                } else {
                    &groups1[&name]
                };
                out.extend(group.iter().cloned());
                emitted.insert(name);
            }
            SchemaGroup::Verbatim(stmt) => out.push(stmt),
        }
    }
    for item in order2 {
        match item {
            SchemaGroup::Named(name) => {
                if emitted.insert(name.clone()) {
                    out.extend(groups2[&name].iter().cloned());
                }
            }
            SchemaGroup::Verbatim(stmt) => out.push(stmt),
        }
    }
    out
}

/// Algorithm lines 13-21: probabilistic interleaving that preserves the
/// relative order within each parent and uses every statement exactly once.
pub fn crossover(
    o1: &[Statement],
    o2: &[Statement],
    config: &MutationConfig,
    rng: &mut impl Rng,
) -> Vec<Statement> {
    let mut out = Vec::with_capacity(o1.len() + o2.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i < o1.len() || j < o2.len() {
        if i < o1.len() && (j >= o2.len() || rng.random_bool(config.crossover_bias)) {
            out.push(o1[i].clone());
            i += 1;
        } else {
            out.push(o2[j].clone());
            j += 1;
        }
    }
    out
}

/// Algorithm lines 22-27: drop each statement with probability
/// p_drop ~ U(drop_low, drop_high), resampled per statement. Never returns
/// an empty sequence for non-empty input: if everything would drop, one
/// uniformly chosen statement is retained.
pub fn drop_filter(
    ops: &[Statement],
    config: &MutationConfig,
    rng: &mut impl Rng,
) -> Vec<Statement> {
    let mut out = Vec::with_capacity(ops.len());
    for stmt in ops {
        let p_drop = if config.drop_high > config.drop_low {
            rng.random_range(config.drop_low..config.drop_high)
        } else {
            config.drop_low
        };
        if !rng.random_bool(p_drop) {
            out.push(stmt.clone());
        }
    }
    if out.is_empty() && !ops.is_empty() {
        out.push(ops[rng.random_range(0..ops.len())].clone());
    }
    out
}

/// A token pattern: uppercase units matched against consecutive significant
/// tokens (words case-insensitively, operators exactly).
fn pattern_units(pattern: &str) -> Vec<String> {
    pattern.split_whitespace().map(|u| u.to_ascii_uppercase()).collect()
}

fn significant(tokens: &[Token]) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t.kind, TokenKind::Word | TokenKind::Operator))
        .map(|(i, _)| i)
        .collect()
}

struct MatchSite {
    start_byte: usize,
    end_byte: usize,
    rule_index: usize,
}

/// Non-overlapping rewrite sites, longest pattern first at each position.
/// String literals, quoted identifiers, comments, and placeholders are never
/// part of a site.
fn find_sites(text: &str, rules: &[RewriteRule]) -> Vec<MatchSite> {
    let tokens = tokenize(text);
    let sig = significant(&tokens);
    let mut by_len: Vec<(usize, Vec<String>)> = rules
        .iter()
        .enumerate()
        .map(|(i, r)| (i, pattern_units(&r.from)))
        .collect();
    by_len.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let mut sites = Vec::new();
    let mut pos = 0usize;
    while pos < sig.len() {
        let mut matched = None;
        for (rule_index, units) in &by_len {
            if pos + units.len() > sig.len() {
                continue;
            }
            let fits = units.iter().enumerate().all(|(k, unit)| {
                let tok = &tokens[sig[pos + k]];
                let text_k = tok.text(text);
                match tok.kind {
                    TokenKind::Word => text_k.eq_ignore_ascii_case(unit),
                    TokenKind::Operator => text_k == unit,
                    _ => false,
                }
            });
            if fits {
                matched = Some((*rule_index, units.len()));
                break;
            }
        }
        match matched {
            Some((rule_index, len)) => {
                sites.push(MatchSite {
                    start_byte: tokens[sig[pos]].start,
                    end_byte: tokens[sig[pos + len - 1]].end,
                    rule_index,
                });
                pos += len;
            }
            None => pos += 1,
        }
    }
    sites
}

/// Token-level conditional rewrite. Each matched site is independently
/// rewritten with `rewrite_probability` to a replacement legal under the
/// dialect; sites with no legal replacement are left alone.
pub fn logic_shift(
    stmt: &Statement,
    rules: &RewriteRuleSet,
    dialect: &str,
    config: &MutationConfig,
    rng: &mut impl Rng,
) -> Statement {
    let sites = find_sites(&stmt.text, &rules.rules);
    if sites.is_empty() {
        return stmt.clone();
    }
    let mut out = String::with_capacity(stmt.text.len());
    let mut cursor = 0usize;
    for site in sites {
        let rule = &rules.rules[site.rule_index];
        let legal: Vec<&RewriteTarget> = rule
            .to
            .iter()
            .filter(|t| t.dialects.iter().any(|d| d == dialect))
            .collect();
        out.push_str(&stmt.text[cursor..site.start_byte]);
        if !legal.is_empty() && rng.random_bool(config.rewrite_probability) {
            let target = legal[rng.random_range(0..legal.len())];
            out.push_str(&target.text);
        } else {
            out.push_str(&stmt.text[site.start_byte..site.end_byte]);
        }
        cursor = site.end_byte;
    }
    out.push_str(&stmt.text[cursor..]);
    Statement::new(out)
}

/// The full progressive mutation:
/// unified schema ∪ logic_shift(drop_filter(crossover(O1, O2))).
pub fn mutate(
    t1: &TestCase,
    t2: &TestCase,
    parent_ids: (u64, u64),
    config: &MutationConfig,
    rules: &RewriteRuleSet,
    dialect: &str,
    rng: &mut impl Rng,
) -> TestCase {
    let schema_part = unify_schemas(&t1.schema_part, &t2.schema_part, rng);
    let crossed = crossover(&t1.op_part, &t2.op_part, config, rng);
    let filtered = drop_filter(&crossed, config, rng);
    let op_part: Vec<Statement> = filtered
        .iter()
        .map(|s| logic_shift(s, rules, dialect, config, rng))
        .collect();
    TestCase { schema_part, op_part, lineage: vec![parent_ids.0, parent_ids.1] }
}
