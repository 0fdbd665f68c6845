//! Grammar engine: parse a SQL grammar into classified production rules and
//! expand bounded skeletal statement templates from them.
//!
//! The input dialect is a pragmatic subset of ANTLR4 parser-rule syntax:
//! alternation `|`, optional `?`, repetition `*`/`+`, grouping, quoted
//! literals, and UPPERCASE token names treated as literal keywords.

mod expand;
mod parse;

pub use expand::{enumerate_all, expand, expand_batch, replay_trace, SqlTemplate, TraceStep};
pub use parse::parse_grammar;

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four rule categories every production is normalized into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    /// Symbols expanded in order.
    Sequence,
    /// A single child that may be omitted.
    Optional,
    /// Mutually exclusive options, one selected.
    Choice,
    /// A single child repeated one or more times, optionally separated.
    Repeat,
}

/// One grammar symbol inside a rule body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symbol {
    /// Literal token text (keyword or quoted literal).
    Terminal(String),
    /// Reference to a named rule or to a leaf-set nonterminal.
    NonTerminal(String),
    /// Nested anonymous rule (from grouping or suffix normalization).
    Group(Box<RuleNode>),
}

/// A classified rule body. Named rules live in [`Grammar::rules`]; nested
/// bodies appear as [`Symbol::Group`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleNode {
    pub kind: RuleKind,
    pub children: Vec<Symbol>,
    /// Separator token between repetitions, only meaningful for Repeat.
    pub separator: Option<String>,
}

impl RuleNode {
    pub fn sequence(children: Vec<Symbol>) -> Self {
        RuleNode { kind: RuleKind::Sequence, children, separator: None }
    }

    pub fn optional(child: Symbol) -> Self {
        RuleNode { kind: RuleKind::Optional, children: vec![child], separator: None }
    }

    pub fn choice(children: Vec<Symbol>) -> Self {
        RuleNode { kind: RuleKind::Choice, children, separator: None }
    }

    pub fn repeat(child: Symbol, separator: Option<String>) -> Self {
        RuleNode { kind: RuleKind::Repeat, children: vec![child], separator }
    }

    fn validate(&self) -> Result<(), String> {
        match self.kind {
            RuleKind::Choice if self.children.len() < 2 => {
                Err("choice rule needs at least 2 children".into())
            }
            RuleKind::Optional if self.children.len() != 1 => {
                Err("optional rule needs exactly 1 child".into())
            }
            RuleKind::Repeat if self.children.len() != 1 => {
                Err("repeat rule needs exactly 1 repeated child".into())
            }
            _ => Ok(()),
        }
    }

    fn for_each_child(&self, f: &mut impl FnMut(&Symbol)) {
        for child in &self.children {
            f(child);
            if let Symbol::Group(node) = child {
                node.for_each_child(f);
            }
        }
    }
}

/// A parsed grammar: named rules, top-level start symbols, and the leaf set
/// of nonterminals that are never expanded (rendered as `[name]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grammar {
    pub rules: IndexMap<String, RuleNode>,
    pub start_symbols: Vec<String>,
    pub leaf_set: BTreeSet<String>,
    /// Minimal additional named-expansion depth needed below each rule,
    /// inclusive of the rule itself. Precomputed for bounded expansion.
    #[serde(skip)]
    min_depth: HashMap<String, usize>,
}

impl Grammar {
    pub fn new(
        rules: IndexMap<String, RuleNode>,
        leaf_set: BTreeSet<String>,
    ) -> Result<Self, GrammarError> {
        for (name, node) in &rules {
            node.validate()
                .map_err(|m| GrammarError::Syntax { line: 0, message: format!("{name}: {m}") })?;
            let mut err = None;
            node.for_each_child(&mut |sym| {
                if let Symbol::NonTerminal(n) = sym {
                    if !rules.contains_key(n) && !leaf_set.contains(n) && err.is_none() {
                        err = Some(n.clone());
                    }
                }
            });
            if let Some(n) = err {
                return Err(GrammarError::UnresolvedReference(n));
            }
        }
        let start_symbols = infer_roots(&rules);
        let mut grammar = Grammar { rules, start_symbols, leaf_set, min_depth: HashMap::new() };
        grammar.min_depth = compute_min_depths(&grammar);
        Ok(grammar)
    }

    /// Override the inferred start symbols.
    pub fn with_start_symbols(mut self, starts: Vec<String>) -> Result<Self, GrammarError> {
        for s in &starts {
            if !self.rules.contains_key(s) {
                return Err(GrammarError::UnknownStart(s.clone()));
            }
        }
        self.start_symbols = starts;
        Ok(self)
    }

    pub fn rule(&self, name: &str) -> Option<&RuleNode> {
        self.rules.get(name)
    }

    pub fn is_leaf(&self, name: &str) -> bool {
        self.leaf_set.contains(name)
    }

    /// Depth consumed by expanding `name`, including the rule itself.
    /// `UNREACHABLE` marks an all-mandatory recursive cycle.
    pub(crate) fn min_depth_of(&self, name: &str) -> usize {
        self.min_depth.get(name).copied().unwrap_or(0)
    }

    pub(crate) fn min_depths(&self) -> &HashMap<String, usize> {
        &self.min_depth
    }
}

/// Rules never referenced by another rule are the top-level statements.
fn infer_roots(rules: &IndexMap<String, RuleNode>) -> Vec<String> {
    let mut referenced: BTreeSet<String> = BTreeSet::new();
    for node in rules.values() {
        node.for_each_child(&mut |sym| {
            if let Symbol::NonTerminal(n) = sym {
                referenced.insert(n.clone());
            }
        });
    }
    let roots: Vec<String> =
        rules.keys().filter(|k| !referenced.contains(k.as_str())).cloned().collect();
    if roots.is_empty() {
        // fully cyclic grammar: fall back to the first rule
        rules.keys().take(1).cloned().collect()
    } else {
        roots
    }
}

const UNREACHABLE: usize = usize::MAX / 4;

fn compute_min_depths(grammar: &Grammar) -> HashMap<String, usize> {
    let mut depths: HashMap<String, usize> =
        grammar.rules.keys().map(|k| (k.clone(), UNREACHABLE)).collect();
    loop {
        let mut changed = false;
        for (name, node) in &grammar.rules {
            let candidate = min_depth_node(node, grammar, &depths).saturating_add(1);
            let entry = depths.get_mut(name).expect("rule key");
            if candidate < *entry {
                *entry = candidate;
                changed = true;
            }
        }
        if !changed {
            return depths;
        }
    }
}

fn min_depth_symbol(
    sym: &Symbol,
    grammar: &Grammar,
    depths: &HashMap<String, usize>,
) -> usize {
    match sym {
        Symbol::Terminal(_) => 0,
        Symbol::NonTerminal(n) => {
            if grammar.leaf_set.contains(n) {
                0
            } else {
                depths.get(n).copied().unwrap_or(UNREACHABLE)
            }
        }
        Symbol::Group(node) => min_depth_node(node, grammar, depths),
    }
}

pub(crate) fn min_depth_node(
    node: &RuleNode,
    grammar: &Grammar,
    depths: &HashMap<String, usize>,
) -> usize {
    match node.kind {
        RuleKind::Sequence => node
            .children
            .iter()
            .map(|c| min_depth_symbol(c, grammar, depths))
            .max()
            .unwrap_or(0),
        RuleKind::Optional => 0,
        RuleKind::Choice => node
            .children
            .iter()
            .map(|c| min_depth_symbol(c, grammar, depths))
            .min()
            .unwrap_or(0),
        RuleKind::Repeat => {
            node.children.first().map(|c| min_depth_symbol(c, grammar, depths)).unwrap_or(0)
        }
    }
}

/// Bounds and sampling knobs for template expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionConfig {
    /// Derivation-tree depth bound (named-rule nesting), ≥ 1.
    pub max_depth: usize,
    /// Usage cap applied to any rule without an explicit quota entry.
    pub default_quota: usize,
    /// Per-rule usage caps, counted per template.
    pub rule_quota: HashMap<String, usize>,
    /// Probability of including an Optional child, in [0, 1].
    pub optional_probability: f64,
    /// Cap on the number of variants `enumerate_all` may materialize.
    pub enumeration_budget: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            max_depth: 6,
            default_quota: 3,
            rule_quota: HashMap::new(),
            optional_probability: 0.5,
            enumeration_budget: 200_000,
        }
    }
}

impl ExpansionConfig {
    pub fn quota(&self, rule: &str) -> usize {
        self.rule_quota.get(rule).copied().unwrap_or(self.default_quota)
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        if self.max_depth == 0 {
            return Err(GrammarError::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.default_quota == 0 || self.rule_quota.values().any(|q| *q == 0) {
            return Err(GrammarError::InvalidConfig("quotas must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.optional_probability) {
            return Err(GrammarError::InvalidConfig(
                "optional_probability must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("grammar syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unresolved nonterminal reference: {0}")]
    UnresolvedReference(String),
    #[error("unknown start symbol: {0}")]
    UnknownStart(String),
    #[error("no derivation of '{start}' fits within depth {max_depth}")]
    DepthExhausted { start: String, max_depth: usize },
    #[error("enumeration budget exceeded after {0} variants")]
    BudgetExceeded(usize),
    #[error("invalid expansion config: {0}")]
    InvalidConfig(String),
    #[error("derivation trace mismatch: {0}")]
    TraceMismatch(String),
}
