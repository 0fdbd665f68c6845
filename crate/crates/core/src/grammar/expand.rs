//! Bounded template expansion: random derivation, trace replay, and
//! exhaustive enumeration over the same rule walk.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ExpansionConfig, Grammar, GrammarError, RuleKind, RuleNode, Symbol};

/// One recorded derivation event. Replaying the decision steps against the
/// same grammar and config reproduces the template byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceStep {
    /// A named rule was expanded (counts against depth and quota).
    Enter { rule: String },
    /// A leaf-set nonterminal was emitted as `[name]` (counts against quota).
    Leaf { name: String },
    /// Child index picked at a Choice inside `rule`.
    Choice { rule: String, index: usize },
    /// Include/omit decision at an Optional inside `rule`.
    Optional { rule: String, included: bool },
    /// Total repetition count picked at a Repeat inside `rule`.
    Repeat { rule: String, count: usize },
}

/// A skeletal SQL statement: leaf nonterminals rendered as `[name]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlTemplate {
    pub text: String,
    pub start: String,
    pub derivation_trace: Vec<TraceStep>,
    /// Deepest named-rule nesting reached while deriving.
    pub depth: usize,
}

impl SqlTemplate {
    /// Rule usage counted from the trace (Enter + Leaf events).
    pub fn rule_usage(&self) -> HashMap<String, usize> {
        let mut usage = HashMap::new();
        for step in &self.derivation_trace {
            match step {
                TraceStep::Enter { rule } => *usage.entry(rule.clone()).or_insert(0) += 1,
                TraceStep::Leaf { name } => *usage.entry(name.clone()).or_insert(0) += 1,
                _ => {}
            }
        }
        usage
    }
}

/// Spacing rules that reproduce the template layout shown by grammar-derived
/// skeletons: words separated by single spaces, punctuation attached.
pub(crate) fn render_tokens(tokens: &[String]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let no_space_before = matches!(tok.as_str(), "," | ")" | ";" | ".");
        let last = out.chars().last();
        let no_space_after_prev = matches!(last, Some('(') | Some(',') | Some('.'));
        if !out.is_empty() && !no_space_before && !no_space_after_prev {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

enum DeadEnd {
    Stuck,
}

trait Decider {
    fn choice(&mut self, viable: &[usize]) -> Result<usize, DeadEnd>;
    fn optional(&mut self, can_include: bool) -> Result<bool, DeadEnd>;
    /// Pick a repetition count in 1..=max.
    fn repeat(&mut self, max: usize) -> Result<usize, DeadEnd>;
}

struct RandomDecider<'r, R: Rng> {
    rng: &'r mut R,
    optional_probability: f64,
}

impl<R: Rng> Decider for RandomDecider<'_, R> {
    fn choice(&mut self, viable: &[usize]) -> Result<usize, DeadEnd> {
        if viable.is_empty() {
            return Err(DeadEnd::Stuck);
        }
        Ok(viable[self.rng.random_range(0..viable.len())])
    }

    fn optional(&mut self, can_include: bool) -> Result<bool, DeadEnd> {
        Ok(can_include && self.rng.random_bool(self.optional_probability))
    }

    fn repeat(&mut self, max: usize) -> Result<usize, DeadEnd> {
        if max == 0 {
            return Err(DeadEnd::Stuck);
        }
        // geometric with p = 0.5, capped
        let mut count = 1;
        while count < max && self.rng.random_bool(0.5) {
            count += 1;
        }
        Ok(count)
    }
}

/// Feeds back the decisions recorded in an existing trace.
struct ReplayDecider<'t> {
    steps: std::slice::Iter<'t, TraceStep>,
}

impl ReplayDecider<'_> {
    fn next_decision(&mut self) -> Option<&TraceStep> {
        self.steps
            .by_ref()
            .find(|s| !matches!(s, TraceStep::Enter { .. } | TraceStep::Leaf { .. }))
    }
}

impl Decider for ReplayDecider<'_> {
    fn choice(&mut self, _viable: &[usize]) -> Result<usize, DeadEnd> {
        match self.next_decision() {
            Some(TraceStep::Choice { index, .. }) => Ok(*index),
            _ => Err(DeadEnd::Stuck),
        }
    }

    fn optional(&mut self, _can_include: bool) -> Result<bool, DeadEnd> {
        match self.next_decision() {
            Some(TraceStep::Optional { included, .. }) => Ok(*included),
            _ => Err(DeadEnd::Stuck),
        }
    }

    fn repeat(&mut self, _max: usize) -> Result<usize, DeadEnd> {
        match self.next_decision() {
            Some(TraceStep::Repeat { count, .. }) => Ok(*count),
            _ => Err(DeadEnd::Stuck),
        }
    }
}

struct Walker<'g, D: Decider> {
    grammar: &'g Grammar,
    config: &'g ExpansionConfig,
    decider: D,
    usage: HashMap<String, usize>,
    trace: Vec<TraceStep>,
    tokens: Vec<String>,
    max_level: usize,
}

impl<'g, D: Decider> Walker<'g, D> {
    fn new(grammar: &'g Grammar, config: &'g ExpansionConfig, decider: D) -> Self {
        Walker {
            grammar,
            config,
            decider,
            usage: HashMap::new(),
            trace: Vec::new(),
            tokens: Vec::new(),
            max_level: 0,
        }
    }

    fn used(&self, name: &str) -> usize {
        self.usage.get(name).copied().unwrap_or(0)
    }

    /// Whether expanding `sym` from nesting level `level` can stay within the
    /// depth bound and (for direct nonterminals) the usage quota.
    fn viable(&self, sym: &Symbol, level: usize) -> bool {
        match sym {
            Symbol::Terminal(_) => true,
            Symbol::NonTerminal(name) => {
                if self.used(name) >= self.config.quota(name) {
                    return false;
                }
                if self.grammar.is_leaf(name) {
                    true
                } else {
                    level + self.grammar.min_depth_of(name) <= self.config.max_depth
                }
            }
            Symbol::Group(node) => {
                level + super::min_depth_node(node, self.grammar, grammar_depths(self.grammar))
                    <= self.config.max_depth
            }
        }
    }

    fn walk_symbol(&mut self, sym: &Symbol, rule: &str, level: usize) -> Result<(), DeadEnd> {
        match sym {
            Symbol::Terminal(text) => {
                self.tokens.push(text.clone());
                Ok(())
            }
            Symbol::NonTerminal(name) => {
                if self.used(name) >= self.config.quota(name) {
                    return Err(DeadEnd::Stuck);
                }
                *self.usage.entry(name.clone()).or_insert(0) += 1;
                if self.grammar.is_leaf(name) {
                    self.trace.push(TraceStep::Leaf { name: name.clone() });
                    self.tokens.push(format!("[{name}]"));
                    return Ok(());
                }
                let next_level = level + 1;
                if next_level + self.grammar.min_depth_of(name).saturating_sub(1)
                    > self.config.max_depth
                {
                    return Err(DeadEnd::Stuck);
                }
                self.max_level = self.max_level.max(next_level);
                self.trace.push(TraceStep::Enter { rule: name.clone() });
                let node = self.grammar.rule(name).ok_or(DeadEnd::Stuck)?.clone();
                self.walk_node(&node, name, next_level)
            }
            Symbol::Group(node) => self.walk_node(node, rule, level),
        }
    }

    fn walk_node(&mut self, node: &RuleNode, rule: &str, level: usize) -> Result<(), DeadEnd> {
        match node.kind {
            RuleKind::Sequence => {
                for child in &node.children {
                    self.walk_symbol(child, rule, level)?;
                }
                Ok(())
            }
            RuleKind::Optional => {
                let child = &node.children[0];
                let can_include = self.viable(child, level);
                let included = self.decider.optional(can_include)?;
                self.trace.push(TraceStep::Optional { rule: rule.to_string(), included });
                if included {
                    self.walk_symbol(child, rule, level)?;
                }
                Ok(())
            }
            RuleKind::Choice => {
                let viable: Vec<usize> = node
                    .children
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| self.viable(c, level))
                    .map(|(i, _)| i)
                    .collect();
                let index = self.decider.choice(&viable)?;
                let child = node.children.get(index).ok_or(DeadEnd::Stuck)?;
                self.trace.push(TraceStep::Choice { rule: rule.to_string(), index });
                self.walk_symbol(child, rule, level)
            }
            RuleKind::Repeat => {
                let child = &node.children[0];
                if !self.viable(child, level) {
                    return Err(DeadEnd::Stuck);
                }
                let max = self.repeat_cap(child);
                let count = self.decider.repeat(max)?;
                self.trace.push(TraceStep::Repeat { rule: rule.to_string(), count });
                for i in 0..count {
                    if i > 0 {
                        if let Some(sep) = &node.separator {
                            self.tokens.push(sep.clone());
                        }
                    }
                    self.walk_symbol(child, rule, level)?;
                }
                Ok(())
            }
        }
    }

    /// Most repetitions the quota allows for the repeated child.
    fn repeat_cap(&self, child: &Symbol) -> usize {
        match child {
            Symbol::NonTerminal(name) => {
                self.config.quota(name).saturating_sub(self.used(name))
            }
            Symbol::Terminal(_) => self.config.default_quota,
            Symbol::Group(node) => {
                let mut cap = usize::MAX;
                let mut saw_nt = false;
                node.for_each_child(&mut |sym| {
                    if let Symbol::NonTerminal(n) = sym {
                        saw_nt = true;
                        cap = cap.min(self.config.quota(n).saturating_sub(self.used(n)));
                    }
                });
                if saw_nt {
                    cap.max(0)
                } else {
                    self.config.default_quota
                }
            }
        }
    }

    fn into_template(self, start: &str) -> SqlTemplate {
        SqlTemplate {
            text: render_tokens(&self.tokens),
            start: start.to_string(),
            derivation_trace: self.trace,
            depth: self.max_level,
        }
    }
}

// min_depth lookups for groups need the precomputed map; Grammar keeps it
// private, so thread it through a helper.
fn grammar_depths(grammar: &Grammar) -> &HashMap<String, usize> {
    grammar.min_depths()
}

const MAX_ATTEMPTS: usize = 64;

/// Randomly expand one bounded template rooted at `start`.
pub fn expand(
    grammar: &Grammar,
    start: &str,
    config: &ExpansionConfig,
    rng: &mut impl Rng,
) -> Result<SqlTemplate, GrammarError> {
    config.validate()?;
    if grammar.rule(start).is_none() {
        return Err(GrammarError::UnknownStart(start.to_string()));
    }
    if grammar.min_depth_of(start) > config.max_depth {
        return Err(GrammarError::DepthExhausted {
            start: start.to_string(),
            max_depth: config.max_depth,
        });
    }
    for _ in 0..MAX_ATTEMPTS {
        let decider = RandomDecider { rng, optional_probability: config.optional_probability };
        let mut walker = Walker::new(grammar, config, decider);
        match walker.walk_symbol(&Symbol::NonTerminal(start.to_string()), start, 0) {
            Ok(()) => return Ok(walker.into_template(start)),
            Err(DeadEnd::Stuck) => continue,
        }
    }
    Err(GrammarError::DepthExhausted { start: start.to_string(), max_depth: config.max_depth })
}

/// Re-derive a template from its recorded trace. Returns the reproduced
/// template (text, depth, and a freshly recorded trace).
pub fn replay_trace(
    grammar: &Grammar,
    start: &str,
    config: &ExpansionConfig,
    trace: &[TraceStep],
) -> Result<SqlTemplate, GrammarError> {
    let decider = ReplayDecider { steps: trace.iter() };
    let mut walker = Walker::new(grammar, config, decider);
    walker
        .walk_symbol(&Symbol::NonTerminal(start.to_string()), start, 0)
        .map_err(|_| GrammarError::TraceMismatch(format!("trace does not fit '{start}'")))?;
    Ok(walker.into_template(start))
}

/// Sample `count` templates across `starts`.
pub fn expand_batch(
    grammar: &Grammar,
    starts: &[String],
    config: &ExpansionConfig,
    rng: &mut impl Rng,
    count: usize,
) -> Result<Vec<SqlTemplate>, GrammarError> {
    if starts.is_empty() {
        return Err(GrammarError::InvalidConfig("no start symbols".into()));
    }
    (0..count)
        .map(|_| {
            let start = &starts[rng.random_range(0..starts.len())];
            expand(grammar, start, config, rng)
        })
        .collect()
}

#[derive(Clone)]
struct Variant {
    tokens: Vec<String>,
    trace: Vec<TraceStep>,
    usage: HashMap<String, usize>,
    max_level: usize,
}

/// Every distinct template reachable under the config bounds, sorted by text.
pub fn enumerate_all(
    grammar: &Grammar,
    start: &str,
    config: &ExpansionConfig,
) -> Result<Vec<SqlTemplate>, GrammarError> {
    config.validate()?;
    if grammar.rule(start).is_none() {
        return Err(GrammarError::UnknownStart(start.to_string()));
    }
    let mut budget = config.enumeration_budget;
    let seed = Variant {
        tokens: Vec::new(),
        trace: Vec::new(),
        usage: HashMap::new(),
        max_level: 0,
    };
    let variants = enum_symbol(
        grammar,
        config,
        &Symbol::NonTerminal(start.to_string()),
        start,
        0,
        &seed,
        &mut budget,
    )?;
    let mut seen = std::collections::BTreeMap::new();
    for v in variants {
        let text = render_tokens(&v.tokens);
        seen.entry(text).or_insert((v.trace, v.max_level));
    }
    Ok(seen
        .into_iter()
        .map(|(text, (trace, depth))| SqlTemplate {
            text,
            start: start.to_string(),
            derivation_trace: trace,
            depth,
        })
        .collect())
}

fn charge(budget: &mut usize, config: &ExpansionConfig) -> Result<(), GrammarError> {
    if *budget == 0 {
        return Err(GrammarError::BudgetExceeded(config.enumeration_budget));
    }
    *budget -= 1;
    Ok(())
}

fn enum_symbol(
    grammar: &Grammar,
    config: &ExpansionConfig,
    sym: &Symbol,
    rule: &str,
    level: usize,
    base: &Variant,
    budget: &mut usize,
) -> Result<Vec<Variant>, GrammarError> {
    match sym {
        Symbol::Terminal(text) => {
            charge(budget, config)?;
            let mut v = base.clone();
            v.tokens.push(text.clone());
            Ok(vec![v])
        }
        Symbol::NonTerminal(name) => {
            let used = base.usage.get(name).copied().unwrap_or(0);
            if used >= config.quota(name) {
                return Ok(Vec::new());
            }
            if grammar.is_leaf(name) {
                charge(budget, config)?;
                let mut v = base.clone();
                *v.usage.entry(name.clone()).or_insert(0) += 1;
                v.trace.push(TraceStep::Leaf { name: name.clone() });
                v.tokens.push(format!("[{name}]"));
                return Ok(vec![v]);
            }
            let next_level = level + 1;
            if next_level + grammar.min_depth_of(name).saturating_sub(1) > config.max_depth {
                return Ok(Vec::new());
            }
            let mut entered = base.clone();
            *entered.usage.entry(name.clone()).or_insert(0) += 1;
            entered.trace.push(TraceStep::Enter { rule: name.clone() });
            entered.max_level = entered.max_level.max(next_level);
            let node = grammar.rule(name).expect("resolved rule").clone();
            enum_node(grammar, config, &node, name, next_level, &entered, budget)
        }
        Symbol::Group(node) => enum_node(grammar, config, node, rule, level, base, budget),
    }
}

fn enum_node(
    grammar: &Grammar,
    config: &ExpansionConfig,
    node: &RuleNode,
    rule: &str,
    level: usize,
    base: &Variant,
    budget: &mut usize,
) -> Result<Vec<Variant>, GrammarError> {
    match node.kind {
        RuleKind::Sequence => {
            let mut partials = vec![base.clone()];
            for child in &node.children {
                let mut next = Vec::new();
                for p in &partials {
                    next.extend(enum_symbol(grammar, config, child, rule, level, p, budget)?);
                }
                partials = next;
                if partials.is_empty() {
                    return Ok(Vec::new());
                }
            }
            Ok(partials)
        }
        RuleKind::Optional => {
            let mut out = Vec::new();
            let mut omitted = base.clone();
            omitted
                .trace
                .push(TraceStep::Optional { rule: rule.to_string(), included: false });
            out.push(omitted);
            let mut included_base = base.clone();
            included_base
                .trace
                .push(TraceStep::Optional { rule: rule.to_string(), included: true });
            out.extend(enum_symbol(
                grammar,
                config,
                &node.children[0],
                rule,
                level,
                &included_base,
                budget,
            )?);
            Ok(out)
        }
        RuleKind::Choice => {
            let mut out = Vec::new();
            for (index, child) in node.children.iter().enumerate() {
                let mut chosen = base.clone();
                chosen.trace.push(TraceStep::Choice { rule: rule.to_string(), index });
                out.extend(enum_symbol(grammar, config, child, rule, level, &chosen, budget)?);
            }
            Ok(out)
        }
        RuleKind::Repeat => {
            let child = &node.children[0];
            // cap repetitions like the random walker does
            let cap = repeat_cap_for(config, &base.usage, child);
            let mut out = Vec::new();
            for count in 1..=cap {
                let mut counted = base.clone();
                counted.trace.push(TraceStep::Repeat { rule: rule.to_string(), count });
                let mut partials = vec![counted];
                for i in 0..count {
                    let mut next = Vec::new();
                    for p in &partials {
                        let mut p = p.clone();
                        if i > 0 {
                            if let Some(sep) = &node.separator {
                                p.tokens.push(sep.clone());
                            }
                        }
                        next.extend(enum_symbol(grammar, config, child, rule, level, &p, budget)?);
                    }
                    partials = next;
                    if partials.is_empty() {
                        break;
                    }
                }
                out.extend(partials);
            }
            Ok(out)
        }
    }
}

fn repeat_cap_for(
    config: &ExpansionConfig,
    usage: &HashMap<String, usize>,
    child: &Symbol,
) -> usize {
    match child {
        Symbol::NonTerminal(name) => config
            .quota(name)
            .saturating_sub(usage.get(name).copied().unwrap_or(0)),
        Symbol::Terminal(_) => config.default_quota,
        Symbol::Group(node) => {
            let mut cap = usize::MAX;
            let mut saw_nt = false;
            node.for_each_child(&mut |sym| {
                if let Symbol::NonTerminal(n) = sym {
                    saw_nt = true;
                    cap = cap
                        .min(config.quota(n).saturating_sub(usage.get(n).copied().unwrap_or(0)));
                }
            });
            if saw_nt {
                cap
            } else {
                config.default_quota
            }
        }
    }
}
