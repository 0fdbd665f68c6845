//! Expansion correctness against independent oracles: a brute-force
//! enumerator over the rule structure, hand-frozen template sets, and a
//! closed-form variant count for the alterTable fragment.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sqlfuzz_core::grammar::{
    enumerate_all, expand, expand_batch, parse_grammar, replay_trace, ExpansionConfig, Grammar,
    RuleKind, RuleNode, Symbol,
};

const ALTER_TABLE_FRAGMENT: &str = "alterTable : ALTER (ONLINE|OFFLINE)? IGNORE? TABLE tableName \
     alterSpecification (',' alterSpecification)* partitionDefinitions? ;";

fn alter_leaves() -> Vec<String> {
    ["tableName", "alterSpecification", "partitionDefinitions"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn sqlite_leaf_set() -> Vec<String> {
    [
        "tableName", "columnName", "viewName", "indexName", "tableAlias", "expression",
        "literalValue", "columnDef", "columnDefList", "pragmaName", "pragmaValue",
        "savepointName", "schemaName", "dbFileName",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn load_sqlite_grammar() -> Grammar {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../grammars/sqlite.g4");
    let src = std::fs::read_to_string(path).expect("grammar fixture");
    parse_grammar(&src, &sqlite_leaf_set()).expect("sqlite grammar parses")
}

// ---------------------------------------------------------------------------
// Independent brute-force enumerator. Written directly over the rule
// structure as a set-of-token-lists computation, with no traces, no usage
// maps, and no shared walker code. Repeat children must be leaf nonterminals
// (cap = their quota); recursion is bounded by the depth limit alone, so
// recursive fixtures must set quotas high enough not to bind.
// ---------------------------------------------------------------------------

fn brute_force_texts(g: &Grammar, cfg: &ExpansionConfig, start: &str) -> BTreeSet<String> {
    let node = g.rule(start).expect("start rule").clone();
    bf_node(g, cfg, &node, 1)
        .into_iter()
        .map(|tokens| bf_render(&tokens))
        .collect()
}

fn bf_symbol(g: &Grammar, cfg: &ExpansionConfig, sym: &Symbol, level: usize) -> Vec<Vec<String>> {
    match sym {
        Symbol::Terminal(t) => vec![vec![t.clone()]],
        Symbol::NonTerminal(n) if g.is_leaf(n) => vec![vec![format!("[{n}]")]],
        Symbol::NonTerminal(n) => {
            if level + 1 > cfg.max_depth {
                return Vec::new();
            }
            let node = g.rule(n).expect("resolved").clone();
            bf_node(g, cfg, &node, level + 1)
        }
        Symbol::Group(node) => bf_node(g, cfg, node, level),
    }
}

fn bf_node(g: &Grammar, cfg: &ExpansionConfig, node: &RuleNode, level: usize) -> Vec<Vec<String>> {
    match node.kind {
        RuleKind::Sequence => {
            let mut acc: Vec<Vec<String>> = vec![Vec::new()];
            for child in &node.children {
                let variants = bf_symbol(g, cfg, child, level);
                let mut next = Vec::new();
                for prefix in &acc {
                    for v in &variants {
                        let mut joined = prefix.clone();
                        joined.extend(v.iter().cloned());
                        next.push(joined);
                    }
                }
                acc = next;
                if acc.is_empty() {
                    return acc;
                }
            }
            acc
        }
        RuleKind::Optional => {
            let mut acc = vec![Vec::new()];
            acc.extend(bf_symbol(g, cfg, &node.children[0], level));
            acc
        }
        RuleKind::Choice => node
            .children
            .iter()
            .flat_map(|c| bf_symbol(g, cfg, c, level))
            .collect(),
        RuleKind::Repeat => {
            let child = &node.children[0];
            let cap = match child {
                Symbol::NonTerminal(n) if g.is_leaf(n) => cfg.quota(n),
                Symbol::Terminal(_) => cfg.default_quota,
                _ => panic!("brute-force oracle only supports leaf/terminal repeat children"),
            };
            let base = bf_symbol(g, cfg, child, level);
            let mut out = Vec::new();
            for count in 1..=cap {
                let mut partials: Vec<Vec<String>> = vec![Vec::new()];
                for i in 0..count {
                    let mut next = Vec::new();
                    for p in &partials {
                        for v in &base {
                            let mut joined = p.clone();
                            if i > 0 {
                                if let Some(sep) = &node.separator {
                                    joined.push(sep.clone());
                                }
                            }
                            joined.extend(v.iter().cloned());
                            next.push(joined);
                        }
                    }
                    partials = next;
                }
                out.extend(partials);
            }
            out
        }
    }
}

fn bf_render(tokens: &[String]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tight_before = matches!(tok.as_str(), "," | ")" | ";" | ".");
        let tight_after = matches!(out.chars().last(), Some('(') | Some(',') | Some('.'));
        if !out.is_empty() && !tight_before && !tight_after {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

fn impl_texts(g: &Grammar, cfg: &ExpansionConfig, start: &str) -> BTreeSet<String> {
    enumerate_all(g, start, cfg)
        .expect("enumeration")
        .into_iter()
        .map(|t| t.text)
        .collect()
}

// ---------------------------------------------------------------------------

#[test]
fn toy_optional_choice_matches_hand_enumeration() {
    let g = parse_grammar("s : A b? ; b : B | C ;", &[]).unwrap();
    let cfg = ExpansionConfig { max_depth: 2, ..Default::default() };
    let got = impl_texts(&g, &cfg, "s");
    let expected: BTreeSet<String> =
        ["A", "A B", "A C"].iter().map(|s| s.to_string()).collect();
    assert_eq!(got, expected);
    assert_eq!(got, brute_force_texts(&g, &cfg, "s"));
}

#[test]
fn toy_separated_list_matches_brute_force() {
    let g = parse_grammar(
        "listStmt : LIST item (',' item)* tail? ; tail : ASC | DESC ;",
        &["item".to_string()],
    )
    .unwrap();
    let cfg = ExpansionConfig { max_depth: 3, ..Default::default() };
    let got = impl_texts(&g, &cfg, "listStmt");
    let expected = brute_force_texts(&g, &cfg, "listStmt");
    assert_eq!(got, expected);
    // 3 list lengths x (omit | ASC | DESC)
    assert_eq!(got.len(), 9);
    assert!(got.contains("LIST [item],[item] DESC"));
}

#[test]
fn toy_recursive_grammar_matches_brute_force_at_each_depth() {
    let src = "e : V '(' e AND e ')' | W ;";
    let g = parse_grammar(src, &[]).unwrap();
    for depth in 1..=3 {
        let mut cfg = ExpansionConfig { max_depth: depth, ..Default::default() };
        cfg.rule_quota.insert("e".to_string(), 1000);
        let got = impl_texts(&g, &cfg, "e");
        let expected = brute_force_texts(&g, &cfg, "e");
        assert_eq!(got, expected, "depth {depth}");
    }
    // depth 1 admits only the non-recursive alternative
    let mut cfg = ExpansionConfig { max_depth: 1, ..Default::default() };
    cfg.rule_quota.insert("e".to_string(), 1000);
    assert_eq!(impl_texts(&g, &cfg, "e"), ["W".to_string()].into_iter().collect());
}

#[test]
fn alter_table_enumeration_matches_brute_force_and_closed_form() {
    let g = parse_grammar(ALTER_TABLE_FRAGMENT, &alter_leaves()).unwrap();
    let cfg = ExpansionConfig::default();
    let got = impl_texts(&g, &cfg, "alterTable");
    assert_eq!(got, brute_force_texts(&g, &cfg, "alterTable"));
    // closed form: (omit|ONLINE|OFFLINE) x IGNORE? x repeat count in {1,2,3}
    // x partitionDefinitions? = 3 * 2 * 3 * 2
    assert_eq!(got.len(), 36);
    // Both canonical templates derived from the alterTable rule
    assert!(got.contains(
        "ALTER ONLINE TABLE [tableName] [alterSpecification] [partitionDefinitions]"
    ));
    assert!(got.contains("ALTER TABLE [tableName] [alterSpecification],[alterSpecification]"));
}

#[test]
fn alter_table_with_repeat_quota_two() {
    let g = parse_grammar(ALTER_TABLE_FRAGMENT, &alter_leaves()).unwrap();
    let mut cfg = ExpansionConfig { max_depth: 3, ..Default::default() };
    cfg.rule_quota.insert("alterSpecification".to_string(), 2);
    let got = impl_texts(&g, &cfg, "alterTable");
    let expected = brute_force_texts(&g, &cfg, "alterTable");
    assert_eq!(got, expected);
    assert_eq!(got.len(), 3 * 2 * 2 * 2);
}

#[test]
fn single_terminal_rule_expands_to_itself() {
    let g = parse_grammar("stmt : COMMIT ;", &[]).unwrap();
    let cfg = ExpansionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = expand(&g, "stmt", &cfg, &mut rng).unwrap();
    assert_eq!(t.text, "COMMIT");
    let all = impl_texts(&g, &cfg, "stmt");
    assert_eq!(all, ["COMMIT".to_string()].into_iter().collect());
}

#[test]
fn all_mandatory_cycle_reports_depth_exhausted() {
    let g = parse_grammar("a : X b ; b : Y a ;", &[]).unwrap();
    let cfg = ExpansionConfig { max_depth: 4, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let err = expand(&g, "a", &cfg, &mut rng).unwrap_err();
    assert!(err.to_string().contains("depth"));
}

#[test]
fn sqlite_grammar_expansions_respect_bounds_and_replay() {
    let g = load_sqlite_grammar();
    for max_depth in [3usize, 5, 8] {
        let cfg = ExpansionConfig { max_depth, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(max_depth as u64);
        for i in 0..250 {
            let t = expand(&g, "sqlStmt", &cfg, &mut rng)
                .unwrap_or_else(|e| panic!("expansion {i} at depth {max_depth}: {e}"));
            assert!(t.depth <= max_depth, "depth violation: {} > {max_depth}", t.depth);
            for (rule, used) in t.rule_usage() {
                assert!(
                    used <= cfg.quota(&rule),
                    "quota violation for {rule}: {used} > {}",
                    cfg.quota(&rule)
                );
            }
            let replayed = replay_trace(&g, "sqlStmt", &cfg, &t.derivation_trace).unwrap();
            assert_eq!(replayed.text, t.text, "replay must be byte-identical");
            assert_eq!(replayed.depth, t.depth);
        }
    }
}

#[test]
fn expand_batch_is_deterministic_under_fixed_seed() {
    let g = load_sqlite_grammar();
    let cfg = ExpansionConfig::default();
    let starts = vec!["sqlStmt".to_string()];
    let run = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        expand_batch(&g, &starts, &cfg, &mut rng, 25)
            .unwrap()
            .into_iter()
            .map(|t| t.text)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(99), run(99));
    assert_ne!(run(99), run(100), "different seeds should diverge");
}

#[test]
fn placeholders_only_name_leaf_set_members() {
    let g = load_sqlite_grammar();
    let cfg = ExpansionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let t = expand(&g, "sqlStmt", &cfg, &mut rng).unwrap();
        let mut rest = t.text.as_str();
        while let Some(open) = rest.find('[') {
            let close = rest[open..].find(']').map(|c| open + c).expect("closed placeholder");
            let name = &rest[open + 1..close];
            assert!(g.is_leaf(name), "placeholder [{name}] not in leaf set");
            rest = &rest[close + 1..];
        }
    }
}
