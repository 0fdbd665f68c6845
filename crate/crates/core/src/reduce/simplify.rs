//! Structural statement simplification: prune select-list items, WHERE
//! conjuncts, JOIN arms, column definitions, and whole clauses, keeping each
//! pruning only if the crash oracle still fires. Statements the clause
//! scanner cannot decompose are returned unchanged.

use crate::sqltext::{tokenize, Token, TokenKind};

/// A deletable byte range with a human-readable label for the reduction log.
#[derive(Debug, Clone)]
struct Pruning {
    range: std::ops::Range<usize>,
    label: &'static str,
}

const CLAUSE_HEADS: &[&[&str]] = &[
    &["WHERE"],
    &["GROUP", "BY"],
    &["HAVING"],
    &["ORDER", "BY"],
    &["LIMIT"],
];

const JOIN_HEADS: &[&[&str]] = &[
    &["LEFT", "OUTER", "JOIN"],
    &["INNER", "JOIN"],
    &["LEFT", "JOIN"],
    &["CROSS", "JOIN"],
    &["RIGHT", "JOIN"],
    &["FULL", "JOIN"],
    &["JOIN"],
];

struct Scan<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    depth: Vec<i32>,
}

impl<'a> Scan<'a> {
    fn new(text: &'a str) -> Self {
        let tokens = tokenize(text);
        let mut depth = Vec::with_capacity(tokens.len());
        let mut level = 0i32;
        for t in &tokens {
            match t.text(text) {
                "(" => {
                    depth.push(level);
                    level += 1;
                }
                ")" => {
                    level -= 1;
                    depth.push(level);
                }
                _ => depth.push(level),
            }
        }
        Scan { text, tokens, depth }
    }

    fn word_at(&self, idx: usize) -> Option<String> {
        let t = self.tokens.get(idx)?;
        (t.kind == TokenKind::Word).then(|| t.text(self.text).to_ascii_uppercase())
    }

    /// Token index where a multi-word head matches at paren level `level`.
    fn match_head(&self, idx: usize, head: &[&str], level: i32) -> bool {
        if self.depth.get(idx) != Some(&level) {
            return false;
        }
        head.iter().enumerate().all(|(k, want)| {
            self.word_at(idx + k).as_deref() == Some(*want)
                && self.depth.get(idx + k) == Some(&level)
        })
    }

    /// First token index at or after `from` matching any clause head at
    /// level 0, along with the matched head length.
    fn next_clause(&self, from: usize) -> Option<(usize, usize)> {
        (from..self.tokens.len()).find_map(|i| {
            CLAUSE_HEADS
                .iter()
                .find(|head| self.match_head(i, head, 0))
                .map(|head| (i, head.len()))
        })
    }
}

fn verb_of(text: &str) -> Option<String> {
    tokenize(text)
        .iter()
        .find(|t| t.kind == TokenKind::Word)
        .map(|t| t.text(text).to_ascii_uppercase())
}

/// Candidate prunings for one statement, outermost first.
fn prunings(text: &str) -> Vec<Pruning> {
    let scan = Scan::new(text);
    let mut out = Vec::new();
    let verb = match verb_of(text) {
        Some(v) => v,
        None => return out,
    };

    // whole clauses (any verb: the clause heads only appear in core grammar)
    let mut idx = 0;
    while let Some((at, head_len)) = scan.next_clause(idx) {
        let end = scan
            .next_clause(at + head_len)
            .map(|(next, _)| scan.tokens[next].start)
            .unwrap_or_else(|| statement_end(text));
        out.push(Pruning { range: scan.tokens[at].start..end, label: "clause" });
        idx = at + head_len;
    }

    match verb.as_str() {
        "SELECT" | "WITH" => {
            select_list_prunings(&scan, &mut out);
            where_conjunct_prunings(&scan, &mut out);
            join_arm_prunings(&scan, &mut out);
        }
        "CREATE" => {
            column_def_prunings(&scan, &mut out);
        }
        "INSERT" | "UPDATE" | "DELETE" | "ALTER" => {
            where_conjunct_prunings(&scan, &mut out);
        }
        _ => {}
    }
    out
}

fn statement_end(text: &str) -> usize {
    let trimmed = text.trim_end();
    if trimmed.ends_with(';') {
        trimmed.len() - 1
    } else {
        trimmed.len()
    }
}

/// Comma-separated items between SELECT and FROM (or statement end), level 0.
fn select_list_prunings(scan: &Scan<'_>, out: &mut Vec<Pruning>) {
    let Some(select_at) =
        (0..scan.tokens.len()).find(|i| scan.match_head(*i, &["SELECT"], 0))
    else {
        return;
    };
    let list_start = select_at + 1;
    let list_end = (list_start..scan.tokens.len())
        .find(|i| {
            scan.match_head(*i, &["FROM"], 0)
                || CLAUSE_HEADS.iter().any(|h| scan.match_head(*i, h, 0))
        })
        .unwrap_or(scan.tokens.len());
    comma_item_prunings(scan, list_start, list_end, "select-item", out);
}

/// Items of a level-0 comma list spanning tokens [start, end).
fn comma_item_prunings(
    scan: &Scan<'_>,
    start: usize,
    end: usize,
    label: &'static str,
    out: &mut Vec<Pruning>,
) {
    if start >= end || start >= scan.tokens.len() {
        return;
    }
    let base_level = scan.depth[start];
    let mut boundaries = vec![start];
    for i in start..end.min(scan.tokens.len()) {
        if scan.depth[i] == base_level
            && scan.tokens[i].kind == TokenKind::Punct
            && scan.tokens[i].text(scan.text) == ","
        {
            boundaries.push(i);
        }
    }
    if boundaries.len() < 2 {
        return; // single item stays
    }
    boundaries.push(end.min(scan.tokens.len()));
    // item k spans (boundary[k], boundary[k+1]); deleting item 0 removes the
    // following comma, deleting item k>0 removes the preceding comma
    for k in 0..boundaries.len() - 1 {
        let (from, to) = if k == 0 {
            let after_comma = if boundaries[1] + 1 < scan.tokens.len() {
                scan.tokens[boundaries[1] + 1].start
            } else {
                statement_end(scan.text)
            };
            (scan.tokens[boundaries[0]].start, after_comma)
        } else {
            let last = if boundaries[k + 1] >= scan.tokens.len() {
                statement_end(scan.text)
            } else {
                scan.tokens[boundaries[k + 1]].start
            };
            (scan.tokens[boundaries[k]].start, last)
        };
        if from < to {
            out.push(Pruning { range: from..to, label });
        }
    }
}

/// Top-level AND conjuncts inside the WHERE clause.
fn where_conjunct_prunings(scan: &Scan<'_>, out: &mut Vec<Pruning>) {
    let Some(where_at) = (0..scan.tokens.len()).find(|i| scan.match_head(*i, &["WHERE"], 0))
    else {
        return;
    };
    let end = scan
        .next_clause(where_at + 1)
        .map(|(i, _)| i)
        .unwrap_or(scan.tokens.len());
    let level = scan.depth[where_at];
    let mut ands = Vec::new();
    for i in where_at + 1..end {
        if scan.depth[i] == level && scan.word_at(i).as_deref() == Some("AND") {
            ands.push(i);
        }
    }
    if ands.is_empty() {
        return;
    }
    let clause_end = if end >= scan.tokens.len() {
        statement_end(scan.text)
    } else {
        scan.tokens[end].start
    };
    // conjunct 0: WHERE..first AND (delete conjunct text plus the AND)
    out.push(Pruning {
        range: scan.tokens[where_at + 1].start..scan.tokens[ands[0] + 1].start,
        label: "where-conjunct",
    });
    for (k, and_at) in ands.iter().enumerate() {
        let to = ands.get(k + 1).map(|n| scan.tokens[*n].start).unwrap_or(clause_end);
        out.push(Pruning { range: scan.tokens[*and_at].start..to, label: "where-conjunct" });
    }
}

/// JOIN arms in the FROM clause: `<join-op> <table> [ON expr]` segments.
fn join_arm_prunings(scan: &Scan<'_>, out: &mut Vec<Pruning>) {
    let Some(from_at) = (0..scan.tokens.len()).find(|i| scan.match_head(*i, &["FROM"], 0))
    else {
        return;
    };
    let end = scan
        .next_clause(from_at + 1)
        .map(|(i, _)| i)
        .unwrap_or(scan.tokens.len());
    let level = scan.depth[from_at];
    let mut arm_starts = Vec::new();
    let mut i = from_at + 1;
    while i < end {
        if scan.depth[i] == level {
            if let Some(head) = JOIN_HEADS.iter().find(|h| scan.match_head(i, h, level)) {
                arm_starts.push(i);
                i += head.len();
                continue;
            }
        }
        i += 1;
    }
    let clause_end = if end >= scan.tokens.len() {
        statement_end(scan.text)
    } else {
        scan.tokens[end].start
    };
    for (k, arm_at) in arm_starts.iter().enumerate() {
        let to = arm_starts.get(k + 1).map(|n| scan.tokens[*n].start).unwrap_or(clause_end);
        out.push(Pruning { range: scan.tokens[*arm_at].start..to, label: "join-arm" });
    }
}

/// Column definitions inside CREATE TABLE's outer paren list.
fn column_def_prunings(scan: &Scan<'_>, out: &mut Vec<Pruning>) {
    let Some(open) = scan
        .tokens
        .iter()
        .position(|t| t.kind == TokenKind::Punct && t.text(scan.text) == "(")
    else {
        return;
    };
    let close = scan
        .tokens
        .iter()
        .rposition(|t| t.kind == TokenKind::Punct && t.text(scan.text) == ")");
    let Some(close) = close else { return };
    if close <= open + 1 {
        return;
    }
    comma_item_prunings(scan, open + 1, close, "column-def", out);
}

fn apply(text: &str, pruning: &Pruning) -> String {
    let mut out = String::with_capacity(text.len());
    out.push_str(&text[..pruning.range.start]);
    out.push_str(&text[pruning.range.end..]);
    // collapse doubled whitespace left at the seam
    let collapsed: String = out.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut cleaned = collapsed.replace("( ", "(").replace(" )", ")").replace(" ,", ",");
    if text.trim_end().ends_with(';') && !cleaned.trim_end().ends_with(';') {
        cleaned.push(';');
    }
    cleaned
}

/// Greedily prune one statement. `test` judges a candidate replacement text
/// in the context of the full sequence (the caller closes over it); accepted
/// prunings persist, rejected ones roll back. Returns the simplified text
/// and the (accepted, rejected) counts.
pub fn simplify_statement<F>(text: &str, test: &mut F) -> (String, usize, usize)
where
    F: FnMut(&str) -> bool,
{
    let mut current = text.to_string();
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    loop {
        let mut advanced = false;
        for pruning in prunings(&current) {
            let candidate = apply(&current, &pruning);
            if candidate.trim().is_empty() || candidate == current {
                continue;
            }
            if test(&candidate) {
                current = candidate;
                accepted += 1;
                advanced = true;
                break;
            }
            rejected += 1;
        }
        if !advanced {
            return (current, accepted, rejected);
        }
    }
}
