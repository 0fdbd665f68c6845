//! Quote- and comment-aware scanning over raw SQL text.
//!
//! Nothing here is a SQL parser. The fuzzing pipeline deliberately works on
//! statement text (templates may contain `[placeholder]` fragments and the
//! mutation stage must never touch literals), so every pass that needs
//! structure shares this tokenizer instead of re-scanning with ad-hoc string
//! searches.

/// Lexical class of a scanned token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifier or keyword.
    Word,
    /// Numeric literal (integer or decimal, including leading digits of hex).
    Number,
    /// `'...'` string literal, `''` escapes included.
    SingleQuoted,
    /// `"..."` quoted identifier.
    DoubleQuoted,
    /// `` `...` `` quoted identifier.
    BacktickQuoted,
    /// `[name]` template placeholder (or bracket-quoted identifier).
    Bracketed,
    /// Comparison / arithmetic operator, possibly multi-char (`!=`, `<=`).
    Operator,
    /// Structural punctuation: `( ) , ; .`
    Punct,
    /// `-- ...` end-of-line comment.
    LineComment,
    /// `/* ... */` block comment.
    BlockComment,
    /// Anything unrecognized.
    Other,
}

/// A token with its byte span in the original text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

const OPERATORS: &[&str] = &[
    "!=", "<>", "<=", ">=", "==", "||", "<<", ">>", "->>", "->", "=", "<", ">", "+", "-", "*",
    "/", "%", "&", "|", "~", "!",
];

/// Tokenize SQL text. Whitespace is skipped; every other byte lands in some
/// token so spans can be stitched back together.
pub fn tokenize(sql: &str) -> Vec<Token> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        // comments
        if b == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            tokens.push(Token { kind: TokenKind::LineComment, start, end: i });
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i = (i + 2).min(bytes.len());
            tokens.push(Token { kind: TokenKind::BlockComment, start, end: i });
            continue;
        }
        // quoted regions
        if b == b'\'' || b == b'"' || b == b'`' {
            let quote = b;
            i += 1;
            while i < bytes.len() {
                if bytes[i] == quote {
                    if quote == b'\'' && bytes.get(i + 1) == Some(&b'\'') {
                        i += 2; // '' escape inside a string literal
                        continue;
                    }
                    i += 1;
                    break;
                }
                i += 1;
            }
            let kind = match quote {
                b'\'' => TokenKind::SingleQuoted,
                b'"' => TokenKind::DoubleQuoted,
                _ => TokenKind::BacktickQuoted,
            };
            tokens.push(Token { kind, start, end: i });
            continue;
        }
        if b == b'[' {
            while i < bytes.len() && bytes[i] != b']' {
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            tokens.push(Token { kind: TokenKind::Bracketed, start, end: i });
            continue;
        }
        if b.is_ascii_digit() {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                i += 1;
            }
            tokens.push(Token { kind: TokenKind::Number, start, end: i });
            continue;
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token { kind: TokenKind::Word, start, end: i });
            continue;
        }
        if let Some(op) = OPERATORS.iter().find(|op| sql[i..].starts_with(**op)) {
            i += op.len();
            tokens.push(Token { kind: TokenKind::Operator, start, end: i });
            continue;
        }
        let kind = match b {
            b'(' | b')' | b',' | b';' | b'.' => TokenKind::Punct,
            _ => TokenKind::Other,
        };
        i += 1;
        tokens.push(Token { kind, start, end: i });
    }
    tokens
}

/// Split a text block into individual statements on `;` terminators that sit
/// outside quotes and comments. The terminator is kept on each statement;
/// trailing text without a terminator becomes a final statement.
pub fn split_statements(block: &str) -> Vec<String> {
    let tokens = tokenize(block);
    let mut out = Vec::new();
    let mut stmt_start: Option<usize> = None;
    for tok in &tokens {
        if matches!(tok.kind, TokenKind::LineComment | TokenKind::BlockComment) && stmt_start.is_none() {
            continue;
        }
        let start = *stmt_start.get_or_insert(tok.start);
        if tok.kind == TokenKind::Punct && tok.text(block) == ";" {
            out.push(block[start..tok.end].trim().to_string());
            stmt_start = None;
        }
    }
    if let Some(start) = stmt_start {
        let tail = block[start..].trim();
        if !tail.is_empty() {
            out.push(tail.to_string());
        }
    }
    out.retain(|s| !s.is_empty() && s != ";");
    out
}

/// Uppercased words of a statement, skipping literals and comments. Used for
/// keyword probing (feature flags, statement kind).
pub fn keywords(sql: &str) -> Vec<String> {
    tokenize(sql)
        .iter()
        .filter(|t| t.kind == TokenKind::Word)
        .map(|t| t.text(sql).to_ascii_uppercase())
        .collect()
}

/// Replace hex addresses and digit runs with stable placeholders so crash
/// diagnostics hash identically across ASLR and line-number drift.
pub fn mask_volatile(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'0'
            && bytes.get(i + 1).map(|b| b.eq_ignore_ascii_case(&b'x')) == Some(true)
            && bytes.get(i + 2).map(|b| b.is_ascii_hexdigit()) == Some(true)
        {
            i += 2;
            while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
                i += 1;
            }
            out.push_str("<addr>");
            continue;
        }
        if bytes[i].is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            out.push_str("<n>");
            continue;
        }
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}

/// Expression-nesting proxy used by syntax-aware filtering: parenthesized
/// subquery nesting level plus the count of top-clause keywords.
pub fn nesting_depth(sql: &str) -> usize {
    let tokens = tokenize(sql);
    let mut max_subquery = 0usize;
    let mut paren_stack: Vec<bool> = Vec::new();
    let mut prev_open = false;
    let mut clauses = 0usize;
    let mut idx = 0;
    while idx < tokens.len() {
        let t = tokens[idx];
        match t.kind {
            TokenKind::Punct if t.text(sql) == "(" => {
                paren_stack.push(false);
                prev_open = true;
                idx += 1;
                continue;
            }
            TokenKind::Punct if t.text(sql) == ")" => {
                paren_stack.pop();
            }
            TokenKind::Word => {
                let w = t.text(sql).to_ascii_uppercase();
                if prev_open && (w == "SELECT" || w == "WITH") {
                    // the paren we just opened encloses a subquery
                    if let Some(flag) = paren_stack.last_mut() {
                        *flag = true;
                    }
                    let depth = paren_stack.iter().filter(|f| **f).count();
                    max_subquery = max_subquery.max(depth);
                }
                if matches!(
                    w.as_str(),
                    "WHERE" | "JOIN" | "GROUP" | "HAVING" | "ORDER" | "LIMIT" | "UNION"
                        | "INTERSECT" | "EXCEPT" | "CASE"
                ) {
                    clauses += 1;
                }
            }
            _ => {}
        }
        prev_open = false;
        idx += 1;
    }
    max_subquery + clauses
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_operators_and_literals() {
        let sql = "SELECT a != 'b;c' -- tail\nFROM t0 WHERE x <= 10";
        let toks = tokenize(sql);
        let texts: Vec<&str> = toks.iter().map(|t| t.text(sql)).collect();
        assert!(texts.contains(&"!="));
        assert!(texts.contains(&"'b;c'"));
        assert!(texts.contains(&"<="));
        assert!(texts.contains(&"-- tail"));
    }

    #[test]
    fn split_ignores_quoted_semicolons() {
        let block = "INSERT INTO t0 VALUES ('a;b');\nSELECT 1;\nCOMMIT";
        let stmts = split_statements(block);
        assert_eq!(stmts.len(), 3);
        assert_eq!(stmts[0], "INSERT INTO t0 VALUES ('a;b');");
        assert_eq!(stmts[2], "COMMIT");
    }

    #[test]
    fn masking_is_stable() {
        let a = mask_volatile("signal 11 at 0xdeadbeef line 42");
        let b = mask_volatile("signal 11 at 0xfeedface line 98");
        assert_eq!(a, b);
        assert_eq!(a, "signal <n> at <addr> line <n>");
    }

    #[test]
    fn nesting_depth_counts_subqueries_and_clauses() {
        assert_eq!(nesting_depth("SELECT 1"), 0);
        assert!(nesting_depth("SELECT * FROM t0 WHERE a IN (SELECT b FROM t1) ORDER BY 1") >= 3);
        // parenthesized arithmetic is not a subquery
        assert_eq!(nesting_depth("SELECT (1 + 2)"), 0);
    }

    #[test]
    fn double_single_quote_escape_stays_one_literal() {
        let sql = "SELECT 'it''s;ok';";
        let stmts = split_statements(sql);
        assert_eq!(stmts.len(), 1);
    }
}
