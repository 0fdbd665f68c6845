//! Recursive-descent parser for the supported ANTLR4 parser-rule subset.

use std::collections::BTreeSet;

use indexmap::IndexMap;

use super::{Grammar, GrammarError, RuleKind, RuleNode, Symbol};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Literal(String),
    Colon,
    Semi,
    Pipe,
    LParen,
    RParen,
    Question,
    Star,
    Plus,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1 }
    }

    fn error(&self, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax { line: self.line, message: message.into() }
    }

    fn next_tok(&mut self) -> Result<Option<(Tok, usize)>, GrammarError> {
        loop {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                if self.src[self.pos] == b'\n' {
                    self.line += 1;
                }
                self.pos += 1;
            }
            if self.pos >= self.src.len() {
                return Ok(None);
            }
            let b = self.src[self.pos];
            // comments
            if b == b'/' && self.src.get(self.pos + 1) == Some(&b'/') {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            if b == b'/' && self.src.get(self.pos + 1) == Some(&b'*') {
                self.pos += 2;
                while self.pos < self.src.len()
                    && !(self.src[self.pos] == b'*' && self.src.get(self.pos + 1) == Some(&b'/'))
                {
                    if self.src[self.pos] == b'\n' {
                        self.line += 1;
                    }
                    self.pos += 1;
                }
                self.pos = (self.pos + 2).min(self.src.len());
                continue;
            }
            let line = self.line;
            let tok = match b {
                b':' => {
                    self.pos += 1;
                    Tok::Colon
                }
                b';' => {
                    self.pos += 1;
                    Tok::Semi
                }
                b'|' => {
                    self.pos += 1;
                    Tok::Pipe
                }
                b'(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                b'?' => {
                    self.pos += 1;
                    Tok::Question
                }
                b'*' => {
                    self.pos += 1;
                    Tok::Star
                }
                b'+' => {
                    self.pos += 1;
                    Tok::Plus
                }
                b'\'' => {
                    self.pos += 1;
                    let start = self.pos;
                    while self.pos < self.src.len() && self.src[self.pos] != b'\'' {
                        self.pos += 1;
                    }
                    if self.pos >= self.src.len() {
                        return Err(self.error("unterminated literal"));
                    }
                    let text =
                        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                    self.pos += 1;
                    Tok::Literal(text)
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_alphanumeric()
                            || self.src[self.pos] == b'_')
                    {
                        self.pos += 1;
                    }
                    Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
                }
                other => {
                    return Err(self.error(format!("unexpected character '{}'", other as char)))
                }
            };
            return Ok(Some((tok, line)));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).or_else(|| self.toks.last()).map(|(_, l)| *l).unwrap_or(0)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), GrammarError> {
        let line = self.line();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            other => Err(GrammarError::Syntax {
                line,
                message: format!("expected {what}, found {other:?}"),
            }),
        }
    }

    /// alternatives: alt ('|' alt)*
    fn parse_alternatives(&mut self) -> Result<RuleNode, GrammarError> {
        let mut alts = vec![self.parse_alt()?];
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            alts.push(self.parse_alt()?);
        }
        if alts.len() == 1 {
            Ok(alts.pop().expect("one alt"))
        } else {
            Ok(RuleNode::choice(alts.into_iter().map(node_to_symbol).collect()))
        }
    }

    /// alt: element*  (a single element stays a bare node; several become a Sequence)
    fn parse_alt(&mut self) -> Result<RuleNode, GrammarError> {
        let mut elements: Vec<Symbol> = Vec::new();
        while matches!(
            self.peek(),
            Some(Tok::Ident(_)) | Some(Tok::Literal(_)) | Some(Tok::LParen)
        ) {
            let element = self.parse_element()?;
            fold_repeat_idiom(&mut elements, element);
        }
        Ok(RuleNode::sequence(elements))
    }

    /// element: primary ('?' | '*' | '+')?
    fn parse_element(&mut self) -> Result<Symbol, GrammarError> {
        let line = self.line();
        let primary: Symbol = match self.bump() {
            Some(Tok::Ident(name)) => {
                if is_token_name(&name) {
                    Symbol::Terminal(name)
                } else {
                    Symbol::NonTerminal(name)
                }
            }
            Some(Tok::Literal(text)) => Symbol::Terminal(text),
            Some(Tok::LParen) => {
                let inner = self.parse_alternatives()?;
                self.expect(Tok::RParen, "')'")?;
                node_to_symbol(inner)
            }
            other => {
                return Err(GrammarError::Syntax {
                    line,
                    message: format!("expected grammar element, found {other:?}"),
                })
            }
        };
        let wrapped = match self.peek() {
            Some(Tok::Question) => {
                self.bump();
                Symbol::Group(Box::new(RuleNode::optional(primary)))
            }
            Some(Tok::Star) => {
                self.bump();
                let repeat = Symbol::Group(Box::new(RuleNode::repeat(primary, None)));
                Symbol::Group(Box::new(RuleNode::optional(repeat)))
            }
            Some(Tok::Plus) => {
                self.bump();
                Symbol::Group(Box::new(RuleNode::repeat(primary, None)))
            }
            _ => primary,
        };
        Ok(wrapped)
    }
}

/// A sequence of one bare symbol collapses to that symbol; anything else
/// nests as an anonymous group.
fn node_to_symbol(node: RuleNode) -> Symbol {
    if node.kind == RuleKind::Sequence && node.children.len() == 1 {
        node.children.into_iter().next().expect("one child")
    } else {
        Symbol::Group(Box::new(node))
    }
}

/// Fold the `x (SEP x)*` idiom into a single separated Repeat so templates
/// come out as `x`, `x SEP x`, ... with the separator attached.
fn fold_repeat_idiom(elements: &mut Vec<Symbol>, next: Symbol) {
    if let Some(prev) = elements.last() {
        if let Some((sep, repeated)) = match_sep_repeat(&next) {
            if *prev == repeated {
                let folded =
                    Symbol::Group(Box::new(RuleNode::repeat(repeated, Some(sep))));
                elements.pop();
                elements.push(folded);
                return;
            }
        }
    }
    elements.push(next);
}

/// Matches `Optional(Repeat(Sequence[Terminal(sep), X]))`, the shape produced
/// by parsing `(SEP X)*`. Returns (separator, X).
fn match_sep_repeat(sym: &Symbol) -> Option<(String, Symbol)> {
    let Symbol::Group(opt) = sym else { return None };
    if opt.kind != RuleKind::Optional {
        return None;
    }
    let Symbol::Group(rep) = opt.children.first()? else { return None };
    if rep.kind != RuleKind::Repeat || rep.separator.is_some() {
        return None;
    }
    let Symbol::Group(seq) = rep.children.first()? else { return None };
    if seq.kind != RuleKind::Sequence || seq.children.len() != 2 {
        return None;
    }
    let Symbol::Terminal(sep) = &seq.children[0] else { return None };
    Some((sep.clone(), seq.children[1].clone()))
}

/// UPPERCASE identifiers are lexer-token names; the subset treats them as
/// literal keywords.
fn is_token_name(name: &str) -> bool {
    name.chars().any(|c| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Parse grammar source text into a [`Grammar`]. Nonterminal references that
/// resolve neither to a rule nor to `leaf_set` produce
/// [`GrammarError::UnresolvedReference`].
pub fn parse_grammar(source_text: &str, leaf_set: &[String]) -> Result<Grammar, GrammarError> {
    let mut lexer = Lexer::new(source_text);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next_tok()? {
        toks.push(t);
    }
    let mut parser = Parser { toks, pos: 0 };
    let mut rules: IndexMap<String, RuleNode> = IndexMap::new();

    while parser.peek().is_some() {
        let line = parser.line();
        let name = match parser.bump() {
            Some(Tok::Ident(name)) => name,
            other => {
                return Err(GrammarError::Syntax {
                    line,
                    message: format!("expected rule name, found {other:?}"),
                })
            }
        };
        // optional `grammar Foo;` header
        if name == "grammar" {
            let _ = parser.bump();
            parser.expect(Tok::Semi, "';' after grammar header")?;
            continue;
        }
        parser.expect(Tok::Colon, "':' after rule name")?;
        let body = parser.parse_alternatives()?;
        parser.expect(Tok::Semi, "';' terminating rule")?;
        if rules.insert(name.clone(), normalize_rule_body(body)).is_some() {
            return Err(GrammarError::Syntax {
                line,
                message: format!("rule '{name}' defined twice"),
            });
        }
    }

    Grammar::new(rules, leaf_set.iter().cloned().collect::<BTreeSet<_>>())
}

/// Top-level rule bodies keep an explicit kind: a single-alternative body is
/// a Sequence (even with one child); a grouped single child is unwrapped.
fn normalize_rule_body(body: RuleNode) -> RuleNode {
    match body.kind {
        RuleKind::Sequence if body.children.len() == 1 => {
            if let Some(Symbol::Group(inner)) = body.children.first() {
                (**inner).clone()
            } else {
                body
            }
        }
        _ => body,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_terminal_rule_is_sequence() {
        let g = parse_grammar("stmt : COMMIT ;", &[]).unwrap();
        let node = g.rule("stmt").unwrap();
        assert_eq!(node.kind, RuleKind::Sequence);
        assert_eq!(node.children, vec![Symbol::Terminal("COMMIT".into())]);
    }

    #[test]
    fn alter_table_shape_matches_classification() {
        let src = "alterTable : ALTER (ONLINE|OFFLINE)? IGNORE? TABLE tableName \
                   alterSpecification (',' alterSpecification)* partitionDefinitions? ;";
        let g = parse_grammar(
            src,
            &leaves(&["tableName", "alterSpecification", "partitionDefinitions"]),
        )
        .unwrap();
        let node = g.rule("alterTable").unwrap();
        assert_eq!(node.kind, RuleKind::Sequence);
        // ALTER, opt(choice), opt(IGNORE), TABLE, tableName, repeat, opt(partitions)
        assert_eq!(node.children.len(), 7);
        let Symbol::Group(mode) = &node.children[1] else { panic!("expected group") };
        assert_eq!(mode.kind, RuleKind::Optional);
        let Symbol::Group(choice) = &mode.children[0] else { panic!("expected choice") };
        assert_eq!(choice.kind, RuleKind::Choice);
        assert_eq!(choice.children.len(), 2);
        let Symbol::Group(ignore) = &node.children[2] else { panic!("expected group") };
        assert_eq!(ignore.kind, RuleKind::Optional);
        assert_eq!(ignore.children[0], Symbol::Terminal("IGNORE".into()));
        let Symbol::Group(repeat) = &node.children[5] else { panic!("expected group") };
        assert_eq!(repeat.kind, RuleKind::Repeat);
        assert_eq!(repeat.separator.as_deref(), Some(","));
        assert_eq!(repeat.children[0], Symbol::NonTerminal("alterSpecification".into()));
    }

    #[test]
    fn unresolved_reference_is_reported() {
        let err = parse_grammar("s : A foo ;", &[]).unwrap_err();
        match err {
            GrammarError::UnresolvedReference(name) => assert_eq!(name, "foo"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn duplicate_rule_rejected() {
        let err = parse_grammar("s : A ; s : B ;", &[]).unwrap_err();
        assert!(matches!(err, GrammarError::Syntax { .. }));
    }

    #[test]
    fn roots_are_unreferenced_rules() {
        let g = parse_grammar("top : a b ; a : A ; b : B ;", &[]).unwrap();
        assert_eq!(g.start_symbols, vec!["top".to_string()]);
    }
}
