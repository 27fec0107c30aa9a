//! Reading and writing the `.drls` rule format.
//!
//! ```text
//! % the bike example
//! Engine(X) -> IsIn(X,V), Bike(V) | Spare(X).
//! Engine(d).
//! ? Spare(d).
//! ```
//!
//! Variables start with an uppercase letter, constants with a lowercase one. Head variables
//! that do not occur in the body are existentially quantified. Rules receive ids from their
//! position in the file, starting at 1.

use crate::model::{is_reserved_name, Atom, ModelError, Predicate, Rule, RuleSet, SkolemSymbol, Sym, Term};
use indexmap::IndexMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: predicate {name} used with arity {found}, earlier with {expected}")]
    Arity { line: usize, col: usize, name: String, expected: usize, found: usize },
    #[error("{line}:{col}: identifier {name} is in the reserved namespace")]
    Reserved { line: usize, col: usize, name: String },
    #[error("{line}:{col}: {source}")]
    Rule { line: usize, col: usize, source: ModelError },
}

/// A conjunctive query; all of its variables are existentially quantified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub atoms: Vec<Atom>,
    pub existentials: Vec<Sym>,
}

#[derive(Clone, Debug, Default)]
pub struct SourceProgram {
    pub rules: Vec<Rule>,
    pub facts: Vec<Atom>,
    pub queries: Vec<Query>,
}

impl SourceProgram {
    pub fn rule_set(&self) -> Result<RuleSet, ModelError> {
        RuleSet::new(self.rules.clone())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ParseOptions {
    /// Id of the first rule in the text.
    pub first_rule_id: u32,
    /// Accept reserved constant names and skolem terms (used when reading back analysis output).
    pub allow_internal: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { first_rule_id: 1, allow_internal: false }
    }
}

pub fn parse(text: &str) -> Result<SourceProgram, ParseError> {
    parse_with(text, ParseOptions::default())
}

pub fn parse_with(text: &str, opts: ParseOptions) -> Result<SourceProgram, ParseError> {
    let mut p = Parser::new(text, opts)?;
    p.program()
}

/// Parses a single ground term, including skolem terms and reserved constants.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(text, ParseOptions { first_rule_id: 1, allow_internal: true })?;
    let t = p.term(TermCtx::Ground)?;
    p.expect_end()?;
    Ok(t)
}

/// Parses a query given as a bare conjunction, with or without the leading `?` and final `.`.
pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let trimmed = text.trim();
    let body = trimmed.strip_prefix('?').unwrap_or(trimmed).trim();
    let body = body.strip_suffix('.').unwrap_or(body);
    let mut p = Parser::new(body, ParseOptions::default())?;
    let atoms = p.conjunction(TermCtx::Query)?;
    p.expect_end()?;
    p.check_arities(&atoms)?;
    Ok(make_query(atoms))
}

fn make_query(atoms: Vec<Atom>) -> Query {
    let mut existentials = Vec::new();
    for a in &atoms {
        for t in &a.args {
            if let Some(v) = t.as_variable() {
                if !existentials.contains(&v) {
                    existentials.push(v);
                }
            }
        }
    }
    Query { atoms, existentials }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Arrow,
    Pipe,
    Dot,
    Question,
    End,
}

struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let (l, k) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        match c {
            c if c.is_whitespace() => {
                bump(&mut chars);
            }
            '%' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump(&mut chars);
                }
            }
            '(' | ')' | ',' | '|' | '.' | '?' => {
                bump(&mut chars);
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '|' => Tok::Pipe,
                    '.' => Tok::Dot,
                    _ => Tok::Question,
                };
                out.push(Lexed { tok, line: l, col: k });
            }
            '-' => {
                bump(&mut chars);
                if chars.peek() == Some(&'>') {
                    bump(&mut chars);
                    out.push(Lexed { tok: Tok::Arrow, line: l, col: k });
                } else {
                    return Err(ParseError::Syntax { line: l, col: k, msg: "expected '->'".into() });
                }
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump(&mut chars);
                    } else {
                        break;
                    }
                }
                out.push(Lexed { tok: Tok::Ident(s), line: l, col: k });
            }
            other => {
                return Err(ParseError::Syntax { line: l, col: k, msg: format!("unexpected character {other:?}") })
            }
        }
    }
    out.push(Lexed { tok: Tok::End, line, col });
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TermCtx {
    Rule,
    Fact,
    Query,
    Ground,
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
    opts: ParseOptions,
    arities: IndexMap<Sym, usize>,
}

impl Parser {
    fn new(text: &str, opts: ParseOptions) -> Result<Parser, ParseError> {
        Ok(Parser { toks: lex(text)?, pos: 0, opts, arities: IndexMap::new() })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Syntax { line, col, msg: msg.into() })
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            self.err("unexpected trailing input")
        }
    }

    fn program(&mut self) -> Result<SourceProgram, ParseError> {
        let mut prog = SourceProgram::default();
        let mut next_id = self.opts.first_rule_id;
        while *self.peek() != Tok::End {
            let (line, col) = self.here();
            if *self.peek() == Tok::Question {
                self.advance();
                let atoms = self.conjunction(TermCtx::Query)?;
                self.expect(Tok::Dot, "'.' after query")?;
                self.check_arities_at(&atoms, line, col)?;
                prog.queries.push(make_query(atoms));
                continue;
            }
            let start = self.pos;
            let first = self.conjunction(TermCtx::Query)?;
            match self.peek() {
                Tok::Arrow => {
                    self.advance();
                    let mut heads = vec![self.head()?];
                    while *self.peek() == Tok::Pipe {
                        self.advance();
                        heads.push(self.head()?);
                    }
                    self.expect(Tok::Dot, "'.' after rule")?;
                    for a in first.iter().chain(heads.iter().flatten()) {
                        self.check_arity_at(a, line, col)?;
                    }
                    let rule = Rule::new(next_id, first, heads)
                        .map_err(|source| ParseError::Rule { line, col, source })?;
                    next_id += 1;
                    prog.rules.push(rule);
                }
                Tok::Dot => {
                    // Re-read the conjunction as ground facts.
                    self.pos = start;
                    let facts = self.conjunction(TermCtx::Fact)?;
                    self.expect(Tok::Dot, "'.' after fact")?;
                    self.check_arities_at(&facts, line, col)?;
                    prog.facts.extend(facts);
                }
                _ => return self.err("expected '->' or '.'"),
            }
        }
        Ok(prog)
    }

    fn head(&mut self) -> Result<Vec<Atom>, ParseError> {
        if matches!(self.peek(), Tok::Dot | Tok::Pipe | Tok::End) {
            return self.err("empty head");
        }
        self.conjunction(TermCtx::Rule)
    }

    fn conjunction(&mut self, ctx: TermCtx) -> Result<Vec<Atom>, ParseError> {
        let mut atoms = vec![self.atom(ctx)?];
        while *self.peek() == Tok::Comma {
            self.advance();
            atoms.push(self.atom(ctx)?);
        }
        Ok(atoms)
    }

    fn atom(&mut self, ctx: TermCtx) -> Result<Atom, ParseError> {
        let name = match self.peek().clone() {
            Tok::Ident(n) => n,
            _ => return self.err("expected predicate name"),
        };
        if name.starts_with('_') || name.starts_with(|c: char| c.is_ascii_digit()) {
            return self.err(format!("invalid predicate name {name}"));
        }
        self.advance();
        self.expect(Tok::LParen, "'('")?;
        let mut args = vec![self.term(ctx)?];
        while *self.peek() == Tok::Comma {
            self.advance();
            args.push(self.term(ctx)?);
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(Atom::new(&name, &args))
    }

    fn term(&mut self, ctx: TermCtx) -> Result<Term, ParseError> {
        let (line, col) = self.here();
        let name = match self.peek().clone() {
            Tok::Ident(n) => n,
            _ => return self.err("expected term"),
        };
        self.advance();
        let first = name.chars().next().unwrap_or('0');
        if *self.peek() == Tok::LParen {
            if !self.opts.allow_internal {
                return Err(ParseError::Syntax { line, col, msg: format!("function symbol {name} in input") });
            }
            let Some(f) = SkolemSymbol::parse_name(&name) else {
                return Err(ParseError::Syntax { line, col, msg: format!("malformed skolem symbol {name}") });
            };
            self.advance();
            let mut args = vec![self.term(ctx)?];
            while *self.peek() == Tok::Comma {
                self.advance();
                args.push(self.term(ctx)?);
            }
            self.expect(Tok::RParen, "')'")?;
            return Ok(Term::functional(f, &args));
        }
        if first.is_ascii_uppercase() {
            return match ctx {
                TermCtx::Rule | TermCtx::Query => Ok(Term::variable(&name)),
                TermCtx::Fact | TermCtx::Ground => {
                    Err(ParseError::Syntax { line, col, msg: format!("variable {name} in a fact") })
                }
            };
        }
        if is_reserved_name(&name) || first == '_' {
            if !self.opts.allow_internal {
                return Err(ParseError::Reserved { line, col, name });
            }
        } else if !first.is_ascii_lowercase() {
            return Err(ParseError::Syntax { line, col, msg: format!("invalid term {name}") });
        }
        if ctx == TermCtx::Rule {
            return Err(ParseError::Rule { line, col, source: ModelError::NonVariableInRule(name) });
        }
        Ok(Term::constant(&name))
    }

    fn check_arity_at(&mut self, a: &Atom, line: usize, col: usize) -> Result<(), ParseError> {
        let found = a.args.len();
        let expected = *self.arities.entry(a.pred.name).or_insert(found);
        if expected != found {
            return Err(ParseError::Arity { line, col, name: a.pred.name.to_string(), expected, found });
        }
        Ok(())
    }

    fn check_arities_at(&mut self, atoms: &[Atom], line: usize, col: usize) -> Result<(), ParseError> {
        atoms.iter().try_for_each(|a| self.check_arity_at(a, line, col))
    }

    fn check_arities(&mut self, atoms: &[Atom]) -> Result<(), ParseError> {
        self.check_arities_at(atoms, 1, 1)
    }
}

/// Checks that every predicate has one arity across the given atoms.
pub fn check_arities<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> Result<(), ParseError> {
    let mut seen: IndexMap<Sym, usize> = IndexMap::new();
    for a in atoms {
        let expected = *seen.entry(a.pred.name).or_insert(a.args.len());
        if expected != a.args.len() {
            return Err(ParseError::Arity {
                line: 0,
                col: 0,
                name: a.pred.name.to_string(),
                expected,
                found: a.args.len(),
            });
        }
    }
    Ok(())
}

fn render_conjunction(out: &mut String, atoms: &[Atom]) {
    for (i, a) in atoms.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{a}");
    }
}

pub fn render_rule(rule: &Rule) -> String {
    let mut out = String::new();
    render_conjunction(&mut out, rule.body());
    out.push_str(" -> ");
    for (i, h) in rule.heads().iter().enumerate() {
        if i > 0 {
            out.push_str(" | ");
        }
        render_conjunction(&mut out, h.atoms());
    }
    out.push('.');
    out
}

pub fn render_fact(fact: &Atom) -> String {
    format!("{fact}.")
}

/// One fact per line.
pub fn render_facts<'a>(facts: impl IntoIterator<Item = &'a Atom>) -> String {
    facts.into_iter().map(|f| render_fact(f) + "\n").collect()
}

pub fn render_query(q: &Query) -> String {
    let mut out = String::from("? ");
    render_conjunction(&mut out, &q.atoms);
    out.push('.');
    out
}

/// Renders a program; parsing the result yields the same program.
pub fn render(program: &SourceProgram) -> String {
    let mut out = String::new();
    for r in &program.rules {
        out.push_str(&render_rule(r));
        out.push('\n');
    }
    out.push_str(&render_facts(&program.facts));
    for q in &program.queries {
        out.push_str(&render_query(q));
        out.push('\n');
    }
    out
}

/// Predicates of a program in order of first use.
pub fn predicates(program: &SourceProgram) -> Vec<Predicate> {
    let mut seen = indexmap::IndexSet::new();
    for r in &program.rules {
        seen.extend(r.predicates());
    }
    seen.extend(program.facts.iter().map(|a| a.pred));
    seen.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::skolemize;

    const BIKE: &str = "\
% bike example
Engine(X) -> IsIn(X,V), Bike(V) | Spare(X).
Bike(X) -> Has(X,W), Engine(W).
IsIn(X,Y) -> Has(Y,X).
Has(X,Y) -> IsIn(Y,X).
Engine(d).
? Spare(d).
";

    #[test]
    fn parses_the_bike_program() {
        let p = parse(BIKE).unwrap();
        assert_eq!(p.rules.len(), 4);
        assert_eq!(p.facts, vec![Atom::new("Engine", &[Term::constant("d")])]);
        assert_eq!(p.queries.len(), 1);
        let r1 = &p.rules[0];
        assert_eq!(r1.id(), 1);
        assert_eq!(r1.branching(), 2);
        assert_eq!(r1.head(1).existentials(), &[Sym::new("V")]);
        assert!(r1.head(2).existentials().is_empty());
    }

    #[test]
    fn renders_a_datalog_rule() {
        let p = parse(BIKE).unwrap();
        assert_eq!(render_rule(&p.rules[3]), "Has(X,Y) -> IsIn(Y,X).");
        assert_eq!(render_rule(&p.rules[0]), "Engine(X) -> IsIn(X,V), Bike(V) | Spare(X).");
    }

    #[test]
    fn round_trip() {
        let p = parse(BIKE).unwrap();
        let text = render(&p);
        let q = parse(&text).unwrap();
        assert_eq!(render(&q), text);
        for (a, b) in p.rules.iter().zip(&q.rules) {
            assert_eq!(skolemize(a), skolemize(b));
        }
        assert_eq!(p.facts, q.facts);
        assert_eq!(p.queries, q.queries);
    }

    #[test]
    fn empty_program_renders_empty() {
        assert_eq!(render(&SourceProgram::default()), "");
        assert!(parse("  % only a comment\n").unwrap().rules.is_empty());
    }

    #[test]
    fn empty_head_is_a_syntax_error() {
        assert!(matches!(parse("Engine(X) -> ."), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("Engine(X) -> A(X) | ."), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let err = parse("P(X) -> Q(X).\nP(a,b).").unwrap_err();
        assert!(matches!(err, ParseError::Arity { line: 2, .. }), "{err}");
    }

    #[test]
    fn constants_in_rules_are_rejected() {
        let err = parse("P(X) -> Q(a).").unwrap_err();
        assert!(matches!(err, ParseError::Rule { source: ModelError::NonVariableInRule(_), .. }));
    }

    #[test]
    fn reserved_names_are_rejected() {
        assert!(matches!(parse("P(__star)."), Err(ParseError::Reserved { .. })));
        assert!(matches!(parse("P(__db_X)."), Err(ParseError::Reserved { .. })));
        assert!(matches!(parse("P(__uc_f_1_1_V)."), Err(ParseError::Reserved { .. })));
    }

    #[test]
    fn function_terms_are_rejected_in_user_input() {
        assert!(parse("P(f_1_1_V(a)).").is_err());
    }

    #[test]
    fn error_positions() {
        let err = parse("P(X) -> Q(X).\n  Q(X) -> R(X)").unwrap_err();
        assert_eq!(err, ParseError::Syntax { line: 2, col: 15, msg: "expected '.' after rule".into() });
    }

    #[test]
    fn skolem_terms_parse_back() {
        let t = parse_term("f_2_1_W(f_1_1_V(__db_X))").unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(parse_term(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn queries() {
        let q = parse_query("Has(X,Y)").unwrap();
        assert_eq!(q.existentials, vec![Sym::new("X"), Sym::new("Y")]);
        let q = parse_query("? Spare(d).").unwrap();
        assert!(q.existentials.is_empty());
    }

    #[test]
    fn rule_ids_can_be_offset() {
        let p = parse_with("A(X) -> B(X).", ParseOptions { first_rule_id: 7, allow_internal: false }).unwrap();
        assert_eq!(p.rules[0].id(), 7);
    }
}
