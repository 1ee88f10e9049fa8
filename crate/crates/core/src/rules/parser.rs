//! Hand-written lexer and recursive-descent parser for the rule DSL.
//!
//! ```text
//! rule <id>: <atom> ("," <atom>)* ("," "not" <atom>)* ("," <builtin>)*
//!     "=>" ("new" <var> ":" <kind> "[" tags "]" ",")* ["-"]<atom> ("," ["-"]<atom>)*
//! ```
//!
//! Variables are `?name`, constants are bare words, `#` starts a comment.
//! Builtins are `opp(a, b)` and `a != b`.

use std::collections::BTreeSet;
use std::fmt;

use super::ast::{Atom, Builtin, FreshEntity, HeadAtom, Rule, Term};
use crate::store::EntityKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnsafeNegation { rule: String, var: String },
    UnboundHeadVariable { rule: String, var: String },
    UnboundBuiltin { rule: String, var: String },
    FreshVariableInBody { rule: String, var: String },
    DuplicateRule(String),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{location}: {kind}")]
pub struct ParseError {
    pub location: Location,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => f.write_str(m),
            ParseErrorKind::UnsafeNegation { rule, var } => write!(
                f,
                "rule `{rule}`: negated atom uses ?{var}, which no positive body atom binds"
            ),
            ParseErrorKind::UnboundHeadVariable { rule, var } => write!(
                f,
                "rule `{rule}`: head variable ?{var} is neither bound by the body nor declared `new`"
            ),
            ParseErrorKind::UnboundBuiltin { rule, var } => {
                write!(f, "rule `{rule}`: builtin uses unbound variable ?{var}")
            }
            ParseErrorKind::FreshVariableInBody { rule, var } => {
                write!(f, "rule `{rule}`: fresh variable ?{var} already occurs in the body")
            }
            ParseErrorKind::DuplicateRule(id) => write!(f, "duplicate rule id `{id}`"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Var(String),
    Colon,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Arrow,
    Minus,
    NotEq,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Var(v) => write!(f, "`?{v}`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Arrow => f.write_str("`=>`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::NotEq => f.write_str("`!=`"),
        }
    }
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(src: &str) -> Result<Vec<(Tok, Location)>, ParseError> {
    let mut out = Vec::new();
    for (li, line) in src.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let loc = Location {
                line: li + 1,
                col: i + 1,
            };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let single = match c {
                ':' => Some(Tok::Colon),
                ',' => Some(Tok::Comma),
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                '[' => Some(Tok::LBracket),
                ']' => Some(Tok::RBracket),
                '-' => Some(Tok::Minus),
                _ => None,
            };
            if let Some(tok) = single {
                out.push((tok, loc));
                i += 1;
                continue;
            }
            if c == '=' && chars.get(i + 1) == Some(&'>') {
                out.push((Tok::Arrow, loc));
                i += 2;
                continue;
            }
            if c == '!' && chars.get(i + 1) == Some(&'=') {
                out.push((Tok::NotEq, loc));
                i += 2;
                continue;
            }
            if c == '?' {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && is_word(chars[j]) {
                    j += 1;
                }
                if j == start {
                    return Err(syntax(loc, "expected a variable name after `?`"));
                }
                out.push((Tok::Var(chars[start..j].iter().collect()), loc));
                i = j;
                continue;
            }
            if is_word(c) {
                let mut j = i;
                while j < chars.len() && is_word(chars[j]) {
                    j += 1;
                }
                out.push((Tok::Ident(chars[i..j].iter().collect()), loc));
                i = j;
                continue;
            }
            return Err(syntax(loc, &format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

fn syntax(location: Location, msg: &str) -> ParseError {
    ParseError {
        location,
        kind: ParseErrorKind::Syntax(msg.to_string()),
    }
}

struct Parser {
    toks: Vec<(Tok, Location)>,
    pos: usize,
    end: Location,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|(t, _)| t)
    }

    fn loc(&self) -> Location {
        self.toks.get(self.pos).map_or(self.end, |(_, l)| *l)
    }

    fn next(&mut self) -> Option<(Tok, Location)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Location, ParseError> {
        match self.next() {
            Some((t, l)) if t == want => Ok(l),
            Some((t, l)) => Err(syntax(l, &format!("expected {want}, found {t}"))),
            None => Err(syntax(self.end, &format!("expected {want}, found end of input"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Location), ParseError> {
        match self.next() {
            Some((Tok::Ident(s), l)) => Ok((s, l)),
            Some((t, l)) => Err(syntax(l, &format!("expected {what}, found {t}"))),
            None => Err(syntax(self.end, &format!("expected {what}, found end of input"))),
        }
    }

    fn var(&mut self) -> Result<(String, Location), ParseError> {
        match self.next() {
            Some((Tok::Var(s), l)) => Ok((s, l)),
            Some((t, l)) => Err(syntax(l, &format!("expected a variable, found {t}"))),
            None => Err(syntax(self.end, "expected a variable, found end of input")),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.next() {
            Some((Tok::Var(v), _)) => Ok(Term::Var(v)),
            Some((Tok::Ident(c), _)) => Ok(Term::Const(c)),
            Some((t, l)) => Err(syntax(l, &format!("expected a term, found {t}"))),
            None => Err(syntax(self.end, "expected a term, found end of input")),
        }
    }

    fn atom(&mut self) -> Result<(Atom, Location), ParseError> {
        let (predicate, loc) = self.ident("a predicate")?;
        if predicate == "rule" || predicate == "not" || predicate == "new" || predicate == "opp" {
            return Err(syntax(loc, &format!("`{predicate}` is reserved")));
        }
        self.expect(Tok::LParen)?;
        let mut args = vec![self.term()?];
        if self.peek() == Some(&Tok::Comma) {
            self.next();
            args.push(self.term()?);
        }
        self.expect(Tok::RParen)?;
        Ok((Atom { predicate, args }, loc))
    }

    fn starts_builtin(&self) -> bool {
        match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Ident(s)), Some(Tok::LParen)) if s == "opp" => true,
            (Some(Tok::Var(_) | Tok::Ident(_)), Some(Tok::NotEq)) => true,
            _ => false,
        }
    }

    fn builtin(&mut self) -> Result<(Builtin, Location), ParseError> {
        let loc = self.loc();
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "opp") {
            self.next();
            self.expect(Tok::LParen)?;
            let a = self.term()?;
            self.expect(Tok::Comma)?;
            let b = self.term()?;
            self.expect(Tok::RParen)?;
            return Ok((Builtin::Opp(a, b), loc));
        }
        let a = self.term()?;
        self.expect(Tok::NotEq)?;
        let b = self.term()?;
        Ok((Builtin::NotEqual(a, b), loc))
    }

    fn kind(&mut self) -> Result<EntityKind, ParseError> {
        let (word, loc) = self.ident("an entity kind")?;
        let word = if word == "mask" && self.peek() == Some(&Tok::Minus) {
            self.next();
            let (rest, _) = self.ident("`ref`")?;
            format!("mask-{rest}")
        } else {
            word
        };
        word.parse().map_err(|m: String| syntax(loc, &m))
    }

    fn at_rule_end(&self) -> bool {
        self.peek().is_none() || matches!(self.peek(), Some(Tok::Ident(s)) if s == "rule")
    }

    fn rule(&mut self) -> Result<(Rule, Location), ParseError> {
        let (kw, loc) = self.ident("`rule`")?;
        if kw != "rule" {
            return Err(syntax(loc, &format!("expected `rule`, found `{kw}`")));
        }
        let (id, _) = self.ident("a rule id")?;
        self.expect(Tok::Colon)?;

        #[derive(PartialEq, PartialOrd)]
        enum Section {
            Pos,
            Neg,
            Builtin,
        }
        let mut section = Section::Pos;
        let mut body_pos = Vec::new();
        let mut body_neg = Vec::new();
        let mut builtins = Vec::new();
        let (first, first_loc) = self.atom()?;
        body_pos.push((first, first_loc));
        while self.peek() == Some(&Tok::Comma) {
            self.next();
            let here = self.loc();
            if matches!(self.peek(), Some(Tok::Ident(s)) if s == "not") {
                if section > Section::Neg {
                    return Err(syntax(here, "negated atoms must precede builtins"));
                }
                self.next();
                section = Section::Neg;
                body_neg.push(self.atom()?);
            } else if self.starts_builtin() {
                section = Section::Builtin;
                builtins.push(self.builtin()?);
            } else {
                if section > Section::Pos {
                    return Err(syntax(
                        here,
                        "positive atoms must precede negated atoms and builtins",
                    ));
                }
                body_pos.push(self.atom()?);
            }
        }
        self.expect(Tok::Arrow)?;

        let mut head_new = Vec::new();
        while matches!(self.peek(), Some(Tok::Ident(s)) if s == "new") {
            self.next();
            let (var, vloc) = self.var()?;
            self.expect(Tok::Colon)?;
            let kind = self.kind()?;
            self.expect(Tok::LBracket)?;
            let mut tags = Vec::new();
            if self.peek() != Some(&Tok::RBracket) {
                tags.push(self.ident("a class tag")?.0);
                while self.peek() == Some(&Tok::Comma) {
                    self.next();
                    tags.push(self.ident("a class tag")?.0);
                }
            }
            self.expect(Tok::RBracket)?;
            self.expect(Tok::Comma)?;
            head_new.push((FreshEntity { var, kind, tags }, vloc));
        }

        let mut head_atoms = Vec::new();
        loop {
            let negated = if self.peek() == Some(&Tok::Minus) {
                self.next();
                true
            } else {
                false
            };
            let (atom, aloc) = self.atom()?;
            head_atoms.push((HeadAtom { negated, atom }, aloc));
            if self.peek() == Some(&Tok::Comma) {
                self.next();
                continue;
            }
            if !self.at_rule_end() {
                let l = self.loc();
                let found = self.peek().map(ToString::to_string).unwrap_or_default();
                return Err(syntax(l, &format!("expected `,` or a new rule, found {found}")));
            }
            break;
        }

        let rule = Rule {
            id,
            body_pos: body_pos.iter().map(|(a, _)| a.clone()).collect(),
            body_neg: body_neg.iter().map(|(a, _)| a.clone()).collect(),
            body_builtins: builtins.iter().map(|(b, _)| b.clone()).collect(),
            head_new: head_new.iter().map(|(n, _)| n.clone()).collect(),
            head_atoms: head_atoms.iter().map(|(h, _)| h.clone()).collect(),
        };
        check_rule(&rule, &body_neg, &builtins, &head_new, &head_atoms)?;
        Ok((rule, loc))
    }
}

fn check_rule(
    rule: &Rule,
    negs: &[(Atom, Location)],
    builtins: &[(Builtin, Location)],
    fresh: &[(FreshEntity, Location)],
    head: &[(HeadAtom, Location)],
) -> Result<(), ParseError> {
    let err = |location, kind| Err(ParseError { location, kind });
    let mut bound: BTreeSet<&str> = rule.body_pos.iter().flat_map(Atom::vars).collect();
    let positive = bound.clone();

    for (b, loc) in builtins {
        match b {
            Builtin::Opp(x, y) => {
                let unbound: Vec<&str> = [x, y]
                    .into_iter()
                    .filter_map(Term::var_name)
                    .filter(|v| !bound.contains(v))
                    .collect();
                if unbound.len() == 2 {
                    return err(
                        *loc,
                        ParseErrorKind::UnboundBuiltin {
                            rule: rule.id.clone(),
                            var: unbound[0].to_string(),
                        },
                    );
                }
                bound.extend(unbound);
            }
            Builtin::NotEqual(x, y) => {
                for v in [x, y].into_iter().filter_map(Term::var_name) {
                    if !bound.contains(v) {
                        return err(
                            *loc,
                            ParseErrorKind::UnboundBuiltin {
                                rule: rule.id.clone(),
                                var: v.to_string(),
                            },
                        );
                    }
                }
            }
        }
    }
    for (atom, loc) in negs {
        if let Some(v) = atom.vars().find(|v| !positive.contains(v)) {
            return err(
                *loc,
                ParseErrorKind::UnsafeNegation {
                    rule: rule.id.clone(),
                    var: v.to_string(),
                },
            );
        }
    }
    let mut fresh_vars = BTreeSet::new();
    for (f, loc) in fresh {
        if bound.contains(f.var.as_str()) || !fresh_vars.insert(f.var.as_str()) {
            return err(
                *loc,
                ParseErrorKind::FreshVariableInBody {
                    rule: rule.id.clone(),
                    var: f.var.clone(),
                },
            );
        }
    }
    for (h, loc) in head {
        if let Some(v) = h
            .atom
            .vars()
            .find(|v| !bound.contains(v) && !fresh_vars.contains(v))
        {
            return err(
                *loc,
                ParseErrorKind::UnboundHeadVariable {
                    rule: rule.id.clone(),
                    var: v.to_string(),
                },
            );
        }
    }
    Ok(())
}

/// Parses a rule file. Empty input gives an empty list.
pub fn parse_rules(src: &str) -> Result<Vec<Rule>, ParseError> {
    let toks = lex(src)?;
    let end = Location {
        line: src.lines().count().max(1),
        col: src.lines().last().map_or(1, |l| l.chars().count() + 1),
    };
    let mut parser = Parser { toks, pos: 0, end };
    let mut rules: Vec<Rule> = Vec::new();
    let mut ids = BTreeSet::new();
    while parser.peek().is_some() {
        let (rule, loc) = parser.rule()?;
        if !ids.insert(rule.id.clone()) {
            return Err(ParseError {
                location: loc,
                kind: ParseErrorKind::DuplicateRule(rule.id),
            });
        }
        rules.push(rule);
    }
    Ok(rules)
}
