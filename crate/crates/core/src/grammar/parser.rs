//! Recursive-descent parser for the rule DSL.
//!
//! Precedence, loosest first: `or`, `and`, relational, additive,
//! multiplicative. Arithmetic and logical operators are left-associative.
//! A `(` may open either a logical group or an arithmetic sub-expression;
//! the parser tries the logical reading first and falls back when the
//! closing paren is followed by an operator. Results are memoized per token
//! position, so backtracking stays polynomial.
//!
//! Chained comparisons `a < x < b` desugar to `(a < x) and (x < b)`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::ast::{ArithOp, Conjunct, Expr, RelOp, Relation, RuleAst};
use super::lexer::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the source text.
    pub position: usize,
    /// Index of the offending token; equals the token count at end of input.
    pub token_index: usize,
    pub expected: BTreeSet<&'static str>,
    /// Offending lexeme, `None` at end of input.
    pub found: Option<String>,
    pub message: Option<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: ", self.position)?;
        if let Some(msg) = &self.message {
            return write!(f, "{msg}");
        }
        let expected: Vec<&str> = self.expected.iter().copied().collect();
        write!(f, "expected {}", expected.join(" or "))?;
        match &self.found {
            Some(lexeme) => write!(f, ", found `{lexeme}`"),
            None => write!(f, ", found end of input"),
        }
    }
}

impl std::error::Error for ParseError {}

const EXPR_START: [&str; 3] = ["identifier", "number", "'('"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Logic {
    And,
    Or,
}

fn logic_of(tok: &Token) -> Option<Logic> {
    if tok.kind != TokenKind::LogOp {
        return None;
    }
    match tok.lexeme.to_ascii_lowercase().as_str() {
        "and" | "&&" | "∧" => Some(Logic::And),
        "or" | "||" | "∨" => Some(Logic::Or),
        _ => None,
    }
}

fn relop_of(lexeme: &str) -> RelOp {
    match lexeme {
        "<" => RelOp::Lt,
        "<=" | "≤" => RelOp::Le,
        ">" => RelOp::Gt,
        ">=" | "≥" => RelOp::Ge,
        "==" | "=" => RelOp::Eq,
        _ => RelOp::Ne,
    }
}

fn arith_of(lexeme: &str) -> ArithOp {
    match lexeme {
        "+" => ArithOp::Add,
        "-" => ArithOp::Sub,
        "*" => ArithOp::Mul,
        _ => ArithOp::Div,
    }
}

type PResult<T> = Result<(T, usize), ParseError>;

struct Parser<'t> {
    tokens: &'t [Token],
    src_len: usize,
    disj_memo: HashMap<usize, PResult<Vec<Conjunct>>>,
    expr_memo: HashMap<usize, PResult<Expr>>,
}

/// Keeps whichever error got further; merges expectations on a tie.
fn furthest(a: ParseError, b: ParseError) -> ParseError {
    match a.token_index.cmp(&b.token_index) {
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Equal => {
            let mut merged = a;
            if merged.message.is_none() {
                merged.expected.extend(b.expected);
            }
            merged
        }
    }
}

impl<'t> Parser<'t> {
    fn new(tokens: &'t [Token], src_len: usize) -> Self {
        Parser { tokens, src_len, disj_memo: HashMap::new(), expr_memo: HashMap::new() }
    }

    fn tok(&self, pos: usize) -> Option<&'t Token> {
        self.tokens.get(pos)
    }

    fn error(&self, pos: usize, expected: &[&'static str]) -> ParseError {
        let tok = self.tok(pos);
        ParseError {
            position: tok.map_or(self.src_len, |t| t.span.start),
            token_index: pos,
            expected: expected.iter().copied().collect(),
            found: tok.map(|t| t.lexeme.clone()),
            message: None,
        }
    }

    fn error_msg(&self, pos: usize, message: String) -> ParseError {
        let mut err = self.error(pos, &[]);
        err.message = Some(message);
        err
    }

    fn is_kind(&self, pos: usize, kind: TokenKind) -> bool {
        self.tok(pos).is_some_and(|t| t.kind == kind)
    }

    fn rule(&mut self) -> Result<RuleAst, ParseError> {
        let (disjuncts, end) = self.disj(0)?;
        if end != self.tokens.len() {
            return Err(self.error(end, &["'and'", "'or'", "end of input"]));
        }
        Ok(RuleAst::new(disjuncts))
    }

    fn disj(&mut self, pos: usize) -> PResult<Vec<Conjunct>> {
        if let Some(hit) = self.disj_memo.get(&pos) {
            return hit.clone();
        }
        let result = self.disj_uncached(pos);
        self.disj_memo.insert(pos, result.clone());
        result
    }

    fn disj_uncached(&mut self, pos: usize) -> PResult<Vec<Conjunct>> {
        let (mut out, mut p) = self.conj(pos)?;
        while self.tok(p).and_then(logic_of) == Some(Logic::Or) {
            let (more, next) = self.conj(p + 1)?;
            out.extend(more);
            p = next;
        }
        Ok((out, p))
    }

    /// A conjunction of atoms. Returns DNF: a lone atom may carry several
    /// disjuncts (a parenthesized `or`), but such an atom cannot be and-ed.
    fn conj(&mut self, pos: usize) -> PResult<Vec<Conjunct>> {
        let (first, mut p) = self.atom(pos)?;
        if self.tok(p).and_then(logic_of) != Some(Logic::And) {
            return Ok((first, p));
        }
        if first.len() != 1 {
            return Err(self.error_msg(pos, "a disjunction cannot appear inside a conjunction".into()));
        }
        let mut relations = first.into_iter().next().expect("one conjunct").relations;
        while self.tok(p).and_then(logic_of) == Some(Logic::And) {
            let start = p + 1;
            let (atom, next) = self.atom(start)?;
            if atom.len() != 1 {
                return Err(
                    self.error_msg(start, "a disjunction cannot appear inside a conjunction".into())
                );
            }
            relations.extend(atom.into_iter().next().expect("one conjunct").relations);
            p = next;
        }
        Ok((vec![Conjunct::new(relations)], p))
    }

    fn atom(&mut self, pos: usize) -> PResult<Vec<Conjunct>> {
        let mut group_err = None;
        if self.is_kind(pos, TokenKind::LParen) {
            match self.disj(pos + 1) {
                Ok((inner, p)) if self.is_kind(p, TokenKind::RParen) => {
                    let after = p + 1;
                    let continues_expr =
                        self.is_kind(after, TokenKind::RelOp) || self.is_kind(after, TokenKind::ArOp);
                    if !continues_expr {
                        return Ok((inner, after));
                    }
                }
                Ok((_, p)) => group_err = Some(self.error(p, &["')'", "'and'", "'or'"])),
                Err(e) => group_err = Some(e),
            }
        }
        match self.relation(pos) {
            Ok((rels, p)) => Ok((vec![Conjunct::new(rels)], p)),
            Err(e) => Err(match group_err {
                Some(g) => furthest(g, e),
                None => e,
            }),
        }
    }

    fn relation(&mut self, pos: usize) -> PResult<Vec<Relation>> {
        let (mut lhs, mut p) = self.expr(pos)?;
        if !self.is_kind(p, TokenKind::RelOp) {
            return Err(self.error(p, &["relational operator"]));
        }
        let mut out = Vec::new();
        while let Some(tok) = self.tok(p).filter(|t| t.kind == TokenKind::RelOp) {
            let op = relop_of(&tok.lexeme);
            let (rhs, next) = self.expr(p + 1)?;
            out.push(Relation::new(lhs, op, rhs.clone()));
            lhs = rhs;
            p = next;
        }
        Ok((out, p))
    }

    fn expr(&mut self, pos: usize) -> PResult<Expr> {
        if let Some(hit) = self.expr_memo.get(&pos) {
            return hit.clone();
        }
        let result = self.binary(pos, 1);
        self.expr_memo.insert(pos, result.clone());
        result
    }

    /// Precedence climbing over the two arithmetic levels.
    fn binary(&mut self, pos: usize, level: u8) -> PResult<Expr> {
        let (mut lhs, mut p) = if level == 1 { self.binary(pos, 2)? } else { self.factor(pos)? };
        while let Some(tok) = self.tok(p).filter(|t| t.kind == TokenKind::ArOp) {
            let op = arith_of(&tok.lexeme);
            if op.precedence() != level {
                break;
            }
            let (rhs, next) = if level == 1 { self.binary(p + 1, 2)? } else { self.factor(p + 1)? };
            lhs = Expr::bin(op, lhs, rhs);
            p = next;
        }
        Ok((lhs, p))
    }

    fn number(&self, pos: usize, negative: bool) -> PResult<Expr> {
        let tok = &self.tokens[pos];
        let value: f64 = tok.lexeme.parse().map_err(|_| self.error(pos, &["number"]))?;
        if !value.is_finite() {
            return Err(self.error_msg(pos, format!("number `{}` is out of range", tok.lexeme)));
        }
        Ok((Expr::Const(if negative { -value } else { value }), pos + 1))
    }

    fn factor(&mut self, pos: usize) -> PResult<Expr> {
        let Some(tok) = self.tok(pos) else {
            return Err(self.error(pos, &EXPR_START));
        };
        match tok.kind {
            TokenKind::Number => self.number(pos, false),
            TokenKind::Ident => Ok((Expr::Var(tok.lexeme.clone()), pos + 1)),
            TokenKind::ArOp if tok.lexeme == "-" => {
                if self.is_kind(pos + 1, TokenKind::Number) {
                    self.number(pos + 1, true)
                } else {
                    Err(self.error(pos + 1, &["number"]))
                }
            }
            TokenKind::LParen => {
                let (inner, p) = self.expr(pos + 1)?;
                if self.is_kind(p, TokenKind::RParen) {
                    Ok((inner, p + 1))
                } else {
                    Err(self.error(p, &["')'", "arithmetic operator"]))
                }
            }
            _ => Err(self.error(pos, &EXPR_START)),
        }
    }
}

/// Parses an already-tokenized rule. `src_len` is used for end-of-input
/// positions.
pub(crate) fn parse_tokens(tokens: &[Token], src_len: usize) -> Result<RuleAst, ParseError> {
    Parser::new(tokens, src_len).rule()
}

pub fn parse_rule(text: &str) -> Result<RuleAst, ParseError> {
    parse_tokens(&tokenize(text), text.len())
}
