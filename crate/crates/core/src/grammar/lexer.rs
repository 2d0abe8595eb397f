//! Total tokenizer for the rule DSL.
//!
//! Never fails: any run of bytes that does not start a known token becomes a
//! single `Garbage` token, so malformed text can still be measured.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TokenKind {
    Ident,
    Number,
    RelOp,
    ArOp,
    LogOp,
    LParen,
    RParen,
    Garbage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

pub(crate) const KEYWORDS: [&str; 2] = ["and", "or"];

fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// `[A-Za-z_][A-Za-z0-9_]*`, excluding the logical keywords.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !is_keyword(s)
}

/// Length in bytes of the token starting at `rest`, with its kind, or `None`
/// if no token starts here.
fn match_token(rest: &str) -> Option<(TokenKind, usize)> {
    let mut chars = rest.chars();
    let c = chars.next()?;
    let next = chars.next();
    let kind_len = match c {
        'a'..='z' | 'A'..='Z' | '_' => {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            let kind = if is_keyword(&rest[..len]) { TokenKind::LogOp } else { TokenKind::Ident };
            (kind, len)
        }
        '0'..='9' => {
            let int_len = rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len());
            let after = &rest[int_len..];
            let frac_len = match after.strip_prefix('.') {
                Some(frac) => {
                    let digits = frac.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(frac.len());
                    if digits > 0 {
                        1 + digits
                    } else {
                        0
                    }
                }
                None => 0,
            };
            (TokenKind::Number, int_len + frac_len)
        }
        '<' | '>' | '=' | '!' => match (c, next) {
            (_, Some('=')) => (TokenKind::RelOp, 2),
            ('!', _) => return None,
            _ => (TokenKind::RelOp, 1),
        },
        '≤' | '≥' | '≠' => (TokenKind::RelOp, c.len_utf8()),
        '+' | '-' | '*' | '/' => (TokenKind::ArOp, 1),
        '&' if next == Some('&') => (TokenKind::LogOp, 2),
        '|' if next == Some('|') => (TokenKind::LogOp, 2),
        '∧' | '∨' => (TokenKind::LogOp, c.len_utf8()),
        '(' => (TokenKind::LParen, 1),
        ')' => (TokenKind::RParen, 1),
        _ => return None,
    };
    Some(kind_len)
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut garbage_start: Option<usize> = None;

    let flush = |tokens: &mut Vec<Token>, start: Option<usize>, end: usize| {
        if let Some(start) = start {
            tokens.push(Token {
                kind: TokenKind::Garbage,
                lexeme: text[start..end].to_string(),
                span: Span { start, end },
            });
        }
    };

    while pos < text.len() {
        let rest = &text[pos..];
        let c = rest.chars().next().expect("non-empty remainder");
        if c.is_whitespace() {
            flush(&mut tokens, garbage_start.take(), pos);
            pos += c.len_utf8();
            continue;
        }
        match match_token(rest) {
            Some((kind, len)) => {
                flush(&mut tokens, garbage_start.take(), pos);
                tokens.push(Token {
                    kind,
                    lexeme: rest[..len].to_string(),
                    span: Span { start: pos, end: pos + len },
                });
                pos += len;
            }
            None => {
                garbage_start.get_or_insert(pos);
                pos += c.len_utf8();
            }
        }
    }
    flush(&mut tokens, garbage_start.take(), pos);
    tokens
}
