//! Rule grammar: AST, tokenizer, parser, canonical printer, vocabulary
//! checks and random generation.
//!
//! Surface syntax (EBNF, see [`GRAMMAR_DOC`]): rules are disjunctions of
//! conjunctions of relations between arithmetic expressions.

pub mod ast;
pub mod lexer;
pub mod odd;
pub mod parser;
pub mod printer;
pub mod random;
pub mod text_serde;
pub mod vocabulary;

pub use ast::{ArithOp, AstError, BinExpr, Bound, Conjunct, Expr, RelOp, Relation, RuleAst};
pub use lexer::{is_identifier, tokenize, Span, Token, TokenKind};
pub use odd::{OddError, OddSpec, OddVariable};
pub use parser::{parse_rule, ParseError};
pub use printer::{format_number, print_conjunct, print_expr, print_relation, print_rule};
pub use random::random_rule;
pub use vocabulary::{check_vocabulary, check_vocabulary_with, RelationPath, VocabularyViolation, Whitelist};

/// The rule grammar as published to users and language models.
pub const GRAMMAR_DOC: &str = "\
rule     ::= disj
disj     ::= conj { OR conj }
conj     ::= atom { AND atom }
atom     ::= '(' disj ')' | relation
relation ::= expr rop expr { rop expr }     (a < x < b means (a < x) and (x < b))
expr     ::= term { ('+' | '-') term }
term     ::= factor { ('*' | '/') factor }
factor   ::= number | '-' number | identifier | '(' expr ')'
rop      ::= '<' | '<=' | '>' | '>=' | '==' | '!='
OR       ::= 'or' | '||' | '∨'          (case-insensitive keywords)
AND      ::= 'and' | '&&' | '∧'
identifier ::= [A-Za-z_][A-Za-z0-9_]*
number   ::= [0-9]+ ( '.' [0-9]+ )?
A parenthesized disjunction may not be combined with 'and'.";
