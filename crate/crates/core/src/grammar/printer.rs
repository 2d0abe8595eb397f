//! Canonical rule printing.
//!
//! Relations are always parenthesized, logical keywords are lowercase,
//! chained comparisons are never produced, and numbers use the shortest
//! representation that reads back to the same value.

use super::ast::{Conjunct, Expr, Relation, RuleAst};

pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        // folds -0 into 0
        return "0".to_string();
    }
    format!("{value}")
}

fn write_expr(out: &mut String, expr: &Expr) {
    match expr {
        Expr::Var(name) => out.push_str(name),
        Expr::Const(v) => out.push_str(&format_number(*v)),
        Expr::Bin(b) => {
            let prec = b.op.precedence();
            let wrap_left = matches!(&b.l, Expr::Bin(l) if l.op.precedence() < prec);
            let wrap_right = matches!(&b.r, Expr::Bin(r) if r.op.precedence() <= prec);
            write_operand(out, &b.l, wrap_left);
            out.push(' ');
            out.push_str(b.op.symbol());
            out.push(' ');
            write_operand(out, &b.r, wrap_right);
        }
    }
}

fn write_operand(out: &mut String, expr: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
        write_expr(out, expr);
        out.push(')');
    } else {
        write_expr(out, expr);
    }
}

pub fn print_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr);
    out
}

pub fn print_relation(rel: &Relation) -> String {
    let mut out = String::from("(");
    write_expr(&mut out, &rel.lhs);
    out.push(' ');
    out.push_str(rel.op.symbol());
    out.push(' ');
    write_expr(&mut out, &rel.rhs);
    out.push(')');
    out
}

pub fn print_conjunct(conj: &Conjunct) -> String {
    conj.relations.iter().map(print_relation).collect::<Vec<_>>().join(" and ")
}

pub fn print_rule(ast: &RuleAst) -> String {
    let multi = ast.disjuncts.len() > 1;
    ast.disjuncts
        .iter()
        .map(|conj| {
            let body = print_conjunct(conj);
            if multi && conj.relations.len() > 1 {
                format!("({body})")
            } else {
                body
            }
        })
        .collect::<Vec<_>>()
        .join(" or ")
}
