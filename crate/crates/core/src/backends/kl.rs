//! Pretty-printer back to KL source.

use std::fmt::Write;

use crate::ast::*;

/// Renders a program as reparseable KL text. Empty programs render as "".
pub fn emit_kl(prog: &Program) -> String {
    let mut out = String::new();
    let mut first = true;
    for s in &prog.structs {
        if !first {
            out.push('\n');
        }
        first = false;
        let _ = writeln!(out, "struct {} {{", s.name);
        for f in &s.fields {
            let _ = writeln!(out, "  {}: {};", f.name, f.ty);
        }
        out.push_str("}\n");
    }
    for f in &prog.functions {
        if !first {
            out.push('\n');
        }
        first = false;
        function(&mut out, f);
    }
    out
}

fn function(out: &mut String, f: &FunctionDef) {
    if f.is_extern() {
        out.push_str("extern ");
    }
    let params: Vec<String> = f.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
    let _ = write!(out, "fn {}({})", f.name, params.join(", "));
    if let Some(r) = f.ret {
        let _ = write!(out, " -> {}", r.name());
    }
    match &f.body {
        None => out.push_str(";\n"),
        Some(b) => {
            out.push_str(" {\n");
            block_body(out, b, 1);
            out.push_str("}\n");
        }
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn block_body(out: &mut String, b: &Block, level: usize) {
    for s in &b.stmts {
        stmt(out, s, level);
    }
}

fn stmt(out: &mut String, s: &Stmt, level: usize) {
    match &s.kind {
        StmtKind::Let { name, ty, init } => {
            indent(out, level);
            match ty {
                Some(t) => {
                    let _ = writeln!(out, "let {name}: {t} = {};", expr(init));
                }
                None => {
                    let _ = writeln!(out, "let {name} = {};", expr(init));
                }
            }
        }
        StmtKind::Assign { target, op, value } => {
            indent(out, level);
            let _ = writeln!(out, "{} {} {};", expr(target), op.symbol(), expr(value));
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            indent(out, level);
            if_chain(out, cond, then_block, else_block.as_ref(), level);
            out.push('\n');
        }
        StmtKind::For(l) => for_loop(out, l, level),
        StmtKind::Expr(e) => {
            indent(out, level);
            let _ = writeln!(out, "{};", expr(e));
        }
        StmtKind::Return(v) => {
            indent(out, level);
            match v {
                Some(e) => {
                    let _ = writeln!(out, "return {};", expr(e));
                }
                None => out.push_str("return;\n"),
            }
        }
        StmtKind::AssumeDisjoint(a, b) => {
            indent(out, level);
            let _ = writeln!(out, "@assume_disjoint({a}, {b});");
        }
        StmtKind::Free(name) => {
            indent(out, level);
            let _ = writeln!(out, "free {name};");
        }
    }
}

fn if_chain(out: &mut String, cond: &Expr, then_b: &Block, else_b: Option<&Block>, level: usize) {
    let _ = writeln!(out, "if {} {{", expr(cond));
    block_body(out, then_b, level + 1);
    indent(out, level);
    out.push('}');
    if let Some(e) = else_b {
        // `else if` when the else block is exactly one if statement.
        if let [Stmt {
            kind:
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                },
            ..
        }] = e.stmts.as_slice()
        {
            out.push_str(" else ");
            if_chain(out, cond, then_block, else_block.as_ref(), level);
        } else {
            out.push_str(" else {\n");
            block_body(out, e, level + 1);
            indent(out, level);
            out.push('}');
        }
    }
}

fn for_loop(out: &mut String, l: &ForLoop, level: usize) {
    let mut annots = Vec::new();
    match &l.annotation {
        Annotation::None => {}
        Annotation::Convert => annots.push("@soa_convert".to_string()),
        Annotation::ConvertHoist(n) => annots.push(format!("@soa_convert_hoist({n})")),
        Annotation::Offload => annots.push("@soa_offload".to_string()),
        Annotation::Target(maps) => {
            let clauses: Vec<String> = maps
                .iter()
                .map(|m| format!("{} {}[{}]", m.dir.keyword(), m.buffer, m.len))
                .collect();
            annots.push(format!("@target({})", clauses.join(", ")));
        }
    }
    if let Some(t) = &l.target {
        annots.push(format!("@soa_target({t})"));
    }
    if !annots.is_empty() {
        indent(out, level);
        out.push_str(&annots.join(" "));
        out.push('\n');
    }
    indent(out, level);
    match &l.range {
        LoopRange::Container(c) => {
            let _ = writeln!(out, "for {} in {c} {{", l.binder);
        }
        LoopRange::Range { start, end } => {
            let _ = writeln!(out, "for {} in {}..{} {{", l.binder, expr(start), expr(end));
        }
    }
    block_body(out, &l.body, level + 1);
    indent(out, level);
    out.push_str("}\n");
}

fn float(v: f64) -> String {
    let s = format!("{v:?}");
    // Debug prints `1e300` style for large magnitudes; both forms lex as floats.
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

const POSTFIX_PREC: u8 = 10;
const UNARY_PREC: u8 = 9;

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => UNARY_PREC,
        ExprKind::Float(v) if v.is_sign_negative() => UNARY_PREC,
        ExprKind::Int(v) if *v < 0 => UNARY_PREC,
        _ => POSTFIX_PREC,
    }
}

fn wrapped(e: &Expr, min: u8) -> String {
    let s = expr(e);
    if prec(e) < min {
        format!("({s})")
    } else {
        s
    }
}

/// Renders an expression with the minimal parentheses that preserve its tree.
pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Float(v) => float(*v),
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Var(n) => n.clone(),
        ExprKind::Field { base, field } => format!("{}.{field}", wrapped(base, POSTFIX_PREC)),
        ExprKind::Index { base, index } => {
            format!("{}[{}]", wrapped(base, POSTFIX_PREC), expr(index))
        }
        ExprKind::Call { name, args } => {
            let a: Vec<String> = args.iter().map(expr).collect();
            format!("{name}({})", a.join(", "))
        }
        ExprKind::Unary { op, expr: inner } => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            format!("{sym}{}", wrapped(inner, UNARY_PREC))
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            // Left-associative: a right operand of equal precedence needs parentheses.
            // Comparisons do not chain, so their left operand needs them too.
            let lmin = if op.is_comparison() { p + 1 } else { p };
            format!("{} {} {}", wrapped(lhs, lmin), op.symbol(), wrapped(rhs, p + 1))
        }
        ExprKind::VecLit(items) => {
            let a: Vec<String> = items.iter().map(expr).collect();
            format!("[{}]", a.join(", "))
        }
    }
}
