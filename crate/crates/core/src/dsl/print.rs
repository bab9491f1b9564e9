use super::{Ast, Expr, UnOp};

/// Renders an AST as canonical, fully parenthesized source.
pub fn print(ast: &Ast) -> String {
    let mut out = String::new();
    for (name, value) in &ast.lets {
        out.push_str("let ");
        out.push_str(name);
        out.push_str(" = ");
        expr(value, &mut out);
        out.push_str(" in\n");
    }
    out.push_str("return ");
    expr(&ast.body, &mut out);
    out
}

fn expr(e: &Expr, out: &mut String) {
    match e {
        // `{:?}` is the shortest representation that reads back to the same bits.
        Expr::Num(v) => out.push_str(&format!("{v:?}")),
        Expr::Ident { name, .. } => out.push_str(name),
        Expr::Unary(op, inner) => {
            out.push_str(match op {
                UnOp::Neg => "(-",
                UnOp::Not => "(not ",
            });
            expr(inner, out);
            out.push(')');
        }
        Expr::Binary(op, lhs, rhs) => {
            out.push('(');
            expr(lhs, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            expr(rhs, out);
            out.push(')');
        }
        Expr::Call(b, args) => {
            out.push_str(b.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(a, out);
            }
            out.push(')');
        }
    }
}
