//! Recursive-descent parser with name resolution and scalar/series typing.

use super::lexer::{tokenize, Tok, Token};
use super::{Ast, BinOp, Binding, Builtin, Category, Diagnostic, Expr, Ty, UnOp, MAX_DEPTH};

struct Typed {
    expr: Expr,
    ty: Ty,
    depth: usize,
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    schema: &'a [String],
    lets: Vec<(String, Ty)>,
    nesting: usize,
}

pub(crate) fn parse(src: &str, schema: &[String]) -> Result<Ast, Diagnostic> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        schema,
        lets: Vec::new(),
        nesting: 0,
    };
    p.program()
}

fn join(a: Ty, b: Ty) -> Ty {
    if a == Ty::Series || b == Ty::Series {
        Ty::Series
    } else {
        Ty::Scalar
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn at(&self, idx: usize) -> (usize, usize) {
        let t = &self.toks[idx];
        (t.line, t.col)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, idx: usize, cat: Category, msg: impl Into<String>) -> Diagnostic {
        let (l, c) = self.at(idx);
        Diagnostic::new(l, c, cat, msg)
    }

    fn syntax(&self, msg: impl Into<String>) -> Diagnostic {
        let (l, c) = self.here();
        Diagnostic::new(l, c, Category::Syntax, msg)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), Diagnostic> {
        if *self.peek() == want {
            self.advance();
            Ok(())
        } else {
            Err(self.syntax(format!("expected {what}, found {}", self.peek().describe())))
        }
    }

    fn is_reserved(&self, name: &str) -> bool {
        Builtin::from_name(name).is_some() || self.field(name).is_some()
    }

    fn field(&self, name: &str) -> Option<Binding> {
        if let Some(i) = self.schema.iter().position(|f| f == name) {
            return Some(Binding::Feature(i));
        }
        match name {
            "action_id" => return Some(Binding::ActionId),
            "t" => return Some(Binding::Step),
            "is_last" => return Some(Binding::IsLast),
            _ => {}
        }
        if let Some(base) = name.strip_suffix("_first") {
            if let Some(i) = self.schema.iter().position(|f| f == base) {
                return Some(Binding::FeatureFirst(i));
            }
        }
        if let Some(base) = name.strip_suffix("_last") {
            if let Some(i) = self.schema.iter().position(|f| f == base) {
                return Some(Binding::FeatureLast(i));
            }
        }
        None
    }

    fn program(&mut self) -> Result<Ast, Diagnostic> {
        let mut lets = Vec::new();
        while *self.peek() == Tok::Let {
            self.advance();
            let name_idx = self.pos;
            let name = match self.advance() {
                Tok::Ident(n) => n,
                other => {
                    return Err(self.err_at(
                        name_idx,
                        Category::Syntax,
                        format!("expected a name after 'let', found {}", other.describe()),
                    ))
                }
            };
            if self.is_reserved(&name) {
                return Err(self.err_at(
                    name_idx,
                    Category::Syntax,
                    format!("cannot rebind reserved name '{name}'"),
                ));
            }
            self.expect(Tok::Assign, "'='")?;
            let value = self.expr()?;
            self.expect(Tok::In, "'in'")?;
            self.lets.push((name.clone(), value.ty));
            lets.push((name, value.expr));
        }
        if *self.peek() != Tok::Return {
            return Err(self.syntax(format!("expected 'return', found {}", self.peek().describe())));
        }
        self.advance();
        let body_idx = self.pos;
        let body = self.expr()?;
        if *self.peek() != Tok::Eof {
            return Err(self.syntax(format!(
                "unexpected {} after return expression",
                self.peek().describe()
            )));
        }
        if body.ty != Ty::Scalar {
            return Err(self.err_at(
                body_idx,
                Category::Type,
                "program must return a scalar, found a series (reduce it with mean, sum, ...)",
            ));
        }
        Ok(Ast {
            lets,
            body: body.expr,
        })
    }

    fn enter(&mut self) -> Result<(), Diagnostic> {
        self.nesting += 1;
        if self.nesting > MAX_DEPTH {
            return Err(self.syntax("expression nested too deeply"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    fn binary(&self, op: BinOp, lhs: Typed, rhs: Typed) -> Result<Typed, Diagnostic> {
        let depth = lhs.depth.max(rhs.depth) + 1;
        if depth > MAX_DEPTH {
            return Err(self.syntax("expression nested too deeply"));
        }
        Ok(Typed {
            ty: join(lhs.ty, rhs.ty),
            expr: Expr::Binary(op, Box::new(lhs.expr), Box::new(rhs.expr)),
            depth,
        })
    }

    fn unary(op: UnOp, inner: Typed) -> Typed {
        Typed {
            ty: inner.ty,
            depth: inner.depth + 1,
            expr: Expr::Unary(op, Box::new(inner.expr)),
        }
    }

    fn expr(&mut self) -> Result<Typed, Diagnostic> {
        self.enter()?;
        let r = self.or_expr();
        self.leave();
        r
    }

    fn or_expr(&mut self) -> Result<Typed, Diagnostic> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.advance();
            let rhs = self.and_expr()?;
            lhs = self.binary(BinOp::Or, lhs, rhs)?;
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Typed, Diagnostic> {
        let mut lhs = self.not_expr()?;
        while *self.peek() == Tok::And {
            self.advance();
            let rhs = self.not_expr()?;
            lhs = self.binary(BinOp::And, lhs, rhs)?;
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Typed, Diagnostic> {
        if *self.peek() == Tok::Not {
            self.advance();
            self.enter()?;
            let inner = self.not_expr();
            self.leave();
            return Ok(Self::unary(UnOp::Not, inner?));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Typed, Diagnostic> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Eq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.add_expr()?;
            lhs = self.binary(op, lhs, rhs)?;
        }
    }

    fn add_expr(&mut self) -> Result<Typed, Diagnostic> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.mul_expr()?;
            lhs = self.binary(op, lhs, rhs)?;
        }
    }

    fn mul_expr(&mut self) -> Result<Typed, Diagnostic> {
        let mut lhs = self.neg_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.neg_expr()?;
            lhs = self.binary(op, lhs, rhs)?;
        }
    }

    fn neg_expr(&mut self) -> Result<Typed, Diagnostic> {
        if *self.peek() == Tok::Minus {
            self.advance();
            self.enter()?;
            let inner = self.neg_expr();
            self.leave();
            return Ok(Self::unary(UnOp::Neg, inner?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Typed, Diagnostic> {
        let idx = self.pos;
        match self.advance() {
            Tok::Num(v) => Ok(Typed {
                expr: Expr::Num(v),
                ty: Ty::Scalar,
                depth: 1,
            }),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.call(idx, name)
                } else {
                    self.variable(idx, name)
                }
            }
            other => Err(self.err_at(
                idx,
                Category::Syntax,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    fn variable(&self, idx: usize, name: String) -> Result<Typed, Diagnostic> {
        if let Some(slot) = self.lets.iter().rposition(|(n, _)| *n == name) {
            return Ok(Typed {
                ty: self.lets[slot].1,
                expr: Expr::Ident {
                    name,
                    binding: Binding::Let(slot),
                },
                depth: 1,
            });
        }
        if let Some(binding) = self.field(&name) {
            let ty = match binding {
                Binding::FeatureFirst(_) | Binding::FeatureLast(_) => Ty::Scalar,
                _ => Ty::Series,
            };
            return Ok(Typed {
                expr: Expr::Ident { name, binding },
                ty,
                depth: 1,
            });
        }
        if Builtin::from_name(&name).is_some() {
            return Err(self.err_at(
                idx,
                Category::Syntax,
                format!("builtin '{name}' must be called with parentheses"),
            ));
        }
        Err(self.err_at(
            idx,
            Category::UnknownIdentifier,
            format!("unknown identifier '{name}'"),
        ))
    }

    fn call(&mut self, idx: usize, name: String) -> Result<Typed, Diagnostic> {
        let Some(builtin) = Builtin::from_name(&name) else {
            let (cat, msg) = if self.lets.iter().any(|(n, _)| *n == name) || self.field(&name).is_some() {
                (Category::Type, format!("'{name}' is a value, not a function"))
            } else {
                (Category::UnknownIdentifier, format!("unknown function '{name}'"))
            };
            return Err(self.err_at(idx, cat, msg));
        };
        self.expect(Tok::LParen, "'('")?;
        let mut args: Vec<(usize, Typed)> = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let arg_idx = self.pos;
                args.push((arg_idx, self.expr()?));
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "')' or ','")?;

        let (lo, hi) = builtin.arity();
        if args.len() < lo || args.len() > hi {
            let want = if lo == hi {
                format!("{lo}")
            } else {
                format!("{lo} or {hi}")
            };
            let noun = if hi == 1 { "argument" } else { "arguments" };
            return Err(self.err_at(
                idx,
                Category::Arity,
                format!("'{name}' expects {want} {noun}, got {}", args.len()),
            ));
        }

        let need_series = |p: &Self, (arg_idx, arg): &(usize, Typed)| -> Result<(), Diagnostic> {
            if arg.ty != Ty::Series {
                return Err(p.err_at(
                    *arg_idx,
                    Category::Type,
                    format!("'{name}' expects a series argument, found a scalar"),
                ));
            }
            Ok(())
        };

        let ty = match builtin {
            Builtin::OverSteps => Ty::Series,
            Builtin::Len => Ty::Scalar,
            Builtin::Mean
            | Builtin::Sum
            | Builtin::Std
            | Builtin::Var
            | Builtin::First
            | Builtin::Last
            | Builtin::CountIf
            | Builtin::Progress => {
                need_series(self, &args[0])?;
                Ty::Scalar
            }
            Builtin::Min | Builtin::Max => {
                if args.len() == 1 {
                    need_series(self, &args[0])?;
                    Ty::Scalar
                } else {
                    join(args[0].1.ty, args[1].1.ty)
                }
            }
            Builtin::Delta => {
                need_series(self, &args[0])?;
                Ty::Series
            }
            Builtin::Gauss | Builtin::Sigmoid | Builtin::Abs | Builtin::Exp | Builtin::Clamp => {
                args.iter().fold(Ty::Scalar, |acc, (_, a)| join(acc, a.ty))
            }
        };
        let depth = args.iter().map(|(_, a)| a.depth).max().unwrap_or(0) + 1;
        if depth > MAX_DEPTH {
            return Err(self.err_at(idx, Category::Syntax, "expression nested too deeply"));
        }
        Ok(Typed {
            expr: Expr::Call(builtin, args.into_iter().map(|(_, a)| a.expr).collect()),
            ty,
            depth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Vec<String> {
        ["pos_x", "pos_y", "dist_goal", "velocity"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn err(src: &str) -> Diagnostic {
        parse(src, &schema()).unwrap_err()
    }

    #[test]
    fn minimal_program() {
        let ast = parse("return mean(over_steps(dist_goal))", &schema()).unwrap();
        assert!(ast.lets.is_empty());
        assert!(matches!(ast.body, Expr::Call(Builtin::Mean, _)));
    }

    #[test]
    fn let_chain_and_weights() {
        let src = "let w = 0.6 in return w * mean(over_steps(gauss(dist_goal, 0, 2))) + (1 - w) * progress(dist_goal)";
        let ast = parse(src, &schema()).unwrap();
        assert_eq!(ast.lets.len(), 1);
    }

    #[test]
    fn misspelled_feature() {
        let d = err("return mean(dist_gaol)");
        assert_eq!(d.category, Category::UnknownIdentifier);
        assert!(d.message.contains("dist_gaol"));
        assert_eq!((d.line, d.col), (1, 13));
        assert_eq!(d.to_string(), "1:13: unknown-identifier: unknown identifier 'dist_gaol'");
    }

    #[test]
    fn arity_mismatch() {
        let d = err("return gauss(dist_goal_last, 0)");
        assert_eq!(d.category, Category::Arity);
        let d = err("return len(dist_goal)");
        assert_eq!(d.category, Category::Arity);
    }

    #[test]
    fn type_mismatches() {
        assert_eq!(err("return dist_goal").category, Category::Type);
        assert_eq!(err("return mean(3)").category, Category::Type);
        assert_eq!(err("return progress(dist_goal_last)").category, Category::Type);
        assert_eq!(err("return sum(delta(1))").category, Category::Type);
        assert_eq!(err("return dist_goal(1)").category, Category::Type);
    }

    #[test]
    fn syntax_errors() {
        assert_eq!(err("mean(dist_goal)").category, Category::Syntax);
        assert_eq!(err("return 1 +").category, Category::Syntax);
        assert_eq!(err("return (1").category, Category::Syntax);
        assert_eq!(err("return 1 2").category, Category::Syntax);
        assert_eq!(err("let mean = 1 in return mean").category, Category::Syntax);
        assert_eq!(err("return mean").category, Category::Syntax);
        assert_eq!(err("").category, Category::Syntax);
    }

    #[test]
    fn unknown_function() {
        let d = err("return foo(dist_goal)");
        assert_eq!(d.category, Category::UnknownIdentifier);
        assert!(d.message.contains("foo"));
    }

    #[test]
    fn later_let_shadows_earlier() {
        let ast = parse("let a = 1 in let a = dist_goal in return mean(a)", &schema()).unwrap();
        assert!(matches!(
            &ast.body,
            Expr::Call(_, args) if matches!(&args[0], Expr::Ident { binding: Binding::Let(1), .. })
        ));
    }

    #[test]
    fn first_last_fields_are_scalars() {
        parse("return dist_goal_first - dist_goal_last", &schema()).unwrap();
        parse("return velocity_last", &schema()).unwrap();
    }

    #[test]
    fn deep_nesting_rejected_not_crashing() {
        let src = format!("return {}1{}", "(".repeat(5000), ")".repeat(5000));
        assert_eq!(err(&src).category, Category::Syntax);
        let src = format!("return {}1", "-".repeat(5000));
        assert_eq!(err(&src).category, Category::Syntax);
        let src = format!("return 1{}", " + 1".repeat(5000));
        assert_eq!(err(&src).category, Category::Syntax);
    }
}
