use super::{Ast, BinOp, Binding, Builtin, Expr, UnOp, DIV_EPSILON, PROGRESS_EPSILON};
use crate::model::Segment;

/// Result of running a program on one segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub score: f64,
    /// Set when some intermediate value was NaN or infinite and was replaced by 0.
    pub clamped: bool,
}

#[derive(Clone, Debug)]
enum Value {
    Scalar(f64),
    Series(Vec<f64>),
}

struct Ctx<'a> {
    segment: &'a Segment,
    lets: Vec<Value>,
    clamped: bool,
}

pub(crate) fn evaluate(ast: &Ast, segment: &Segment) -> Evaluation {
    let mut ctx = Ctx {
        segment,
        lets: Vec::with_capacity(ast.lets.len()),
        clamped: false,
    };
    for (_, e) in &ast.lets {
        let v = ctx.eval(e);
        ctx.lets.push(v);
    }
    let score = match ctx.eval(&ast.body) {
        Value::Scalar(v) => v,
        // The parser rejects series-valued bodies.
        Value::Series(_) => unreachable!("program body typed as series"),
    };
    Evaluation {
        score,
        clamped: ctx.clamped,
    }
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b.abs() < DIV_EPSILON {
        0.0
    } else {
        a / b
    }
}

fn truth(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    safe_div(xs.iter().sum(), xs.len() as f64)
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>())
}

fn gauss(x: f64, mu: f64, sigma: f64) -> f64 {
    (-safe_div((x - mu) * (x - mu), 2.0 * sigma * sigma)).exp()
}

fn sigmoid(x: f64, k: f64) -> f64 {
    1.0 / (1.0 + (-k * x).exp())
}

fn binop(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => safe_div(a, b),
        BinOp::Eq => truth(a == b),
        BinOp::Ne => truth(a != b),
        BinOp::Lt => truth(a < b),
        BinOp::Le => truth(a <= b),
        BinOp::Gt => truth(a > b),
        BinOp::Ge => truth(a >= b),
        BinOp::And => truth(a != 0.0 && b != 0.0),
        BinOp::Or => truth(a != 0.0 || b != 0.0),
    }
}

impl Ctx<'_> {
    fn len(&self) -> usize {
        self.segment.steps.len()
    }

    fn finite(&mut self, v: f64) -> f64 {
        if v.is_finite() {
            v
        } else {
            self.clamped = true;
            0.0
        }
    }

    fn scalar(&mut self, v: f64) -> Value {
        Value::Scalar(self.finite(v))
    }

    fn series(&mut self, mut xs: Vec<f64>) -> Value {
        for x in xs.iter_mut() {
            *x = self.finite(*x);
        }
        Value::Series(xs)
    }

    fn broadcast(&self, v: Value) -> Vec<f64> {
        match v {
            Value::Scalar(x) => vec![x; self.len()],
            Value::Series(xs) => xs,
        }
    }

    /// Applies `f` elementwise, broadcasting scalars.
    fn map_n(&mut self, args: Vec<Value>, f: impl Fn(&[f64]) -> f64) -> Value {
        if args.iter().all(|a| matches!(a, Value::Scalar(_))) {
            let xs: Vec<f64> = args
                .iter()
                .map(|a| match a {
                    Value::Scalar(x) => *x,
                    Value::Series(_) => unreachable!(),
                })
                .collect();
            return self.scalar(f(&xs));
        }
        let n = self.len();
        let cols: Vec<Vec<f64>> = args.into_iter().map(|a| self.broadcast(a)).collect();
        let mut row = vec![0.0; cols.len()];
        let out = (0..n)
            .map(|t| {
                for (slot, col) in row.iter_mut().zip(&cols) {
                    *slot = col[t];
                }
                f(&row)
            })
            .collect();
        self.series(out)
    }

    fn column(&self, binding: &Binding) -> Value {
        let steps = &self.segment.steps;
        match *binding {
            Binding::Let(slot) => self.lets[slot].clone(),
            Binding::Feature(i) => Value::Series(steps.iter().map(|(s, _)| s.features[i]).collect()),
            Binding::FeatureFirst(i) => Value::Scalar(steps.first().map_or(0.0, |(s, _)| s.features[i])),
            Binding::FeatureLast(i) => Value::Scalar(steps.last().map_or(0.0, |(s, _)| s.features[i])),
            Binding::ActionId => Value::Series(steps.iter().map(|(_, a)| a.action_id as f64).collect()),
            Binding::Step => Value::Series((0..steps.len()).map(|t| t as f64).collect()),
            Binding::IsLast => {
                Value::Series((0..steps.len()).map(|t| truth(t + 1 == steps.len())).collect())
            }
        }
    }

    fn eval(&mut self, e: &Expr) -> Value {
        match e {
            Expr::Num(v) => self.scalar(*v),
            Expr::Ident { binding, .. } => self.column(binding),
            Expr::Unary(op, inner) => {
                let v = self.eval(inner);
                let f = |x: &[f64]| match op {
                    UnOp::Neg => -x[0],
                    UnOp::Not => truth(x[0] == 0.0),
                };
                self.map_n(vec![v], f)
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = self.eval(lhs);
                let b = self.eval(rhs);
                let op = *op;
                self.map_n(vec![a, b], move |x| binop(op, x[0], x[1]))
            }
            Expr::Call(b, args) => {
                let vals: Vec<Value> = args.iter().map(|a| self.eval(a)).collect();
                self.call(*b, vals)
            }
        }
    }

    fn reduce(&mut self, v: Value, f: impl Fn(&[f64]) -> f64) -> Value {
        let xs = self.broadcast(v);
        let r = f(&xs);
        self.scalar(r)
    }

    fn call(&mut self, b: Builtin, mut args: Vec<Value>) -> Value {
        match b {
            Builtin::OverSteps => {
                let xs = self.broadcast(args.remove(0));
                Value::Series(xs)
            }
            Builtin::Len => {
                let n = self.len() as f64;
                self.scalar(n)
            }
            Builtin::Mean => self.reduce(args.remove(0), mean),
            Builtin::Sum => self.reduce(args.remove(0), |xs| xs.iter().sum()),
            Builtin::Var => self.reduce(args.remove(0), variance),
            Builtin::Std => self.reduce(args.remove(0), |xs| variance(xs).sqrt()),
            Builtin::First => self.reduce(args.remove(0), |xs| xs.first().copied().unwrap_or(0.0)),
            Builtin::Last => self.reduce(args.remove(0), |xs| xs.last().copied().unwrap_or(0.0)),
            Builtin::CountIf => {
                self.reduce(args.remove(0), |xs| xs.iter().filter(|&&x| x != 0.0).count() as f64)
            }
            Builtin::Progress => self.reduce(args.remove(0), |xs| match (xs.first(), xs.last()) {
                (Some(&f), Some(&l)) => (f - l) / f.abs().max(PROGRESS_EPSILON),
                _ => 0.0,
            }),
            Builtin::Min if args.len() == 1 => self.reduce(args.remove(0), |xs| {
                xs.iter().copied().reduce(f64::min).unwrap_or(0.0)
            }),
            Builtin::Max if args.len() == 1 => self.reduce(args.remove(0), |xs| {
                xs.iter().copied().reduce(f64::max).unwrap_or(0.0)
            }),
            Builtin::Min => self.map_n(args, |x| x[0].min(x[1])),
            Builtin::Max => self.map_n(args, |x| x[0].max(x[1])),
            Builtin::Delta => {
                let xs = self.broadcast(args.remove(0));
                let out = (0..xs.len())
                    .map(|t| if t == 0 { 0.0 } else { xs[t] - xs[t - 1] })
                    .collect();
                self.series(out)
            }
            Builtin::Gauss => self.map_n(args, |x| gauss(x[0], x[1], x[2])),
            Builtin::Sigmoid => self.map_n(args, |x| sigmoid(x[0], x[1])),
            Builtin::Abs => self.map_n(args, |x| x[0].abs()),
            Builtin::Exp => self.map_n(args, |x| x[0].exp()),
            Builtin::Clamp => self.map_n(args, |x| x[0].max(x[1]).min(x[2])),
        }
    }
}
