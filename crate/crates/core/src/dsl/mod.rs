//! A small, total language for trajectory-scoring programs.
//!
//! ```text
//! program := { "let" IDENT "=" expr "in" } "return" expr
//! expr    := or-expr with the usual precedence:
//!            or < and < not < comparison < + - < * / < unary - < call/atom
//! ```
//!
//! Values are either scalars or per-step series. A bare feature name
//! (`dist_goal`), `action_id`, `t` and `is_last` are series; `<feature>_first`
//! and `<feature>_last` are scalars. Arithmetic broadcasts scalars over
//! series, reducers collapse a series to a scalar, and the returned value must
//! be a scalar. Types are checked while parsing, so a program that parses can
//! always be evaluated.
//!
//! See `docs/eval-dsl.md` for the builtin reference.

mod interp;
mod lexer;
mod parser;
mod print;

use std::fmt;

use thiserror::Error;

use crate::envs::EnvSpec;
use crate::model::Segment;

pub use interp::Evaluation;

/// Guard for every division in the language.
pub const DIV_EPSILON: f64 = 1e-12;
/// Floor on the denominator of `progress`.
pub const PROGRESS_EPSILON: f64 = 1e-6;
/// Maximum expression nesting accepted by the parser.
pub const MAX_DEPTH: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Syntax,
    UnknownIdentifier,
    Arity,
    Type,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Syntax => "syntax",
            Category::UnknownIdentifier => "unknown-identifier",
            Category::Arity => "arity",
            Category::Type => "type",
        })
    }
}

/// A parse failure, rendered as `line:col: category: message`.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {category}: {message}")]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub category: Category,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn new(line: usize, col: usize, category: Category, message: impl Into<String>) -> Self {
        Self {
            line,
            col,
            category,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("segment schema {segment:?} does not match program schema {program:?}")]
    SchemaMismatch {
        program: Vec<String>,
        segment: Vec<String>,
    },
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Scalar,
    Series,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Scalar => "scalar",
            Ty::Series => "series",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    OverSteps,
    Mean,
    Sum,
    Min,
    Max,
    Std,
    Var,
    First,
    Last,
    CountIf,
    Gauss,
    Sigmoid,
    Abs,
    Exp,
    Clamp,
    Delta,
    Progress,
    Len,
}

impl Builtin {
    pub const ALL: [Builtin; 18] = [
        Builtin::OverSteps,
        Builtin::Mean,
        Builtin::Sum,
        Builtin::Min,
        Builtin::Max,
        Builtin::Std,
        Builtin::Var,
        Builtin::First,
        Builtin::Last,
        Builtin::CountIf,
        Builtin::Gauss,
        Builtin::Sigmoid,
        Builtin::Abs,
        Builtin::Exp,
        Builtin::Clamp,
        Builtin::Delta,
        Builtin::Progress,
        Builtin::Len,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::OverSteps => "over_steps",
            Builtin::Mean => "mean",
            Builtin::Sum => "sum",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Std => "std",
            Builtin::Var => "var",
            Builtin::First => "first",
            Builtin::Last => "last",
            Builtin::CountIf => "count_if",
            Builtin::Gauss => "gauss",
            Builtin::Sigmoid => "sigmoid",
            Builtin::Abs => "abs",
            Builtin::Exp => "exp",
            Builtin::Clamp => "clamp",
            Builtin::Delta => "delta",
            Builtin::Progress => "progress",
            Builtin::Len => "len",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    /// Accepted argument counts (inclusive range).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Builtin::Len => (0, 0),
            Builtin::Min | Builtin::Max => (1, 2),
            Builtin::Sigmoid => (2, 2),
            Builtin::Gauss | Builtin::Clamp => (3, 3),
            _ => (1, 1),
        }
    }
}

/// What an identifier refers to once resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Binding {
    Let(usize),
    Feature(usize),
    FeatureFirst(usize),
    FeatureLast(usize),
    ActionId,
    Step,
    IsLast,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident { name: String, binding: Binding },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ast {
    pub lets: Vec<(String, Expr)>,
    pub body: Expr,
}

/// A validated scoring program bound to a feature schema.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalProgram {
    pub source: String,
    pub ast: Ast,
    pub schema: Vec<String>,
    /// Bumped on every refinement round.
    pub version: u32,
    pub agent_index: usize,
}

impl EvalProgram {
    pub fn parse(source: &str, schema: &[String]) -> Result<Self, Diagnostic> {
        let ast = parser::parse(source, schema)?;
        Ok(Self {
            source: source.to_string(),
            ast,
            schema: schema.to_vec(),
            version: 0,
            agent_index: 0,
        })
    }

    pub fn parse_for(env: &EnvSpec, source: &str) -> Result<Self, Diagnostic> {
        Self::parse(source, &env.feature_schema)
    }

    pub fn with_agent(mut self, agent_index: usize, version: u32) -> Self {
        self.agent_index = agent_index;
        self.version = version;
        self
    }

    /// Canonical source text. Parsing it yields an equal AST.
    pub fn print(&self) -> String {
        print::print(&self.ast)
    }

    pub fn evaluate(&self, segment: &Segment) -> Result<Evaluation, EvalError> {
        let env = EnvSpec::by_name(&segment.env_id)
            .ok_or_else(|| EvalError::UnknownEnv(segment.env_id.clone()))?;
        if env.feature_schema != self.schema
            || segment.states().any(|s| s.features.len() != self.schema.len())
        {
            return Err(EvalError::SchemaMismatch {
                program: self.schema.clone(),
                segment: env.feature_schema,
            });
        }
        Ok(interp::evaluate(&self.ast, segment))
    }

    /// Shorthand for the score alone.
    pub fn score(&self, segment: &Segment) -> Result<f64, EvalError> {
        self.evaluate(segment).map(|e| e.score)
    }
}

pub use print::print;

/// Parses into a bare AST without building an [`EvalProgram`].
pub fn parse(source: &str, schema: &[String]) -> Result<Ast, Diagnostic> {
    parser::parse(source, schema)
}

/// Evaluates an AST on per-step columns directly, bypassing schema checks.
pub fn evaluate_ast(ast: &Ast, segment: &Segment) -> Evaluation {
    interp::evaluate(ast, segment)
}
