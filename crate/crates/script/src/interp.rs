//! Tree-walking evaluator.
//!
//! Lists live in an append-only arena owned by one execution, so aliasing
//! behaves like the host language (`a = b; a.append(x)` is visible through
//! `b`) and reference cycles cannot leak. Every evaluated node costs one step
//! and every allocated list element costs one more, which bounds both time
//! and memory by the step budget.

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use trajedit_core::geometry::{self, Vec3};
use trajedit_core::{self as core, BlendMode, CoreError, Scene, Trajectory};

use crate::ast::{BinOp, Expr, Method, Program, Stmt, StmtKind, UnaryOp};
use crate::builtins::CONSTANTS;
use crate::error::{ErrorKind, ScriptError};

pub const OUTPUT_VARIABLE: &str = "modified_trajectory";

/// Tolerance for treating a number as an integer index.
const INTEGRAL_EPS: f64 = 1e-9;
/// Nesting bound for recursive walks over values (equality, copying).
const MAX_VALUE_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxLimits {
    pub step_budget: u64,
    pub max_list_len: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            step_budget: 1_000_000,
            max_list_len: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecOutcome {
    Modified(Trajectory),
    Error(ScriptError),
}

impl ExecOutcome {
    pub fn modified(&self) -> Option<&Trajectory> {
        match self {
            ExecOutcome::Modified(t) => Some(t),
            ExecOutcome::Error(_) => None,
        }
    }

    pub fn error(&self) -> Option<&ScriptError> {
        match self {
            ExecOutcome::Modified(_) => None,
            ExecOutcome::Error(e) => Some(e),
        }
    }

    pub fn into_result(self) -> Result<Trajectory, ScriptError> {
        match self {
            ExecOutcome::Modified(t) => Ok(t),
            ExecOutcome::Error(e) => Err(e),
        }
    }
}

pub fn execute(
    program: &Program,
    scene: &Scene,
    traj: &Trajectory,
    limits: SandboxLimits,
) -> ExecOutcome {
    match run(program, scene, traj, limits) {
        Ok(t) => ExecOutcome::Modified(t),
        Err(e) => ExecOutcome::Error(e),
    }
}

fn run(
    program: &Program,
    scene: &Scene,
    traj: &Trajectory,
    limits: SandboxLimits,
) -> R<Trajectory> {
    if limits.step_budget == 0 || limits.max_list_len == 0 {
        return Err(err(ErrorKind::Type, "sandbox limits must be positive"));
    }
    let mut it = Interp {
        scene,
        traj,
        limits,
        steps: 0,
        heap: Vec::new(),
        globals: CONSTANTS
            .iter()
            .map(|(k, v)| (k.to_string(), Value::Num(*v)))
            .collect(),
    };
    it.exec_block(&program.statements)?;
    let out = it.globals.get(OUTPUT_VARIABLE).cloned().ok_or_else(|| {
        err(
            ErrorKind::MissingOutput,
            format!("the script did not assign '{OUTPUT_VARIABLE}'"),
        )
    })?;
    it.output_trajectory(&out)
}

type R<T> = Result<T, ScriptError>;

fn err(kind: ErrorKind, msg: impl Into<String>) -> ScriptError {
    ScriptError::new(kind, msg)
}

fn type_err(msg: impl Into<String>) -> ScriptError {
    err(ErrorKind::Type, msg)
}

fn core_err(func: &str, e: CoreError) -> ScriptError {
    match e {
        CoreError::InvalidArgument(m) => err(ErrorKind::Numeric, format!("{func}(): {m}")),
        other => type_err(format!("{func}(): {other}")),
    }
}

#[derive(Debug, Clone)]
enum Value {
    Num(f64),
    Str(Rc<str>),
    Bool(bool),
    None,
    List(usize),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Bool(_) => "boolean",
            Value::None => "None",
            Value::List(_) => "list",
        }
    }
}

fn finite(v: f64) -> R<Value> {
    if v.is_finite() {
        Ok(Value::Num(v))
    } else {
        Err(err(
            ErrorKind::Numeric,
            "arithmetic produced a non-finite value",
        ))
    }
}

fn to_int(v: f64, what: &str) -> R<i64> {
    let r = v.round();
    if !v.is_finite() || (v - r).abs() > INTEGRAL_EPS || r.abs() > 9.0e15 {
        return Err(type_err(format!("{what} must be an integer, got {v}")));
    }
    Ok(r as i64)
}

/// Resolves a possibly negative index against a length.
fn resolve_index(i: i64, len: usize) -> R<usize> {
    let len_i = len as i64;
    let k = if i < 0 { i + len_i } else { i };
    if k < 0 || k >= len_i {
        return Err(err(
            ErrorKind::Index,
            format!("index {i} out of range for length {len}"),
        ));
    }
    Ok(k as usize)
}

/// Python slice bound clamping.
fn clamp_bound(b: Option<i64>, len: usize, default: usize) -> usize {
    match b {
        None => default,
        Some(i) => {
            let len_i = len as i64;
            let k = if i < 0 { i + len_i } else { i };
            k.clamp(0, len_i) as usize
        }
    }
}

struct Interp<'a> {
    scene: &'a Scene,
    traj: &'a Trajectory,
    limits: SandboxLimits,
    steps: u64,
    heap: Vec<Vec<Value>>,
    globals: HashMap<String, Value>,
}

impl<'a> Interp<'a> {
    fn tick(&mut self, n: u64) -> R<()> {
        self.steps = self.steps.saturating_add(n);
        if self.steps > self.limits.step_budget {
            return Err(err(
                ErrorKind::Budget,
                format!("step budget of {} exceeded", self.limits.step_budget),
            ));
        }
        Ok(())
    }

    fn ensure_len(&self, n: usize) -> R<()> {
        if n > self.limits.max_list_len {
            return Err(err(
                ErrorKind::ListSize,
                format!(
                    "list of {n} elements exceeds the limit of {}",
                    self.limits.max_list_len
                ),
            ));
        }
        Ok(())
    }

    fn alloc(&mut self, items: Vec<Value>) -> R<Value> {
        self.ensure_len(items.len())?;
        self.tick(items.len() as u64)?;
        self.heap.push(items);
        Ok(Value::List(self.heap.len() - 1))
    }

    // ---- statements ----

    fn exec_block(&mut self, stmts: &[Stmt]) -> R<()> {
        for s in stmts {
            self.exec_stmt(s).map_err(|e| e.on_line(s.line))?;
        }
        Ok(())
    }

    fn exec_stmt(&mut self, stmt: &Stmt) -> R<()> {
        self.tick(1)?;
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                self.globals.insert(target.clone(), v);
            }
            StmtKind::IndexAssign { base, index, value } => {
                let v = self.eval(value)?;
                let b = self.eval(base)?;
                let i = self.eval(index)?;
                let Value::List(id) = b else {
                    return Err(type_err(format!("cannot assign into a {}", b.type_name())));
                };
                let i = self.index_number(&i)?;
                let k = resolve_index(i, self.heap[id].len())?;
                self.heap[id][k] = v;
            }
            StmtKind::ForRange {
                var,
                start,
                stop,
                step,
                body,
            } => {
                let (start, stop, step) = self.range_args(start, stop, step)?;
                let mut i = start;
                while (step > 0 && i < stop) || (step < 0 && i > stop) {
                    self.tick(1)?;
                    self.globals.insert(var.clone(), Value::Num(i as f64));
                    self.exec_block(body)?;
                    i += step;
                }
            }
            StmtKind::IfChain {
                branches,
                else_body,
            } => {
                for (cond, body) in branches {
                    let c = self.eval(cond)?;
                    if self.truthy(&c) {
                        return self.exec_block(body);
                    }
                }
                if let Some(body) = else_body {
                    self.exec_block(body)?;
                }
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
        }
        Ok(())
    }

    fn range_args(&mut self, start: &Expr, stop: &Expr, step: &Expr) -> R<(i64, i64, i64)> {
        let a = self.eval(start)?;
        let b = self.eval(stop)?;
        let c = self.eval(step)?;
        let a = to_int(self.num(&a, "range() argument")?, "range() argument")?;
        let b = to_int(self.num(&b, "range() argument")?, "range() argument")?;
        let c = to_int(self.num(&c, "range() argument")?, "range() argument")?;
        if c == 0 {
            return Err(err(ErrorKind::Numeric, "range() step must not be zero"));
        }
        Ok((a, b, c))
    }

    // ---- expressions ----

    fn eval(&mut self, e: &Expr) -> R<Value> {
        self.tick(1)?;
        match e {
            Expr::Number(v) => Ok(Value::Num(*v)),
            Expr::Str(s) => Ok(Value::Str(Rc::from(s.as_str()))),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::None => Ok(Value::None),
            Expr::List(items) => {
                self.ensure_len(items.len())?;
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    out.push(self.eval(it)?);
                }
                self.alloc(out)
            }
            Expr::Var(name) => self
                .globals
                .get(name)
                .cloned()
                .ok_or_else(|| err(ErrorKind::Name, format!("name '{name}' is not defined"))),
            Expr::Index { base, index } => {
                let b = self.eval(base)?;
                let i = self.eval(index)?;
                self.index(&b, &i)
            }
            Expr::Slice { base, lower, upper } => {
                let b = self.eval(base)?;
                let lo = match lower {
                    Some(l) => {
                        let v = self.eval(l)?;
                        Some(self.index_number(&v)?)
                    }
                    None => None,
                };
                let hi = match upper {
                    Some(u) => {
                        let v = self.eval(u)?;
                        Some(self.index_number(&v)?)
                    }
                    None => None,
                };
                self.slice(&b, lo, hi)
            }
            Expr::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match op {
                    UnaryOp::Neg => match v {
                        Value::Num(n) => Ok(Value::Num(-n)),
                        other => Err(type_err(format!("cannot negate a {}", other.type_name()))),
                    },
                    UnaryOp::Not => Ok(Value::Bool(!self.truthy(&v))),
                }
            }
            Expr::Binary {
                op: BinOp::And,
                lhs,
                rhs,
            } => {
                let l = self.eval(lhs)?;
                if self.truthy(&l) {
                    self.eval(rhs)
                } else {
                    Ok(l)
                }
            }
            Expr::Binary {
                op: BinOp::Or,
                lhs,
                rhs,
            } => {
                let l = self.eval(lhs)?;
                if self.truthy(&l) {
                    Ok(l)
                } else {
                    self.eval(rhs)
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                self.binary(*op, l, r)
            }
            Expr::Call { name, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a)?);
                }
                self.call(name, vals)
            }
            Expr::MethodCall { base, method, args } => {
                let b = self.eval(base)?;
                let Value::List(id) = b else {
                    return Err(type_err(format!(
                        "'{}' is not available on a {}",
                        method.name(),
                        b.type_name()
                    )));
                };
                if args.len() != 1 {
                    return Err(type_err(format!(
                        "{}() takes exactly one argument ({} given)",
                        method.name(),
                        args.len()
                    )));
                }
                let arg = self.eval(&args[0])?;
                match method {
                    Method::Append => {
                        self.ensure_len(self.heap[id].len() + 1)?;
                        self.tick(1)?;
                        self.heap[id].push(arg);
                    }
                    Method::Extend => {
                        let items = self.list_items(&arg, "extend() argument")?;
                        self.ensure_len(self.heap[id].len() + items.len())?;
                        self.tick(items.len() as u64)?;
                        self.heap[id].extend(items);
                    }
                }
                Ok(Value::None)
            }
        }
    }

    fn truthy(&self, v: &Value) -> bool {
        match v {
            Value::Num(n) => *n != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::Bool(b) => *b,
            Value::None => false,
            Value::List(id) => !self.heap[*id].is_empty(),
        }
    }

    fn num(&self, v: &Value, what: &str) -> R<f64> {
        match v {
            Value::Num(n) => Ok(*n),
            other => Err(type_err(format!(
                "{what} must be a number, got {}",
                other.type_name()
            ))),
        }
    }

    fn index_number(&self, v: &Value) -> R<i64> {
        let n = self.num(v, "index")?;
        to_int(n, "index")
    }

    fn list_items(&self, v: &Value, what: &str) -> R<Vec<Value>> {
        match v {
            Value::List(id) => Ok(self.heap[*id].clone()),
            other => Err(type_err(format!(
                "{what} must be a list, got {}",
                other.type_name()
            ))),
        }
    }

    fn index(&mut self, base: &Value, idx: &Value) -> R<Value> {
        let i = self.index_number(idx)?;
        match base {
            Value::List(id) => {
                let k = resolve_index(i, self.heap[*id].len())?;
                Ok(self.heap[*id][k].clone())
            }
            Value::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let k = resolve_index(i, chars.len())?;
                Ok(Value::Str(Rc::from(chars[k].to_string())))
            }
            other => Err(type_err(format!(
                "a {} cannot be indexed",
                other.type_name()
            ))),
        }
    }

    fn slice(&mut self, base: &Value, lo: Option<i64>, hi: Option<i64>) -> R<Value> {
        match base {
            Value::List(id) => {
                let len = self.heap[*id].len();
                let a = clamp_bound(lo, len, 0);
                let b = clamp_bound(hi, len, len).max(a);
                let items = self.heap[*id][a..b].to_vec();
                self.alloc(items)
            }
            Value::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let a = clamp_bound(lo, chars.len(), 0);
                let b = clamp_bound(hi, chars.len(), chars.len()).max(a);
                self.tick((b - a) as u64)?;
                Ok(Value::Str(Rc::from(chars[a..b].iter().collect::<String>())))
            }
            other => Err(type_err(format!(
                "a {} cannot be sliced",
                other.type_name()
            ))),
        }
    }

    fn repeat(&mut self, id: usize, count: f64) -> R<Value> {
        let n = to_int(count, "list repeat count")?.max(0) as usize;
        let src = self.heap[id].clone();
        let total = src.len().saturating_mul(n);
        self.ensure_len(total)?;
        self.tick(total as u64)?;
        let mut out = Vec::with_capacity(total);
        for _ in 0..n {
            out.extend(src.iter().cloned());
        }
        self.alloc(out)
    }

    fn binary(&mut self, op: BinOp, l: Value, r: Value) -> R<Value> {
        use Value::{List, Num, Str};
        match (op, &l, &r) {
            (BinOp::Eq, _, _) => return Ok(Value::Bool(self.deep_eq(&l, &r, 0)?)),
            (BinOp::Ne, _, _) => return Ok(Value::Bool(!self.deep_eq(&l, &r, 0)?)),
            (BinOp::Add, Str(a), Str(b)) => {
                let s = format!("{a}{b}");
                self.tick(s.len() as u64)?;
                return Ok(Str(Rc::from(s)));
            }
            (BinOp::Add, List(a), List(b)) => {
                let mut items = self.heap[*a].clone();
                items.extend(self.heap[*b].iter().cloned());
                return self.alloc(items);
            }
            (BinOp::Mul, List(a), Num(n)) | (BinOp::Mul, Num(n), List(a)) => {
                return self.repeat(*a, *n);
            }
            (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge, Str(a), Str(b)) => {
                let ord = a.cmp(b);
                return Ok(Value::Bool(match op {
                    BinOp::Lt => ord.is_lt(),
                    BinOp::Le => ord.is_le(),
                    BinOp::Gt => ord.is_gt(),
                    _ => ord.is_ge(),
                }));
            }
            _ => {}
        }
        let (Num(a), Num(b)) = (&l, &r) else {
            return Err(type_err(format!(
                "unsupported operand types for {}: {} and {}",
                op.symbol(),
                l.type_name(),
                r.type_name()
            )));
        };
        let (a, b) = (*a, *b);
        match op {
            BinOp::Add => finite(a + b),
            BinOp::Sub => finite(a - b),
            BinOp::Mul => finite(a * b),
            BinOp::Div => {
                if b == 0.0 {
                    return Err(err(ErrorKind::Numeric, "division by zero"));
                }
                finite(a / b)
            }
            BinOp::Mod => {
                if b == 0.0 {
                    return Err(err(ErrorKind::Numeric, "modulo by zero"));
                }
                // Result takes the sign of the divisor.
                let m = a % b;
                finite(if m != 0.0 && (m < 0.0) != (b < 0.0) {
                    m + b
                } else {
                    m
                })
            }
            BinOp::Pow => finite(a.powf(b)),
            BinOp::Lt => Ok(Value::Bool(a < b)),
            BinOp::Le => Ok(Value::Bool(a <= b)),
            BinOp::Gt => Ok(Value::Bool(a > b)),
            BinOp::Ge => Ok(Value::Bool(a >= b)),
            BinOp::And | BinOp::Or | BinOp::Eq | BinOp::Ne => unreachable!("handled above"),
        }
    }

    fn deep_eq(&mut self, a: &Value, b: &Value, depth: usize) -> R<bool> {
        if depth > MAX_VALUE_DEPTH {
            return Err(type_err("lists are nested too deeply to compare"));
        }
        self.tick(1)?;
        Ok(match (a, b) {
            (Value::Num(x), Value::Num(y)) => x == y,
            (Value::Str(x), Value::Str(y)) => x == y,
            (Value::Bool(x), Value::Bool(y)) => x == y,
            (Value::None, Value::None) => true,
            (Value::List(x), Value::List(y)) => {
                if x == y {
                    return Ok(true);
                }
                let (xs, ys) = (self.heap[*x].clone(), self.heap[*y].clone());
                if xs.len() != ys.len() {
                    return Ok(false);
                }
                for (p, q) in xs.iter().zip(&ys) {
                    if !self.deep_eq(p, q, depth + 1)? {
                        return Ok(false);
                    }
                }
                true
            }
            _ => false,
        })
    }

    fn deep_copy(&mut self, v: &Value, depth: usize) -> R<Value> {
        if depth > MAX_VALUE_DEPTH {
            return Err(type_err("lists are nested too deeply to copy"));
        }
        match v {
            Value::List(id) => {
                let items = self.heap[*id].clone();
                let mut out = Vec::with_capacity(items.len());
                for it in &items {
                    out.push(self.deep_copy(it, depth + 1)?);
                }
                self.alloc(out)
            }
            other => Ok(other.clone()),
        }
    }

    // ---- conversions between values and geometry ----

    fn vec3(&self, v: &Value, what: &str) -> R<Vec3> {
        let items = self.list_items(v, what)?;
        if items.len() != 3 {
            return Err(type_err(format!(
                "{what} must be a list of 3 numbers, got {} elements",
                items.len()
            )));
        }
        let mut out = [0.0; 3];
        for (o, it) in out.iter_mut().zip(&items) {
            *o = self.num(it, what)?;
        }
        Ok(out)
    }

    fn rows(&self, v: &Value, what: &str) -> R<Vec<[f64; 4]>> {
        let outer = self.list_items(v, what)?;
        let mut rows = Vec::with_capacity(outer.len());
        for (i, w) in outer.iter().enumerate() {
            let Value::List(id) = w else {
                return Err(type_err(format!(
                    "{what}[{i}] must be a [x, y, z, v] list, got {}",
                    w.type_name()
                )));
            };
            let items = &self.heap[*id];
            if items.len() != 4 {
                return Err(type_err(format!(
                    "{what}[{i}] must have 4 elements [x, y, z, v], got {}",
                    items.len()
                )));
            }
            let mut row = [0.0; 4];
            for (k, it) in items.iter().enumerate() {
                row[k] = self.num(it, &format!("{what}[{i}][{k}]"))?;
            }
            rows.push(row);
        }
        Ok(rows)
    }

    fn trajectory(&mut self, v: &Value, func: &str) -> R<Trajectory> {
        let rows = self.rows(v, &format!("{func}() trajectory"))?;
        self.tick(rows.len() as u64)?;
        Trajectory::from_rows(&rows).map_err(|e| type_err(format!("{func}(): {e}")))
    }

    fn traj_value(&mut self, t: &Trajectory) -> R<Value> {
        self.ensure_len(t.len())?;
        let mut outer = Vec::with_capacity(t.len());
        for w in t.waypoints() {
            outer.push(self.alloc(vec![
                Value::Num(w.x),
                Value::Num(w.y),
                Value::Num(w.z),
                Value::Num(w.v),
            ])?);
        }
        self.alloc(outer)
    }

    fn vec3_value(&mut self, p: Vec3) -> R<Value> {
        self.alloc(p.iter().map(|c| Value::Num(*c)).collect())
    }

    fn output_trajectory(&mut self, v: &Value) -> R<Trajectory> {
        let bad = |msg: String| err(ErrorKind::BadOutputShape, msg);
        let Value::List(id) = v else {
            return Err(bad(format!(
                "'{OUTPUT_VARIABLE}' must be a list of [x, y, z, v] lists, got {}",
                v.type_name()
            )));
        };
        if self.heap[*id].is_empty() {
            return Err(bad(format!("'{OUTPUT_VARIABLE}' is empty")));
        }
        let rows = self.rows(v, OUTPUT_VARIABLE).map_err(|e| bad(e.message))?;
        Trajectory::from_rows(&rows).map_err(|e| bad(format!("'{OUTPUT_VARIABLE}': {e}")))
    }

    // ---- builtins ----

    fn arity(name: &str, args: &[Value], lo: usize, hi: usize) -> R<()> {
        if args.len() < lo || args.len() > hi {
            let expected = if lo == hi {
                format!("{lo}")
            } else {
                format!("{lo} to {hi}")
            };
            return Err(type_err(format!(
                "{name}() takes {expected} arguments ({} given)",
                args.len()
            )));
        }
        Ok(())
    }

    fn count(&self, v: &Value, what: &str) -> R<usize> {
        let n = to_int(self.num(v, what)?, what)?;
        if n < 0 {
            return Err(err(
                ErrorKind::Numeric,
                format!("{what} must be non-negative, got {n}"),
            ));
        }
        Ok(n as usize)
    }

    fn numbers(&self, name: &str, args: &[Value]) -> R<Vec<f64>> {
        let items = if args.len() == 1 {
            self.list_items(&args[0], &format!("{name}() argument"))?
        } else {
            args.to_vec()
        };
        items
            .iter()
            .map(|v| self.num(v, &format!("{name}() argument")))
            .collect()
    }

    fn call(&mut self, name: &str, args: Vec<Value>) -> R<Value> {
        let a = &args;
        match name {
            "get_trajectory" => {
                Self::arity(name, a, 0, 0)?;
                let t = self.traj;
                self.traj_value(t)
            }
            "detect_objects" => {
                Self::arity(name, a, 1, 1)?;
                let Value::Str(label) = &a[0] else {
                    return Err(type_err(format!(
                        "detect_objects() expects an object name string, got {}",
                        a[0].type_name()
                    )));
                };
                match self.scene.find(label) {
                    Some(obj) => {
                        let p = obj.position;
                        self.vec3_value(p)
                    }
                    None => Ok(Value::None),
                }
            }
            "len" => {
                Self::arity(name, a, 1, 1)?;
                match &a[0] {
                    Value::List(id) => Ok(Value::Num(self.heap[*id].len() as f64)),
                    Value::Str(s) => Ok(Value::Num(s.chars().count() as f64)),
                    other => Err(type_err(format!("len() of a {}", other.type_name()))),
                }
            }
            "range" => {
                Self::arity(name, a, 1, 3)?;
                let mut ints = Vec::with_capacity(a.len());
                for v in a {
                    ints.push(to_int(
                        self.num(v, "range() argument")?,
                        "range() argument",
                    )?);
                }
                let (start, stop, step) = match ints[..] {
                    [stop] => (0, stop, 1),
                    [start, stop] => (start, stop, 1),
                    [start, stop, step] => (start, stop, step),
                    _ => unreachable!(),
                };
                if step == 0 {
                    return Err(err(ErrorKind::Numeric, "range() step must not be zero"));
                }
                let span = if step > 0 { stop - start } else { start - stop };
                let n = if span <= 0 {
                    0
                } else {
                    ((span - 1) / step.abs() + 1) as u64
                };
                self.ensure_len(usize::try_from(n).unwrap_or(usize::MAX))?;
                self.tick(n)?;
                let items = (0..n as i64)
                    .map(|k| Value::Num((start + k * step) as f64))
                    .collect();
                self.alloc(items)
            }
            "abs" => {
                Self::arity(name, a, 1, 1)?;
                Ok(Value::Num(self.num(&a[0], "abs() argument")?.abs()))
            }
            "min" | "max" => {
                if a.is_empty() {
                    return Err(type_err(format!("{name}() expects at least one argument")));
                }
                let xs = self.numbers(name, a)?;
                self.tick(xs.len() as u64)?;
                let pick = if name == "min" {
                    xs.iter().copied().reduce(f64::min)
                } else {
                    xs.iter().copied().reduce(f64::max)
                };
                pick.map(Value::Num)
                    .ok_or_else(|| err(ErrorKind::Index, format!("{name}() of an empty list")))
            }
            "sum" => {
                Self::arity(name, a, 1, 1)?;
                let xs = self.numbers(name, a)?;
                self.tick(xs.len() as u64)?;
                finite(xs.iter().sum())
            }
            "sqrt" => {
                Self::arity(name, a, 1, 1)?;
                let x = self.num(&a[0], "sqrt() argument")?;
                if x < 0.0 {
                    return Err(err(
                        ErrorKind::Numeric,
                        format!("sqrt() of negative number {x}"),
                    ));
                }
                Ok(Value::Num(x.sqrt()))
            }
            "sin" | "cos" => {
                Self::arity(name, a, 1, 1)?;
                let x = self.num(&a[0], &format!("{name}() argument"))?;
                finite(if name == "sin" { x.sin() } else { x.cos() })
            }
            "atan2" => {
                Self::arity(name, a, 2, 2)?;
                let y = self.num(&a[0], "atan2() argument")?;
                let x = self.num(&a[1], "atan2() argument")?;
                Ok(Value::Num(y.atan2(x)))
            }
            "int" | "float" | "round" => {
                Self::arity(name, a, 1, 1)?;
                let x = match &a[0] {
                    Value::Bool(b) => f64::from(u8::from(*b)),
                    v => self.num(v, &format!("{name}() argument"))?,
                };
                Ok(Value::Num(match name {
                    "int" => x.trunc(),
                    "round" => x.round_ties_even(),
                    _ => x,
                }))
            }
            "list" => {
                Self::arity(name, a, 1, 1)?;
                let items = self.list_items(&a[0], "list() argument")?;
                self.alloc(items)
            }
            "deepcopy" => {
                Self::arity(name, a, 1, 1)?;
                self.deep_copy(&a[0], 0)
            }
            "norm3" => {
                Self::arity(name, a, 1, 1)?;
                let p = self.vec3(&a[0], "norm3() argument")?;
                finite(geometry::norm(p))
            }
            "dist3" => {
                Self::arity(name, a, 2, 2)?;
                let p = self.vec3(&a[0], "dist3() argument")?;
                let q = self.vec3(&a[1], "dist3() argument")?;
                finite(geometry::dist(p, q))
            }
            "lerp" => {
                Self::arity(name, a, 3, 3)?;
                let p = self.vec3(&a[0], "lerp() argument")?;
                let q = self.vec3(&a[1], "lerp() argument")?;
                let t = self.num(&a[2], "lerp() parameter")?;
                let r = geometry::lerp(p, q, t);
                if !geometry::is_finite(r) {
                    return Err(err(
                        ErrorKind::Numeric,
                        "lerp() produced a non-finite value",
                    ));
                }
                self.vec3_value(r)
            }
            "smooth_trajectory" => {
                Self::arity(name, a, 2, 2)?;
                let t = self.trajectory(&a[0], name)?;
                let w = self.count(&a[1], "window")?;
                self.tick((t.len() as u64).saturating_mul(w as u64))?;
                let out = core::smooth(&t, w).map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "resample_trajectory" => {
                Self::arity(name, a, 2, 2)?;
                let t = self.trajectory(&a[0], name)?;
                let n = self.count(&a[1], "waypoint count")?;
                self.ensure_len(n)?;
                self.tick(n as u64)?;
                let out = core::resample(&t, n).map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "translate_blend" => {
                Self::arity(name, a, 3, 3)?;
                let t = self.trajectory(&a[0], name)?;
                let off = self.vec3(&a[1], "translate_blend() offset")?;
                let Value::Str(m) = &a[2] else {
                    return Err(type_err(format!(
                        "translate_blend() mode must be a string, got {}",
                        a[2].type_name()
                    )));
                };
                let mode: BlendMode = m.parse().map_err(|_| {
                    type_err(format!(
                        "translate_blend(): unknown mode \"{m}\" (use \"uniform\", \"fix_start\", \"fix_goal\" or \"fix_both\")"
                    ))
                })?;
                let out = core::translate_blend(&t, off, mode).map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "radial_rescale" => {
                Self::arity(name, a, 4, 4)?;
                let t = self.trajectory(&a[0], name)?;
                let c = self.vec3(&a[1], "radial_rescale() center")?;
                let f = self.num(&a[2], "radial_rescale() factor")?;
                let keep = self.truthy(&a[3]);
                let out = core::radial_rescale(&t, c, f, keep).map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "enforce_min_distance" => {
                Self::arity(name, a, 3, 3)?;
                let t = self.trajectory(&a[0], name)?;
                let c = self.vec3(&a[1], "enforce_min_distance() center")?;
                let d = self.num(&a[2], "enforce_min_distance() distance")?;
                self.tick(t.len() as u64 * 20)?;
                let out = core::enforce_min_distance(&t, c, d).map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "scale_speed_near" => {
                Self::arity(name, a, 5, 5)?;
                let t = self.trajectory(&a[0], name)?;
                let c = self.vec3(&a[1], "scale_speed_near() center")?;
                let radius = self.num(&a[2], "scale_speed_near() radius")?;
                let f = self.num(&a[3], "scale_speed_near() factor")?;
                let absolute = self.truthy(&a[4]);
                let out = core::scale_speed_near(&t, c, radius, f, absolute)
                    .map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "truncate_at_nearest" => {
                Self::arity(name, a, 3, 3)?;
                let t = self.trajectory(&a[0], name)?;
                let c = self.vec3(&a[1], "truncate_at_nearest() center")?;
                let ramp = self.count(&a[2], "ramp")?;
                let out = core::truncate_at_nearest(&t, c, ramp).map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "append_spiral" => {
                Self::arity(name, a, 4, 4)?;
                let t = self.trajectory(&a[0], name)?;
                let r = self.num(&a[1], "append_spiral() radius")?;
                let turns = self.num(&a[2], "append_spiral() turns")?;
                let n = self.count(&a[3], "spiral point count")?;
                self.ensure_len(t.len().saturating_add(n))?;
                self.tick(n as u64)?;
                let out = core::append_spiral(&t, r, turns, n).map_err(|e| core_err(name, e))?;
                self.traj_value(&out)
            }
            "nearest_index" => {
                Self::arity(name, a, 2, 2)?;
                let t = self.trajectory(&a[0], name)?;
                let p = self.vec3(&a[1], "nearest_index() point")?;
                Ok(Value::Num(core::nearest_index(&t, p).0 as f64))
            }
            "arc_length_params" => {
                Self::arity(name, a, 1, 1)?;
                let t = self.trajectory(&a[0], name)?;
                let s = core::arc_length_params(&t);
                self.alloc(s.into_iter().map(Value::Num).collect())
            }
            other => Err(err(ErrorKind::Name, format!("unknown function '{other}'"))),
        }
    }
}
