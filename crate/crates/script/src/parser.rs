//! Recursive-descent parser.
//!
//! ```text
//! program := {stmt}
//! stmt    := for | if | simple NEWLINE
//! simple  := target ('=' | '+=' | '-=' | '*=' | '/=') expr | expr
//! target  := IDENT {'[' expr ']'}
//! for     := 'for' IDENT 'in' 'range' '(' expr [',' expr [',' expr]] ')' ':' block
//! if      := 'if' expr ':' block {'elif' expr ':' block} ['else' ':' block]
//! block   := NEWLINE INDENT stmt {stmt} DEDENT
//! ```
//!
//! Expression precedence, loosest first: `or`, `and`, `not`, comparison
//! (non-associative), `+ -`, `* / %`, unary `-`, `**` (right-associative),
//! then postfix call / index / slice / `.append` / `.extend`.
//!
//! Augmented assignment is sugar: `x += e` parses as `x = (x + e)`.

use crate::ast::{BinOp, Expr, Method, Program, Stmt, StmtKind, UnaryOp};
use crate::builtins;
use crate::error::{ErrorKind, ScriptError};
use crate::lexer::{Token, TokenKind};

/// Bound on syntactic nesting so hostile input cannot exhaust the stack.
const MAX_DEPTH: usize = 64;

pub fn parse(tokens: &[Token]) -> Result<Program, ScriptError> {
    if !tokens.last().is_some_and(|t| t.kind == TokenKind::Eof) {
        return Err(ScriptError::new(
            ErrorKind::Parse,
            "token stream must end with end of input",
        ));
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let mut statements = Vec::new();
    while !p.at_eof() {
        statements.push(p.statement()?);
    }
    Ok(Program { statements })
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    depth: usize,
}

fn error_at(tok: &Token, msg: impl Into<String>) -> ScriptError {
    ScriptError::new(ErrorKind::Parse, msg).at(tok.line, tok.column)
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &'t Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_next(&self) -> &'t Token {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> &'t Token {
        let t = self.peek();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek().is_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek().is_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<&'t Token, ScriptError> {
        let t = self.peek();
        if t.is_op(op) {
            Ok(self.advance())
        } else {
            Err(self.unexpected(t, &format!("'{op}'")))
        }
    }

    fn expect_kind(&mut self, kind: TokenKind, what: &str) -> Result<&'t Token, ScriptError> {
        let t = self.peek();
        if t.kind == kind {
            Ok(self.advance())
        } else {
            Err(self.unexpected(t, what))
        }
    }

    fn identifier(&mut self) -> Result<&'t Token, ScriptError> {
        let t = self.peek();
        if t.kind == TokenKind::Identifier {
            Ok(self.advance())
        } else {
            Err(self.unexpected(t, "an identifier"))
        }
    }

    fn unexpected(&self, t: &Token, expected: &str) -> ScriptError {
        if t.kind == TokenKind::Keyword && !is_supported_keyword(&t.lexeme) {
            return error_at(t, format!("unsupported construct '{}'", t.lexeme));
        }
        if t.is_op("{") || t.is_op("}") {
            return error_at(
                t,
                "unsupported construct '{' (dict and set literals are not available)",
            );
        }
        error_at(t, format!("expected {expected} but found {}", t.describe()))
    }

    fn enter(&mut self) -> Result<(), ScriptError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(error_at(self.peek(), "program is nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn statement(&mut self) -> Result<Stmt, ScriptError> {
        let t = self.peek();
        let line = t.line;
        let kind = match t.kind {
            TokenKind::Keyword if t.lexeme == "for" => self.for_range()?,
            TokenKind::Keyword if t.lexeme == "if" => self.if_chain()?,
            TokenKind::Keyword if matches!(t.lexeme.as_str(), "elif" | "else") => {
                return Err(error_at(
                    t,
                    format!("'{}' without a matching 'if'", t.lexeme),
                ));
            }
            TokenKind::Keyword if !is_supported_keyword(&t.lexeme) => {
                return Err(error_at(t, format!("unsupported construct '{}'", t.lexeme)));
            }
            TokenKind::Indent => return Err(error_at(t, "unexpected indent")),
            _ => {
                let kind = self.simple_statement()?;
                self.expect_kind(TokenKind::Newline, "end of line")?;
                kind
            }
        };
        Ok(Stmt { line, kind })
    }

    fn simple_statement(&mut self) -> Result<StmtKind, ScriptError> {
        let lhs = self.expression()?;
        let t = self.peek();
        let augmented = match t.lexeme.as_str() {
            "=" => None,
            "+=" => Some(BinOp::Add),
            "-=" => Some(BinOp::Sub),
            "*=" => Some(BinOp::Mul),
            "/=" => Some(BinOp::Div),
            _ => return Ok(StmtKind::Expr(lhs)),
        };
        if t.kind != TokenKind::Operator {
            return Ok(StmtKind::Expr(lhs));
        }
        self.advance();
        let rhs = self.expression()?;
        let value = match augmented {
            Some(op) => Expr::binary(op, lhs.clone(), rhs),
            None => rhs,
        };
        match lhs {
            Expr::Var(target) => Ok(StmtKind::Assign { target, value }),
            Expr::Index { base, index } if is_assignable(&base) => Ok(StmtKind::IndexAssign {
                base: *base,
                index: *index,
                value,
            }),
            Expr::Slice { .. } => Err(error_at(t, "slice assignment is not supported")),
            Expr::List(_) => Err(error_at(
                t,
                "unsupported construct: unpacking assignment (assign one variable at a time)",
            )),
            _ => Err(error_at(t, "cannot assign to this expression")),
        }
    }

    fn for_range(&mut self) -> Result<StmtKind, ScriptError> {
        self.advance();
        let var = self.identifier()?.lexeme.clone();
        if self.peek().is_op(",") {
            return Err(error_at(
                self.peek(),
                "unsupported construct: for-loop over multiple variables",
            ));
        }
        if !self.eat_keyword("in") {
            return Err(self.unexpected(self.peek(), "'in'"));
        }
        let r = self.peek();
        if !(r.kind == TokenKind::Identifier && r.lexeme == "range" && self.peek_next().is_op("("))
        {
            return Err(error_at(
                r,
                format!(
                    "for-loops must iterate over range(...), found {}",
                    r.describe()
                ),
            ));
        }
        self.advance();
        self.advance();
        let mut args = vec![self.expression()?];
        while self.eat_op(",") {
            if self.peek().is_op(")") {
                break;
            }
            args.push(self.expression()?);
        }
        let close = self.expect_op(")")?;
        let (start, stop, step) = match args.len() {
            1 => (Expr::Number(0.0), args.remove(0), Expr::Number(1.0)),
            2 => {
                let stop = args.remove(1);
                (args.remove(0), stop, Expr::Number(1.0))
            }
            3 => {
                let step = args.remove(2);
                let stop = args.remove(1);
                (args.remove(0), stop, step)
            }
            n => {
                return Err(error_at(
                    close,
                    format!("range() takes 1 to 3 arguments, got {n}"),
                ))
            }
        };
        self.expect_op(":")?;
        let body = self.block()?;
        Ok(StmtKind::ForRange {
            var,
            start,
            stop,
            step,
            body,
        })
    }

    fn if_chain(&mut self) -> Result<StmtKind, ScriptError> {
        self.advance();
        let mut branches = Vec::new();
        let cond = self.expression()?;
        self.expect_op(":")?;
        branches.push((cond, self.block()?));
        let mut else_body = None;
        loop {
            if self.eat_keyword("elif") {
                let cond = self.expression()?;
                self.expect_op(":")?;
                branches.push((cond, self.block()?));
            } else if self.eat_keyword("else") {
                self.expect_op(":")?;
                else_body = Some(self.block()?);
                break;
            } else {
                break;
            }
        }
        Ok(StmtKind::IfChain {
            branches,
            else_body,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ScriptError> {
        self.enter()?;
        self.expect_kind(TokenKind::Newline, "a new line after ':'")?;
        self.expect_kind(TokenKind::Indent, "an indented block")?;
        let mut body = vec![self.statement()?];
        while self.peek().kind != TokenKind::Dedent {
            if self.at_eof() {
                return Err(self.unexpected(self.peek(), "end of block"));
            }
            body.push(self.statement()?);
        }
        self.advance();
        self.leave();
        Ok(body)
    }

    fn expression(&mut self) -> Result<Expr, ScriptError> {
        self.enter()?;
        let e = self.or_expr();
        self.leave();
        e
    }

    fn or_expr(&mut self) -> Result<Expr, ScriptError> {
        let mut lhs = self.and_expr()?;
        while self.eat_keyword("or") {
            lhs = Expr::binary(BinOp::Or, lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ScriptError> {
        let mut lhs = self.not_expr()?;
        while self.eat_keyword("and") {
            lhs = Expr::binary(BinOp::And, lhs, self.not_expr()?);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ScriptError> {
        if self.eat_keyword("not") {
            self.enter()?;
            let operand = self.not_expr()?;
            self.leave();
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                operand: Box::new(operand),
            });
        }
        self.comparison()
    }

    fn comparison_op(&self) -> Option<BinOp> {
        let t = self.peek();
        if t.kind != TokenKind::Operator {
            return None;
        }
        Some(match t.lexeme.as_str() {
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            _ => return None,
        })
    }

    fn comparison(&mut self) -> Result<Expr, ScriptError> {
        let lhs = self.additive()?;
        let Some(op) = self.comparison_op() else {
            if self.peek().is_keyword("is") || self.peek().is_keyword("in") {
                let t = self.peek();
                return Err(error_at(
                    t,
                    format!(
                        "unsupported construct '{}' (use == or != instead)",
                        t.lexeme
                    ),
                ));
            }
            return Ok(lhs);
        };
        self.advance();
        let rhs = self.additive()?;
        if self.comparison_op().is_some() {
            return Err(error_at(
                self.peek(),
                "chained comparisons are not supported (combine with 'and')",
            ));
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn additive(&mut self) -> Result<Expr, ScriptError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ScriptError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("/") {
                BinOp::Div
            } else if self.eat_op("%") {
                BinOp::Mod
            } else if self.peek().is_op("//") {
                return Err(error_at(
                    self.peek(),
                    "unsupported operator '//' (divide with '/' and keep values integral)",
                ));
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ScriptError> {
        if self.eat_op("-") {
            self.enter()?;
            let operand = self.unary()?;
            self.leave();
            return Ok(Expr::Unary {
                op: UnaryOp::Neg,
                operand: Box::new(operand),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ScriptError> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            self.enter()?;
            let exponent = self.unary()?;
            self.leave();
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, ScriptError> {
        let mut e = self.primary()?;
        loop {
            if self.peek().is_op("[") {
                self.advance();
                e = self.subscript(e)?;
            } else if self.peek().is_op(".") {
                let dot = self.advance();
                let name = self.identifier()?;
                let method = match name.lexeme.as_str() {
                    "append" => Method::Append,
                    "extend" => Method::Extend,
                    other => {
                        return Err(error_at(
                            name,
                            format!(
                                "unsupported attribute '.{other}' (only .append and .extend are available)"
                            ),
                        ))
                    }
                };
                if !self.peek().is_op("(") {
                    return Err(error_at(
                        dot,
                        format!("'.{}' must be called", method.name()),
                    ));
                }
                self.advance();
                let args = self.arguments()?;
                e = Expr::MethodCall {
                    base: Box::new(e),
                    method,
                    args,
                };
            } else if self.peek().is_op("(") {
                return Err(error_at(
                    self.peek(),
                    "only named builtin functions can be called",
                ));
            } else {
                return Ok(e);
            }
        }
    }

    fn subscript(&mut self, base: Expr) -> Result<Expr, ScriptError> {
        let lower = if self.peek().is_op(":") {
            None
        } else {
            Some(Box::new(self.expression()?))
        };
        if self.eat_op(":") {
            let upper = if self.peek().is_op("]") {
                None
            } else {
                Some(Box::new(self.expression()?))
            };
            if self.peek().is_op(":") {
                return Err(error_at(self.peek(), "slice steps are not supported"));
            }
            self.expect_op("]")?;
            return Ok(Expr::Slice {
                base: Box::new(base),
                lower,
                upper,
            });
        }
        self.expect_op("]")?;
        Ok(Expr::Index {
            base: Box::new(base),
            index: lower.expect("non-slice subscript has an index"),
        })
    }

    /// Comma-separated expressions up to and including the closing ')'.
    fn arguments(&mut self) -> Result<Vec<Expr>, ScriptError> {
        let mut args = Vec::new();
        if self.eat_op(")") {
            return Ok(args);
        }
        loop {
            if self.peek().kind == TokenKind::Identifier && self.peek_next().is_op("=") {
                return Err(error_at(
                    self.peek(),
                    format!(
                        "keyword arguments are not supported ('{}=')",
                        self.peek().lexeme
                    ),
                ));
            }
            args.push(self.expression()?);
            if self.eat_op(")") {
                return Ok(args);
            }
            self.expect_op(",")?;
            if self.eat_op(")") {
                return Ok(args);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ScriptError> {
        let t = self.peek();
        match &t.kind {
            TokenKind::Number(v) => {
                self.advance();
                Ok(Expr::Number(*v))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(Expr::Str(s.clone()))
            }
            TokenKind::Keyword => match t.lexeme.as_str() {
                "True" => {
                    self.advance();
                    Ok(Expr::Bool(true))
                }
                "False" => {
                    self.advance();
                    Ok(Expr::Bool(false))
                }
                "None" => {
                    self.advance();
                    Ok(Expr::None)
                }
                _ => Err(self.unexpected(t, "an expression")),
            },
            TokenKind::Identifier => {
                self.advance();
                if self.peek().is_op("(") {
                    if !builtins::is_builtin(&t.lexeme) {
                        return Err(error_at(t, format!("unknown function '{}'", t.lexeme)));
                    }
                    self.advance();
                    let args = self.arguments()?;
                    return Ok(Expr::Call {
                        name: t.lexeme.clone(),
                        args,
                    });
                }
                Ok(Expr::Var(t.lexeme.clone()))
            }
            TokenKind::Operator if t.lexeme == "(" => {
                self.advance();
                let e = self.expression()?;
                if self.peek().is_op(",") {
                    return Err(error_at(
                        self.peek(),
                        "unsupported construct: tuples (use a list)",
                    ));
                }
                self.expect_op(")")?;
                Ok(e)
            }
            TokenKind::Operator if t.lexeme == "[" => {
                self.advance();
                self.enter()?;
                let mut items = Vec::new();
                if !self.eat_op("]") {
                    loop {
                        if self.peek().is_keyword("for") {
                            return Err(error_at(
                                self.peek(),
                                "unsupported construct: list comprehension (use a for loop)",
                            ));
                        }
                        items.push(self.expression()?);
                        if self.peek().is_keyword("for") {
                            return Err(error_at(
                                self.peek(),
                                "unsupported construct: list comprehension (use a for loop)",
                            ));
                        }
                        if self.eat_op("]") {
                            break;
                        }
                        self.expect_op(",")?;
                        if self.eat_op("]") {
                            break;
                        }
                    }
                }
                self.leave();
                Ok(Expr::List(items))
            }
            _ => Err(self.unexpected(t, "an expression")),
        }
    }
}

fn is_supported_keyword(kw: &str) -> bool {
    matches!(
        kw,
        "for" | "in" | "if" | "elif" | "else" | "and" | "or" | "not" | "True" | "False" | "None"
    )
}

fn is_assignable(e: &Expr) -> bool {
    match e {
        Expr::Var(_) => true,
        Expr::Index { base, .. } => is_assignable(base),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize;

    fn parse_src(src: &str) -> Result<Program, ScriptError> {
        parse(&tokenize(src)?)
    }

    #[test]
    fn single_assignment_of_call() {
        let p = parse_src("modified_trajectory = get_trajectory()").unwrap();
        assert_eq!(p.statements.len(), 1);
        assert_eq!(
            p.statements[0].kind,
            StmtKind::Assign {
                target: "modified_trajectory".into(),
                value: Expr::Call {
                    name: "get_trajectory".into(),
                    args: vec![]
                }
            }
        );
    }

    #[test]
    fn def_is_rejected() {
        let err = parse_src("def f():\n    x = 1\n").unwrap_err();
        assert_eq!(err.kind, ErrorKind::Parse);
        assert_eq!(err.message, "unsupported construct 'def'");
    }

    #[test]
    fn loop_script_shape() {
        let src = "t = get_trajectory()\nfor i in range(len(t)):\n    t[i][0] = t[i][0] + 5\nmodified_trajectory = t";
        let p = parse_src(src).unwrap();
        assert_eq!(p.statements.len(), 3);
        match &p.statements[1].kind {
            StmtKind::ForRange { var, body, .. } => {
                assert_eq!(var, "i");
                assert_eq!(body.len(), 1);
                assert!(matches!(body[0].kind, StmtKind::IndexAssign { .. }));
            }
            other => panic!("expected a for loop, got {other:?}"),
        }
    }

    #[test]
    fn rejected_constructs() {
        let cases = [
            ("while True:\n    x = 1\n", "unsupported construct 'while'"),
            ("import math\n", "unsupported construct 'import'"),
            ("f = lambda x: x\n", "unsupported construct 'lambda'"),
            ("d = {}\n", "unsupported construct '{'"),
            ("x = t.copy()\n", "unsupported attribute '.copy'"),
            ("x = foo(1)\n", "unknown function 'foo'"),
            (
                "for p in t:\n    x = p\n",
                "for-loops must iterate over range",
            ),
            ("x = [i for i in range(3)]\n", "list comprehension"),
            ("x = 1 < 2 < 3\n", "chained comparisons"),
            ("x = len(t) // 2\n", "unsupported operator '//'"),
            ("if x is None:\n    y = 1\n", "unsupported construct 'is'"),
            ("x, y = 1, 2\n", "expected"),
            ("x = smooth_trajectory(t, window=3)\n", "keyword arguments"),
        ];
        for (src, needle) in cases {
            let err = parse_src(src).unwrap_err();
            assert_eq!(err.kind, ErrorKind::Parse, "{src}");
            assert!(err.message.contains(needle), "{src}: {}", err.message);
        }
    }

    #[test]
    fn precedence() {
        let p = parse_src("x = -2 ** 2 + 3 * 4 % 5\n").unwrap();
        let StmtKind::Assign { value, .. } = &p.statements[0].kind else {
            panic!()
        };
        assert_eq!(value.to_string(), "((-(2 ** 2)) + ((3 * 4) % 5))");
        let p = parse_src("x = not a == b and c or d\n").unwrap();
        let StmtKind::Assign { value, .. } = &p.statements[0].kind else {
            panic!()
        };
        assert_eq!(value.to_string(), "(((not (a == b)) and c) or d)");
        let p = parse_src("x = 2 ** -1 ** 2\n").unwrap();
        let StmtKind::Assign { value, .. } = &p.statements[0].kind else {
            panic!()
        };
        assert_eq!(value.to_string(), "(2 ** (-(1 ** 2)))");
    }

    #[test]
    fn if_elif_else() {
        let src = "if a:\n    x = 1\nelif b:\n    x = 2\nelse:\n    x = 3\n";
        let p = parse_src(src).unwrap();
        let StmtKind::IfChain {
            branches,
            else_body,
        } = &p.statements[0].kind
        else {
            panic!()
        };
        assert_eq!(branches.len(), 2);
        assert_eq!(else_body.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn slices_and_methods() {
        let p =
            parse_src("a = t[1:]\nb = t[:-1]\nc = t[:]\nt.append([1, 2, 3, 4])\nt[0].extend(b)\n")
                .unwrap();
        assert_eq!(p.statements.len(), 5);
        assert_eq!(p.to_string().lines().nth(2), Some("c = t[:]"));
    }

    #[test]
    fn augmented_assignment_desugars() {
        let a = parse_src("t[i][0] += 5\n").unwrap();
        let b = parse_src("t[i][0] = t[i][0] + 5\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assignment_targets() {
        assert!(parse_src("get_trajectory()[0] = 1\n").is_err());
        assert!(parse_src("t[1:2] = x\n").is_err());
        assert!(parse_src("1 = x\n").is_err());
    }

    #[test]
    fn block_required() {
        let err = parse_src("if x: y = 1\n").unwrap_err();
        assert!(err.message.contains("new line"));
        assert!(parse_src("for i in range(3):\nx = 1\n").is_err());
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let src = format!("x = {}1{}\n", "(".repeat(500), ")".repeat(500));
        let err = parse_src(&src).unwrap_err();
        assert!(err.message.contains("nested too deeply"));
    }

    #[test]
    fn error_names_offending_token_position() {
        let err = parse_src("x = 1\ny = )\n").unwrap_err();
        assert!(err.kind == ErrorKind::Parse || err.kind == ErrorKind::Lex);
        assert_eq!(err.line, Some(2));
    }
}
