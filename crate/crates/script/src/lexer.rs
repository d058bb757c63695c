//! Tokenizer with offside-rule block structure.
//!
//! Indentation is spaces only. Inside brackets newlines and indentation are
//! ignored, and a trailing backslash joins the next physical line.

use serde::{Deserialize, Serialize};

use crate::error::{ErrorKind, ScriptError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Number(f64),
    Str(String),
    Operator,
    Keyword,
    Indent,
    Dedent,
    Newline,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Operator && self.lexeme == op
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.lexeme == kw
    }

    /// Short human-readable rendering for error messages.
    pub fn describe(&self) -> String {
        match self.kind {
            TokenKind::Indent => "indent".into(),
            TokenKind::Dedent => "dedent".into(),
            TokenKind::Newline => "end of line".into(),
            TokenKind::Eof => "end of input".into(),
            _ => format!("'{}'", self.lexeme),
        }
    }
}

/// Words the lexer reserves. Only the first group is part of the language;
/// the rest are recognized so the parser can reject them by name.
pub const KEYWORDS: &[&str] = &[
    "for", "in", "if", "elif", "else", "and", "or", "not", "True", "False", "None",
    // unsupported
    "def", "while", "import", "from", "lambda", "return", "class", "with", "try", "except",
    "finally", "raise", "global", "nonlocal", "yield", "assert", "del", "pass", "break",
    "continue", "is", "async", "await", "as",
];

const OPERATORS: &[&str] = &[
    "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "+", "-", "*", "/", "%", "<", ">",
    "=", "(", ")", "[", "]", "{", "}", ",", ":", ".",
];

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    depth: usize,
    indents: Vec<usize>,
    tokens: Vec<Token>,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, ScriptError> {
    let mut lx = Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        depth: 0,
        indents: vec![0],
        tokens: Vec::new(),
    };
    lx.run()?;
    Ok(lx.tokens)
}

fn lex_error(msg: impl Into<String>, line: u32, column: u32) -> ScriptError {
    ScriptError::new(ErrorKind::Lex, msg).at(line, column)
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn push(&mut self, kind: TokenKind, lexeme: impl Into<String>, line: u32, column: u32) {
        self.tokens.push(Token {
            kind,
            lexeme: lexeme.into(),
            line,
            column,
        });
    }

    fn run(&mut self) -> Result<(), ScriptError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                if !self.indentation()? {
                    break;
                }
                at_line_start = false;
            }
            let Some(c) = self.peek() else { break };
            let (line, column) = (self.line, self.column);
            match c {
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(TokenKind::Newline, "\n", line, column);
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                '\\' if self.peek_at(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '\\' if self.peek_at(1) == Some('\r') && self.peek_at(2) == Some('\n') => {
                    self.bump();
                    self.bump();
                    self.bump();
                }
                '"' | '\'' => self.string(c)?,
                c if c.is_ascii_digit() => self.number()?,
                '.' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => self.number()?,
                c if c.is_alphabetic() || c == '_' => self.word(),
                _ => self.operator()?,
            }
        }
        let (line, column) = (self.line, self.column);
        if self.depth > 0 {
            return Err(lex_error(
                "unexpected end of input inside brackets",
                line,
                column,
            ));
        }
        if self
            .tokens
            .last()
            .is_some_and(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Dedent))
        {
            self.push(TokenKind::Newline, "", line, column);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent, "", line, column);
        }
        self.push(TokenKind::Eof, "", line, column);
        Ok(())
    }

    /// Measure leading spaces of a logical line and emit indent/dedent
    /// tokens. Blank and comment-only lines are consumed without effect.
    /// Returns false at end of input.
    fn indentation(&mut self) -> Result<bool, ScriptError> {
        loop {
            let mut width = 0;
            while let Some(c) = self.peek() {
                match c {
                    ' ' => {
                        width += 1;
                        self.bump();
                    }
                    '\t' => {
                        return Err(lex_error(
                            "tab in indentation (use spaces)",
                            self.line,
                            self.column,
                        ))
                    }
                    _ => break,
                }
            }
            match self.peek() {
                None => return Ok(false),
                Some('\n') => {
                    self.bump();
                    continue;
                }
                Some('\r') if self.peek_at(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                    continue;
                }
                Some('#') => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                    continue;
                }
                Some(_) => {}
            }
            let (line, column) = (self.line, self.column);
            let current = *self.indents.last().expect("indent stack never empty");
            if width > current {
                self.indents.push(width);
                self.push(TokenKind::Indent, " ".repeat(width), line, 1);
            } else if width < current {
                while *self.indents.last().expect("non-empty") > width {
                    self.indents.pop();
                    self.push(TokenKind::Dedent, "", line, 1);
                }
                if *self.indents.last().expect("non-empty") != width {
                    return Err(lex_error(
                        "unindent does not match any outer indentation level",
                        line,
                        column,
                    ));
                }
            }
            return Ok(true);
        }
    }

    fn string(&mut self, quote: char) -> Result<(), ScriptError> {
        let (line, column) = (self.line, self.column);
        let start = self.pos;
        self.bump();
        let mut value = String::new();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    return Err(lex_error("unterminated string literal", line, column));
                }
                Some(c) if c == quote => {
                    self.bump();
                    break;
                }
                Some('\\') => {
                    self.bump();
                    let escaped = match self.peek() {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('0') => '\0',
                        Some('\\') => '\\',
                        Some('\'') => '\'',
                        Some('"') => '"',
                        _ => {
                            return Err(lex_error(
                                "invalid escape sequence in string",
                                self.line,
                                self.column,
                            ))
                        }
                    };
                    self.bump();
                    value.push(escaped);
                }
                Some(c) => {
                    self.bump();
                    value.push(c);
                }
            }
        }
        let lexeme: String = self.chars[start..self.pos].iter().collect();
        self.push(TokenKind::Str(value), lexeme, line, column);
        Ok(())
    }

    fn number(&mut self) -> Result<(), ScriptError> {
        let (line, column) = (self.line, self.column);
        let start = self.pos;
        let digits = |lx: &mut Self| {
            while lx.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                lx.bump();
            }
        };
        digits(self);
        if self.peek() == Some('.') && self.peek_at(1).is_none_or(|c| c != '.') {
            self.bump();
            digits(self);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
                if sign {
                    self.bump();
                }
                digits(self);
            }
        }
        if self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            return Err(lex_error(
                format!(
                    "invalid number literal near '{}'",
                    self.peek().unwrap_or(' ')
                ),
                line,
                column,
            ));
        }
        let lexeme: String = self.chars[start..self.pos].iter().collect();
        let value: f64 = lexeme
            .replace('_', "")
            .parse()
            .map_err(|_| lex_error(format!("invalid number literal '{lexeme}'"), line, column))?;
        if !value.is_finite() {
            return Err(lex_error(
                format!("number literal '{lexeme}' is out of range"),
                line,
                column,
            ));
        }
        self.push(TokenKind::Number(value), lexeme, line, column);
        Ok(())
    }

    fn word(&mut self) {
        let (line, column) = (self.line, self.column);
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.bump();
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        let kind = if KEYWORDS.contains(&word.as_str()) {
            TokenKind::Keyword
        } else {
            TokenKind::Identifier
        };
        self.push(kind, word, line, column);
    }

    fn operator(&mut self) -> Result<(), ScriptError> {
        let (line, column) = (self.line, self.column);
        let rest = &self.chars[self.pos..];
        let op = OPERATORS.iter().find(|op| {
            op.chars().count() <= rest.len() && op.chars().zip(rest).all(|(a, &b)| a == b)
        });
        let Some(op) = op else {
            let c = rest[0];
            return Err(lex_error(format!("illegal character '{c}'"), line, column));
        };
        for _ in 0..op.chars().count() {
            self.bump();
        }
        match *op {
            "(" | "[" | "{" => self.depth += 1,
            ")" | "]" | "}" => {
                if self.depth == 0 {
                    return Err(lex_error(format!("unmatched '{op}'"), line, column));
                }
                self.depth -= 1;
            }
            _ => {}
        }
        self.push(TokenKind::Operator, *op, line, column);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn simple_assignment() {
        let toks = tokenize("x = 1").unwrap();
        let summary: Vec<(TokenKind, &str)> = toks
            .iter()
            .map(|t| (t.kind.clone(), t.lexeme.as_str()))
            .collect();
        assert_eq!(
            summary,
            vec![
                (TokenKind::Identifier, "x"),
                (TokenKind::Operator, "="),
                (TokenKind::Number(1.0), "1"),
                (TokenKind::Newline, ""),
                (TokenKind::Eof, ""),
            ]
        );
        assert_eq!((toks[2].line, toks[2].column), (1, 5));
    }

    #[test]
    fn offside_rule() {
        let k = kinds("for i in range(3):\n    x = i");
        assert_eq!(k.iter().filter(|k| **k == TokenKind::Indent).count(), 1);
        assert_eq!(k.iter().filter(|k| **k == TokenKind::Dedent).count(), 1);
    }

    #[test]
    fn nested_blocks_balance() {
        let src = "if a:\n    if b:\n        x = 1\n    y = 2\nz = 3\n";
        let k = kinds(src);
        let indents = k.iter().filter(|k| **k == TokenKind::Indent).count();
        let dedents = k.iter().filter(|k| **k == TokenKind::Dedent).count();
        assert_eq!((indents, dedents), (2, 2));
    }

    #[test]
    fn blank_and_comment_lines_ignored() {
        let src = "x = 1\n\n    # indented comment\ny = 2  # trailing\n";
        let k = kinds(src);
        assert!(!k.contains(&TokenKind::Indent));
        assert_eq!(k.iter().filter(|k| **k == TokenKind::Newline).count(), 2);
    }

    #[test]
    fn brackets_join_lines() {
        let src = "t = [\n  1,\n      2,\n]\n";
        let k = kinds(src);
        assert!(!k.contains(&TokenKind::Indent));
        assert_eq!(k.iter().filter(|k| **k == TokenKind::Newline).count(), 1);
    }

    #[test]
    fn unterminated_string() {
        let err = tokenize("x = 'abc").unwrap_err();
        assert_eq!(err.kind, ErrorKind::Lex);
        assert_eq!(err.line, Some(1));
        assert!(err.message.contains("unterminated"));
    }

    #[test]
    fn tab_indentation_rejected() {
        let err = tokenize("if x:\n\ty = 1\n").unwrap_err();
        assert_eq!(err.kind, ErrorKind::Lex);
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn illegal_character() {
        let err = tokenize("x = 1 $ 2").unwrap_err();
        assert_eq!((err.line, err.column), (Some(1), Some(7)));
    }

    #[test]
    fn bad_dedent() {
        let err = tokenize("if x:\n    y = 1\n  z = 2\n").unwrap_err();
        assert!(err.message.contains("unindent"));
    }

    #[test]
    fn numbers() {
        let k = kinds("a = 1.5e-3 + .5 + 2. + 1_000");
        let nums: Vec<f64> = k
            .into_iter()
            .filter_map(|k| match k {
                TokenKind::Number(v) => Some(v),
                _ => None,
            })
            .collect();
        assert_eq!(nums, vec![1.5e-3, 0.5, 2.0, 1000.0]);
    }

    #[test]
    fn string_escapes() {
        let k = kinds(r#"s = "a\"b\n""#);
        assert!(k.contains(&TokenKind::Str("a\"b\n".into())));
    }

    #[test]
    fn keywords_recognized() {
        let toks = tokenize("def f():\n    pass\n").unwrap();
        assert!(toks[0].is_keyword("def"));
    }
}
