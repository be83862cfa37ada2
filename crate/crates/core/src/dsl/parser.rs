use std::sync::Arc;

use super::{CoefficientExpr, DslError, Expr, Func};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn syntax(column: usize, message: impl Into<String>) -> DslError {
    DslError::Syntax {
        column,
        message: message.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let column = i + 1;
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match ch {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, column });
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| syntax(column, format!("malformed number `{text}`")))?;
            if !value.is_finite() {
                return Err(syntax(column, format!("number `{text}` is out of range")));
            }
            out.push(Token {
                tok: Tok::Num(value),
                column,
            });
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                column,
            });
        } else {
            return Err(syntax(column, format!("unexpected character `{ch}`")));
        }
    }
    Ok(out)
}

fn check_balance(tokens: &[Token]) -> Result<(), DslError> {
    let mut open = Vec::new();
    for t in tokens {
        match t.tok {
            Tok::LParen => open.push(t.column),
            Tok::RParen => {
                open.pop().ok_or_else(|| syntax(t.column, "unmatched `)`"))?;
            }
            _ => {}
        }
    }
    match open.last() {
        Some(&column) => Err(syntax(column, "unclosed `(`")),
        None => Ok(()),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end_column: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn column(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.column).unwrap_or(self.end_column)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.peek() == Some(&Tok::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let column = self.column();
        match self.bump() {
            Some(Token { tok: Tok::Num(v), .. }) => Ok(Expr::Num(v)),
            Some(Token {
                tok: Tok::Ident(name), ..
            }) => {
                if self.peek() == Some(&Tok::LParen) {
                    let func =
                        Func::from_name(&name).ok_or_else(|| syntax(column, format!("unknown function `{name}`")))?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else if Func::from_name(&name).is_some() {
                    Err(syntax(self.column(), format!("expected `(` after `{name}`")))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Some(Token { tok: Tok::LParen, .. }) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token { tok, .. }) => Err(syntax(column, format!("unexpected {}", describe(&tok)))),
            None => Err(syntax(column, "unexpected end of expression")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), DslError> {
        let column = self.column();
        match self.bump() {
            Some(Token { tok: Tok::RParen, .. }) => Ok(()),
            Some(Token { tok, .. }) => Err(syntax(column, format!("expected `)`, found {}", describe(&tok)))),
            None => Err(syntax(column, "expected `)`")),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number `{v}`"),
        Tok::Ident(name) => format!("identifier `{name}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
    }
}

/// Parse a coefficient expression. Syntax errors carry a 1-based column.
pub fn parse_expression(src: &str) -> Result<CoefficientExpr, DslError> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(syntax(1, "empty expression"));
    }
    check_balance(&tokens)?;
    let end_column = src.chars().count() + 1;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end_column,
    };
    let ast = parser.expr()?;
    if let Some(t) = parser.tokens.get(parser.pos) {
        return Err(syntax(t.column, format!("unexpected {}", describe(&t.tok))));
    }
    Ok(CoefficientExpr {
        source: Arc::from(src),
        ast,
    })
}
