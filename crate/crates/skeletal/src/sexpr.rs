//! Small S-expression reader shared by the protocol and goal parsers.
//! Tracks line/column so semantic errors can point at their source.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sexpr {
    Sym(String, Pos),
    Str(String, Pos),
    Int(i64, Pos),
    List(Vec<Sexpr>, Pos),
}

impl Sexpr {
    pub fn pos(&self) -> Pos {
        match self {
            Sexpr::Sym(_, p) | Sexpr::Str(_, p) | Sexpr::Int(_, p) | Sexpr::List(_, p) => *p,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Sexpr::Sym(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List(items, _) => Some(items),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("syntax error at {pos}: {msg}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub msg: String,
}

pub fn err(pos: Pos, msg: impl Into<String>) -> SyntaxError {
    SyntaxError { pos, msg: msg.into() }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Reader<'a> {
        Reader { chars: src.chars().peekable(), line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(&c) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn read_one(&mut self) -> Result<Sexpr, SyntaxError> {
        self.skip_trivia();
        let pos = self.pos();
        match self.chars.peek() {
            None => Err(err(pos, "unexpected end of input")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        Some(')') => {
                            self.bump();
                            return Ok(Sexpr::List(items, pos));
                        }
                        None => return Err(err(pos, "unclosed parenthesis")),
                        _ => items.push(self.read_one()?),
                    }
                }
            }
            Some(')') => Err(err(pos, "unexpected ')'")),
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some('"') => return Ok(Sexpr::Str(s, pos)),
                        Some('\\') => match self.bump() {
                            Some(c) => s.push(c),
                            None => return Err(err(pos, "unterminated string")),
                        },
                        Some(c) => s.push(c),
                        None => return Err(err(pos, "unterminated string")),
                    }
                }
            }
            Some(_) => {
                let mut tok = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' {
                        break;
                    }
                    tok.push(c);
                    self.bump();
                }
                if let Ok(n) = tok.parse::<i64>() {
                    Ok(Sexpr::Int(n, pos))
                } else {
                    Ok(Sexpr::Sym(tok, pos))
                }
            }
        }
    }
}

/// Read every top-level form in `src`.
pub fn parse_all(src: &str) -> Result<Vec<Sexpr>, SyntaxError> {
    let mut r = Reader::new(src);
    let mut out = Vec::new();
    loop {
        r.skip_trivia();
        if r.chars.peek().is_none() {
            return Ok(out);
        }
        out.push(r.read_one()?);
    }
}

/// Read exactly one top-level form.
pub fn parse_one(src: &str) -> Result<Sexpr, SyntaxError> {
    let forms = parse_all(src)?;
    match forms.len() {
        1 => Ok(forms.into_iter().next().unwrap()),
        0 => Err(err(Pos { line: 1, col: 1 }, "empty input")),
        _ => Err(err(forms[1].pos(), "expected a single form")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists() {
        let e = parse_one("(a (b \"c d\") 12) ; comment").unwrap();
        let items = e.as_list().unwrap();
        assert_eq!(items[0].as_sym(), Some("a"));
        assert_eq!(items.len(), 3);
        assert!(matches!(items[2], Sexpr::Int(12, _)));
    }

    #[test]
    fn reports_positions() {
        let e = parse_all("(a\n  b)").unwrap();
        let items = e[0].as_list().unwrap();
        assert_eq!(items[1].pos(), Pos { line: 2, col: 3 });
        assert!(parse_all("(a").is_err());
    }
}
