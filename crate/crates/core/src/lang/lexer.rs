use super::ast::Span;
use super::diag::Diagnostic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    /// Lowercase-initial identifier; keywords are recognized by the parser.
    Ident(String),
    /// Uppercase- or underscore-initial identifier.
    Var(String),
    /// Unsigned decimal literal, kept as written.
    Number(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Colon,
    ColonDash,
    Eq,
    Amp,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Var(s) => format!("variable `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::ColonDash => "`:-`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn mark(&self) -> Span {
        Span {
            start: self.pos,
            end: self.pos,
            line: self.line,
            col: self.col,
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits source text into tokens. The final token is always [`Tok::Eof`].
pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut cur = Cursor {
        src,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                cur.bump();
            } else if c == '/' && cur.peek2() == Some('/') {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
            } else {
                break;
            }
        }
        let mut span = cur.mark();
        let Some(c) = cur.peek() else {
            out.push(Token {
                tok: Tok::Eof,
                span,
            });
            return Ok(out);
        };
        let tok = if c.is_ascii_lowercase() || c.is_ascii_uppercase() || c == '_' {
            let start = cur.pos;
            while cur.peek().is_some_and(is_ident_char) {
                cur.bump();
            }
            let text = src[start..cur.pos].to_string();
            if c.is_ascii_lowercase() {
                Tok::Ident(text)
            } else {
                Tok::Var(text)
            }
        } else if c.is_ascii_digit() {
            let start = cur.pos;
            while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                cur.bump();
            }
            if cur.peek() == Some('.') && cur.peek2().is_some_and(|c| c.is_ascii_digit()) {
                cur.bump();
                while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                    cur.bump();
                }
            }
            if cur.peek().is_some_and(is_ident_char) {
                span.end = cur.pos;
                return Err(Diagnostic::new(span, "malformed number"));
            }
            Tok::Number(src[start..cur.pos].to_string())
        } else {
            cur.bump();
            match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '.' => Tok::Dot,
                '=' => Tok::Eq,
                '&' => Tok::Amp,
                ':' => {
                    if cur.peek() == Some('-') {
                        cur.bump();
                        Tok::ColonDash
                    } else {
                        Tok::Colon
                    }
                }
                other => {
                    span.end = cur.pos;
                    return Err(Diagnostic::new(
                        span,
                        format!("unexpected character `{other}`"),
                    ));
                }
            }
        };
        span.end = cur.pos;
        out.push(Token { tok, span });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_rule() {
        assert_eq!(
            toks("p(X) :- not q(a). // c"),
            vec![
                Tok::Ident("p".into()),
                Tok::LParen,
                Tok::Var("X".into()),
                Tok::RParen,
                Tok::ColonDash,
                Tok::Ident("not".into()),
                Tok::Ident("q".into()),
                Tok::LParen,
                Tok::Ident("a".into()),
                Tok::RParen,
                Tok::Dot,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn numbers_and_dots() {
        assert_eq!(
            toks("[0.25] 1."),
            vec![
                Tok::LBracket,
                Tok::Number("0.25".into()),
                Tok::RBracket,
                Tok::Number("1".into()),
                Tok::Dot,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn positions() {
        let t = tokenize("a\n  b").unwrap();
        assert_eq!((t[1].span.line, t[1].span.col), (2, 3));
    }

    #[test]
    fn bad_char() {
        let e = tokenize("a $").unwrap_err();
        assert_eq!((e.span.line, e.span.col), (1, 3));
    }
}
