use crate::ast::Span;
use crate::diag::Diagnostic;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    /// `@name`
    Annot(String),
    Float(f64),
    Int(i64),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that maximal munch works with a linear scan.
const PUNCTS: &[&str] = &[
    "..", "+=", "-=", "*=", "/=", "==", "!=", "<=", ">=", "&&", "||", "->", "{", "}", "(", ")", "[", "]", "<", ">",
    ";", ":", ",", ".", "+", "-", "*", "/", "%", "=", "!", "&",
];

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! advance {
        ($n:expr) => {{
            for _ in 0..$n {
                if bytes[i] == b'\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            advance!(1);
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                advance!(1);
            }
            continue;
        }
        let span = Span::new(line, col, i as u32);
        if c.is_ascii_alphabetic() || c == b'_' || c == b'@' {
            let start = i;
            advance!(1);
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                advance!(1);
            }
            let text = &src[start..i];
            let tok = if let Some(name) = text.strip_prefix('@') {
                if name.is_empty() {
                    return Err(Diagnostic::new(span, "expected annotation name after '@'"));
                }
                Tok::Annot(name.to_string())
            } else {
                Tok::Ident(text.to_string())
            };
            out.push(Token { tok, span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                advance!(1);
            }
            let mut is_float = false;
            // `0..n` is a range, not a float.
            if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()) {
                is_float = true;
                advance!(1);
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    advance!(1);
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_float = true;
                    advance!(j - i);
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        advance!(1);
                    }
                }
            }
            let text = &src[start..i];
            let tok = if is_float {
                Tok::Float(
                    text.parse()
                        .map_err(|_| Diagnostic::new(span, format!("bad float literal '{text}'")))?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| Diagnostic::new(span, format!("integer literal '{text}' out of range")))?,
                )
            };
            out.push(Token { tok, span });
            continue;
        }
        let rest = &src[i..];
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                out.push(Token {
                    tok: Tok::Punct(p),
                    span,
                });
                advance!(p.len());
            }
            None => {
                let ch = rest.chars().next().unwrap_or('?');
                return Err(Diagnostic::new(span, format!("unexpected character '{ch}'")));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col, i as u32),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn range_is_not_float() {
        assert_eq!(
            toks("0..n"),
            vec![Tok::Int(0), Tok::Punct(".."), Tok::Ident("n".into()), Tok::Eof]
        );
    }

    #[test]
    fn floats_and_exponents() {
        assert_eq!(
            toks("1.5 2e-3 1e300 7"),
            vec![
                Tok::Float(1.5),
                Tok::Float(2e-3),
                Tok::Float(1e300),
                Tok::Int(7),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn annotations_and_positions() {
        let t = lex("x\n  @soa_convert_hoist(2)").unwrap();
        assert_eq!(t[1].tok, Tok::Annot("soa_convert_hoist".into()));
        assert_eq!((t[1].span.line, t[1].span.col), (2, 3));
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(toks("// hi\n+= // x"), vec![Tok::Punct("+="), Tok::Eof]);
    }

    #[test]
    fn bad_character() {
        let e = lex("a $ b").unwrap_err();
        assert_eq!((e.span.line, e.span.col), (1, 3));
    }
}
