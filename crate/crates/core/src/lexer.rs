//! Indentation-aware tokenizer.
//!
//! Blocks are delimited by synthetic `Indent`/`Dedent` tokens; statements end
//! with `;`, so no newline tokens are produced. Ordinary `#` comments are
//! dropped, `#@` starts a specification and `#!` a woven check.

use crate::ast::SourceLoc;
use crate::error::LexError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Ident,
    Int,
    Symbol,
    /// `#@`
    Spec,
    /// `#!`
    Weave,
    Indent,
    Dedent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub loc: SourceLoc,
}

impl Token {
    pub fn is(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.kind == kind && self.lexeme == lexeme
    }
}

pub const KEYWORDS: &[&str] = &[
    "contract", "extern", "method", "global", "predicate", "requires", "ensures", "invariant",
    "assert", "if", "else", "while", "return", "call", "opaque", "and", "or", "not", "acc", "old",
    "result", "true", "uint64", "check", "check_exit",
];

const SYMBOLS: &[&str] = &[
    ":=", "==", "!=", "<=", ">=", "->", "<", ">", ";", ":", "(", ")", ",", ".", "+", "-", "*", "/",
    "%", "?", "@", "=",
];

pub fn lex(source: &str) -> Result<Vec<Token>, LexError> {
    let mut tokens = Vec::new();
    let mut indents: Vec<usize> = vec![0];

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx as u32 + 1;
        if let Some(col) = line.find('\t') {
            return Err(LexError {
                loc: SourceLoc::new(line_no, col as u32 + 1),
                message: "tab character (indent with spaces only)".into(),
            });
        }
        let trimmed = line.trim_start_matches(' ');
        let indent = line.len() - trimmed.len();
        let is_plain_comment =
            trimmed.starts_with('#') && !trimmed.starts_with("#@") && !trimmed.starts_with("#!");
        if trimmed.trim_end().is_empty() || is_plain_comment {
            continue;
        }

        let top = *indents.last().unwrap();
        let loc = SourceLoc::new(line_no, indent as u32 + 1);
        if indent > top {
            indents.push(indent);
            tokens.push(Token {
                kind: TokenKind::Indent,
                lexeme: String::new(),
                loc,
            });
        } else {
            while indent < *indents.last().unwrap() {
                indents.pop();
                tokens.push(Token {
                    kind: TokenKind::Dedent,
                    lexeme: String::new(),
                    loc,
                });
            }
            if indent != *indents.last().unwrap() {
                return Err(LexError {
                    loc,
                    message: "dedent does not match any enclosing indentation level".into(),
                });
            }
        }
        lex_line(trimmed, line_no, indent, &mut tokens)?;
    }

    let end = SourceLoc::new(source.lines().count() as u32 + 1, 1);
    while indents.len() > 1 {
        indents.pop();
        tokens.push(Token {
            kind: TokenKind::Dedent,
            lexeme: String::new(),
            loc: end,
        });
    }
    Ok(tokens)
}

fn lex_line(text: &str, line: u32, offset: usize, out: &mut Vec<Token>) -> Result<(), LexError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut depth: i32 = 0;
    let mut open_loc = SourceLoc::default();
    while i < bytes.len() {
        let c = bytes[i];
        let loc = SourceLoc::new(line, (offset + i) as u32 + 1);
        if c == b' ' {
            i += 1;
            continue;
        }
        if c == b'#' {
            match bytes.get(i + 1) {
                Some(b'@') => {
                    out.push(tok(TokenKind::Spec, "#@", loc));
                    i += 2;
                    continue;
                }
                Some(b'!') => {
                    out.push(tok(TokenKind::Weave, "#!", loc));
                    i += 2;
                    continue;
                }
                _ => break,
            }
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let lexeme = &text[start..i];
            if lexeme.parse::<u64>().is_err() {
                return Err(LexError {
                    loc,
                    message: format!("integer literal `{lexeme}` exceeds uint64"),
                });
            }
            out.push(tok(TokenKind::Int, lexeme, loc));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let lexeme = &text[start..i];
            let kind = if KEYWORDS.contains(&lexeme) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            };
            out.push(tok(kind, lexeme, loc));
            continue;
        }
        let rest = &text[i..];
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            let ch = rest.chars().next().unwrap();
            return Err(LexError {
                loc,
                message: format!("unexpected character `{ch}`"),
            });
        };
        match *sym {
            "(" => {
                if depth == 0 {
                    open_loc = loc;
                }
                depth += 1;
            }
            ")" => {
                depth -= 1;
                if depth < 0 {
                    return Err(LexError {
                        loc,
                        message: "unbalanced `)`".into(),
                    });
                }
            }
            _ => {}
        }
        out.push(tok(TokenKind::Symbol, sym, loc));
        i += sym.len();
    }
    if depth > 0 {
        return Err(LexError {
            loc: open_loc,
            message: "unterminated `(` at end of line".into(),
        });
    }
    Ok(())
}

fn tok(kind: TokenKind, lexeme: &str, loc: SourceLoc) -> Token {
    Token {
        kind,
        lexeme: lexeme.to_string(),
        loc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(src: &str) -> Vec<(TokenKind, String)> {
        lex(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.lexeme))
            .collect()
    }

    #[test]
    fn global_declaration_tokens() {
        assert_eq!(
            shape("#@ global Count;"),
            vec![
                (TokenKind::Spec, "#@".into()),
                (TokenKind::Keyword, "global".into()),
                (TokenKind::Ident, "Count".into()),
                (TokenKind::Symbol, ";".into()),
            ]
        );
    }

    #[test]
    fn empty_file_has_no_tokens() {
        assert!(lex("").unwrap().is_empty());
        assert!(lex("\n\n  # just a comment\n").unwrap().is_empty());
    }

    #[test]
    fn tab_is_rejected_at_its_column() {
        let err = lex("contract A:\n  x :=\t1;\n").unwrap_err();
        assert_eq!(err.loc, SourceLoc::new(2, 7));
    }

    #[test]
    fn indent_and_dedent_balance() {
        let toks = lex("a:\n  b:\n    c;\n  d;\ne;\n").unwrap();
        let ind = toks.iter().filter(|t| t.kind == TokenKind::Indent).count();
        let ded = toks.iter().filter(|t| t.kind == TokenKind::Dedent).count();
        assert_eq!(ind, 2);
        assert_eq!(ind, ded);
    }

    #[test]
    fn inconsistent_dedent_is_an_error() {
        assert!(lex("a:\n    b;\n  c;\n").is_err());
    }

    #[test]
    fn unterminated_paren() {
        let err = lex("x := (1 + 2;\n").unwrap_err();
        assert!(err.message.contains("unterminated"));
    }

    #[test]
    fn literal_overflow() {
        assert!(lex("x := 18446744073709551616;").is_err());
        assert!(lex("x := 18446744073709551615;").is_ok());
    }

    #[test]
    fn plain_comments_dropped_markers_kept() {
        let s = shape("x := 1; # trailing\n#! check x >= 1 @c0;\n");
        assert_eq!(s[4], (TokenKind::Weave, "#!".into()));
        assert!(s.iter().all(|(_, l)| l != "trailing"));
    }
}
