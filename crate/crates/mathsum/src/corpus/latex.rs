//! LaTeX math lexer.
//!
//! Splits the interior of one math region into math tokens: backslash
//! commands (longest run of letters, or a single non-letter escape), braces,
//! brackets, carets and underscores as single tokens, every letter and digit
//! individually, and a fixed operator set. Whitespace is discarded. Anything
//! else is a lexing error, which signals upstream that the pair must be
//! dropped.

use super::{CorpusError, Token, TokenKind};

const OPERATORS: [char; 9] = ['+', '-', '=', '/', '|', '(', ')', ',', '.'];
const STRUCTURAL: [char; 6] = ['{', '}', '[', ']', '^', '_'];

/// Lexes the interior of one math region (delimiters already stripped).
pub fn tokenize_math(latex: &str) -> Result<Vec<Token>, CorpusError> {
    let mut tokens = Vec::new();
    let mut chars = latex.char_indices().peekable();
    while let Some((offset, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        if c == '\\' {
            let mut cmd = String::from('\\');
            match chars.peek() {
                Some(&(_, next)) if next.is_alphabetic() => {
                    while let Some(&(_, letter)) = chars.peek() {
                        if letter.is_alphabetic() {
                            cmd.push(letter);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                }
                Some(&(_, next)) => {
                    cmd.push(next);
                    chars.next();
                }
                None => {
                    return Err(CorpusError::MathTokenize {
                        found: '\\',
                        offset,
                    })
                }
            }
            tokens.push(Token::new(TokenKind::Math, cmd));
        } else if STRUCTURAL.contains(&c)
            || OPERATORS.contains(&c)
            || c.is_alphabetic()
            || c.is_ascii_digit()
        {
            tokens.push(Token::new(TokenKind::Math, c.to_string()));
        } else {
            return Err(CorpusError::MathTokenize { found: c, offset });
        }
    }
    Ok(tokens)
}
