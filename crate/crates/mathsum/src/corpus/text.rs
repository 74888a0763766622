//! Rule-based text tokenization: whitespace split plus punctuation detachment.

use super::{Token, TokenKind};

/// Punctuation characters that always form their own token.
const DETACHED_PUNCT: [char; 10] = ['.', ',', ';', ':', '!', '?', '(', ')', '[', ']'];

fn is_detached_punct(c: char) -> bool {
    DETACHED_PUNCT.contains(&c)
}

/// Tokenizes a text region (no math inside): splits on whitespace and
/// detaches the punctuation in `DETACHED_PUNCT` as separate tokens wherever
/// it occurs. Case is preserved; an empty input yields an empty sequence.
pub fn tokenize_text(s: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for chunk in s.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_detached_punct(c) {
                if !word.is_empty() {
                    tokens.push(Token::new(TokenKind::Text, std::mem::take(&mut word)));
                }
                tokens.push(Token::new(TokenKind::Text, c.to_string()));
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            tokens.push(Token::new(TokenKind::Text, word));
        }
    }
    tokens
}
