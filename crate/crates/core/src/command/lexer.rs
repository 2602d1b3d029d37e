//! Tokenizer for operator transcripts. Total: every character ends up in some
//! token, so the parser is the only place errors are reported.

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Word(String),
    Number(f64),
    LParen,
    Comma,
    RParen,
    /// Any other character; never accepted by the grammar.
    Symbol(char),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Source text, lowercased.
    pub text: String,
    /// 1-based token index.
    pub position: usize,
}

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "thirteen",
    "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

/// Value of a number word in zero..=twenty.
pub fn number_word(word: &str) -> Option<u32> {
    NUMBER_WORDS.iter().position(|w| *w == word).map(|i| i as u32)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '_'
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let lowered = text.to_lowercase();
    let trimmed = lowered.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '!' | '?'));
    let chars: Vec<char> = trimmed.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let push = |kind: TokenKind, text: String, tokens: &mut Vec<Token>| {
        let position = tokens.len() + 1;
        tokens.push(Token { kind, text, position });
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || ((c == '-' || c == '+' || c == '.') && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()));
        if starts_number {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // digits glued to letters ("3rd", "40kv") lex as one word
            if i < chars.len() && is_word_char(chars[i]) {
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                push(TokenKind::Word(text.clone()), text, &mut tokens);
                continue;
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => push(TokenKind::Number(v), text, &mut tokens),
                _ => push(TokenKind::Word(text.clone()), text, &mut tokens),
            }
            continue;
        }
        if is_word_char(c) {
            let start = i;
            while i < chars.len() && (is_word_char(chars[i]) || (chars[i] == '-' && chars.get(i + 1).is_some_and(|n| is_word_char(*n)))) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            push(TokenKind::Word(text.clone()), text, &mut tokens);
            continue;
        }
        let kind = match c {
            '(' => TokenKind::LParen,
            ',' => TokenKind::Comma,
            ')' => TokenKind::RParen,
            other => TokenKind::Symbol(other),
        };
        push(kind, c.to_string(), &mut tokens);
        i += 1;
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_points_and_words() {
        let t = tokenize("Move to (1.5, -2, 0.25).");
        let kinds: Vec<_> = t.iter().map(|t| t.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                TokenKind::Word("move".into()),
                TokenKind::Word("to".into()),
                TokenKind::LParen,
                TokenKind::Number(1.5),
                TokenKind::Comma,
                TokenKind::Number(-2.0),
                TokenKind::Comma,
                TokenKind::Number(0.25),
                TokenKind::RParen,
            ]
        );
        assert_eq!(t[3].position, 4);
    }

    #[test]
    fn number_words() {
        assert_eq!(number_word("twenty"), Some(20));
        assert_eq!(number_word("zero"), Some(0));
        assert_eq!(number_word("thirty"), None);
    }

    #[test]
    fn odd_characters_become_symbols() {
        let t = tokenize("stop #now");
        assert_eq!(t[1].kind, TokenKind::Symbol('#'));
    }
}
