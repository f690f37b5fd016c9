use serde::Serialize;

use crate::error::{Error, Result};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const PAD: &str = "<pad>";

/// A word-level token sequence laid out in `n` context slots:
/// start-of-text at 0, words at `1..i_end`, end-of-text at `i_end`, padding after.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenSequence {
    words: Vec<String>,
    n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Start,
    Word,
    End,
    Pad,
}

impl TokenSequence {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn i_end(&self) -> usize {
        self.words.len() + 1
    }

    pub fn kind(&self, index: usize) -> TokenKind {
        let i_end = self.i_end();
        match index {
            0 => TokenKind::Start,
            i if i < i_end => TokenKind::Word,
            i if i == i_end => TokenKind::End,
            _ => TokenKind::Pad,
        }
    }

    /// Display label of a slot: the word itself or one of the special markers.
    pub fn label(&self, index: usize) -> &str {
        match self.kind(index) {
            TokenKind::Start => BOS,
            TokenKind::Word => &self.words[index - 1],
            TokenKind::End => EOS,
            TokenKind::Pad => PAD,
        }
    }

    /// Word at a token index, if that slot holds a word.
    pub fn word(&self, index: usize) -> Option<&str> {
        (self.kind(index) == TokenKind::Word).then(|| self.words[index - 1].as_str())
    }

    /// Token indices at which `word` occurs.
    pub fn positions(&self, word: &str) -> Vec<usize> {
        self.words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.as_str() == word)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Lowercase and drop everything that is neither alphanumeric nor whitespace.
pub fn normalize_word(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn tokenize(text: &str, n: usize) -> Result<TokenSequence> {
    if n < 2 {
        return Err(Error::ContextTooShort(n));
    }
    if let Some((pos, _)) = text.char_indices().find(|(_, c)| c.is_control() && !c.is_whitespace()) {
        return Err(Error::InvalidText(pos));
    }
    let words: Vec<String> = text
        .split_whitespace()
        .map(normalize_word)
        .filter(|w| !w.is_empty())
        .collect();
    if words.len() + 2 > n {
        return Err(Error::TooManyTokens { needed: words.len() + 2, n });
    }
    Ok(TokenSequence { words, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2_PROMPT: &str =
        "Isometric view of game scene, a plain, walk path, a river, a high mountain, houses.";

    #[test]
    fn short_prompt() {
        let t = tokenize("a river", 8).unwrap();
        assert_eq!(t.words(), &["a", "river"]);
        assert_eq!(t.i_end(), 3);
        assert_eq!(t.label(0), BOS);
        assert_eq!(t.label(3), EOS);
        assert_eq!(t.label(7), PAD);
    }

    #[test]
    fn scene_prompt_word_count() {
        // hand count: isometric view of game scene a plain walk path a river a high mountain houses
        let t = tokenize(FIG2_PROMPT, 77).unwrap();
        assert_eq!(t.words().len(), 15);
        assert_eq!(t.i_end(), 16);
        assert_eq!(t.word(7), Some("plain"));
        assert_eq!(t.word(15), Some("houses"));
    }

    #[test]
    fn empty_prompt() {
        let t = tokenize("", 4).unwrap();
        assert!(t.words().is_empty());
        assert_eq!(t.i_end(), 1);
        assert_eq!(t.kind(1), TokenKind::End);
    }

    #[test]
    fn too_many_tokens() {
        assert!(matches!(
            tokenize("one two three", 4),
            Err(Error::TooManyTokens { needed: 5, n: 4 })
        ));
        assert!(tokenize("one two", 4).is_ok());
    }

    #[test]
    fn rejects_control_characters_and_tiny_context() {
        assert!(matches!(tokenize("a\u{7}b", 8), Err(Error::InvalidText(1))));
        assert!(matches!(tokenize("", 1), Err(Error::ContextTooShort(1))));
    }

    #[test]
    fn punctuation_only_words_vanish() {
        let t = tokenize("trees , -- Rocks!", 8).unwrap();
        assert_eq!(t.words(), &["trees", "rocks"]);
    }
}
