use std::collections::BTreeSet;

use serde::Serialize;

use super::{normalize_word, Lexicon, TokenSequence};
use crate::error::{Error, Result};
use crate::Warning;

/// Instance identifier; matches pixel values in a label-map sketch.
pub type InstanceId = u8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Keyword {
    pub index: usize,
    pub instance: InstanceId,
    pub word: String,
}

/// Token indices of instance keywords, strictly increasing, each bound to one instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KeywordIndices {
    entries: Vec<Keyword>,
}

impl KeywordIndices {
    /// Build from arbitrary entries; validates ordering-independent invariants and sorts by index.
    pub fn new(tokens: &TokenSequence, mut entries: Vec<Keyword>) -> Result<Self> {
        entries.sort_by_key(|k| k.index);
        let mut ids = BTreeSet::new();
        for (pos, k) in entries.iter().enumerate() {
            if tokens.word(k.index) != Some(k.word.as_str()) {
                return Err(Error::KeywordNotFound(k.word.clone()));
            }
            if pos > 0 && entries[pos - 1].index == k.index {
                return Err(Error::AmbiguousKeyword(k.word.clone()));
            }
            if k.instance == 0 {
                return Err(Error::ZeroInstanceId);
            }
            if !ids.insert(k.instance) {
                return Err(Error::DuplicateInstance(k.instance));
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Keyword> {
        self.entries.iter()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|k| k.index).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Keyword> {
        self.entries
            .binary_search_by_key(&index, |k| k.index)
            .ok()
            .map(|p| &self.entries[p])
    }

    pub fn instance_of(&self, index: usize) -> Option<InstanceId> {
        self.get(index).map(|k| k.instance)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.get(index).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub keywords: KeywordIndices,
    pub warning: Option<Warning>,
}

/// Locate instance keywords. Explicit `(word, id)` overrides win over the lexicon.
pub fn extract_keywords(
    tokens: &TokenSequence,
    lexicon: &Lexicon,
    overrides: Option<&[(String, InstanceId)]>,
) -> Result<Extraction> {
    let entries = match overrides {
        Some(list) => {
            let mut entries = Vec::with_capacity(list.len());
            for (raw, id) in list {
                let word = normalize_word(raw);
                let index = match tokens.positions(&word).as_slice() {
                    [] => return Err(Error::KeywordNotFound(word)),
                    [i] => *i,
                    _ => return Err(Error::AmbiguousKeyword(word)),
                };
                entries.push(Keyword { index, instance: *id, word });
            }
            entries
        }
        None => {
            let mut next_id: InstanceId = 0;
            let mut entries = Vec::new();
            for (pos, word) in tokens.words().iter().enumerate() {
                if lexicon.contains(word) {
                    next_id = next_id.checked_add(1).ok_or(Error::DuplicateInstance(u8::MAX))?;
                    entries.push(Keyword { index: pos + 1, instance: next_id, word: word.clone() });
                }
            }
            entries
        }
    };
    let keywords = KeywordIndices::new(tokens, entries)?;
    let warning = keywords.is_empty().then_some(Warning::NoKeywords);
    Ok(Extraction { keywords, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::tokenize;

    fn scene_tokens() -> TokenSequence {
        tokenize(
            "Isometric view of game scene, a plain, walk path, a river, a high mountain, houses.",
            77,
        )
        .unwrap()
    }

    fn overrides(words: &[&str]) -> Vec<(String, InstanceId)> {
        words.iter().zip(1..).map(|(w, id)| (w.to_string(), id)).collect()
    }

    #[test]
    fn scene_overrides() {
        let t = scene_tokens();
        let ov = overrides(&["plain", "path", "river", "mountain", "houses"]);
        let ex = extract_keywords(&t, &Lexicon::new(["unused"]), Some(&ov)).unwrap();
        assert_eq!(ex.keywords.indices(), vec![7, 9, 11, 14, 15]);
        let ids: Vec<_> = ex.keywords.iter().map(|k| k.instance).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
        assert!(ex.warning.is_none());
    }

    #[test]
    fn lexicon_match() {
        let t = tokenize("a river", 8).unwrap();
        let ex = extract_keywords(&t, &Lexicon::new(["river"]), None).unwrap();
        assert_eq!(ex.keywords.indices(), vec![2]);
        assert_eq!(ex.keywords.instance_of(2), Some(1));
    }

    #[test]
    fn no_hits_warns() {
        let t = tokenize("a quiet evening", 8).unwrap();
        let ex = extract_keywords(&t, &Lexicon::default(), None).unwrap();
        assert!(ex.keywords.is_empty());
        assert_eq!(ex.warning, Some(Warning::NoKeywords));
    }

    #[test]
    fn default_lexicon_ids_follow_token_order() {
        let t = scene_tokens();
        let ex = extract_keywords(&t, &Lexicon::default(), None).unwrap();
        assert_eq!(ex.keywords.indices(), vec![7, 9, 11, 14, 15]);
        assert_eq!(ex.keywords.instance_of(15), Some(5));
    }

    #[test]
    fn override_errors() {
        let t = tokenize("a river and a river bank", 16).unwrap();
        let lex = Lexicon::default();
        assert!(matches!(
            extract_keywords(&t, &lex, Some(&overrides(&["lake"]))),
            Err(Error::KeywordNotFound(w)) if w == "lake"
        ));
        assert!(matches!(
            extract_keywords(&t, &lex, Some(&overrides(&["river"]))),
            Err(Error::AmbiguousKeyword(_))
        ));
        let dup = vec![("and".to_string(), 1), ("bank".to_string(), 1)];
        assert!(matches!(extract_keywords(&t, &lex, Some(&dup)), Err(Error::DuplicateInstance(1))));
    }

    #[test]
    fn override_words_are_normalized() {
        let t = scene_tokens();
        let ex = extract_keywords(&t, &Lexicon::default(), Some(&overrides(&["Houses!"]))).unwrap();
        assert_eq!(ex.keywords.indices(), vec![15]);
    }
}
