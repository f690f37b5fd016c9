//! Prompt handling: word-level tokenization, instance keyword lookup,
//! token embeddings and prompt balance, plus the energy and cosine diagnostics.

mod balance;
mod embedding;
mod keywords;
mod lexicon;
mod tokens;

pub use balance::{cosine_profile, energy_profile, prompt_balance};
pub use embedding::{
    embed, embed_word, synthetic_vector, EmbeddingMatrix, EmbeddingProvider, EmbeddingTable,
    Stage, BOS_NORM, EOS_NORM, WORD_NORM_MAX, WORD_NORM_MIN,
};
pub use keywords::{extract_keywords, Extraction, InstanceId, Keyword, KeywordIndices};
pub use lexicon::Lexicon;
pub use tokens::{normalize_word, tokenize, TokenKind, TokenSequence, BOS, EOS, PAD};
