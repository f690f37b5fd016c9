use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::tokens::{TokenKind, TokenSequence, BOS, EOS};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const BOS_NORM: f64 = 1.0;
pub const EOS_NORM: f64 = 1.5;
pub const WORD_NORM_MIN: f64 = 0.7;
pub const WORD_NORM_MAX: f64 = 1.2;

/// Which construction step produced an embedding matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Global,
    Recombined,
    Balanced,
}

/// Token embedding matrix (`n × d`) tied to the end-of-text slot of its token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: Matrix,
    pub stage: Stage,
    pub i_end: usize,
}

impl EmbeddingMatrix {
    pub fn new(rows: Matrix, stage: Stage, i_end: usize) -> Result<Self> {
        if i_end >= rows.rows() {
            return Err(Error::DimensionMismatch { expected: i_end + 1, got: rows.rows() });
        }
        if let Some(r) = (0..rows.rows()).find(|&r| rows.row(r).iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteEmbedding(r));
        }
        Ok(Self { rows, stage, i_end })
    }

    pub fn n(&self) -> usize {
        self.rows.rows()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }
}

/// Word vectors loaded from a JSON object `{ word: [f64; d] }`.
///
/// `"word@single"` keys hold standalone encodings; `"<bos>"` and `"<eos>"` hold the specials.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub source: PathBuf,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn from_map(source: impl Into<PathBuf>, entries: BTreeMap<String, Vec<f64>>) -> Self {
        Self { source: source.into(), entries }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok(Self::from_map(path, entries))
    }

    fn lookup(&self, key: &str, dim: usize) -> Option<Result<Vec<f64>>> {
        self.entries.get(key).map(|v| {
            if v.len() != dim {
                Err(Error::DimensionMismatch { expected: dim, got: v.len() })
            } else {
                Ok(v.clone())
            }
        })
    }
}

/// Source of token vectors standing in for a frozen text encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingProvider {
    /// Hash-seeded Gaussian directions with pinned norms.
    Synthetic { seed: u64, dim: usize },
    File { table: EmbeddingTable, dim: usize },
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Synthetic { dim, .. } | EmbeddingProvider::File { dim, .. } => *dim,
        }
    }

    /// Vector for a token as it appears inside a prompt.
    fn in_context(&self, key: &str) -> Result<Vec<f64>> {
        match self {
            EmbeddingProvider::Synthetic { seed, dim } => Ok(synthetic_vector(key, *seed, *dim)),
            EmbeddingProvider::File { table, dim } => table
                .lookup(key, *dim)
                .unwrap_or_else(|| Err(Error::MissingEmbedding(key.to_string()))),
        }
    }
}

/// Deterministic vector for `(key, seed, dim)`: Gaussian direction, norm pinned by token class.
pub fn synthetic_vector(key: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let norm = match key {
        BOS => BOS_NORM,
        EOS => EOS_NORM,
        _ => WORD_NORM_MIN + (WORD_NORM_MAX - WORD_NORM_MIN) * rng.random::<f64>(),
    };
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = crate::linalg::l2_norm(&dir);
        if len > 0.0 {
            return dir.into_iter().map(|v| v / len * norm).collect();
        }
    }
}

/// Global prompt encoding `S_g`: one row per context slot, padding rows copy end-of-text.
pub fn embed(tokens: &TokenSequence, provider: &EmbeddingProvider) -> Result<EmbeddingMatrix> {
    let dim = provider.dim();
    let bos = provider.in_context(BOS)?;
    let eos = provider.in_context(EOS)?;
    let mut rows = Matrix::zeros(tokens.n(), dim);
    for i in 0..tokens.n() {
        let v = match tokens.kind(i) {
            TokenKind::Start => bos.clone(),
            TokenKind::Word => provider.in_context(tokens.label(i))?,
            TokenKind::End | TokenKind::Pad => eos.clone(),
        };
        rows.row_mut(i).copy_from_slice(&v);
    }
    EmbeddingMatrix::new(rows, Stage::Global, tokens.i_end())
}

/// Standalone encoding of a single word.
pub fn embed_word(word: &str, provider: &EmbeddingProvider) -> Result<Vec<f64>> {
    if word.is_empty() {
        return Err(Error::MissingEmbedding(String::new()));
    }
    match provider {
        EmbeddingProvider::Synthetic { .. } => provider.in_context(word),
        EmbeddingProvider::File { table, dim } => table
            .lookup(&format!("{word}@single"), *dim)
            .or_else(|| table.lookup(word, *dim))
            .unwrap_or_else(|| Err(Error::MissingEmbedding(word.to_string()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::l2_norm;
    use crate::prompt::tokenize;

    fn synth(dim: usize) -> EmbeddingProvider {
        EmbeddingProvider::Synthetic { seed: 11, dim }
    }

    fn table(entries: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::from_map(
            "mem.json",
            entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        )
    }

    #[test]
    fn repeated_word_gives_identical_rows() {
        let t = tokenize("a river and a river", 10).unwrap();
        let s = embed(&t, &synth(16)).unwrap();
        assert_eq!(s.row(2), s.row(5));
        assert_eq!(s.stage, Stage::Global);
    }

    #[test]
    fn special_norms() {
        let t = tokenize("a river", 8).unwrap();
        let s = embed(&t, &synth(64)).unwrap();
        assert!((l2_norm(s.row(3)) - EOS_NORM).abs() < 1e-12);
        assert!((l2_norm(s.row(0)) - BOS_NORM).abs() < 1e-12);
        for i in 4..8 {
            assert_eq!(s.row(i), s.row(3), "padding copies end-of-text");
        }
    }

    #[test]
    fn word_norms_in_band() {
        for w in ["a", "river", "mountain", "x", "houses", "zebra"] {
            for dim in [1, 3, 8, 64] {
                let v = synthetic_vector(w, 5, dim);
                let nrm = l2_norm(&v);
                assert!((WORD_NORM_MIN - 1e-12..=WORD_NORM_MAX + 1e-12).contains(&nrm), "{w} {nrm}");
            }
        }
    }

    #[test]
    fn seed_changes_vectors() {
        assert_ne!(synthetic_vector("river", 1, 8), synthetic_vector("river", 2, 8));
        assert_eq!(synthetic_vector("river", 1, 8), synthetic_vector("river", 1, 8));
    }

    #[test]
    fn embed_word_matches_context_row_in_synthetic_mode() {
        let p = synth(8);
        let t = tokenize("a river", 8).unwrap();
        let s = embed(&t, &p).unwrap();
        assert_eq!(embed_word("river", &p).unwrap(), s.row(2));
        assert_eq!(embed_word("river", &p).unwrap(), embed_word("river", &p).unwrap());
    }

    #[test]
    fn file_mode_dimension_mismatch() {
        let tab = table(&[
            ("<bos>", vec![1.0; 4]),
            ("<eos>", vec![1.0; 4]),
            ("river", vec![1.0; 4]),
        ]);
        let p = EmbeddingProvider::File { table: tab, dim: 8 };
        let t = tokenize("river", 4).unwrap();
        assert!(matches!(embed(&t, &p), Err(Error::DimensionMismatch { expected: 8, got: 4 })));
    }

    #[test]
    fn file_mode_lookup_and_precedence() {
        let tab = table(&[
            ("<bos>", vec![1.0, 0.0]),
            ("<eos>", vec![0.0, 2.0]),
            ("river", vec![3.0, 4.0]),
            ("river@single", vec![6.0, 8.0]),
            ("lake", vec![1.0, 1.0]),
        ]);
        let p = EmbeddingProvider::File { table: tab, dim: 2 };
        assert_eq!(embed_word("river", &p).unwrap(), vec![6.0, 8.0]);
        assert_eq!(embed_word("lake", &p).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(embed_word("sea", &p), Err(Error::MissingEmbedding(_))));
        let t = tokenize("river", 4).unwrap();
        let s = embed(&t, &p).unwrap();
        assert_eq!(s.row(1), &[3.0, 4.0]);
        assert_eq!(s.row(3), &[0.0, 2.0]);
        let t2 = tokenize("river sea", 5).unwrap();
        assert!(matches!(embed(&t2, &p), Err(Error::MissingEmbedding(w)) if w == "sea"));
    }

    #[test]
    fn table_loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        std::fs::write(&path, r#"{"<bos>":[1,0],"<eos>":[0,3],"hill":[0.5,0.5]}"#).unwrap();
        let tab = EmbeddingTable::load(&path).unwrap();
        let p = EmbeddingProvider::File { table: tab, dim: 2 };
        assert_eq!(embed_word("hill", &p).unwrap(), vec![0.5, 0.5]);
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(EmbeddingTable::load(&path), Err(Error::Parse(_))));
    }
}
