use super::embedding::{embed_word, EmbeddingMatrix, EmbeddingProvider, Stage};
use super::keywords::KeywordIndices;
use crate::error::{Error, Result};
use crate::linalg::{cosine, l2_norm};

/// Replace each keyword row with its standalone encoding, rescaled to the
/// end-of-text energy. All other rows are copied unchanged.
pub fn prompt_balance(
    global: &EmbeddingMatrix,
    keywords: &KeywordIndices,
    provider: &EmbeddingProvider,
) -> Result<EmbeddingMatrix> {
    let mut rows = global.rows.clone();
    // i_end is never a keyword, so the recombined end-of-text row is the global one
    let target = l2_norm(global.row(global.i_end));
    for kw in keywords.iter() {
        let single = embed_word(&kw.word, provider)?;
        if single.len() != global.dim() {
            return Err(Error::DimensionMismatch { expected: global.dim(), got: single.len() });
        }
        let energy = l2_norm(&single);
        if energy == 0.0 {
            return Err(Error::ZeroEnergyKeyword(kw.word.clone()));
        }
        let factor = target / energy;
        for (dst, v) in rows.row_mut(kw.index).iter_mut().zip(&single) {
            *dst = v * factor;
        }
    }
    EmbeddingMatrix::new(rows, Stage::Balanced, global.i_end)
}

/// `(index, ‖row‖)` for indices `0..=i_end`.
pub fn energy_profile(s: &EmbeddingMatrix) -> Vec<(usize, f64)> {
    (0..=s.i_end).map(|i| (i, l2_norm(s.row(i)))).collect()
}

/// Cosine between each keyword's row and its standalone encoding.
pub fn cosine_profile(
    s: &EmbeddingMatrix,
    keywords: &KeywordIndices,
    provider: &EmbeddingProvider,
) -> Result<Vec<(usize, f64)>> {
    keywords
        .iter()
        .map(|kw| {
            let single = embed_word(&kw.word, provider)?;
            cosine(s.row(kw.index), &single)
                .map(|c| (kw.index, c))
                .ok_or_else(|| Error::ZeroEnergyKeyword(kw.word.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::linalg::Matrix;
    use crate::prompt::{embed, extract_keywords, tokenize, EmbeddingTable, Lexicon};

    fn file_provider(entries: &[(&str, Vec<f64>)]) -> EmbeddingProvider {
        let map: BTreeMap<String, Vec<f64>> =
            entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        EmbeddingProvider::File { table: EmbeddingTable::from_map("mem", map), dim: 2 }
    }

    fn setup(provider: &EmbeddingProvider, text: &str) -> (EmbeddingMatrix, KeywordIndices) {
        let t = tokenize(text, 6).unwrap();
        let kw = extract_keywords(&t, &Lexicon::default(), None).unwrap().keywords;
        (embed(&t, provider).unwrap(), kw)
    }

    #[test]
    fn no_keywords_is_identity() {
        let p = EmbeddingProvider::Synthetic { seed: 3, dim: 8 };
        let (sg, _) = setup(&p, "a quiet dusk");
        let sb = prompt_balance(&sg, &KeywordIndices::empty(), &p).unwrap();
        assert_eq!(sb.rows, sg.rows);
        assert_eq!(sb.stage, Stage::Balanced);
    }

    #[test]
    fn forced_arithmetic() {
        let p = file_provider(&[
            ("<bos>", vec![1.0, 0.0]),
            ("<eos>", vec![6.0, 8.0]),
            ("a", vec![0.5, 0.5]),
            ("river", vec![0.1, 0.1]),
            ("river@single", vec![3.0, 4.0]),
        ]);
        let (sg, kw) = setup(&p, "a river");
        let sb = prompt_balance(&sg, &kw, &p).unwrap();
        assert_eq!(sb.row(2), &[6.0, 8.0]);
        assert_eq!(sb.row(1), sg.row(1));
    }

    #[test]
    fn already_at_target_norm_is_unscaled() {
        let p = file_provider(&[
            ("<bos>", vec![1.0, 0.0]),
            ("<eos>", vec![0.0, 5.0]),
            ("river", vec![3.0, 4.0]),
        ]);
        let (sg, kw) = setup(&p, "river");
        let sb = prompt_balance(&sg, &kw, &p).unwrap();
        assert_eq!(sb.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn zero_energy_keyword() {
        let p = file_provider(&[
            ("<bos>", vec![1.0, 0.0]),
            ("<eos>", vec![0.0, 5.0]),
            ("river", vec![0.0, 0.0]),
        ]);
        let (sg, kw) = setup(&p, "river");
        assert!(matches!(prompt_balance(&sg, &kw, &p), Err(Error::ZeroEnergyKeyword(_))));
        assert!(matches!(cosine_profile(&sg, &kw, &p), Err(Error::ZeroEnergyKeyword(_))));
    }

    #[test]
    fn energy_values() {
        let rows = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![1.0, 0.0]]).unwrap();
        let s = EmbeddingMatrix::new(rows, Stage::Global, 2).unwrap();
        assert_eq!(energy_profile(&s), vec![(0, 0.0), (1, 5.0), (2, 1.0)]);
    }

    #[test]
    fn cosine_values() {
        let p = file_provider(&[
            ("<bos>", vec![1.0, 0.0]),
            ("<eos>", vec![0.0, 5.0]),
            ("river", vec![1.0, 0.0]),
            ("river@single", vec![0.0, 2.0]),
            ("lake", vec![2.0, 2.0]),
        ]);
        let (sg, kw) = setup(&p, "river lake");
        let cos = cosine_profile(&sg, &kw, &p).unwrap();
        assert_eq!(cos[0], (1, 0.0));
        assert!((cos[1].1 - 1.0).abs() < 1e-15);
        let sb = prompt_balance(&sg, &kw, &p).unwrap();
        for (_, c) in cosine_profile(&sb, &kw, &p).unwrap() {
            assert!((c - 1.0).abs() < 1e-12);
        }
    }
}
