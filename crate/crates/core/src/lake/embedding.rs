//! Deterministic text embeddings.
//!
//! Lowercased text is split into word unigrams and character 3/4/5-grams;
//! each feature is FNV-1a hashed (with a fixed seed) to a signed bucket of a
//! 768-dimensional vector, which is then L2-normalized.

use std::hash::Hasher;

use fnv::FnvHasher;

pub const EMBEDDING_DIM: usize = 768;

const SEED: &[u8] = b"copilot-embedding-v1";
const WORD_WEIGHT: f64 = 1.0;
const NGRAM_WEIGHT: f64 = 0.5;

fn feature_hash(kind: u8, feature: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(SEED);
    h.write_u8(kind);
    h.write(feature.as_bytes());
    h.finish()
}

fn add(v: &mut [f64], kind: u8, feature: &str, weight: f64) {
    let h = feature_hash(kind, feature);
    let idx = (h % EMBEDDING_DIM as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    v[idx] += sign * weight;
}

/// The unit vector for `text`. The empty string (and any text whose
/// features cancel out) maps to the first basis vector.
pub fn text_embedding(text: &str) -> Vec<f64> {
    let lower = text.to_lowercase();
    let mut v = vec![0.0; EMBEDDING_DIM];
    for word in lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        add(&mut v, b'w', word, WORD_WEIGHT);
    }
    let padded: Vec<char> = format!(
        " {} ",
        lower.split_whitespace().collect::<Vec<_>>().join(" ")
    )
    .chars()
    .collect();
    if padded.len() > 2 {
        for n in 3..=5 {
            for gram in padded.windows(n) {
                add(&mut v, b'c', &gram.iter().collect::<String>(), NGRAM_WEIGHT);
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Cosine distance `1 - cos(a, b)`, clamped at 0; identical vectors are at
/// distance exactly 0.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_distance(a, b)
}

/// Little-endian f64 bytes, the engine's storage format for vectors.
pub fn to_blob(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn from_blob(bytes: &[u8]) -> Option<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let a = text_embedding("x");
        assert_eq!(a, text_embedding("x"));
        assert_eq!(a.len(), EMBEDDING_DIM);
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_maps_to_first_basis_vector() {
        let e = text_embedding("");
        assert_eq!(e[0], 1.0);
        assert!(e[1..].iter().all(|x| *x == 0.0));
        assert_eq!(text_embedding("   "), e);
    }

    #[test]
    fn case_insensitive_and_similar_texts_are_close() {
        assert_eq!(
            text_embedding("Harvard University"),
            text_embedding("harvard university")
        );
        let q = text_embedding("Harvard University");
        let near = cosine_distance(&q, &text_embedding("Harvard University Press"));
        let far = cosine_distance(&q, &text_embedding("Dartmouth College"));
        assert!(near < far, "{near} vs {far}");
    }

    #[test]
    fn blob_round_trip() {
        let v = text_embedding("disruption");
        assert_eq!(from_blob(&to_blob(&v)).unwrap(), v);
        assert!(from_blob(&[1, 2, 3]).is_none());
        assert_eq!(cosine_distance(&v, &v), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn every_string_embeds_to_a_unit_vector(s in "\\PC{0,80}") {
            let v = text_embedding(&s);
            prop_assert_eq!(v.len(), EMBEDDING_DIM);
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
