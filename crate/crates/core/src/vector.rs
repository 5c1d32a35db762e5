//! Hashed TF-IDF vectors for semantic relevance.
//!
//! Content and queries are embedded into a fixed 256-dimensional space with
//! no external models: tokens are FNV-1a-hashed into bins, weighted by
//! sublinear term frequency times a corpus-fitted inverse document
//! frequency, and L2-normalized. Empty or stopword-free-of-signal text
//! embeds to the all-zero vector, which has similarity 0 to everything.

/// Dimension of every vector in the system.
pub const DIM: usize = 256;

/// Lowercased runs of ASCII alphanumerics. Everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            current.push(ch.to_ascii_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn fnv1a(token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for byte in token.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Bin index for a token.
pub fn bin(token: &str) -> usize {
    (fnv1a(token) % DIM as u64) as usize
}

/// A fitted embedding function. Fit once over the ingested corpus, then use
/// the same instance for both unit content and queries so they share a space.
#[derive(Debug, Clone)]
pub struct Vectorizer {
    idf: Vec<f64>,
}

impl Vectorizer {
    /// IDF of 1.0 everywhere — usable before any corpus exists.
    pub fn uniform() -> Self {
        Vectorizer {
            idf: vec![1.0; DIM],
        }
    }

    /// Fit bin-level document frequencies over a corpus. Uses the smoothed
    /// formulation idf = ln((1 + N) / (1 + df)) + 1 so unseen bins still get
    /// a finite, positive weight.
    pub fn fit<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df = vec![0u64; DIM];
        let mut n_docs = 0u64;
        for doc in docs {
            n_docs += 1;
            let mut seen = vec![false; DIM];
            for token in tokenize(doc) {
                seen[bin(&token)] = true;
            }
            for (b, hit) in seen.iter().enumerate() {
                if *hit {
                    df[b] += 1;
                }
            }
        }
        let idf = df
            .iter()
            .map(|&d| ((1 + n_docs) as f64 / (1 + d) as f64).ln() + 1.0)
            .collect();
        Vectorizer { idf }
    }

    /// Embed text into the shared space: sublinear TF × fitted IDF,
    /// L2-normalized. Textless input yields the all-zero vector.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut counts = vec![0u64; DIM];
        for token in tokenize(text) {
            counts[bin(&token)] += 1;
        }
        let mut v: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(b, &c)| {
                if c == 0 {
                    0.0
                } else {
                    (1.0 + (c as f64).ln()) * self.idf[b]
                }
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

/// Cosine similarity. Either side all-zero (or empty) ⇒ 0. Output clamped to
/// [0, 1]; TF-IDF vectors are non-negative so the natural range is already
/// [0, 1] up to floating-point jitter.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.is_empty() {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(
            tokenize("Henderson's Q3-report, v2"),
            vec!["henderson", "s", "q3", "report", "v2"]
        );
        assert!(tokenize("  \n\t ").is_empty());
    }

    #[test]
    fn embeddings_are_unit_norm_or_zero() {
        let vz = Vectorizer::uniform();
        let v = vz.embed("renewal pipeline for the henderson account");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let zero = vz.embed("");
        assert!(zero.iter().all(|&x| x == 0.0));
        assert_eq!(zero.len(), DIM);
    }

    #[test]
    fn cosine_self_is_one_and_zero_vector_is_zero() {
        let vz = Vectorizer::uniform();
        let v = vz.embed("quarterly sales forecast");
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
        let zero = vec![0.0; DIM];
        assert_eq!(cosine(&v, &zero), 0.0);
        assert_eq!(cosine(&zero, &zero), 0.0);
    }

    #[test]
    fn related_text_scores_above_unrelated() {
        let docs = [
            "henderson account renewal negotiation and contract value",
            "meridian group rollout milestones and delivery schedule",
            "employee onboarding policy and benefits enrollment",
        ];
        let vz = Vectorizer::fit(docs.iter().copied());
        let q = vz.embed("henderson renewal status");
        let related = vz.embed(docs[0]);
        let unrelated = vz.embed(docs[2]);
        assert!(cosine(&q, &related) > cosine(&q, &unrelated));
        assert!(cosine(&q, &related) > 0.3);
    }

    #[test]
    fn embedding_is_deterministic() {
        let docs = ["alpha beta gamma", "beta gamma delta"];
        let a = Vectorizer::fit(docs.iter().copied()).embed("beta delta");
        let b = Vectorizer::fit(docs.iter().copied()).embed("beta delta");
        assert_eq!(a, b);
    }
}
