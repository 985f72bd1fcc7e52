//! Lexical similarity: character edit distance and word n-gram overlap.

use std::collections::HashMap;

/// Levenshtein distance over Unicode scalar values, two-row DP.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - dist / max_len` after case folding; 1 when both are empty.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_distance(&a, &b) as f64 / longest as f64
}

/// Lower-cased words with punctuation removed ("Yat-sen" -> "yatsen").
pub fn word_tokens(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// F1 of the word n-gram multisets. Two inputs without any n-gram score 1
/// only when their token lists are equal.
pub fn ngram_similarity(a: &str, b: &str, n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be at least 1");
    let ta = word_tokens(a);
    let tb = word_tokens(b);
    let ga = ngrams(&ta, n);
    let gb = ngrams(&tb, n);
    let total_a: usize = ga.values().sum();
    let total_b: usize = gb.values().sum();
    if total_a == 0 || total_b == 0 {
        return if total_a == total_b && ta == tb { 1.0 } else { 0.0 };
    }
    let overlap: usize = ga
        .iter()
        .map(|(g, &ca)| gb.get(g).map_or(0, |&cb| ca.min(cb)))
        .sum();
    2.0 * overlap as f64 / (total_a + total_b) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitten_sitting() {
        assert_eq!(levenshtein_distance("kitten", "sitting"), 3);
        assert!((levenshtein_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn transliterations_are_close() {
        // Komnene -> Comnena: K/C and e/a substitutions
        assert_eq!(levenshtein_distance("anna komnene", "anna comnena"), 2);
        let s = levenshtein_similarity("Anna Komnene", "Anna Comnena");
        assert!((s - (1.0 - 2.0 / 12.0)).abs() < 1e-12);
        assert!(s >= 0.80);
    }

    #[test]
    fn edge_cases() {
        assert_eq!(levenshtein_similarity("", ""), 1.0);
        assert_eq!(levenshtein_similarity("abc", ""), 0.0);
        assert_eq!(levenshtein_similarity("Paris", "paris"), 1.0);
        assert_eq!(levenshtein_distance("über", "uber"), 1);
    }

    #[test]
    fn word_order_insensitive_unigrams() {
        assert_eq!(ngram_similarity("Sun Yat-sen", "Yat-sen Sun", 1), 1.0);
        assert_eq!(ngram_similarity("Beijing", "Beijing", 1), 1.0);
        assert_eq!(ngram_similarity("Beijing", "Shanghai", 1), 0.0);
        // bigrams notice the swap
        assert_eq!(ngram_similarity("Sun Yat-sen", "Yat-sen Sun", 2), 0.0);
        assert!((ngram_similarity("Corsican", "Corsican language", 1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(ngram_similarity("", "", 1), 1.0);
        assert_eq!(ngram_similarity("...", "x", 1), 0.0);
    }
}
