//! Bigram collocation detection and substitution: score adjacent word
//! pairs with a discounted pointwise association measure, keep pairs above
//! a threshold, and rewrite the corpus joining accepted bigrams with an
//! underscore ("von willebrand" → "von_willebrand").

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::config::{PhraseScaling, PhrasesConfig};
use crate::error::{Error, Result};

/// Accepted bigrams with their scores plus the counting parameters the
/// table was built with.
#[derive(Debug, Clone, Default)]
pub struct PhraseTable {
    entries: HashMap<(String, String), f64>,
    pub delta: f64,
    pub threshold: f64,
    pub min_count: u64,
    pub corpus_words: u64,
}

impl PhraseTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.entries.contains_key(&(a.to_string(), b.to_string()))
    }

    pub fn score(&self, a: &str, b: &str) -> Option<f64> {
        self.entries.get(&(a.to_string(), b.to_string())).copied()
    }

    /// Entries sorted by descending score, ties by word pair.
    pub fn sorted_entries(&self) -> Vec<(&str, &str, f64)> {
        let mut rows: Vec<(&str, &str, f64)> = self
            .entries
            .iter()
            .map(|((a, b), s)| (a.as_str(), b.as_str(), *s))
            .collect();
        rows.sort_by(|x, y| {
            y.2.partial_cmp(&x.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| (x.0, x.1).cmp(&(y.0, y.1)))
        });
        rows
    }

    /// Writes `word_a<TAB>word_b<TAB>score` rows, best first.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (a, b, s) in self.sorted_entries() {
            writeln!(w, "{a}\t{b}\t{s}")?;
        }
        Ok(())
    }

    /// Reads a table written by [`write_tsv`]. The file carries entries
    /// only; counting parameters are not round-tripped and are left at
    /// permissive values.
    pub fn read_tsv<R: BufRead>(r: R, path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut min_score = f64::INFINITY;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let bad = |message: String| Error::Format {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let a = parts
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| bad("missing word_a".into()))?;
            let b = parts
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| bad("missing word_b".into()))?;
            let score: f64 = parts
                .next()
                .ok_or_else(|| bad("missing score".into()))?
                .parse()
                .map_err(|e| bad(format!("bad score: {e}")))?;
            if parts.next().is_some() {
                return Err(bad("expected exactly 3 tab-separated fields".into()));
            }
            min_score = min_score.min(score);
            entries.insert((a.to_string(), b.to_string()), score);
        }
        let threshold = if entries.is_empty() { 0.0 } else { min_score };
        Ok(PhraseTable {
            entries,
            delta: 0.0,
            threshold,
            min_count: 0,
            corpus_words: 0,
        })
    }
}

/// Exact unigram/bigram counts over a normalized statement stream. Pairs
/// never cross statement boundaries.
pub fn count_ngrams<S: AsRef<str>>(
    corpus: &[S],
) -> (HashMap<String, u64>, HashMap<(String, String), u64>, u64) {
    let mut unigrams: HashMap<String, u64> = HashMap::new();
    let mut bigrams: HashMap<(String, String), u64> = HashMap::new();
    let mut total = 0u64;
    for stmt in corpus {
        let tokens: Vec<&str> = stmt.as_ref().split_whitespace().collect();
        total += tokens.len() as u64;
        for t in &tokens {
            *unigrams.entry((*t).to_string()).or_insert(0) += 1;
        }
        for pair in tokens.windows(2) {
            *bigrams
                .entry((pair[0].to_string(), pair[1].to_string()))
                .or_insert(0) += 1;
        }
    }
    (unigrams, bigrams, total)
}

/// Discounted association score of an adjacent pair:
/// `(c_ab − δ) / (c_a · c_b) × scale`, where `scale` is the corpus token
/// count by default, or 1 for the literal formula.
pub fn score_bigram(
    c_ab: u64,
    c_a: u64,
    c_b: u64,
    delta: f64,
    scale: f64,
) -> Result<f64> {
    if c_a == 0 || c_b == 0 {
        return Err(Error::Data(format!(
            "bigram scoring requires positive component counts; got {c_a} and {c_b}"
        )));
    }
    Ok((c_ab as f64 - delta) / (c_a as f64 * c_b as f64) * scale)
}

/// Single pass over adjacent-pair candidates; keeps pairs whose component
/// counts reach `min_count` and whose score reaches the threshold. Bigrams
/// only — no trigrams, no iterated passes.
pub fn detect_phrases<S: AsRef<str>>(corpus: &[S], cfg: &PhrasesConfig) -> Result<PhraseTable> {
    let (unigrams, bigrams, total) = count_ngrams(corpus);
    let scale = match cfg.scaling {
        PhraseScaling::Corpus => total as f64,
        PhraseScaling::Literal => 1.0,
    };
    let mut entries = HashMap::new();
    for ((a, b), c_ab) in bigrams {
        let c_a = unigrams[&a];
        let c_b = unigrams[&b];
        if c_a < cfg.min_count || c_b < cfg.min_count {
            continue;
        }
        if (c_ab as f64) <= cfg.delta {
            continue;
        }
        let score = score_bigram(c_ab, c_a, c_b, cfg.delta, scale)?;
        if score >= cfg.threshold {
            entries.insert((a, b), score);
        }
    }
    Ok(PhraseTable {
        entries,
        delta: cfg.delta,
        threshold: cfg.threshold,
        min_count: cfg.min_count,
        corpus_words: total,
    })
}

/// Greedy left-to-right substitution: an adjacent pair present in the
/// table is joined as `a_b`; a token consumed by a join is not reused, so
/// "a b c" with both (a,b) and (b,c) accepted becomes "a_b c".
pub fn apply_phrases(text: &str, table: &PhraseTable) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < tokens.len() {
        if !out.is_empty() {
            out.push(' ');
        }
        if i + 1 < tokens.len() && table.contains(tokens[i], tokens[i + 1]) {
            out.push_str(tokens[i]);
            out.push('_');
            out.push_str(tokens[i + 1]);
            i += 2;
        } else {
            out.push_str(tokens[i]);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(delta: f64, threshold: f64, min_count: u64, scaling: PhraseScaling) -> PhrasesConfig {
        PhrasesConfig {
            enabled: true,
            delta,
            threshold,
            min_count,
            scaling,
        }
    }

    fn table_of(pairs: &[(&str, &str)]) -> PhraseTable {
        let mut t = PhraseTable {
            threshold: 1.0,
            ..PhraseTable::default()
        };
        for (a, b) in pairs {
            t.entries.insert((a.to_string(), b.to_string()), 1.0);
        }
        t
    }

    #[test]
    fn count_ngrams_hand_example() {
        let (uni, bi, n) = count_ngrams(&["a b a"]);
        assert_eq!(n, 3);
        assert_eq!(uni["a"], 2);
        assert_eq!(uni["b"], 1);
        assert_eq!(bi[&("a".to_string(), "b".to_string())], 1);
        assert_eq!(bi[&("b".to_string(), "a".to_string())], 1);
    }

    #[test]
    fn count_ngrams_does_not_cross_statements() {
        let (_, bi, n) = count_ngrams(&["a b", "b a"]);
        assert_eq!(n, 4);
        assert_eq!(bi[&("a".to_string(), "b".to_string())], 1);
        assert_eq!(bi[&("b".to_string(), "a".to_string())], 1);
        assert!(!bi.contains_key(&("b".to_string(), "b".to_string())));
    }

    #[test]
    fn count_ngrams_matches_naive_recount() {
        // pseudo-random corpus from a tiny fixed vocabulary
        let vocab = ["alpha", "beta", "gamma", "delta"];
        let mut corpus = Vec::new();
        let mut state = 12345u64;
        for _ in 0..1000 {
            let mut stmt = Vec::new();
            for _ in 0..5 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                stmt.push(vocab[(state >> 33) as usize % vocab.len()]);
            }
            corpus.push(stmt.join(" "));
        }
        let (uni, bi, n) = count_ngrams(&corpus);

        // independent recount: brute-force scan per statement
        let mut n2 = 0u64;
        let mut uni2: HashMap<String, u64> = HashMap::new();
        let mut bi2: HashMap<(String, String), u64> = HashMap::new();
        for stmt in &corpus {
            let toks: Vec<&str> = stmt.split(' ').collect();
            for (i, t) in toks.iter().enumerate() {
                n2 += 1;
                *uni2.entry((*t).to_string()).or_default() += 1;
                if i > 0 {
                    *bi2.entry((toks[i - 1].to_string(), (*t).to_string())).or_default() += 1;
                }
            }
        }
        assert_eq!(n, n2);
        assert_eq!(uni, uni2);
        assert_eq!(bi, bi2);
    }

    #[test]
    fn score_bigram_formula() {
        assert_eq!(score_bigram(30, 100, 50, 20.0, 1000.0).unwrap(), 2.0);
        assert_eq!(score_bigram(20, 7, 9, 20.0, 1000.0).unwrap(), 0.0);
        assert_eq!(score_bigram(30, 100, 50, 20.0, 1.0).unwrap(), 0.002);
        assert!(score_bigram(5, 0, 3, 20.0, 1.0).is_err());
    }

    #[test]
    fn detect_accepts_constant_collocation() {
        // "sunitinib malate" always co-occurs; filler words push the corpus
        // size high enough for the scaled score to clear the threshold.
        let mut corpus: Vec<String> = (0..50).map(|_| "sunitinib malate".to_string()).collect();
        for _ in 0..42_000 {
            corpus.push("filler".to_string());
        }
        let table = detect_phrases(&corpus, &cfg(20.0, 500.0, 20, PhraseScaling::Corpus)).unwrap();
        assert!(table.contains("sunitinib", "malate"));
        let score = table.score("sunitinib", "malate").unwrap();
        assert!((score - (30.0 / 2500.0) * 42_100.0).abs() < 1e-9);
    }

    #[test]
    fn detect_rejects_pairs_at_or_below_discount() {
        // pair count exactly δ → score 0 → below any positive threshold
        let corpus: Vec<String> = (0..20).map(|_| "rare pair".to_string()).collect();
        let table = detect_phrases(&corpus, &cfg(20.0, 1e-9, 1, PhraseScaling::Corpus)).unwrap();
        assert!(table.is_empty());
    }

    #[test]
    fn detect_respects_min_count() {
        let mut corpus: Vec<String> = (0..30).map(|_| "aa bb".to_string()).collect();
        corpus.push("cc".to_string());
        // components occur 30 times; min_count 31 shuts them out
        let table = detect_phrases(&corpus, &cfg(1.0, 1e-9, 31, PhraseScaling::Corpus)).unwrap();
        assert!(table.is_empty());
        let table = detect_phrases(&corpus, &cfg(1.0, 1e-9, 30, PhraseScaling::Corpus)).unwrap();
        assert!(table.contains("aa", "bb"));
    }

    #[test]
    fn detect_empty_corpus_gives_empty_table() {
        let table = detect_phrases::<&str>(&[], &PhrasesConfig::default()).unwrap();
        assert!(table.is_empty());
    }

    #[test]
    fn apply_joins_accepted_pairs() {
        let table = table_of(&[("von", "willebrand")]);
        assert_eq!(
            apply_phrases("von willebrand factor", &table),
            "von_willebrand factor"
        );
    }

    #[test]
    fn apply_with_empty_table_is_identity() {
        let table = PhraseTable::default();
        assert_eq!(apply_phrases("a b c", &table), "a b c");
    }

    #[test]
    fn apply_is_greedy_without_overlap() {
        let table = table_of(&[("a", "b"), ("b", "c")]);
        assert_eq!(apply_phrases("a b c", &table), "a_b c");
        assert_eq!(apply_phrases("x a b c", &table), "x a_b c");
        assert_eq!(apply_phrases("b c a b", &table), "b_c a_b");
    }

    #[test]
    fn tsv_round_trip_sorted_descending() {
        let corpus: Vec<String> = (0..50)
            .map(|_| "sunitinib malate imatinib mesylate".to_string())
            .collect();
        let table = detect_phrases(&corpus, &cfg(1.0, 1e-9, 1, PhraseScaling::Corpus)).unwrap();
        assert!(!table.is_empty());
        let mut buf = Vec::new();
        table.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let scores: Vec<f64> = text
            .lines()
            .map(|l| l.rsplit('\t').next().unwrap().parse().unwrap())
            .collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));

        let loaded = PhraseTable::read_tsv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(loaded.len(), table.len());
        for (a, b, s) in table.sorted_entries() {
            assert!((loaded.score(a, b).unwrap() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn tsv_rejects_malformed_rows() {
        assert!(PhraseTable::read_tsv(&b"one_field\n"[..], Path::new("mem")).is_err());
        assert!(PhraseTable::read_tsv(&b"a\tb\tnot_a_number\n"[..], Path::new("mem")).is_err());
        assert!(PhraseTable::read_tsv(&b"a\tb\t1.0\textra\n"[..], Path::new("mem")).is_err());
    }

    proptest! {
        #[test]
        fn apply_preserves_token_multiset(
            tokens in proptest::collection::vec("[a-z]{2,6}", 0..30),
            pair_picks in proptest::collection::vec((0usize..30, 0usize..30), 0..5),
        ) {
            // build a table from token pairs actually present
            let mut table = PhraseTable { threshold: 1.0, ..PhraseTable::default() };
            for (i, j) in pair_picks {
                if i < tokens.len() && j < tokens.len() {
                    table.entries.insert((tokens[i].clone(), tokens[j].clone()), 1.0);
                }
            }
            let text = tokens.join(" ");
            let joined = apply_phrases(&text, &table);
            let recovered: Vec<&str> = joined
                .split_whitespace()
                .flat_map(|t| t.split('_'))
                .collect();
            prop_assert_eq!(recovered, tokens.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        }

        #[test]
        fn score_monotonic_in_counts(
            c_ab in 21u64..1000,
            c_a in 1u64..1000,
            c_b in 1u64..1000,
        ) {
            let delta = 20.0;
            let s = score_bigram(c_ab, c_a, c_b, delta, 1000.0).unwrap();
            let s_more_pair = score_bigram(c_ab + 1, c_a, c_b, delta, 1000.0).unwrap();
            let s_more_a = score_bigram(c_ab, c_a + 1, c_b, delta, 1000.0).unwrap();
            let s_more_b = score_bigram(c_ab, c_a, c_b + 1, delta, 1000.0).unwrap();
            prop_assert!(s_more_pair > s);
            prop_assert!(s_more_a < s);
            prop_assert!(s_more_b < s);
        }

        #[test]
        fn lowering_threshold_grows_table(
            stmts in proptest::collection::vec(
                proptest::collection::vec("[ab]{1,2}", 2..6), 1..40),
        ) {
            let corpus: Vec<String> = stmts.iter().map(|s| s.join(" ")).collect();
            let hi = detect_phrases(&corpus, &cfg(1.0, 2.0, 1, PhraseScaling::Corpus)).unwrap();
            let lo = detect_phrases(&corpus, &cfg(1.0, 0.5, 1, PhraseScaling::Corpus)).unwrap();
            let inf = detect_phrases(&corpus, &cfg(1.0, f64::INFINITY, 1, PhraseScaling::Corpus)).unwrap();
            prop_assert!(inf.is_empty());
            for (a, b, s) in hi.sorted_entries() {
                prop_assert_eq!(lo.score(a, b), Some(s));
            }
            prop_assert!(lo.len() >= hi.len());
        }
    }
}
