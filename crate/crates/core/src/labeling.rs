//! ROUGE-1/2/L scoring and greedy ORACLE label generation.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::{content_tokens, Document};
use crate::error::{Error, Result};

/// Precision, recall and F1 of one ROUGE variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        let precision = if cand_total == 0 { 0.0 } else { overlap as f64 / cand_total as f64 };
        let recall = if ref_total == 0 { 0.0 } else { overlap as f64 / ref_total as f64 };
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

impl RougeScore {
    pub fn r1(&self) -> f64 {
        self.rouge1.f1
    }

    pub fn r2(&self) -> f64 {
        self.rouge2.f1
    }

    pub fn rl(&self) -> f64 {
        self.rouge_l.f1
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram overlap between two token sequences.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(overlap, cand.values().sum(), refc.values().sum())
}

/// Longest-common-subsequence ROUGE between two token sequences.
pub fn rouge_l<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Prf {
    let l = lcs_len(candidate, reference);
    Prf::from_counts(l, candidate.len(), reference.len())
}

/// LCS length by bit-parallel row updates (Allison–Dix / Hyyrö), word-sized
/// blocks over the reference sequence.
pub fn lcs_len<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let words = b.len().div_ceil(64);
    let mut masks: HashMap<&T, Vec<u64>> = HashMap::new();
    for (j, t) in b.iter().enumerate() {
        masks.entry(t).or_insert_with(|| vec![0; words])[j / 64] |= 1 << (j % 64);
    }
    let zero = vec![0u64; words];
    // Row state: ones mark columns not yet matched.
    let mut v = vec![u64::MAX; words];
    for t in a {
        let m = masks.get(t).unwrap_or(&zero);
        let mut carry = 0u64;
        for k in 0..words {
            let u = v[k] & m[k];
            let (s1, c1) = v[k].overflowing_add(u);
            let (s2, c2) = s1.overflowing_add(carry);
            carry = (c1 || c2) as u64;
            v[k] = s2 | (v[k] - u);
        }
    }
    let tail = b.len() % 64;
    (0..words)
        .map(|k| {
            let mask = if k == words - 1 && tail != 0 { (1u64 << tail) - 1 } else { u64::MAX };
            (!v[k] & mask).count_ones() as usize
        })
        .sum()
}

/// Summary-level ROUGE between sentence lists. N-grams never span sentence
/// boundaries; for ROUGE-L the sentences are concatenated with a break that
/// matches nothing and is not counted as a token.
pub fn rouge_summary<S: AsRef<str>, R: AsRef<str>>(candidate: &[S], reference: &[R]) -> RougeScore {
    let cand: Vec<Vec<String>> = candidate.iter().map(|s| content_tokens(s.as_ref())).collect();
    let refs: Vec<Vec<String>> = reference.iter().map(|s| content_tokens(s.as_ref())).collect();
    rouge_summary_tokens(&cand, &refs)
}

pub(crate) fn rouge_summary_tokens(cand: &[Vec<String>], refs: &[Vec<String>]) -> RougeScore {
    let r1 = prf_sentences(cand, refs, 1);
    let r2 = prf_sentences(cand, refs, 2);
    let cflat: Vec<&String> = cand.iter().flatten().collect();
    let rflat: Vec<&String> = refs.iter().flatten().collect();
    RougeScore {
        rouge1: r1,
        rouge2: r2,
        rouge_l: rouge_l(&cflat, &rflat),
    }
}

fn sentence_ngrams(sents: &[Vec<String>], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for s in sents {
        for (g, c) in ngram_counts(s, n) {
            *m.entry(g).or_insert(0) += c;
        }
    }
    m
}

fn prf_sentences(cand: &[Vec<String>], refs: &[Vec<String>], n: usize) -> Prf {
    let c = sentence_ngrams(cand, n);
    let r = sentence_ngrams(refs, n);
    let overlap: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    Prf::from_counts(overlap, c.values().sum(), r.values().sum())
}

/// Greedy ORACLE result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleLabels {
    /// One 0/1 label per sentence in document order.
    pub labels: Vec<u8>,
    /// Sentence indices in the order they were picked.
    pub picks: Vec<usize>,
    /// Objective (ROUGE-1 F1 + ROUGE-2 F1) after each pick.
    pub objective_trace: Vec<f64>,
    pub score: RougeScore,
}

impl OracleLabels {
    /// Chosen sentence indices in document order.
    pub fn chosen(&self) -> Vec<usize> {
        let mut c = self.picks.clone();
        c.sort_unstable();
        c
    }
}

/// Incremental n-gram bookkeeping for the greedy search.
struct OracleState<'a> {
    refs1: HashMap<&'a [String], usize>,
    refs2: HashMap<&'a [String], usize>,
    ref_total1: usize,
    ref_total2: usize,
}

impl<'a> OracleState<'a> {
    fn new(refs: &'a [Vec<String>]) -> Self {
        let refs1 = sentence_ngrams(refs, 1);
        let refs2 = sentence_ngrams(refs, 2);
        OracleState {
            ref_total1: refs1.values().sum(),
            ref_total2: refs2.values().sum(),
            refs1,
            refs2,
        }
    }

    fn objective(&self, selected: &[&'a Vec<String>]) -> f64 {
        let mut c1: HashMap<&[String], usize> = HashMap::new();
        let mut c2: HashMap<&[String], usize> = HashMap::new();
        for s in selected {
            for (g, k) in ngram_counts(s, 1) {
                *c1.entry(g).or_insert(0) += k;
            }
            for (g, k) in ngram_counts(s, 2) {
                *c2.entry(g).or_insert(0) += k;
            }
        }
        let score = |c: &HashMap<&[String], usize>, r: &HashMap<&[String], usize>, rt: usize| {
            let overlap: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
            Prf::from_counts(overlap, c.values().sum(), rt).f1
        };
        score(&c1, &self.refs1, self.ref_total1) + score(&c2, &self.refs2, self.ref_total2)
    }
}

/// ROUGE-1 F1 + ROUGE-2 F1 of a sentence subset against the gold summary.
pub fn oracle_objective(doc_tokens: &[Vec<String>], gold_tokens: &[Vec<String>], subset: &[usize]) -> f64 {
    let state = OracleState::new(gold_tokens);
    let selected: Vec<&Vec<String>> = subset.iter().map(|&i| &doc_tokens[i]).collect();
    state.objective(&selected)
}

/// Greedily adds the sentence that most increases ROUGE-1 F1 + ROUGE-2 F1
/// of the selection against the gold summary; stops when nothing strictly
/// improves the objective or `max_sentences` are chosen. Ties go to the
/// lower sentence index.
pub fn oracle_labels(doc: &Document, max_sentences: usize) -> Result<OracleLabels> {
    if doc.gold_summary().is_empty() {
        return Err(Error::EmptyInput("document has no gold summary"));
    }
    if max_sentences == 0 {
        return Err(Error::Config("max_oracle_sentences must be at least 1".into()));
    }
    let sents: Vec<Vec<String>> = doc.sentences().map(|s| content_tokens(s.text())).collect();
    let gold: Vec<Vec<String>> = doc.gold_summary().iter().map(|s| content_tokens(s)).collect();
    Ok(greedy_oracle(&sents, &gold, max_sentences))
}

pub(crate) fn greedy_oracle(sents: &[Vec<String>], gold: &[Vec<String>], max_sentences: usize) -> OracleLabels {
    let state = OracleState::new(gold);
    let mut picks: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut current = 0.0;
    while picks.len() < max_sentences {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..sents.len() {
            if picks.contains(&i) {
                continue;
            }
            let mut subset = picks.clone();
            subset.push(i);
            subset.sort_unstable();
            let selected: Vec<&Vec<String>> = subset.iter().map(|&k| &sents[k]).collect();
            let value = state.objective(&selected);
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((i, value));
            }
        }
        match best {
            Some((i, value)) if value > current => {
                picks.push(i);
                trace.push(value);
                current = value;
            }
            _ => break,
        }
    }
    let mut labels = vec![0u8; sents.len()];
    for &p in &picks {
        labels[p] = 1;
    }
    let mut chosen = picks.clone();
    chosen.sort_unstable();
    let cand: Vec<Vec<String>> = chosen.iter().map(|&i| sents[i].clone()).collect();
    OracleLabels {
        labels,
        picks,
        objective_trace: trace,
        score: rouge_summary_tokens(&cand, gold),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        content_tokens(s)
    }

    fn lcs_dp<T: Eq>(a: &[T], b: &[T]) -> usize {
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                dp[i][j] = if a[i - 1] == b[j - 1] {
                    dp[i - 1][j - 1] + 1
                } else {
                    dp[i - 1][j].max(dp[i][j - 1])
                };
            }
        }
        dp[a.len()][b.len()]
    }

    #[test]
    fn cat_fixture() {
        let c = toks("the cat sat");
        let r = toks("the cat ran");
        assert!((rouge_n(&c, &r, 1).f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((rouge_n(&c, &r, 2).f1 - 0.5).abs() < 1e-12);
        assert_eq!(lcs_len(&c, &r), 2);
        assert!((rouge_l(&c, &r).f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        let a = toks("a b c d");
        assert_eq!(rouge_n(&a, &a, 1).f1, 1.0);
        assert_eq!(rouge_n(&a, &a, 2).f1, 1.0);
        assert_eq!(rouge_l(&a, &a).f1, 1.0);
        let b = toks("x y z");
        assert_eq!(rouge_n(&a, &b, 1), Prf::default());
        assert_eq!(rouge_n(&a, &b, 2), Prf::default());
        let empty: Vec<String> = vec![];
        assert_eq!(rouge_l(&empty, &a), Prf::default());
    }

    #[test]
    fn lcs_crosses_word_boundary() {
        let a: Vec<u32> = (0..200).map(|i| i % 7).collect();
        let b: Vec<u32> = (0..150).map(|i| (i * 3) % 7).collect();
        assert_eq!(lcs_len(&a, &b), lcs_dp(&a, &b));
    }

    #[test]
    fn oracle_exact_match_stops_after_one() {
        let doc = Document::from_parts(
            "d",
            vec![(None, vec!["alpha beta gamma.", "delta epsilon zeta.", "eta theta iota kappa."])],
            vec!["eta theta iota kappa.".into()],
        )
        .unwrap();
        let o = oracle_labels(&doc, 3).unwrap();
        assert_eq!(o.labels, vec![0, 0, 1]);
        assert_eq!(o.picks, vec![2]);
    }

    #[test]
    fn oracle_requires_summary() {
        let doc = Document::from_parts("d", vec![(None, vec!["a b."])], vec![]).unwrap();
        assert!(oracle_labels(&doc, 3).is_err());
    }

    proptest! {
        #[test]
        fn lcs_matches_dp(a in proptest::collection::vec(0u8..6, 0..60), b in proptest::collection::vec(0u8..6, 0..60)) {
            prop_assert_eq!(lcs_len(&a, &b), lcs_dp(&a, &b));
        }

        #[test]
        fn self_rouge_is_one(a in proptest::collection::vec(0u8..20, 2..40)) {
            prop_assert_eq!(rouge_n(&a, &a, 1).f1, 1.0);
            prop_assert_eq!(rouge_n(&a, &a, 2).f1, 1.0);
            prop_assert_eq!(rouge_l(&a, &a).f1, 1.0);
        }

        #[test]
        fn relabeling_invariance(a in proptest::collection::vec(0u8..10, 0..30), b in proptest::collection::vec(0u8..10, 0..30), shift in 1u8..9) {
            let relabel = |v: &[u8]| v.iter().map(|x| (x + shift) % 10 + 100).collect::<Vec<u8>>();
            for n in [1, 2] {
                prop_assert_eq!(rouge_n(&a, &b, n), rouge_n(&relabel(&a), &relabel(&b), n));
            }
        }
    }
}
