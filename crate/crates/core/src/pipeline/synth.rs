use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TitleClassDictionary};
use crate::error::{Error, Result};

/// Shape of a synthetic corpus and its label-planting rule.
///
/// Section 0 is always titled from `intro_class`; the remaining sections
/// draw distinct classes (boosted classes first) in shuffled order. A
/// sentence is a planted positive with probability `base_prob`, plus
/// `first_boost` for the first sentence of a section, `last_boost` for the
/// last one and the class boost of its section, capped at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub sections_per_doc: usize,
    pub sentences_per_section: usize,
    pub vocab_size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub base_prob: f64,
    pub first_boost: f64,
    pub last_boost: f64,
    pub class_boosts: BTreeMap<String, f64>,
    pub intro_class: String,
    /// Probability of replacing each gold-summary word with a random one.
    pub summary_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_train: 500,
            n_valid: 60,
            n_test: 100,
            sections_per_doc: 6,
            sentences_per_section: 8,
            vocab_size: 400,
            min_words: 5,
            max_words: 10,
            base_prob: 0.01,
            first_boost: 0.05,
            last_boost: 0.55,
            class_boosts: BTreeMap::from([("conclusions".to_string(), 0.2)]),
            intro_class: "introduction".to_string(),
            summary_noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<Document>,
    pub valid: Vec<Document>,
    pub test: Vec<Document>,
}

impl SyntheticSpec {
    pub fn validate(&self, dict: &TitleClassDictionary) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sections_per_doc == 0 || self.sentences_per_section == 0 || self.min_words == 0 {
            return bad("synthetic documents need at least one section, sentence and word".into());
        }
        if self.min_words > self.max_words {
            return bad("min_words exceeds max_words".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        let probs = [self.base_prob, self.first_boost, self.last_boost, self.summary_noise];
        if probs.iter().chain(self.class_boosts.values()).any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        for class in self.class_boosts.keys().chain([&self.intro_class]) {
            if dict.titles_of(class).is_none() {
                return bad(format!("class {class:?} is not in the title dictionary"));
            }
        }
        let others = dict.class_names().filter(|c| *c != self.intro_class).count();
        if self.sections_per_doc - 1 > others {
            return bad(format!("{} sections need more than {others} non-intro classes", self.sections_per_doc));
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "nu", "ra", "se", "ti", "vo", "be", "da", "fu", "gi", "ho", "ja", "ke", "ma", "no", "pi", "ru", "zo",
];

fn make_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.random_range(2..=4);
        let w: String = (0..len).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn generate_synthetic(spec: &SyntheticSpec, dict: &TitleClassDictionary) -> Result<SyntheticCorpus> {
    spec.validate(dict)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words = make_words(spec.vocab_size, &mut rng);
    let boosted: Vec<&str> = spec
        .class_boosts
        .iter()
        .filter(|(c, &b)| b > 0.0 && **c != spec.intro_class)
        .map(|(c, _)| c.as_str())
        .collect();
    let rest: Vec<&str> = dict
        .class_names()
        .filter(|c| *c != spec.intro_class && !boosted.contains(c))
        .collect();
    let mut make = |prefix: &str, count: usize| -> Result<Vec<Document>> {
        (0..count)
            .map(|i| make_doc(&format!("{prefix}-{i:05}"), spec, dict, &words, &boosted, &rest, &mut rng))
            .collect()
    };
    Ok(SyntheticCorpus {
        train: make("train", spec.n_train)?,
        valid: make("valid", spec.n_valid)?,
        test: make("test", spec.n_test)?,
    })
}

fn make_doc(
    id: &str,
    spec: &SyntheticSpec,
    dict: &TitleClassDictionary,
    words: &[String],
    boosted: &[&str],
    rest: &[&str],
    rng: &mut ChaCha8Rng,
) -> Result<Document> {
    let tail = spec.sections_per_doc - 1;
    let mut classes: Vec<&str> = boosted.iter().copied().take(tail).collect();
    let mut pool = rest.to_vec();
    pool.shuffle(rng);
    classes.extend(pool.into_iter().take(tail - classes.len()));
    classes.shuffle(rng);
    classes.insert(0, spec.intro_class.as_str());

    let mut sections = Vec::with_capacity(classes.len());
    let mut positive = Vec::new();
    let mut boosted_slots = Vec::new();
    let last = spec.sentences_per_section - 1;
    for class in &classes {
        let titles: Vec<&String> = dict.titles_of(class).expect("validated").iter().collect();
        let title = titles.choose(rng).expect("classes have titles").to_string();
        let boost = spec.class_boosts.get(*class).copied().unwrap_or(0.0);
        let mut sentences = Vec::with_capacity(spec.sentences_per_section);
        for b in 0..spec.sentences_per_section {
            let len = rng.random_range(spec.min_words..=spec.max_words);
            let text = (0..len)
                .map(|_| words.choose(rng).expect("non-empty").as_str())
                .collect::<Vec<_>>()
                .join(" ")
                + ".";
            let mut p = spec.base_prob + boost;
            if b == 0 {
                p += spec.first_boost;
            }
            if b == last {
                p += spec.last_boost;
            }
            positive.push(rng.random_bool(p.min(1.0)));
            if boost > 0.0 {
                boosted_slots.push(positive.len() - 1);
            }
            sentences.push(text);
        }
        sections.push((title, sentences));
    }
    if !boosted_slots.is_empty() && !boosted_slots.iter().any(|&i| positive[i]) {
        positive[*boosted_slots.choose(rng).expect("non-empty")] = true;
    }
    if !positive.iter().any(|&p| p) {
        let i = rng.random_range(0..positive.len());
        positive[i] = true;
    }
    let texts: Vec<&String> = sections.iter().flat_map(|(_, s)| s).collect();
    let summary = texts
        .iter()
        .zip(&positive)
        .filter(|(_, &p)| p)
        .map(|(t, _)| {
            let body = t.trim_end_matches('.');
            body.split(' ')
                .map(|w| {
                    if rng.random_bool(spec.summary_noise) {
                        words.choose(rng).expect("non-empty").as_str()
                    } else {
                        w
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
                + "."
        })
        .collect();
    let parts = sections
        .iter()
        .map(|(t, s)| (Some(t.as_str()), s.iter().map(String::as_str).collect()))
        .collect();
    Document::from_parts(id, parts, summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{classify_title, corpus_stats, Hierarchy};
    use crate::labeling::rouge_summary;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_train: 30,
            n_valid: 5,
            n_test: 5,
            sections_per_doc: 4,
            sentences_per_section: 3,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_structured() {
        let dict = TitleClassDictionary::scientific();
        let a = generate_synthetic(&small(4), &dict).unwrap();
        assert_eq!(a, generate_synthetic(&small(4), &dict).unwrap());
        assert_ne!(a.train, generate_synthetic(&small(5), &dict).unwrap().train);
        let stats = corpus_stats(&a.train, Hierarchy::Sections).unwrap();
        assert_eq!(stats.avg_hi_width, 3.0);
        for d in &a.train {
            assert_eq!(d.sections().len(), 4);
            assert_eq!(classify_title(d.sections()[0].title().unwrap(), &dict), Some("introduction"));
        }
    }

    #[test]
    fn boosted_class_always_in_summary() {
        let dict = TitleClassDictionary::scientific();
        let spec = SyntheticSpec {
            base_prob: 0.0,
            first_boost: 0.0,
            last_boost: 0.0,
            summary_noise: 0.0,
            ..small(1)
        };
        let corpus = generate_synthetic(&spec, &dict).unwrap();
        for d in &corpus.train {
            let concl: Vec<String> = d
                .sections()
                .iter()
                .filter(|s| classify_title(s.title().unwrap(), &dict) == Some("conclusions"))
                .flat_map(|s| s.sentences().iter().map(|x| x.text().to_string()))
                .collect();
            assert!(d.gold_summary().iter().any(|g| concl.contains(g)));
            assert!(rouge_summary(d.gold_summary(), d.gold_summary()).r1() > 0.99);
        }
    }

    #[test]
    fn rejects_infeasible_specs() {
        let dict = TitleClassDictionary::scientific();
        assert!(generate_synthetic(&SyntheticSpec { sentences_per_section: 0, ..small(1) }, &dict).is_err());
        assert!(generate_synthetic(&SyntheticSpec { base_prob: 1.5, ..small(1) }, &dict).is_err());
        assert!(generate_synthetic(&SyntheticSpec { sections_per_doc: 20, ..small(1) }, &dict).is_err());
    }
}
