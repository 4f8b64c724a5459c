use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase, trim, collapse internal whitespace and strip trailing
/// punctuation. Idempotent.
pub fn normalize_title(title: &str) -> String {
    let collapsed = title
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Section title classes: class name to the set of normalized titles that
/// belong to it. A title may be listed under several classes; such titles
/// are ambiguous and classify to nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct TitleClassDictionary {
    classes: BTreeMap<String, BTreeSet<String>>,
}

impl From<BTreeMap<String, Vec<String>>> for TitleClassDictionary {
    fn from(raw: BTreeMap<String, Vec<String>>) -> Self {
        let mut dict = TitleClassDictionary::default();
        for (class, titles) in raw {
            dict.insert_class(&class, titles.iter().map(String::as_str));
        }
        dict
    }
}

impl From<TitleClassDictionary> for BTreeMap<String, Vec<String>> {
    fn from(dict: TitleClassDictionary) -> Self {
        dict.classes
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect()
    }
}

impl TitleClassDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds titles to a class, creating the class if needed.
    pub fn insert_class<'a>(&mut self, class: &str, titles: impl IntoIterator<Item = &'a str>) {
        let entry = self.classes.entry(class.to_string()).or_default();
        entry.extend(titles.into_iter().map(normalize_title));
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn titles_of(&self, class: &str) -> Option<&BTreeSet<String>> {
        self.classes.get(class)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Returns the unique class containing the normalized title, or `None`
    /// when the title is in no class or in more than one.
    pub fn classify(&self, title: &str) -> Option<&str> {
        let norm = normalize_title(title);
        let mut hits = self
            .classes
            .iter()
            .filter(|(_, titles)| titles.contains(&norm))
            .map(|(class, _)| class.as_str());
        match (hits.next(), hits.next()) {
            (Some(class), None) => Some(class),
            _ => None,
        }
    }

    /// Section classes of scientific articles, used by the synthetic corpus
    /// generator and as a default when no dictionary file is given.
    pub fn scientific() -> Self {
        let mut d = Self::new();
        d.insert_class("introduction", ["Introduction", "Intro", "Overview", "Motivation"]);
        d.insert_class("background", ["Background", "Preliminaries", "Problem Setting"]);
        d.insert_class("related work", ["Related Work", "Prior Work", "Literature Review"]);
        d.insert_class("methods", ["Methods", "Method", "Methodology", "Approach", "Materials and Methods"]);
        d.insert_class("experiments", ["Experiments", "Experimental Setup", "Evaluation"]);
        d.insert_class("results", ["Results", "Findings", "Main Results"]);
        d.insert_class("discussion", ["Discussion", "Analysis", "Limitations"]);
        d.insert_class(
            "conclusions",
            ["Conclusion", "Conclusions", "Concluding Remarks", "Summary and Outlook"],
        );
        d
    }
}

/// Free-function form of [`TitleClassDictionary::classify`].
pub fn classify_title<'a>(title: &str, dict: &'a TitleClassDictionary) -> Option<&'a str> {
    dict.classify(title)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conclusions() -> TitleClassDictionary {
        let mut d = TitleClassDictionary::new();
        d.insert_class("conclusions", ["conclusion", "conclusions", "concluding remarks"]);
        d
    }

    #[test]
    fn classifies_known_title() {
        assert_eq!(classify_title("Concluding Remarks", &conclusions()), Some("conclusions"));
        assert_eq!(classify_title("  CONCLUSIONS. ", &conclusions()), Some("conclusions"));
    }

    #[test]
    fn unknown_title_has_no_class() {
        assert_eq!(classify_title("zorp", &conclusions()), None);
    }

    #[test]
    fn ambiguous_title_has_no_class() {
        let mut d = conclusions();
        d.insert_class("summary", ["concluding remarks", "summary"]);
        assert_eq!(d.classify("Concluding remarks"), None);
        assert_eq!(d.classify("summary"), Some("summary"));
    }

    #[test]
    fn normalization_is_idempotent() {
        for t in ["  Concluding   Remarks!! ", "Results", "a  b\tc.", ""] {
            let once = normalize_title(t);
            assert_eq!(normalize_title(&once), once);
        }
    }

    #[test]
    fn json_round_trip() {
        let d = TitleClassDictionary::scientific();
        let text = serde_json::to_string(&d).unwrap();
        let back: TitleClassDictionary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }
}
