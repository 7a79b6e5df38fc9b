use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use crate::{Error, Result};

const DEFAULT_STOPLIST: &str = include_str!("../../data/stoplist.txt");

/// Caption tags that do not denote a single object: adjectives and
/// whole-scene descriptions. Matching is case-insensitive on trimmed text.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionStoplist {
    pub exact_terms: BTreeSet<String>,
    /// Terms grouped by the `## <name>` section they were listed under.
    pub categories: BTreeMap<String, BTreeSet<String>>,
}

impl Default for CaptionStoplist {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPLIST)
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl CaptionStoplist {
    /// Parses newline-delimited phrases. `#` starts a comment line and
    /// `## name` opens a category.
    pub fn parse(text: &str) -> Self {
        let mut exact_terms = BTreeSet::new();
        let mut categories: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            let line = line.trim();
            if let Some(name) = line.strip_prefix("##") {
                let name = normalize(name);
                current = (!name.is_empty()).then_some(name);
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let term = normalize(line);
            if let Some(c) = &current {
                categories.entry(c.clone()).or_default().insert(term.clone());
            }
            exact_terms.insert(term);
        }
        Self {
            exact_terms,
            categories,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn empty() -> Self {
        Self {
            exact_terms: BTreeSet::new(),
            categories: BTreeMap::new(),
        }
    }

    pub fn contains(&self, caption: &str) -> bool {
        self.exact_terms.contains(&normalize(caption))
    }
}

/// Drops stoplisted captions and repeated captions, keeping first-seen order.
pub fn filter_captions<S: AsRef<str>>(captions: &[S], stoplist: &CaptionStoplist) -> Vec<String> {
    let mut seen = HashSet::new();
    captions
        .iter()
        .map(|c| c.as_ref())
        .filter(|c| !stoplist.contains(c))
        .filter(|c| seen.insert(normalize(c)))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_adjectives_and_scene_terms() {
        let s = CaptionStoplist::default();
        assert_eq!(filter_captions(&["wooden", "chair"], &s), vec!["chair"]);
        assert_eq!(filter_captions(&["living room", "table"], &s), vec!["table"]);
        assert!(filter_captions::<&str>(&[], &s).is_empty());
    }

    #[test]
    fn case_insensitive_and_dedup() {
        let s = CaptionStoplist::default();
        assert_eq!(
            filter_captions(&["Chair", "DARK", "chair", "Living  Room", "lamp"], &s),
            vec!["Chair", "lamp"]
        );
    }

    #[test]
    fn categories_are_parsed() {
        let s = CaptionStoplist::parse("# c\n## adjectives\nDark\n\n## scene\nliving room\n");
        assert!(s.categories["adjectives"].contains("dark"));
        assert!(s.categories["scene"].contains("living room"));
        assert!(s.contains("LIVING ROOM"));
        let d = CaptionStoplist::default();
        for t in ["dark", "industrial", "wooden", "living room", "workspace"] {
            assert!(d.contains(t), "{t}");
        }
    }
}
