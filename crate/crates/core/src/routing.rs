//! Routing keys and topic patterns.
//!
//! A routing key is a dot-separated list of words tagging each message,
//! e.g. `ganglia.site01.node042.metrics`. Subscriptions filter on topic
//! patterns where `*` matches exactly one word and `#` matches zero or
//! more words.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of words in a routing key.
pub const MAX_KEY_WORDS: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyParseError {
    #[error("empty token at position {position}")]
    EmptyToken { position: usize },
    #[error("illegal character {ch:?} in token {token:?}")]
    IllegalCharacter { token: String, ch: char },
    #[error("too many words: {count} (max {MAX_KEY_WORDS})")]
    TooManyWords { count: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternParseError {
    #[error("empty element at position {position}")]
    EmptyElement { position: usize },
    #[error("illegal character {ch:?} in element {element:?}")]
    IllegalCharacter { element: String, ch: char },
    #[error("too many elements: {count} (max {MAX_KEY_WORDS})")]
    TooManyElements { count: usize },
}

fn check_word(token: &str, position: usize) -> Result<(), KeyParseError> {
    if token.is_empty() {
        return Err(KeyParseError::EmptyToken { position });
    }
    for ch in token.chars() {
        if ch == '.' || ch == '*' || ch == '#' || ch.is_whitespace() {
            return Err(KeyParseError::IllegalCharacter {
                token: token.to_string(),
                ch,
            });
        }
    }
    Ok(())
}

/// An ordered list of words, serialized as the words joined by `.`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RoutingKey {
    words: Vec<String>,
}

impl RoutingKey {
    /// Parses a dotted routing key, validating every token.
    pub fn parse(text: &str) -> Result<Self, KeyParseError> {
        let tokens: Vec<&str> = text.split('.').collect();
        if tokens.len() > MAX_KEY_WORDS {
            return Err(KeyParseError::TooManyWords {
                count: tokens.len(),
            });
        }
        let mut words = Vec::with_capacity(tokens.len());
        for (i, token) in tokens.iter().enumerate() {
            check_word(token, i)?;
            words.push(token.to_string());
        }
        Ok(RoutingKey { words })
    }

    /// Builds a key from pre-split words.
    pub fn from_words<I, S>(words: I) -> Result<Self, KeyParseError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let collected: Vec<String> = words.into_iter().map(|w| w.as_ref().to_string()).collect();
        if collected.is_empty() {
            return Err(KeyParseError::EmptyToken { position: 0 });
        }
        if collected.len() > MAX_KEY_WORDS {
            return Err(KeyParseError::TooManyWords {
                count: collected.len(),
            });
        }
        for (i, word) in collected.iter().enumerate() {
            check_word(word, i)?;
        }
        Ok(RoutingKey { words: collected })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// First word; by the routing grammar this names the source kind.
    pub fn source(&self) -> &str {
        &self.words[0]
    }
}

impl fmt::Display for RoutingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.words.join("."))
    }
}

impl FromStr for RoutingKey {
    type Err = KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoutingKey::parse(s)
    }
}

impl TryFrom<String> for RoutingKey {
    type Error = KeyParseError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        RoutingKey::parse(&value)
    }
}

impl From<RoutingKey> for String {
    fn from(key: RoutingKey) -> String {
        key.to_string()
    }
}

/// One element of a topic pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternElement {
    /// Literal word that must match exactly.
    Word(String),
    /// `*`: exactly one word.
    One,
    /// `#`: zero or more words.
    Many,
}

/// A subscription filter over routing keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RoutingPattern {
    elements: Vec<PatternElement>,
}

impl RoutingPattern {
    pub fn parse(text: &str) -> Result<Self, PatternParseError> {
        let tokens: Vec<&str> = text.split('.').collect();
        if tokens.len() > MAX_KEY_WORDS {
            return Err(PatternParseError::TooManyElements {
                count: tokens.len(),
            });
        }
        let mut elements = Vec::with_capacity(tokens.len());
        for (i, token) in tokens.iter().enumerate() {
            let element = match *token {
                "" => return Err(PatternParseError::EmptyElement { position: i }),
                "*" => PatternElement::One,
                "#" => PatternElement::Many,
                word => {
                    for ch in word.chars() {
                        if ch == '*' || ch == '#' || ch.is_whitespace() {
                            return Err(PatternParseError::IllegalCharacter {
                                element: word.to_string(),
                                ch,
                            });
                        }
                    }
                    PatternElement::Word(word.to_string())
                }
            };
            elements.push(element);
        }
        Ok(RoutingPattern { elements })
    }

    pub fn elements(&self) -> &[PatternElement] {
        &self.elements
    }

    /// True iff some assignment of key words to pattern elements satisfies
    /// every element. Runs in O(words × elements) via a rolling DP row.
    pub fn matches(&self, key: &RoutingKey) -> bool {
        self.matches_words(key.words())
    }

    /// Matching core, shared with tests that drive raw word slices.
    pub fn matches_words<S: AsRef<str>>(&self, words: &[S]) -> bool {
        let n = words.len();
        // reachable[j]: the elements consumed so far can account for the
        // first j key words
        let mut reachable = vec![false; n + 1];
        reachable[0] = true;
        for element in &self.elements {
            match element {
                PatternElement::Word(w) => {
                    for j in (1..=n).rev() {
                        reachable[j] = reachable[j - 1] && words[j - 1].as_ref() == w.as_str();
                    }
                    reachable[0] = false;
                }
                PatternElement::One => {
                    for j in (1..=n).rev() {
                        reachable[j] = reachable[j - 1];
                    }
                    reachable[0] = false;
                }
                PatternElement::Many => {
                    // zero or more words: propagate reachability forward
                    for j in 1..=n {
                        reachable[j] = reachable[j] || reachable[j - 1];
                    }
                }
            }
        }
        reachable[n]
    }
}

impl fmt::Display for RoutingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, element) in self.elements.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            match element {
                PatternElement::Word(w) => f.write_str(w)?,
                PatternElement::One => f.write_str("*")?,
                PatternElement::Many => f.write_str("#")?,
            }
        }
        Ok(())
    }
}

impl FromStr for RoutingPattern {
    type Err = PatternParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoutingPattern::parse(s)
    }
}

impl TryFrom<String> for RoutingPattern {
    type Error = PatternParseError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        RoutingPattern::parse(&value)
    }
}

impl From<RoutingPattern> for String {
    fn from(pattern: RoutingPattern) -> String {
        pattern.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> RoutingKey {
        RoutingKey::parse(s).unwrap()
    }

    fn pat(s: &str) -> RoutingPattern {
        RoutingPattern::parse(s).unwrap()
    }

    #[test]
    fn parses_monitoring_keys() {
        let k = key("ganglia.sierra.node042.metrics");
        assert_eq!(k.word_count(), 4);
        assert_eq!(k.source(), "ganglia");
        assert_eq!(k.to_string(), "ganglia.sierra.node042.metrics");
    }

    #[test]
    fn rejects_empty_token() {
        assert_eq!(
            RoutingKey::parse("a..b"),
            Err(KeyParseError::EmptyToken { position: 1 })
        );
        assert!(RoutingKey::parse("").is_err());
    }

    #[test]
    fn rejects_wildcards_in_keys() {
        assert!(matches!(
            RoutingKey::parse("inca.*"),
            Err(KeyParseError::IllegalCharacter { ch: '*', .. })
        ));
        assert!(matches!(
            RoutingKey::parse("inca.#"),
            Err(KeyParseError::IllegalCharacter { ch: '#', .. })
        ));
        assert!(matches!(
            RoutingKey::parse("a b.c"),
            Err(KeyParseError::IllegalCharacter { ch: ' ', .. })
        ));
    }

    #[test]
    fn rejects_too_many_words() {
        let long = vec!["w"; 17].join(".");
        assert_eq!(
            RoutingKey::parse(&long),
            Err(KeyParseError::TooManyWords { count: 17 })
        );
        assert!(RoutingKey::parse(&vec!["w"; 16].join(".")).is_ok());
    }

    #[test]
    fn pattern_round_trips() {
        for text in ["#", "*", "glue2.*.*.job.*", "inca.#", "a.#.b.*"] {
            assert_eq!(pat(text).to_string(), text);
        }
    }

    #[test]
    fn hash_matches_everything() {
        let p = pat("#");
        for k in ["a", "a.b", "ganglia.s.n.metrics", &vec!["x"; 16].join(".")] {
            assert!(p.matches(&key(k)), "{k}");
        }
    }

    #[test]
    fn star_matches_exactly_one_word() {
        let p = pat("glue2.*.*.job.*");
        assert!(p.matches(&key("glue2.sierra.batch.job.start")));
        assert!(!p.matches(&key("glue2.sierra.batch.queue")));
        assert!(!p.matches(&key("glue2.sierra.batch.job.start.extra")));
    }

    #[test]
    fn literal_pattern_is_reflexive() {
        let p = pat("ganglia.sierra.node042.metrics");
        assert!(p.matches(&key("ganglia.sierra.node042.metrics")));
        assert!(!p.matches(&key("ganglia.sierra.node042.events")));
        assert!(!p.matches(&key("ganglia.sierra.node042")));
    }

    #[test]
    fn hash_in_the_middle() {
        let p = pat("a.#.z");
        assert!(p.matches(&key("a.z")));
        assert!(p.matches(&key("a.b.z")));
        assert!(p.matches(&key("a.b.c.d.z")));
        assert!(!p.matches(&key("a.b.c")));
    }

    /// Brute-force backtracking matcher: the independent oracle for the
    /// dynamic-programming implementation.
    fn oracle(elements: &[PatternElement], words: &[&str]) -> bool {
        match elements.split_first() {
            None => words.is_empty(),
            Some((PatternElement::Word(w), rest)) => {
                !words.is_empty() && words[0] == w && oracle(rest, &words[1..])
            }
            Some((PatternElement::One, rest)) => !words.is_empty() && oracle(rest, &words[1..]),
            Some((PatternElement::Many, rest)) => {
                (0..=words.len()).any(|k| oracle(rest, &words[k..]))
            }
        }
    }

    /// Enumerates every pattern and key of up to `max_len` words over a
    /// tiny alphabet and checks DP agreement with the oracle.
    fn enumerate_agreement(max_len: usize) -> usize {
        let key_alphabet = ["a", "b"];
        let pattern_alphabet = ["a", "b", "*", "#"];

        let mut keys: Vec<Vec<&str>> = Vec::new();
        let mut patterns: Vec<Vec<&str>> = Vec::new();
        for len in 1..=max_len {
            let expand = |alphabet: &[&'static str], out: &mut Vec<Vec<&str>>| {
                let mut stack: Vec<Vec<&str>> = vec![vec![]];
                for _ in 0..len {
                    let mut next = Vec::new();
                    for prefix in &stack {
                        for sym in alphabet {
                            let mut item = prefix.clone();
                            item.push(*sym);
                            next.push(item);
                        }
                    }
                    stack = next;
                }
                out.extend(stack);
            };
            expand(&key_alphabet, &mut keys);
            expand(&pattern_alphabet, &mut patterns);
        }

        let mut checked = 0;
        for pattern_words in &patterns {
            let pattern = RoutingPattern::parse(&pattern_words.join(".")).unwrap();
            for key_words in &keys {
                let expected = oracle(pattern.elements(), key_words);
                let actual = pattern.matches_words(key_words);
                assert_eq!(
                    expected,
                    actual,
                    "pattern {:?} vs key {:?}",
                    pattern_words.join("."),
                    key_words.join(".")
                );
                checked += 1;
            }
        }
        checked
    }

    #[test]
    fn matcher_agrees_with_backtracking_oracle() {
        // smaller bound here; the acceptance suite runs the full <=5-word sweep
        let checked = enumerate_agreement(4);
        assert_eq!(checked, (4 + 16 + 64 + 256) * (2 + 4 + 8 + 16));
    }

    proptest::proptest! {
        #[test]
        fn random_patterns_agree_with_oracle(
            pattern_words in proptest::collection::vec(
                proptest::sample::select(vec!["a", "b", "c", "*", "#"]), 1..8),
            key_words in proptest::collection::vec(
                proptest::sample::select(vec!["a", "b", "c"]), 1..8),
        ) {
            let pattern = RoutingPattern::parse(&pattern_words.join(".")).unwrap();
            let key = RoutingKey::parse(&key_words.join(".")).unwrap();
            let expected = oracle(pattern.elements(), &key_words);
            proptest::prop_assert_eq!(pattern.matches(&key), expected);
        }

        #[test]
        fn display_parse_identity(
            pattern_words in proptest::collection::vec(
                proptest::sample::select(vec!["a", "xy", "*", "#"]), 1..10),
        ) {
            let text = pattern_words.join(".");
            let pattern = RoutingPattern::parse(&text).unwrap();
            proptest::prop_assert_eq!(pattern.to_string(), text);
        }
    }

    #[test]
    fn matching_work_is_bounded() {
        // worst case: all-# pattern against the longest key; the DP touches
        // (elements+1) x (words+1) cells, never exponential
        let p = pat(&vec!["#"; 16].join("."));
        let k = key(&vec!["w"; 16].join("."));
        let start = std::time::Instant::now();
        for _ in 0..10_000 {
            assert!(p.matches(&k));
        }
        assert!(start.elapsed() < std::time::Duration::from_secs(2));
    }
}
