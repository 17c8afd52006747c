//! Rule cascade mapping an action string to a coarse intent.
//!
//! Rules are tried in order and the first match wins:
//!
//! 1. `navigate`: the whole action is one direction token, or a movement verb
//!    (`go`, `walk`, `run`) followed by exactly one direction token.
//! 2. `examine`: the first token is an examine keyword.
//! 3. `hoard`: the first token is a hoard keyword.
//! 4. `interact`: one token is a known verb and a different token is a noun.
//!    A noun is a lexicon noun, or the final token when it is not a known
//!    verb, direction or function word.
//! 5. `other`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::words;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentLabel {
    Navigate = 0,
    Examine = 1,
    Hoard = 2,
    Interact = 3,
    Other = 4,
}

impl IntentLabel {
    pub const ALL: [IntentLabel; 5] = [
        IntentLabel::Navigate,
        IntentLabel::Examine,
        IntentLabel::Hoard,
        IntentLabel::Interact,
        IntentLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntentLabel::Navigate => "navigate",
            IntentLabel::Examine => "examine",
            IntentLabel::Hoard => "hoard",
            IntentLabel::Interact => "interact",
            IntentLabel::Other => "other",
        }
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown intent label `{s}`")))
    }
}

/// Word lists standing in for a part-of-speech tagger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PosLexicon {
    pub verbs: BTreeSet<String>,
    pub nouns: BTreeSet<String>,
    pub directions: BTreeSet<String>,
    pub examine: BTreeSet<String>,
    pub hoard: BTreeSet<String>,
    pub movement: BTreeSet<String>,
    pub function_words: BTreeSet<String>,
}

const FILES: [&str; 7] = [
    "verbs.txt",
    "nouns.txt",
    "directions.txt",
    "examine.txt",
    "hoard.txt",
    "movement.txt",
    "function_words.txt",
];

const BUNDLED: [&str; 7] = [
    include_str!("../../lexicon/verbs.txt"),
    include_str!("../../lexicon/nouns.txt"),
    include_str!("../../lexicon/directions.txt"),
    include_str!("../../lexicon/examine.txt"),
    include_str!("../../lexicon/hoard.txt"),
    include_str!("../../lexicon/movement.txt"),
    include_str!("../../lexicon/function_words.txt"),
];

/// Parse one category file: one lowercase token per line, no duplicates.
fn parse_category(name: &str, text: &str) -> Result<BTreeSet<String>> {
    let mut set = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        if tok.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
            return Err(Error::Parse {
                path: name.into(),
                line: i + 1,
                message: format!("lexicon entries must be single lowercase tokens, got `{tok}`"),
            });
        }
        if !set.insert(tok.to_string()) {
            return Err(Error::Parse {
                path: name.into(),
                line: i + 1,
                message: format!("duplicate entry `{tok}`"),
            });
        }
    }
    Ok(set)
}

impl PosLexicon {
    fn from_texts(texts: [&str; 7]) -> Result<Self> {
        let mut sets = FILES
            .iter()
            .zip(texts)
            .map(|(name, text)| parse_category(name, text))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || sets.next().expect("seven categories");
        Ok(Self {
            verbs: next(),
            nouns: next(),
            directions: next(),
            examine: next(),
            hoard: next(),
            movement: next(),
            function_words: next(),
        })
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_texts(BUNDLED).expect("bundled lexicon is well-formed")
    }

    /// Load the seven category files from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let texts = FILES
            .iter()
            .map(|f| std::fs::read_to_string(dir.join(f)))
            .collect::<std::io::Result<Vec<_>>>()?;
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        Self::from_texts(refs.try_into().expect("seven files"))
    }

    fn is_noun(&self, tokens: &[String], j: usize) -> bool {
        let t = tokens[j].as_str();
        self.nouns.contains(t)
            || (j + 1 == tokens.len()
                && !self.verbs.contains(t)
                && !self.directions.contains(t)
                && !self.function_words.contains(t))
    }
}

pub fn classify_intent(action: &str, lexicon: &PosLexicon) -> IntentLabel {
    let tokens = words(action);
    let Some(first) = tokens.first() else {
        return IntentLabel::Other;
    };
    let is_dir = |t: &String| lexicon.directions.contains(t);
    if (tokens.len() == 1 && is_dir(first))
        || (tokens.len() == 2 && lexicon.movement.contains(first) && is_dir(&tokens[1]))
    {
        return IntentLabel::Navigate;
    }
    if lexicon.examine.contains(first) {
        return IntentLabel::Examine;
    }
    if lexicon.hoard.contains(first) {
        return IntentLabel::Hoard;
    }
    let has_verb_and_noun = tokens
        .iter()
        .enumerate()
        .any(|(i, t)| lexicon.verbs.contains(t) && (0..tokens.len()).any(|j| j != i && lexicon.is_noun(&tokens, j)));
    if has_verb_and_noun {
        IntentLabel::Interact
    } else {
        IntentLabel::Other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> IntentLabel {
        classify_intent(s, &PosLexicon::bundled())
    }

    #[test]
    fn table_rows() {
        assert_eq!(c("north"), IntentLabel::Navigate);
        assert_eq!(c("take coal"), IntentLabel::Hoard);
        assert_eq!(c("put coal in furnace"), IntentLabel::Interact);
        assert_eq!(c("look"), IntentLabel::Examine);
        assert_eq!(c("xyzzy"), IntentLabel::Other);
        assert_eq!(c(""), IntentLabel::Other);
        assert_eq!(c("west"), IntentLabel::Navigate);
    }

    #[test]
    fn precedence_edges() {
        assert_eq!(c("examine north wall"), IntentLabel::Examine);
        assert_eq!(c("go north"), IntentLabel::Navigate);
        assert_eq!(c("go north quickly"), IntentLabel::Other);
        assert_eq!(c("get in boat"), IntentLabel::Hoard);
        assert_eq!(c("say manaz"), IntentLabel::Interact);
        assert_eq!(c("wait"), IntentLabel::Other);
    }

    #[test]
    fn bundled_lexicon_shape() {
        let lex = PosLexicon::bundled();
        assert!(lex.verbs.len() + lex.nouns.len() >= 500);
        assert_eq!(lex.directions.len(), 24);
    }

    #[test]
    fn label_round_trip() {
        for l in IntentLabel::ALL {
            assert_eq!(l.as_str().parse::<IntentLabel>().unwrap(), l);
            assert_eq!(IntentLabel::from_index(l.index()), Some(l));
        }
    }

    #[test]
    fn category_files_reject_bad_entries() {
        assert!(parse_category("x", "a\nb\na\n").is_err());
        assert!(parse_category("x", "Take\n").is_err());
        assert_eq!(parse_category("x", "a\n\nb\n").unwrap().len(), 2);
    }
}
