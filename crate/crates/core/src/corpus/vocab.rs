use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::CorpusError;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const SEP: &str = "<sep>";

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    /// One token per Unicode scalar value.
    Char,
    /// One token per single-space separated word.
    #[default]
    Word,
}

/// Token inventory: the three special tokens followed by the sorted corpus
/// tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    kind: TokenizerKind,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    kind: TokenizerKind,
    tokens: Vec<String>,
}

impl TryFrom<VocabFile> for Vocab {
    type Error = CorpusError;

    fn try_from(file: VocabFile) -> Result<Self, Self::Error> {
        Vocab::from_tokens(file.kind, file.tokens)
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile {
            kind: v.kind,
            tokens: v.tokens,
        }
    }
}

fn pieces(kind: TokenizerKind, text: &str) -> Result<Vec<String>, CorpusError> {
    match kind {
        TokenizerKind::Char => Ok(text.chars().map(String::from).collect()),
        TokenizerKind::Word => {
            if text.is_empty() {
                return Ok(Vec::new());
            }
            let words: Vec<String> = text.split(' ').map(String::from).collect();
            if words.iter().any(String::is_empty) {
                return Err(CorpusError::Untokenizable(text.to_string()));
            }
            Ok(words)
        }
    }
}

impl Vocab {
    /// Builds the inventory from every string in `texts`. The result does not
    /// depend on the order of `texts`.
    pub fn build<'a>(kind: TokenizerKind, texts: impl IntoIterator<Item = &'a str>) -> Result<Self, CorpusError> {
        let mut set = BTreeSet::new();
        let mut seen_any = false;
        for text in texts {
            seen_any = true;
            set.extend(pieces(kind, text)?);
        }
        if !seen_any || set.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut tokens = vec![PAD.to_string(), BOS.to_string(), SEP.to_string()];
        tokens.extend(set.into_iter().filter(|t| t != PAD && t != BOS && t != SEP));
        Self::from_tokens(kind, tokens)
    }

    /// Restores a vocabulary from its token list (specials first).
    pub fn from_tokens(kind: TokenizerKind, tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < 4 || tokens[0] != PAD || tokens[1] != BOS || tokens[2] != SEP {
            return Err(CorpusError::InvalidVocab(
                "special tokens must occupy ids 0..3 and at least one corpus token is required".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(CorpusError::InvalidVocab("empty token".into()));
            }
            if kind == TokenizerKind::Word && i >= 3 && t.contains(' ') {
                return Err(CorpusError::InvalidVocab(format!("word token {t:?} contains a space")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(CorpusError::InvalidVocab(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { kind, tokens, index })
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>, CorpusError> {
        pieces(self.kind, text)?
            .into_iter()
            .map(|p| self.id(&p).ok_or(CorpusError::UnknownToken(p)))
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String, CorpusError> {
        let parts = ids
            .iter()
            .map(|&id| {
                self.tokens
                    .get(id as usize)
                    .filter(|_| id > SEP_ID)
                    .map(String::as_str)
                    .ok_or(CorpusError::UnknownId(id))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match self.kind {
            TokenizerKind::Char => parts.concat(),
            TokenizerKind::Word => parts.join(" "),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_vocab_of_ab_ba() {
        let v = Vocab::build(TokenizerKind::Char, ["ab ba"]).unwrap();
        assert_eq!(v.tokens(), &[PAD, BOS, SEP, " ", "a", "b"]);
    }

    #[test]
    fn order_invariant() {
        let a = Vocab::build(TokenizerKind::Word, ["x y", "z w"]).unwrap();
        let b = Vocab::build(TokenizerKind::Word, ["z w", "x y"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            Vocab::build(TokenizerKind::Word, std::iter::empty()),
            Err(CorpusError::EmptyCorpus)
        ));
        assert!(matches!(
            Vocab::build(TokenizerKind::Char, [""]),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn irregular_spacing_is_rejected_in_word_mode() {
        assert!(Vocab::build(TokenizerKind::Word, ["a  b"]).is_err());
        assert!(Vocab::build(TokenizerKind::Word, [" a"]).is_err());
    }

    #[test]
    fn unknown_tokens_are_errors() {
        let v = Vocab::build(TokenizerKind::Word, ["a b"]).unwrap();
        assert!(matches!(v.tokenize("a c"), Err(CorpusError::UnknownToken(t)) if t == "c"));
        assert!(matches!(v.detokenize(&[BOS_ID]), Err(CorpusError::UnknownId(1))));
    }

    #[test]
    fn serde_round_trip_validates() {
        let v = Vocab::build(TokenizerKind::Word, ["a b"]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&s).unwrap(), v);
        let bad = r#"{"kind":"word","tokens":["a","b","c","d"]}"#;
        assert!(serde_json::from_str::<Vocab>(bad).is_err());
    }
}
