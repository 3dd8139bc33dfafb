use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::PolicyError;

pub type TokenId = u32;

/// End-of-segment token; always id 0.
pub const EOS: TokenId = 0;
const EOS_TEXT: &str = "<eos>";
const UNK_TEXT: &str = "<unk>";
const NEWLINE: &str = "\n";

/// Whitespace-delimited words, with each line break kept as its own token.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push(NEWLINE);
        }
        out.extend(line.split_whitespace());
    }
    out
}

/// Inverse of [`tokenize`] for single-spaced text.
pub fn detokenize<'a>(tokens: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for tok in tokens {
        if tok == NEWLINE {
            out.push('\n');
            continue;
        }
        if !out.is_empty() && !out.ends_with('\n') {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Frozen word vocabulary. Ids `0..len()` are the softmax outputs; the unknown
/// token sits just past them and only ever appears in conditioning context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Vocabulary over every token of `texts`, sorted, with `<eos>` first.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words = BTreeSet::new();
        for text in texts {
            for tok in tokenize(text.as_ref()) {
                if tok != EOS_TEXT && tok != UNK_TEXT {
                    words.insert(tok.to_string());
                }
            }
        }
        let mut tokens = vec![EOS_TEXT.to_string()];
        tokens.extend(words);
        Vocab::from(tokens)
    }

    /// Number of output tokens (including `<eos>`).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn unk(&self) -> TokenId {
        self.tokens.len() as TokenId
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or(UNK_TEXT, String::as_str)
    }

    /// Ids for a scored segment; unknown words are an error.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, PolicyError> {
        tokenize(text)
            .into_iter()
            .map(|t| self.id(t).ok_or_else(|| PolicyError::TokenOutOfVocabulary(t.to_string())))
            .collect()
    }

    /// Ids for conditioning context; unknown words map to the unknown token.
    pub fn encode_context(&self, text: &str) -> Vec<TokenId> {
        tokenize(text)
            .into_iter()
            .map(|t| self.id(t).unwrap_or_else(|| self.unk()))
            .collect()
    }

    /// Text for a token sequence; `<eos>` is dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        detokenize(ids.iter().filter(|&&i| i != EOS).map(|&i| self.token(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "Step 1: find_object($obj)\nEntities: obj = \"oak log\"";
        let v = Vocab::from_texts([text]);
        let ids = v.encode(text).unwrap();
        assert_eq!(v.decode(&ids), text);
        assert_eq!(v.token(EOS), "<eos>");
    }

    #[test]
    fn unknown_words() {
        let v = Vocab::from_texts(["go to desk 1"]);
        assert_eq!(v.encode("go to shelf 1"), Err(PolicyError::TokenOutOfVocabulary("shelf".into())));
        assert_eq!(v.encode_context("go shelf"), vec![v.id("go").unwrap(), v.unk()]);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn serde_keeps_index() {
        let v = Vocab::from_texts(["a b c"]);
        let back: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("c"), Some(3));
    }
}
