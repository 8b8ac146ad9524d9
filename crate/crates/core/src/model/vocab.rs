use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SEP: usize = 2;

const SPECIALS: [&str; 3] = ["<pad>", "<unk>", "<sep>"];

/// Closed token vocabulary: three reserved entries followed by the training
/// tokens in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocab {
        let words: BTreeSet<&str> = tokens.into_iter().filter(|t| !SPECIALS.contains(t)).collect();
        let all = SPECIALS.iter().copied().chain(words).map(str::to_string).collect();
        Vocab::from_tokens(all).expect("specials lead a freshly built vocabulary")
    }

    /// Restores a vocabulary from its token list (for example, a checkpoint).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Data("vocabulary must start with <pad> <unk> <sep>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or [`UNK`] when unseen.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_first_then_sorted() {
        let v = Vocab::build(["the", "red", "box", "the"]);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "<sep>", "box", "red", "the"]);
        assert_eq!(v.id("red"), 4);
        assert_eq!(v.id("blue"), UNK);
        assert_eq!(Vocab::from_tokens(v.tokens().to_vec()).unwrap(), v);
        assert!(Vocab::from_tokens(vec!["a".into()]).is_err());
    }
}
