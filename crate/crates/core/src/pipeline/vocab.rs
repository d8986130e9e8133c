use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ontology::AnnotatedDocument;

pub const UNK: usize = 0;
const UNK_TOKEN: &str = "<unk>";

/// Token vocabulary with word-shape back-off for unseen tokens.
///
/// A token's shape replaces every run of digits with a single `0`, so unseen `Org417` backs
/// off to the shape entry `<shape:Org0>` learned from other organisation names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub fn token_shape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    let mut in_digits = false;
    for c in token.chars() {
        if c.is_ascii_digit() {
            if !in_digits {
                out.push('0');
            }
            in_digits = true;
        } else {
            out.push(c);
            in_digits = false;
        }
    }
    format!("<shape:{out}>")
}

impl Vocab {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a AnnotatedDocument>) -> Self {
        let mut v = Vocab::from(vec![UNK_TOKEN.to_string()]);
        for d in docs {
            for s in &d.document.sentences {
                for t in s {
                    v.insert(t.clone());
                    v.insert(token_shape(t));
                }
            }
        }
        v
    }

    fn insert(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index
            .get(token)
            .or_else(|| self.index.get(&token_shape(token)))
            .copied()
            .unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}
