use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const NONE: usize = 3;
pub const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<none>"];

/// Token ↔ id bijection with the four reserved ids first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved tokens followed by `tokens` in first-seen order.
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary { tokens: Vec::new(), ids: HashMap::new() };
        for t in RESERVED {
            v.push(t);
        }
        for t in tokens {
            v.push(t.as_ref());
        }
        v
    }

    fn push(&mut self, t: &str) {
        if !self.ids.contains_key(t) {
            self.ids.insert(t.to_string(), self.tokens.len());
            self.tokens.push(t.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.ids.get(token).copied().ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Result<Vec<usize>> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// `<bos> tokens <eos>` ids for a caption.
    pub fn encode_caption(&self, tokens: &[String]) -> Result<Vec<usize>> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(BOS);
        ids.extend(self.encode(tokens)?);
        ids.push(EOS);
        Ok(ids)
    }

    /// Space-joined text of non-reserved ids.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i >= RESERVED.len())
            .filter_map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Schema("vocabulary must start with the reserved tokens".into()));
        }
        let v = Vocabulary::build(&tokens[RESERVED.len()..]);
        if v.len() != tokens.len() {
            return Err(Error::Schema("vocabulary has duplicate tokens".into()));
        }
        Ok(v)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}
