use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Precomputed text embeddings keyed by query string.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryLexicon {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<f32>>,
}

impl QueryLexicon {
    pub fn new(dim: usize, entries: BTreeMap<String, Vec<f32>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Lexicon("dim must be positive".into()));
        }
        for (k, v) in &entries {
            if v.len() != dim {
                return Err(Error::Lexicon(format!(
                    "entry {k:?} has {} components, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Lexicon(format!("entry {k:?} has a non-finite value")));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn get(&self, key: &str) -> Result<&[f32]> {
        self.entries
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnresolvedKey(key.to_owned()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("lexicon serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Entries object that refuses duplicate keys instead of keeping the last one.
struct UniqueEntries(Vec<(String, Vec<f32>)>);

impl<'de> Deserialize<'de> for UniqueEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = UniqueEntries;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an object of query -> embedding")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> std::result::Result<Self::Value, A::Error> {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                while let Some((k, v)) = m.next_entry::<String, Vec<f32>>()? {
                    if !seen.insert(k.clone()) {
                        return Err(serde::de::Error::custom(format!("duplicate key {k:?}")));
                    }
                    out.push((k, v));
                }
                Ok(UniqueEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLexicon {
    dim: usize,
    entries: UniqueEntries,
}

pub fn parse_lexicon(json: &str) -> Result<QueryLexicon> {
    let raw: RawLexicon = serde_json::from_str(json).map_err(|e| Error::Lexicon(e.to_string()))?;
    QueryLexicon::new(raw.dim, raw.entries.0.into_iter().collect())
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<QueryLexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text)
}
