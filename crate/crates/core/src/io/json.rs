use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;

use serde::de::{DeserializeOwned, IgnoredAny, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Compact JSON with keys sorted and shortest round-trip floats.
pub(crate) fn canonical<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("plain data serializes");
    serde_json::to_string(&v).expect("value serializes")
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_error(e: &serde_json::Error, first_line: usize, path: Option<String>) -> Error {
    let mut message = e.to_string();
    if let Some(p) = path.filter(|p| p != ".") {
        message = format!("at `{p}`: {message}");
    }
    Error::Parse {
        line: first_line + e.line().saturating_sub(1),
        column: e.column(),
        message,
    }
}

/// Splits a stream of whitespace-separated JSON documents into
/// `(first line, text)` pairs.
pub(crate) fn documents(text: &str) -> Result<Vec<(usize, &str)>> {
    let mut out = Vec::new();
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<IgnoredAny>();
    let mut start = 0;
    while let Some(item) = stream.next() {
        item.map_err(|e| parse_error(&e, 1, None))?;
        let end = stream.byte_offset();
        let raw = &text[start..end];
        let lead = raw.len() - raw.trim_start().len();
        let line = 1 + text[..start + lead].matches('\n').count();
        out.push((line, raw.trim()));
        start = end;
    }
    Ok(out)
}

/// Deserializes one document, reporting the field path and absolute line of
/// any failure.
pub(crate) fn parse<T: DeserializeOwned>(doc: &str, first_line: usize) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(doc);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        parse_error(e.inner(), first_line, Some(path))
    })
}

/// A JSON object deserialized into a map, rejecting repeated keys.
pub(crate) fn unique_map<'de, D, K, V>(de: D) -> std::result::Result<BTreeMap<K, V>, D::Error>
where
    D: Deserializer<'de>,
    K: Deserialize<'de> + Ord + fmt::Debug,
    V: Deserialize<'de>,
{
    struct V_<K, V>(PhantomData<(K, V)>);
    impl<'de, K, V> Visitor<'de> for V_<K, V>
    where
        K: Deserialize<'de> + Ord + fmt::Debug,
        V: Deserialize<'de>,
    {
        type Value = BTreeMap<K, V>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an object with unique keys")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((k, v)) = map.next_entry::<K, V>()? {
                if out.contains_key(&k) {
                    return Err(serde::de::Error::custom(format!("duplicate key {k:?}")));
                }
                out.insert(k, v);
            }
            Ok(out)
        }
    }
    de.deserialize_map(V_(PhantomData))
}

pub(crate) fn unique_map_opt<'de, D, K, V>(de: D) -> std::result::Result<Option<BTreeMap<K, V>>, D::Error>
where
    D: Deserializer<'de>,
    K: Deserialize<'de> + Ord + fmt::Debug,
    V: Deserialize<'de>,
{
    unique_map(de).map(Some)
}
