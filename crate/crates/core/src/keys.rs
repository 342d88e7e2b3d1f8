//! Serde adapter for maps keyed by robot or event id.
//!
//! JSON object keys are strings, and serde cannot turn them back into
//! integers once a record has been buffered by an internally tagged enum.
//! Parsing the keys by hand works in both positions.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<V: Serialize, S: Serializer>(
    map: &BTreeMap<u32, V>,
    s: S,
) -> Result<S::Ok, S::Error> {
    map.serialize(s)
}

pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(
    d: D,
) -> Result<BTreeMap<u32, V>, D::Error> {
    let raw = BTreeMap::<String, V>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|k| (k, v))
                .map_err(|_| D::Error::custom(format!("bad id key {k:?}")))
        })
        .collect()
}
