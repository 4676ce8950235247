//! Line-oriented `key = value` config files, shared by schema and run-config
//! parsing. `#` starts a comment; blank lines are ignored; keys keep file
//! order.

use crate::{Error, Result};

pub(crate) fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Spec(format!(
                "line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
