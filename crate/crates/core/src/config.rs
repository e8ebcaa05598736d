//! Flat `key = value` configuration text.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parses `key = value` lines. Blank lines and `#` comments are ignored;
/// repeated keys are an error.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if !seen.insert(key.clone()) {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

pub fn render_key_values<K: Display, V: Display>(pairs: impl IntoIterator<Item = (K, V)>) -> String {
    pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key} = {value}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let pairs = parse_key_values("# header\n a = 1 \n\nb=two # trailing\n").unwrap();
        assert_eq!(pairs, [("a".to_string(), "1".to_string()), ("b".to_string(), "two".to_string())]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_key_values("novalue\n").is_err());
        assert!(parse_key_values("a=1\na=2\n").is_err());
        assert!(parse_key_values(" = 3\n").is_err());
        assert!(parse_value::<usize>("k", "-1").is_err());
    }

    #[test]
    fn render_roundtrips() {
        let text = render_key_values([("x", 1.5), ("y", 2.0)]);
        assert_eq!(parse_key_values(&text).unwrap(), [("x".into(), "1.5".into()), ("y".into(), "2".into())]);
    }
}
