//! Signature values, signature paths and the canonical byte encoding.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value as Json;
use thiserror::Error;

/// Largest magnitude below which integral numbers are rendered without a fraction.
const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

/// A finite number. Negative zero is folded into zero so that equal values
/// have a single representation.
#[derive(Debug, Clone, Copy)]
pub struct Number(f64);

impl Number {
    pub fn new(v: f64) -> Option<Self> {
        if v.is_finite() {
            Some(Number(if v == 0.0 { 0.0 } else { v }))
        } else {
            None
        }
    }

    pub fn from_i64(v: i64) -> Self {
        Number(v as f64)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `Some(i)` when the value is an integer small enough to be exact.
    pub fn as_exact_int(self) -> Option<i64> {
        if self.0.abs() < EXACT_INT_LIMIT && (self.0 as i64) as f64 == self.0 {
            Some(self.0 as i64)
        } else {
            None
        }
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Number {}
impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_exact_int() {
            Some(i) => write!(f, "{i}"),
            // Display for f64 is the shortest round-trip decimal.
            None => write!(f, "{}", self.0),
        }
    }
}

/// Scalar value. Variant order defines the canonical order of set members.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Literal {
    Null,
    Bool(bool),
    Number(Number),
    Str(String),
}

impl Literal {
    pub fn str(s: &str) -> Self {
        Literal::Str(s.to_owned())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Literal::Null => Json::Null,
            Literal::Bool(b) => Json::Bool(*b),
            Literal::Number(n) => number_to_json(*n),
            Literal::Str(s) => Json::String(s.clone()),
        }
    }

    pub fn from_json(v: &Json) -> Result<Self, ValueError> {
        match v {
            Json::Null => Ok(Literal::Null),
            Json::Bool(b) => Ok(Literal::Bool(*b)),
            Json::Number(n) => {
                let f = n.as_f64().ok_or(ValueError::NonFinite)?;
                Number::new(f)
                    .map(Literal::Number)
                    .ok_or(ValueError::NonFinite)
            }
            Json::String(s) => Ok(Literal::Str(s.clone())),
            Json::Array(_) | Json::Object(_) => Err(ValueError::NotLiteral),
        }
    }

    fn write_canonical(&self, out: &mut String) {
        match self {
            Literal::Null => out.push_str("null"),
            Literal::Bool(true) => out.push_str("true"),
            Literal::Bool(false) => out.push_str("false"),
            Literal::Number(n) => {
                let _ = fmt::write(out, format_args!("{n}"));
            }
            Literal::Str(s) => write_json_string(out, s),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => f.write_str(s),
            other => {
                let mut s = String::new();
                other.write_canonical(&mut s);
                f.write_str(&s)
            }
        }
    }
}

fn number_to_json(n: Number) -> Json {
    match n.as_exact_int() {
        Some(i) => Json::from(i),
        None => serde_json::Number::from_f64(n.get())
            .map(Json::Number)
            .unwrap_or(Json::Null),
    }
}

fn write_json_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = fmt::write(out, format_args!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("number is not finite")]
    NonFinite,
    #[error("expected a scalar literal")]
    NotLiteral,
    #[error("set members must be scalar literals")]
    NestedSetMember,
}

/// Structured signature value: a literal, a set of literals, or a record.
///
/// JSON arrays map to sets; array indexing is not part of the path language,
/// so there is no ordered-list variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignatureValue {
    Literal(Literal),
    Set(BTreeSet<Literal>),
    Record(BTreeMap<String, SignatureValue>),
}

impl Default for SignatureValue {
    fn default() -> Self {
        SignatureValue::Record(BTreeMap::new())
    }
}

impl From<Literal> for SignatureValue {
    fn from(l: Literal) -> Self {
        SignatureValue::Literal(l)
    }
}

impl SignatureValue {
    pub fn null() -> Self {
        SignatureValue::Literal(Literal::Null)
    }

    pub fn str(s: &str) -> Self {
        SignatureValue::Literal(Literal::str(s))
    }

    pub fn num(v: f64) -> Self {
        SignatureValue::Literal(Literal::Number(Number::new(v).expect("finite")))
    }

    pub fn bool(b: bool) -> Self {
        SignatureValue::Literal(Literal::Bool(b))
    }

    pub fn as_record(&self) -> Option<&BTreeMap<String, SignatureValue>> {
        match self {
            SignatureValue::Record(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            SignatureValue::Literal(l) => Some(l),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SignatureValue::Literal(Literal::Null) => "null",
            SignatureValue::Literal(Literal::Bool(_)) => "boolean",
            SignatureValue::Literal(Literal::Number(_)) => "number",
            SignatureValue::Literal(Literal::Str(_)) => "string",
            SignatureValue::Set(_) => "set",
            SignatureValue::Record(_) => "record",
        }
    }

    pub fn from_json(v: &Json) -> Result<Self, ValueError> {
        match v {
            Json::Array(items) => {
                let mut set = BTreeSet::new();
                for item in items {
                    let lit = Literal::from_json(item).map_err(|e| match e {
                        ValueError::NotLiteral => ValueError::NestedSetMember,
                        other => other,
                    })?;
                    set.insert(lit);
                }
                Ok(SignatureValue::Set(set))
            }
            Json::Object(map) => {
                let mut rec = BTreeMap::new();
                for (k, v) in map {
                    rec.insert(k.clone(), SignatureValue::from_json(v)?);
                }
                Ok(SignatureValue::Record(rec))
            }
            scalar => Literal::from_json(scalar).map(SignatureValue::Literal),
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            SignatureValue::Literal(l) => l.to_json(),
            SignatureValue::Set(s) => Json::Array(s.iter().map(Literal::to_json).collect()),
            SignatureValue::Record(r) => {
                let mut map = serde_json::Map::new();
                for (k, v) in r {
                    map.insert(k.clone(), v.to_json());
                }
                Json::Object(map)
            }
        }
    }

    /// Canonical bytes: record fields in bytewise name order, set members in
    /// literal order, integers without a fraction and other numbers in their
    /// shortest round-trip decimal form.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out.into_bytes()
    }

    fn write_canonical(&self, out: &mut String) {
        match self {
            SignatureValue::Literal(l) => l.write_canonical(out),
            SignatureValue::Set(s) => {
                out.push('[');
                for (i, m) in s.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    m.write_canonical(out);
                }
                out.push(']');
            }
            SignatureValue::Record(r) => {
                out.push('{');
                for (i, (k, v)) in r.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_json_string(out, k);
                    out.push(':');
                    v.write_canonical(out);
                }
                out.push('}');
            }
        }
    }

    pub fn get(&self, path: &SigPath) -> Option<&SignatureValue> {
        let mut cur = self;
        for seg in &path.segments {
            cur = cur.as_record()?.get(seg)?;
        }
        Some(cur)
    }

    pub fn get_mut(&mut self, path: &SigPath) -> Option<&mut SignatureValue> {
        let mut cur = self;
        for seg in &path.segments {
            cur = match cur {
                SignatureValue::Record(r) => r.get_mut(seg)?,
                _ => return None,
            };
        }
        Some(cur)
    }

    /// Removes the value at `path`, returning it. Used to mask fields when
    /// comparing the untouched remainder of two signatures.
    pub fn remove(&mut self, path: &SigPath) -> Option<SignatureValue> {
        let (last, parents) = path.segments.split_last()?;
        let mut cur = self;
        for seg in parents {
            cur = match cur {
                SignatureValue::Record(r) => r.get_mut(seg)?,
                _ => return None,
            };
        }
        match cur {
            SignatureValue::Record(r) => r.remove(last),
            _ => None,
        }
    }

    /// Every leaf path (non-record value) in the tree, in canonical order.
    pub fn leaf_paths(&self) -> Vec<SigPath> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        collect_leaves(self, &mut prefix, &mut out);
        out
    }

    /// True when any string literal anywhere in the tree is a placeholder.
    pub fn contains_placeholder(&self) -> bool {
        match self {
            SignatureValue::Literal(Literal::Str(s)) => placeholder_name(s).is_some(),
            SignatureValue::Literal(_) => false,
            SignatureValue::Set(s) => s
                .iter()
                .any(|l| l.as_str().is_some_and(|s| placeholder_name(s).is_some())),
            SignatureValue::Record(r) => r.values().any(SignatureValue::contains_placeholder),
        }
    }
}

fn collect_leaves(v: &SignatureValue, prefix: &mut Vec<String>, out: &mut Vec<SigPath>) {
    match v {
        SignatureValue::Record(r) if !r.is_empty() => {
            for (k, child) in r {
                prefix.push(k.clone());
                collect_leaves(child, prefix, out);
                prefix.pop();
            }
        }
        _ if !prefix.is_empty() => out.push(SigPath::from_segments(prefix.clone())),
        _ => {}
    }
}

impl Serialize for SignatureValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SignatureValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Json::deserialize(deserializer)?;
        SignatureValue::from_json(&raw).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Json::deserialize(deserializer)?;
        Literal::from_json(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path `{0}` does not start with `$.`")]
    MissingRoot(String),
    #[error("path `{0}` has an empty segment")]
    EmptySegment(String),
    #[error("path `{0}` contains a placeholder")]
    Placeholder(String),
}

/// A parsed signature path: `$.` followed by dot-separated field names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SigPath {
    segments: Vec<String>,
}

impl SigPath {
    pub fn parse(raw: &str) -> Result<Self, PathError> {
        let rest = raw
            .strip_prefix("$.")
            .ok_or_else(|| PathError::MissingRoot(raw.to_string()))?;
        let mut segments = Vec::new();
        for seg in rest.split('.') {
            if seg.is_empty() {
                return Err(PathError::EmptySegment(raw.to_string()));
            }
            if seg.contains('<') || seg.contains('>') {
                return Err(PathError::Placeholder(raw.to_string()));
            }
            segments.push(seg.to_string());
        }
        Ok(SigPath { segments })
    }

    pub fn from_segments(segments: Vec<String>) -> Self {
        SigPath { segments }
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn top(&self) -> &str {
        &self.segments[0]
    }
}

impl fmt::Display for SigPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("$")?;
        for s in &self.segments {
            write!(f, ".{s}")?;
        }
        Ok(())
    }
}

/// Name inside a whole-string placeholder such as `<QUERY_PLACEHOLDER>`.
pub fn placeholder_name(s: &str) -> Option<&str> {
    let inner = s.strip_prefix('<')?.strip_suffix('>')?;
    if !inner.is_empty()
        && inner
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        Some(inner)
    } else {
        None
    }
}

/// Every `<NAME>` token embedded in free text, in order of appearance.
pub fn embedded_placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        let after = &rest[start..];
        match after.find('>') {
            Some(end) => {
                if let Some(name) = placeholder_name(&after[..=end]) {
                    out.push(name);
                    rest = &after[end + 1..];
                } else {
                    rest = &after[1..];
                }
            }
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sv(v: Json) -> SignatureValue {
        SignatureValue::from_json(&v).unwrap()
    }

    #[test]
    fn record_order_is_irrelevant() {
        let a = sv(json!({"b": 1, "a": 2}));
        let b = sv(json!({"a": 2, "b": 1}));
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
        assert_eq!(a.canonical_bytes(), br#"{"a":2,"b":1}"#);
    }

    #[test]
    fn set_order_is_irrelevant_and_deduplicated() {
        let a = sv(json!({"s": ["x", "y"]}));
        let b = sv(json!({"s": ["y", "x", "y"]}));
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
    }

    #[test]
    fn distinct_values_distinct_bytes() {
        let a = sv(json!({"pagination": {"page_index": 1}}));
        let b = sv(json!({"pagination": {"page_index": 2}}));
        assert_ne!(a.canonical_bytes(), b.canonical_bytes());
        // string "1" and number 1 must not collide
        assert_ne!(
            sv(json!({"a": "1"})).canonical_bytes(),
            sv(json!({"a": 1})).canonical_bytes()
        );
    }

    #[test]
    fn number_normalization() {
        assert_eq!(sv(json!(3.0)).canonical_bytes(), b"3");
        assert_eq!(sv(json!(-0.0)).canonical_bytes(), b"0");
        assert_eq!(sv(json!(0.1)).canonical_bytes(), b"0.1");
        assert_eq!(sv(json!(4.9)).canonical_bytes(), b"4.9");
        assert!(Number::new(f64::NAN).is_none());
    }

    #[test]
    fn paths() {
        let p = SigPath::parse("$.pagination.page_index").unwrap();
        assert_eq!(p.segments(), ["pagination", "page_index"]);
        assert_eq!(p.to_string(), "$.pagination.page_index");
        assert!(matches!(
            SigPath::parse("query"),
            Err(PathError::MissingRoot(_))
        ));
        assert!(matches!(
            SigPath::parse("$.a..b"),
            Err(PathError::EmptySegment(_))
        ));
        assert!(matches!(
            SigPath::parse("$.<field>"),
            Err(PathError::Placeholder(_))
        ));
        let v = sv(json!({"pagination": {"page_index": 3}}));
        assert_eq!(v.get(&p), Some(&SignatureValue::num(3.0)));
        assert!(v.get(&SigPath::parse("$.missing.field").unwrap()).is_none());
    }

    #[test]
    fn placeholders() {
        assert_eq!(
            placeholder_name("<QUERY_PLACEHOLDER>"),
            Some("QUERY_PLACEHOLDER")
        );
        assert_eq!(placeholder_name("laptop"), None);
        assert_eq!(placeholder_name("<>"), None);
        assert_eq!(
            embedded_placeholders("Book <NAME> at <TIME>!"),
            ["NAME", "TIME"]
        );
        assert!(sv(json!({"a": {"b": "<X>"}})).contains_placeholder());
    }

    #[test]
    fn leaf_paths_cover_nested_fields() {
        let v = sv(json!({"q": "", "filters": {}, "pagination": {"page_index": 1}}));
        let leaves: Vec<String> = v.leaf_paths().iter().map(|p| p.to_string()).collect();
        assert_eq!(leaves, ["$.filters", "$.pagination.page_index", "$.q"]);
    }
}
