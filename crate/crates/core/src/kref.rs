//! Universal memory reference URIs.
//!
//! Canonical form:
//!
//! ```text
//! kref://project/space[/sub...]/item.kind[?r=N][&a=artifact]
//! ```
//!
//! Tokens are restricted to `[A-Za-z0-9._-]+`. The kind is whatever follows
//! the last dot of the final path segment, so item names may themselves
//! contain dots. Query keys may arrive in any order; the canonical form always
//! emits `r` before `a`.
//!
//! Parsing is the only place a kref is validated. Everything downstream takes
//! [`Kref`] values as already-valid.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SCHEME: &str = "kref://";

/// Maximum number of space segments between the project and the item.
pub const MAX_SPACE_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KrefError {
    #[error("malformed kref `{input}`: {reason}")]
    Malformed { input: String, reason: String },
}

impl KrefError {
    fn new(input: &str, reason: impl Into<String>) -> Self {
        KrefError::Malformed {
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}

/// Returns true when `s` is a non-empty run of `[A-Za-z0-9._-]`.
pub fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || b == b'-')
}

/// A parsed memory reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Kref {
    project: String,
    space_path: Vec<String>,
    item_name: String,
    kind: String,
    revision_pin: Option<u32>,
    artifact_name: Option<String>,
}

impl Kref {
    /// Builds an item-level kref from parts, validating every token.
    pub fn new<S: AsRef<str>>(
        project: &str,
        space_path: &[S],
        item_name: &str,
        kind: &str,
    ) -> Result<Self, KrefError> {
        let space: Vec<String> = space_path.iter().map(|s| s.as_ref().to_string()).collect();
        let k = Kref {
            project: project.to_string(),
            space_path: space,
            item_name: item_name.to_string(),
            kind: kind.to_string(),
            revision_pin: None,
            artifact_name: None,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn parse(text: &str) -> Result<Self, KrefError> {
        let rest = text
            .strip_prefix(SCHEME)
            .ok_or_else(|| KrefError::new(text, "missing `kref://` scheme"))?;

        let (path, query) = match rest.find('?') {
            Some(i) => (&rest[..i], Some(&rest[i + 1..])),
            None => (rest, None),
        };

        let segments: Vec<&str> = path.split('/').collect();
        if segments.len() < 3 {
            return Err(KrefError::new(
                text,
                "expected project, at least one space segment and an item",
            ));
        }
        for seg in &segments {
            if seg.is_empty() {
                return Err(KrefError::new(text, "empty path segment"));
            }
            if !is_token(seg) {
                return Err(KrefError::new(
                    text,
                    format!("segment `{seg}` contains characters outside [A-Za-z0-9._-]"),
                ));
            }
        }
        let space_count = segments.len() - 2;
        if space_count > MAX_SPACE_DEPTH {
            return Err(KrefError::new(
                text,
                format!("space path deeper than {MAX_SPACE_DEPTH} segments"),
            ));
        }

        let last = segments[segments.len() - 1];
        let dot = last
            .rfind('.')
            .ok_or_else(|| KrefError::new(text, "item segment has no `.kind` suffix"))?;
        let (item_name, kind) = (&last[..dot], &last[dot + 1..]);
        if item_name.is_empty() {
            return Err(KrefError::new(text, "empty item name"));
        }
        if kind.is_empty() {
            return Err(KrefError::new(text, "empty kind"));
        }

        let mut revision_pin = None;
        let mut artifact_name = None;
        if let Some(query) = query {
            if query.is_empty() {
                return Err(KrefError::new(text, "empty query string"));
            }
            for pair in query.split('&') {
                let (key, value) = pair
                    .split_once('=')
                    .ok_or_else(|| KrefError::new(text, format!("query pair `{pair}` has no `=`")))?;
                match key {
                    "r" => {
                        if revision_pin.is_some() {
                            return Err(KrefError::new(text, "duplicate `r` parameter"));
                        }
                        revision_pin = Some(parse_pin(text, value)?);
                    }
                    "a" => {
                        if artifact_name.is_some() {
                            return Err(KrefError::new(text, "duplicate `a` parameter"));
                        }
                        if !is_token(value) {
                            return Err(KrefError::new(text, "invalid artifact name"));
                        }
                        artifact_name = Some(value.to_string());
                    }
                    other => {
                        return Err(KrefError::new(text, format!("unknown query key `{other}`")))
                    }
                }
            }
        }

        Ok(Kref {
            project: segments[0].to_string(),
            space_path: segments[1..segments.len() - 1]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            item_name: item_name.to_string(),
            kind: kind.to_string(),
            revision_pin,
            artifact_name,
        })
    }

    fn validate(&self) -> Result<(), KrefError> {
        let shown = self.to_string();
        if !is_token(&self.project) {
            return Err(KrefError::new(&shown, "invalid project"));
        }
        if self.space_path.is_empty() || self.space_path.len() > MAX_SPACE_DEPTH {
            return Err(KrefError::new(&shown, "space path must have 1..=8 segments"));
        }
        if self.space_path.iter().any(|s| !is_token(s)) {
            return Err(KrefError::new(&shown, "invalid space segment"));
        }
        if !is_token(&self.item_name) {
            return Err(KrefError::new(&shown, "invalid item name"));
        }
        if !is_token(&self.kind) || self.kind.contains('.') {
            return Err(KrefError::new(&shown, "invalid kind"));
        }
        if self.revision_pin == Some(0) {
            return Err(KrefError::new(&shown, "revision pin must be >= 1"));
        }
        if let Some(a) = &self.artifact_name {
            if !is_token(a) {
                return Err(KrefError::new(&shown, "invalid artifact name"));
            }
        }
        Ok(())
    }

    pub fn project(&self) -> &str {
        &self.project
    }

    pub fn space_path(&self) -> &[String] {
        &self.space_path
    }

    pub fn item_name(&self) -> &str {
        &self.item_name
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn revision_pin(&self) -> Option<u32> {
        self.revision_pin
    }

    pub fn artifact_name(&self) -> Option<&str> {
        self.artifact_name.as_deref()
    }

    /// `project/space/...` without scheme or item.
    pub fn space_key(&self) -> String {
        format!("{}/{}", self.project, self.space_path.join("/"))
    }

    /// The same address with revision pin and artifact stripped.
    pub fn item_ref(&self) -> Kref {
        Kref {
            revision_pin: None,
            artifact_name: None,
            ..self.clone()
        }
    }

    pub fn is_item_ref(&self) -> bool {
        self.revision_pin.is_none() && self.artifact_name.is_none()
    }

    /// Pins to revision `seq`. Panics on `seq == 0`, which no caller may produce.
    pub fn with_revision(&self, seq: u32) -> Kref {
        assert!(seq >= 1, "revision pins start at 1");
        Kref {
            revision_pin: Some(seq),
            ..self.clone()
        }
    }

    pub fn with_artifact(&self, name: &str) -> Result<Kref, KrefError> {
        if !is_token(name) {
            return Err(KrefError::new(name, "invalid artifact name"));
        }
        Ok(Kref {
            artifact_name: Some(name.to_string()),
            ..self.clone()
        })
    }
}

fn parse_pin(input: &str, value: &str) -> Result<u32, KrefError> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(KrefError::new(input, format!("non-numeric revision `{value}`")));
    }
    if value.starts_with('0') {
        return Err(KrefError::new(
            input,
            "revision must be a positive integer without leading zeros",
        ));
    }
    value
        .parse::<u32>()
        .map_err(|_| KrefError::new(input, "revision out of range"))
}

impl fmt::Display for Kref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{SCHEME}{}", self.project)?;
        for seg in &self.space_path {
            write!(f, "/{seg}")?;
        }
        write!(f, "/{}.{}", self.item_name, self.kind)?;
        match (self.revision_pin, &self.artifact_name) {
            (Some(r), Some(a)) => write!(f, "?r={r}&a={a}"),
            (Some(r), None) => write!(f, "?r={r}"),
            (None, Some(a)) => write!(f, "?a={a}"),
            (None, None) => Ok(()),
        }
    }
}

impl FromStr for Kref {
    type Err = KrefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kref::parse(s)
    }
}

// Ordering follows the canonical text, with numeric comparison of the pin so
// that `?r=2` sorts before `?r=10`.
impl Ord for Kref {
    fn cmp(&self, other: &Self) -> Ordering {
        self.project
            .cmp(&other.project)
            .then_with(|| self.space_path.cmp(&other.space_path))
            .then_with(|| self.item_name.cmp(&other.item_name))
            .then_with(|| self.kind.cmp(&other.kind))
            .then_with(|| self.revision_pin.cmp(&other.revision_pin))
            .then_with(|| self.artifact_name.cmp(&other.artifact_name))
    }
}

impl PartialOrd for Kref {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Kref {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Kref {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Kref::parse(&s).map_err(serde::de::Error::custom)
    }
}
