use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("empty rule core")]
    EmptyCore,
    #[error("unsupported rule syntax at byte {offset}: {text:?}")]
    Unsupported { text: String, offset: usize },
}

/// An anchored-substring blocking rule: `[^] core [$]`, with implicit
/// wildcards on unanchored sides.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockRule {
    pub core: String,
    pub prefix_anchored: bool,
    pub suffix_anchored: bool,
}

const META: &[u8] = b".*+?()[]{}|^$\\";

impl BlockRule {
    pub fn new(core: impl Into<String>, prefix_anchored: bool, suffix_anchored: bool) -> Result<Self, RuleError> {
        let core = core.into();
        if core.is_empty() {
            return Err(RuleError::EmptyCore);
        }
        if let Some(offset) = core.bytes().position(|b| META.contains(&b) && b != b'.') {
            return Err(RuleError::Unsupported { text: core, offset });
        }
        Ok(BlockRule {
            core,
            prefix_anchored,
            suffix_anchored,
        })
    }

    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let unsupported = |offset: usize| RuleError::Unsupported {
            text: text.to_string(),
            offset,
        };
        let (prefix_anchored, start) = if text.starts_with('^') {
            (true, 1)
        } else if text.starts_with(".*") {
            (false, 2)
        } else {
            return Err(unsupported(0));
        };
        let rest = &text[start..];
        let (suffix_anchored, body) = if let Some(b) = rest.strip_suffix('$') {
            (true, b)
        } else if let Some(b) = rest.strip_suffix(".*") {
            // "\.*" would be an escaped dot followed by a star.
            if b.ends_with('\\') && !b.ends_with("\\\\") {
                return Err(unsupported(text.len() - 2));
            }
            (false, b)
        } else {
            return Err(unsupported(text.len()));
        };
        let mut core = String::with_capacity(body.len());
        let mut bytes = body.bytes().enumerate();
        while let Some((i, b)) = bytes.next() {
            match b {
                b'\\' => match bytes.next() {
                    Some((_, b'.')) => core.push('.'),
                    _ => return Err(unsupported(start + i)),
                },
                _ if META.contains(&b) => return Err(unsupported(start + i)),
                _ => core.push(b as char),
            }
        }
        if !body.is_ascii() {
            return Err(unsupported(start));
        }
        BlockRule::new(core, prefix_anchored, suffix_anchored)
    }

    pub fn text(&self) -> String {
        let mut out = String::with_capacity(self.core.len() + 6);
        out.push_str(if self.prefix_anchored { "^" } else { ".*" });
        for c in self.core.chars() {
            if c == '.' {
                out.push('\\');
            }
            out.push(c);
        }
        out.push_str(if self.suffix_anchored { "$" } else { ".*" });
        out
    }

    /// Case-insensitive anchored substring test.
    pub fn matches(&self, name: &str) -> bool {
        let name = name.to_ascii_lowercase();
        let core = self.core.to_ascii_lowercase();
        match (self.prefix_anchored, self.suffix_anchored) {
            (true, true) => name == core,
            (true, false) => name.starts_with(&core),
            (false, true) => name.ends_with(&core),
            (false, false) => name.contains(&core),
        }
    }

    /// Whether a match of the core at `start..end` in a name of length
    /// `len` satisfies the anchors.
    pub fn accepts_span(&self, start: usize, end: usize, len: usize) -> bool {
        (!self.prefix_anchored || start == 0) && (!self.suffix_anchored || end == len)
    }
}

impl fmt::Display for BlockRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl Serialize for BlockRule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text())
    }
}

impl<'de> Deserialize<'de> for BlockRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        BlockRule::parse(&text).map_err(serde::de::Error::custom)
    }
}

impl FromStr for BlockRule {
    type Err = RuleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlockRule::parse(s)
    }
}
