//! Strategy text: `[PROTO:field:value]-action-|` trees, an
//! outbound forest, `\/`, then an inbound forest.

use std::collections::BTreeMap;
use std::fmt;

use crate::time::Micros;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("strategy syntax error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Layer {
    Ip,
    Tcp,
    Udp,
    Dns,
    Http,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Ip => "IP",
            Layer::Tcp => "TCP",
            Layer::Udp => "UDP",
            Layer::Dns => "DNS",
            Layer::Http => "HTTP",
        }
    }

    fn parse(s: &str) -> Option<Layer> {
        Some(match s {
            "IP" => Layer::Ip,
            "TCP" => Layer::Tcp,
            "UDP" => Layer::Udp,
            "DNS" => Layer::Dns,
            "HTTP" => Layer::Http,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trigger {
    pub layer: Layer,
    pub field: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TamperMode {
    Replace(String),
    Corrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Name,
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Primitive {
    Duplicate,
    Fragment {
        layer: String,
        index: usize,
        in_order: bool,
    },
    Tamper {
        layer: Layer,
        field: String,
        mode: TamperMode,
    },
    Insert {
        bytes: Vec<u8>,
        position: Position,
        part: Part,
        count: usize,
    },
    Replace {
        bytes: Vec<u8>,
        part: Part,
        count: usize,
    },
    Drop,
}

impl Primitive {
    /// Subtree slots the primitive uses.
    pub fn arity(&self) -> usize {
        match self {
            Primitive::Duplicate | Primitive::Fragment { .. } => 2,
            Primitive::Tamper { .. } | Primitive::Insert { .. } | Primitive::Replace { .. } => 1,
            Primitive::Drop => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub primitive: Primitive,
    pub left: Option<Box<Action>>,
    pub right: Option<Box<Action>>,
}

impl Action {
    pub fn leaf(primitive: Primitive) -> Self {
        Action {
            primitive,
            left: None,
            right: None,
        }
    }

    /// Send leaves below this action, counting empty slots.
    pub fn leaf_count(&self) -> usize {
        let slot = |a: &Option<Box<Action>>| a.as_ref().map_or(1, |a| a.leaf_count());
        match self.primitive.arity() {
            0 => 0,
            1 => slot(&self.left),
            _ => slot(&self.left) + slot(&self.right),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub trigger: Trigger,
    /// `None` sends the packet unchanged.
    pub action: Option<Action>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Strategy {
    pub outbound: Vec<Tree>,
    pub inbound: Vec<Tree>,
    /// Send delay per leaf of the first outbound tree, by depth-first leaf
    /// index. Not part of the text form.
    pub delays: BTreeMap<usize, Micros>,
}

impl Strategy {
    pub fn with_leaf_delay(mut self, leaf: usize, delay: Micros) -> Self {
        self.delays.insert(leaf, delay);
        self
    }

    pub fn text(&self) -> String {
        self.to_string()
    }
}

pub fn parse_strategy(text: &str) -> Result<Strategy, ParseError> {
    Parser::new(text).strategy()
}

pub fn strategy_text(s: &Strategy) -> String {
    s.to_string()
}

fn percent_decode(s: &str, offset: usize) -> Result<Vec<u8>, ParseError> {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'%' {
            let hex = s.get(i + 1..i + 3).and_then(|h| u8::from_str_radix(h, 16).ok());
            let Some(v) = hex else {
                return Err(ParseError {
                    offset: offset + i,
                    message: "bad percent escape".into(),
                });
            };
            out.push(v);
            i += 3;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    Ok(out)
}

fn percent_encode(bytes: &[u8]) -> String {
    let mut s = String::new();
    for &b in bytes {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            s.push(b as char);
        } else {
            s.push_str(&format!("%{b:02X}"));
        }
    }
    s
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}:{}]", self.layer.as_str(), self.field, self.value)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let part = |p: &Part| match p {
            Part::Name => "name",
            Part::Value => "value",
        };
        match &self.primitive {
            Primitive::Duplicate => write!(f, "duplicate")?,
            Primitive::Drop => write!(f, "drop")?,
            Primitive::Fragment { layer, index, in_order } => write!(
                f,
                "fragment{{{layer}:{index}:{}}}",
                if *in_order { "True" } else { "False" }
            )?,
            Primitive::Tamper { layer, field, mode } => match mode {
                TamperMode::Replace(v) => write!(f, "tamper{{{}:{field}:replace:{v}}}", layer.as_str())?,
                TamperMode::Corrupt => write!(f, "tamper{{{}:{field}:corrupt}}", layer.as_str())?,
            },
            Primitive::Insert {
                bytes,
                position,
                part: p,
                count,
            } => {
                let pos = match position {
                    Position::Start => "start",
                    Position::End => "end",
                };
                write!(f, "insert{{{}:{pos}:{}:{count}}}", percent_encode(bytes), part(p))?
            }
            Primitive::Replace { bytes, part: p, count } => {
                write!(f, "replace{{{}:{}:{count}}}", percent_encode(bytes), part(p))?
            }
        }
        if self.left.is_some() || self.right.is_some() {
            write!(f, "(")?;
            if let Some(l) = &self.left {
                write!(f, "{l}")?;
            }
            write!(f, ",")?;
            if let Some(r) = &self.right {
                write!(f, "{r}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-", self.trigger)?;
        if let Some(a) = &self.action {
            write!(f, "{a}")?;
        }
        write!(f, "-|")
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.outbound.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, " \\/")?;
        for t in &self.inbound {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

/// Recursive-descent parser over the non-whitespace characters of the
/// input; offsets in errors refer to the original text.
struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser {
            chars: text.char_indices().filter(|(_, c)| !c.is_whitespace()).collect(),
            pos: 0,
            len: text.len(),
        }
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.len, |c| c.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(got) => self.err(format!("expected '{c}', found '{got}'")),
                None => self.err(format!("expected '{c}', found end of input")),
            }
        }
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars()
            .enumerate()
            .all(|(k, c)| self.chars.get(self.pos + k).map(|x| x.1) == Some(c))
    }

    /// Characters up to (not including) any of `stops`.
    fn until(&mut self, stops: &[char]) -> (usize, String) {
        let at = self.offset();
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if stops.contains(&c) {
                break;
            }
            s.push(c);
            self.pos += 1;
        }
        (at, s)
    }

    fn strategy(&mut self) -> Result<Strategy, ParseError> {
        let mut s = Strategy::default();
        while self.peek() == Some('[') {
            s.outbound.push(self.tree()?);
        }
        if !(self.eat('\\') && self.eat('/')) {
            return self.err("expected '[' or the '\\/' separator");
        }
        while self.peek() == Some('[') {
            s.inbound.push(self.tree()?);
        }
        if self.peek().is_some() {
            return self.err("unexpected trailing input");
        }
        Ok(s)
    }

    fn tree(&mut self) -> Result<Tree, ParseError> {
        let trigger = self.trigger()?;
        self.expect('-')?;
        let action = if self.starts_with("-|") {
            None
        } else {
            Some(self.action()?)
        };
        if !self.starts_with("-|") {
            return self.err("expected '-|' ending the action tree");
        }
        self.pos += 2;
        Ok(Tree { trigger, action })
    }

    fn trigger(&mut self) -> Result<Trigger, ParseError> {
        self.expect('[')?;
        let (at, body) = self.until(&[']']);
        self.expect(']')?;
        let parts: Vec<&str> = body.splitn(3, ':').collect();
        if parts.len() != 3 {
            return Err(ParseError {
                offset: at,
                message: "trigger must be [PROTO:field:value]".into(),
            });
        }
        let layer = Layer::parse(parts[0]).ok_or_else(|| ParseError {
            offset: at,
            message: format!("unknown protocol {:?}", parts[0]),
        })?;
        Ok(Trigger {
            layer,
            field: parts[1].to_string(),
            value: parts[2].to_string(),
        })
    }

    fn action(&mut self) -> Result<Action, ParseError> {
        let (name_at, name) = self.until(&['{', '(', ',', ')', '-']);
        let (params_at, params) = if self.eat('{') {
            let p = self.until(&['}']);
            self.expect('}')?;
            p
        } else {
            (self.offset(), String::new())
        };
        let primitive = build_primitive(&name, name_at, &params, params_at)?;
        let (mut left, mut right) = (None, None);
        if self.eat('(') {
            if self.peek() != Some(',') {
                left = Some(Box::new(self.action()?));
            }
            let comma_at = self.offset();
            self.expect(',')?;
            if self.peek() != Some(')') {
                right = Some(Box::new(self.action()?));
            }
            self.expect(')')?;
            let arity = primitive.arity();
            if (arity < 1 && left.is_some()) || (arity < 2 && right.is_some()) {
                return Err(ParseError {
                    offset: comma_at,
                    message: format!("{name} takes {arity} subtree(s)"),
                });
            }
        }
        Ok(Action { primitive, left, right })
    }
}

fn build_primitive(name: &str, name_at: usize, params: &str, at: usize) -> Result<Primitive, ParseError> {
    let p: Vec<&str> = if params.is_empty() {
        Vec::new()
    } else {
        params.split(':').collect()
    };
    let bad = |msg: &str| ParseError {
        offset: at,
        message: format!("{name}: {msg}"),
    };
    let count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad("count must be a non-negative integer"))
    };
    let part = |s: &str| match s {
        "name" => Ok(Part::Name),
        "value" => Ok(Part::Value),
        _ => Err(bad("expected name or value")),
    };
    Ok(match name {
        "duplicate" if p.is_empty() => Primitive::Duplicate,
        "drop" if p.is_empty() => Primitive::Drop,
        "duplicate" | "drop" => return Err(bad("takes no parameters")),
        "fragment" => {
            let [layer, index, in_order] = p[..] else {
                return Err(bad("expected {layer:index:True|False}"));
            };
            let in_order = match in_order {
                "True" => true,
                "False" => false,
                _ => return Err(bad("order flag must be True or False")),
            };
            Primitive::Fragment {
                layer: layer.to_string(),
                index: index.parse().map_err(|_| bad("index must be an integer"))?,
                in_order,
            }
        }
        "tamper" => {
            let layer = p
                .first()
                .and_then(|l| Layer::parse(l))
                .ok_or_else(|| bad("unknown protocol"))?;
            let mode = match p[..] {
                [_, _, "corrupt"] => TamperMode::Corrupt,
                [_, _, "replace", v] => TamperMode::Replace(v.to_string()),
                _ => return Err(bad("expected {PROTO:field:replace:value} or {PROTO:field:corrupt}")),
            };
            Primitive::Tamper {
                layer,
                field: p[1].to_string(),
                mode,
            }
        }
        "insert" => {
            let [bytes, position, which, n] = p[..] else {
                return Err(bad("expected {bytes:start|end:name|value:count}"));
            };
            let position = match position {
                "start" => Position::Start,
                "end" => Position::End,
                _ => return Err(bad("position must be start or end")),
            };
            Primitive::Insert {
                bytes: percent_decode(bytes, at)?,
                position,
                part: part(which)?,
                count: count(n)?,
            }
        }
        "replace" => {
            let [bytes, which, n] = p[..] else {
                return Err(bad("expected {bytes:name|value:count}"));
            };
            Primitive::Replace {
                bytes: percent_decode(bytes, at)?,
                part: part(which)?,
                count: count(n)?,
            }
        }
        _ => {
            return Err(ParseError {
                offset: name_at,
                message: format!("unknown primitive {name:?}"),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiline_text_parses() {
        let s = parse_strategy(" [TCP:flags:S]-duplicate(,\n   duplicate(tamper{TCP:flags:replace:R}(\n     tamper{TCP:chksum:corrupt},),))-| \\/").unwrap();
        assert_eq!(
            s.text(),
            "[TCP:flags:S]-duplicate(,duplicate(tamper{TCP:flags:replace:R}(tamper{TCP:chksum:corrupt},),))-| \\/"
        );
        assert_eq!(s.outbound[0].action.as_ref().unwrap().leaf_count(), 3);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_strategy("[TCP:flags:S]-explode{1}-| \\/").unwrap_err();
        assert_eq!(e.offset, 14);
        let e = parse_strategy("[TCP:flags:S]-duplicate(,)").unwrap_err();
        assert_eq!(e.offset, 26);
        let e = parse_strategy("[XYZ:a:b]--| \\/").unwrap_err();
        assert_eq!(e.offset, 1);
        let e = parse_strategy("[TCP:flags:S]-tamper{TCP:flags:replace:R}(,drop)-| \\/").unwrap_err();
        assert!(e.message.contains("subtree"));
    }

    #[test]
    fn percent_bytes() {
        let s = parse_strategy("[HTTP:host:*]-insert{%09%0A:start:value:1}-| \\/").unwrap();
        match &s.outbound[0].action.as_ref().unwrap().primitive {
            Primitive::Insert { bytes, .. } => assert_eq!(bytes, b"\t\n"),
            p => panic!("{p:?}"),
        }
    }

    #[test]
    fn inbound_forest_round_trips() {
        let t = "[TCP:flags:S]--| \\/ [TCP:flags:R]-drop-|";
        assert_eq!(parse_strategy(t).unwrap().text(), t);
    }
}
