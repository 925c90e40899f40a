//! Applying strategies to packets.

use rand::Rng;

use crate::netmodel::dns::{decode_dns, encode_dns};
use crate::netmodel::http::HttpView;
use crate::netmodel::{PacketEnvelope, TcpFlags, Transport};
use crate::time::Micros;

use super::dsl::{Action, Layer, Part, Position, Primitive, Strategy, TamperMode, Tree, Trigger};
use super::EvasionError;

/// One output packet and its send delay relative to the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheduled {
    pub delay: Micros,
    pub env: PacketEnvelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Checksum {
    Compute,
    Corrupt,
    Fixed(u16),
}

#[derive(Debug, Clone)]
struct Work {
    env: PacketEnvelope,
    checksum: Checksum,
}

fn http_view(env: &PacketEnvelope) -> Option<HttpView> {
    let tcp = env.as_tcp()?;
    if tcp.payload.is_empty() {
        return None;
    }
    HttpView::parse(&tcp.payload)
}

pub fn trigger_matches(t: &Trigger, env: &PacketEnvelope) -> bool {
    let any = |s: &str| s == "*";
    match t.layer {
        Layer::Ip => any(&t.field),
        Layer::Tcp => {
            let Some(tcp) = env.as_tcp() else { return false };
            match t.field.as_str() {
                "*" => true,
                "flags" => any(&t.value) || TcpFlags::from_letters(&t.value) == Some(tcp.flags),
                "dport" => any(&t.value) || t.value.parse() == Ok(tcp.dst_port),
                "sport" => any(&t.value) || t.value.parse() == Ok(tcp.src_port),
                _ => false,
            }
        }
        Layer::Udp => env.as_udp().is_some() && any(&t.field),
        Layer::Dns => {
            let Some(msg) = env.as_udp().and_then(|u| decode_dns(&u.payload).ok()) else {
                return false;
            };
            if msg.flags.qr {
                return false;
            }
            match t.field.as_str() {
                "*" => true,
                "qname" => any(&t.value) || msg.questions.iter().any(|q| q.qname.eq_ignore_ascii_case(&t.value)),
                _ => false,
            }
        }
        Layer::Http => {
            let Some(v) = http_view(env) else { return false };
            let raw = &env.as_tcp().expect("checked").payload;
            let field_value = match t.field.as_str() {
                "method" => Some(&raw[v.method.clone()]),
                "version" => Some(&raw[v.version.clone()]),
                "path" => Some(&raw[v.target.clone()]),
                name => v.header(raw, name).map(|h| &raw[h.value.clone()]),
            };
            match field_value {
                Some(val) => any(&t.value) || val.eq_ignore_ascii_case(t.value.as_bytes()),
                None => false,
            }
        }
    }
}

/// Runs the first outbound tree whose trigger matches; other packets pass
/// unchanged.
pub fn apply_outbound<R: Rng>(s: &Strategy, env: &PacketEnvelope, rng: &mut R) -> Result<Vec<Scheduled>, EvasionError> {
    apply_forest(&s.outbound, s, env, rng, true)
}

pub fn apply_inbound<R: Rng>(s: &Strategy, env: &PacketEnvelope, rng: &mut R) -> Result<Vec<Scheduled>, EvasionError> {
    apply_forest(&s.inbound, s, env, rng, false)
}

fn apply_forest<R: Rng>(
    forest: &[Tree],
    s: &Strategy,
    env: &PacketEnvelope,
    rng: &mut R,
    delays: bool,
) -> Result<Vec<Scheduled>, EvasionError> {
    let Some((idx, tree)) = forest
        .iter()
        .enumerate()
        .find(|(_, t)| trigger_matches(&t.trigger, env))
    else {
        return Ok(vec![Scheduled {
            delay: 0,
            env: env.clone(),
        }]);
    };
    let leaves = apply_tree(tree, env, rng)?;
    Ok(leaves
        .into_iter()
        .map(|(leaf, env)| {
            let delay = if delays && idx == 0 {
                s.delays.get(&leaf).copied().unwrap_or(0)
            } else {
                0
            };
            Scheduled { delay, env }
        })
        .collect())
}

/// Output packets with their leaf indices.
pub fn apply_tree<R: Rng>(
    tree: &Tree,
    env: &PacketEnvelope,
    rng: &mut R,
) -> Result<Vec<(usize, PacketEnvelope)>, EvasionError> {
    let Some(action) = &tree.action else {
        return Ok(vec![(0, env.clone())]);
    };
    let work = Work {
        env: env.clone(),
        checksum: Checksum::Compute,
    };
    if tree.trigger.layer == Layer::Http {
        return Ok(vec![(0, http_rewrite(&tree.trigger, action, work)?)]);
    }
    let mut out = Vec::new();
    run(action, work, 0, &mut out, rng)?;
    Ok(out.into_iter().map(|(leaf, w)| (leaf, finish(w, rng))).collect())
}

fn finish<R: Rng>(mut w: Work, rng: &mut R) -> PacketEnvelope {
    w.env.finalize();
    let correct = match &w.env.transport {
        Transport::Tcp(t) => t.checksum,
        Transport::Udp(u) => u.checksum,
        Transport::Icmp(i) => i.checksum,
    };
    let forced = match w.checksum {
        Checksum::Compute => return w.env,
        Checksum::Fixed(v) => v,
        Checksum::Corrupt => {
            let v: u16 = rng.gen();
            if v == correct {
                v ^ 0x5a5a
            } else {
                v
            }
        }
    };
    match &mut w.env.transport {
        Transport::Tcp(t) => t.checksum = forced,
        Transport::Udp(u) => u.checksum = forced,
        Transport::Icmp(i) => i.checksum = forced,
    }
    w.env
}

fn slot<R: Rng>(
    a: &Option<Box<Action>>,
    w: Work,
    first_leaf: usize,
    out: &mut Vec<(usize, Work)>,
    rng: &mut R,
) -> Result<(), EvasionError> {
    match a {
        Some(a) => run(a, w, first_leaf, out, rng),
        None => {
            out.push((first_leaf, w));
            Ok(())
        }
    }
}

fn slot_leaves(a: &Option<Box<Action>>) -> usize {
    a.as_ref().map_or(1, |a| a.leaf_count())
}

fn run<R: Rng>(
    a: &Action,
    mut w: Work,
    leaf: usize,
    out: &mut Vec<(usize, Work)>,
    rng: &mut R,
) -> Result<(), EvasionError> {
    let right_leaf = leaf + slot_leaves(&a.left);
    match &a.primitive {
        Primitive::Drop => Ok(()),
        Primitive::Duplicate => {
            slot(&a.left, w.clone(), leaf, out, rng)?;
            slot(&a.right, w, right_leaf, out, rng)
        }
        Primitive::Tamper { layer, field, mode } => {
            tamper(&mut w, *layer, field, mode, rng)?;
            slot(&a.left, w, leaf, out, rng)
        }
        Primitive::Fragment { layer, index, in_order } => {
            if !layer.eq_ignore_ascii_case("tcp") {
                return Err(EvasionError::Unsupported(format!("fragment layer {layer:?}")));
            }
            let Some(tcp) = w.env.as_tcp() else {
                log::warn!("fragment on a non-TCP packet; sending unchanged");
                return slot(&a.left, w, leaf, out, rng);
            };
            if *index == 0 || *index >= tcp.payload.len() {
                log::warn!(
                    "fragment index {index} outside payload of {} bytes; sending unchanged",
                    tcp.payload.len()
                );
                return slot(&a.left, w, leaf, out, rng);
            }
            let mut first = w.clone();
            let mut second = w;
            {
                let t = first.env.as_tcp_mut().expect("tcp");
                t.payload.truncate(*index);
            }
            {
                let t = second.env.as_tcp_mut().expect("tcp");
                t.payload.drain(..*index);
                t.seq = t.seq.wrapping_add(*index as u32);
            }
            let mut a_out = Vec::new();
            let mut b_out = Vec::new();
            slot(&a.left, first, leaf, &mut a_out, rng)?;
            slot(&a.right, second, right_leaf, &mut b_out, rng)?;
            if *in_order {
                out.extend(a_out);
                out.extend(b_out);
            } else {
                out.extend(b_out);
                out.extend(a_out);
            }
            Ok(())
        }
        Primitive::Insert { .. } | Primitive::Replace { .. } => {
            Err(EvasionError::Unsupported("insert/replace need an HTTP trigger".into()))
        }
    }
}

fn number<T: TryFrom<u64>, R: Rng>(mode: &TamperMode, rng: &mut R) -> Result<T, EvasionError> {
    let v = match mode {
        TamperMode::Corrupt => rng.gen::<u64>(),
        TamperMode::Replace(s) => s
            .parse::<u64>()
            .map_err(|_| EvasionError::Unsupported(format!("numeric value expected, got {s:?}")))?,
    };
    match T::try_from(v) {
        Ok(x) => Ok(x),
        Err(_) if matches!(mode, TamperMode::Corrupt) => {
            T::try_from(v & 0xffff).map_err(|_| EvasionError::Unsupported("value out of range".into()))
        }
        Err(_) => Err(EvasionError::Unsupported(format!("value {v} out of range"))),
    }
}

fn tamper<R: Rng>(w: &mut Work, layer: Layer, field: &str, mode: &TamperMode, rng: &mut R) -> Result<(), EvasionError> {
    let unknown = || EvasionError::Unsupported(format!("tamper {}:{field}", layer.as_str()));
    match layer {
        Layer::Ip => match field {
            "ttl" => w.env.ip.ttl = number(mode, rng)?,
            _ => return Err(unknown()),
        },
        Layer::Tcp => {
            if field == "chksum" {
                w.checksum = match mode {
                    TamperMode::Corrupt => Checksum::Corrupt,
                    TamperMode::Replace(_) => Checksum::Fixed(number(mode, rng)?),
                };
                return Ok(());
            }
            let Some(t) = w.env.as_tcp_mut() else {
                log::warn!("TCP tamper on a non-TCP packet ignored");
                return Ok(());
            };
            match (field, mode) {
                ("flags", TamperMode::Replace(v)) => {
                    t.flags =
                        TcpFlags::from_letters(v).ok_or_else(|| EvasionError::Unsupported(format!("flags {v:?}")))?
                }
                ("flags", TamperMode::Corrupt) => t.flags = TcpFlags(rng.gen::<u8>() & 0x3f),
                ("seq", _) => t.seq = number(mode, rng)?,
                ("ack", _) => t.ack = number(mode, rng)?,
                ("window", _) => t.window = number(mode, rng)?,
                ("urgptr", _) => t.urgent_ptr = number(mode, rng)?,
                ("load", TamperMode::Replace(v)) => t.payload = v.as_bytes().to_vec(),
                ("load", TamperMode::Corrupt) => {
                    let n = t.payload.len();
                    t.payload = (0..n).map(|_| rng.gen()).collect();
                }
                _ => return Err(unknown()),
            }
        }
        Layer::Udp => match field {
            "chksum" => {
                w.checksum = match mode {
                    TamperMode::Corrupt => Checksum::Corrupt,
                    TamperMode::Replace(_) => Checksum::Fixed(number(mode, rng)?),
                }
            }
            _ => return Err(unknown()),
        },
        Layer::Dns => {
            let Some(u) = w.env.as_udp_mut() else {
                log::warn!("DNS tamper on a non-UDP packet ignored");
                return Ok(());
            };
            let mut msg = decode_dns(&u.payload).map_err(|e| EvasionError::Unsupported(format!("DNS tamper: {e}")))?;
            let v: u16 = number(mode, rng)?;
            match field {
                "qdcount" => msg.counts.qdcount = v,
                "ancount" => msg.counts.ancount = v,
                "nscount" => msg.counts.nscount = v,
                "arcount" => msg.counts.arcount = v,
                "id" => msg.id = v,
                _ => return Err(unknown()),
            }
            u.payload = encode_dns(&msg).map_err(|e| EvasionError::Unsupported(e.to_string()))?;
        }
        Layer::Http => return Err(unknown()),
    }
    Ok(())
}

/// A header line split into editable parts; `sep` sits between name and
/// value and `trail` after the value.
#[derive(Debug, Clone)]
struct Line {
    name: Vec<u8>,
    sep: Vec<u8>,
    value: Vec<u8>,
    trail: Vec<u8>,
}

enum Unit {
    Line(Line),
    Token(Vec<u8>),
}

fn http_rewrite(trigger: &Trigger, action: &Action, mut w: Work) -> Result<PacketEnvelope, EvasionError> {
    let v = http_view(&w.env).ok_or_else(|| EvasionError::Unsupported("HTTP trigger on a non-HTTP packet".into()))?;
    let raw = w.env.as_tcp().expect("checked").payload.clone();
    let (span, unit) = match trigger.field.as_str() {
        "method" => (v.method.clone(), Unit::Token(raw[v.method.clone()].to_vec())),
        "version" => (v.version.clone(), Unit::Token(raw[v.version.clone()].to_vec())),
        "path" => (v.target.clone(), Unit::Token(raw[v.target.clone()].to_vec())),
        name => {
            let h = v
                .header(&raw, name)
                .ok_or_else(|| EvasionError::Unsupported(format!("no {name} header")))?;
            let line = Line {
                name: raw[h.name.clone()].to_vec(),
                sep: raw[h.name.end..h.value.start].to_vec(),
                value: raw[h.value.clone()].to_vec(),
                trail: raw[h.value.end..h.line.end].to_vec(),
            };
            (h.line.start..h.line.end + 2, Unit::Line(line))
        }
    };
    let units = http_run(action, unit)?;
    let mut body = Vec::new();
    for u in units {
        match u {
            Unit::Token(t) => body.extend(t),
            Unit::Line(l) => {
                body.extend(l.name);
                body.extend(l.sep);
                body.extend(l.value);
                body.extend(l.trail);
                body.extend_from_slice(b"\r\n");
            }
        }
    }
    let mut out = raw[..span.start].to_vec();
    out.extend(body);
    out.extend_from_slice(&raw[span.end..]);
    w.env.as_tcp_mut().expect("tcp").payload = out;
    w.env.finalize();
    Ok(w.env)
}

fn http_slot(a: &Option<Box<Action>>, u: Unit) -> Result<Vec<Unit>, EvasionError> {
    match a {
        Some(a) => http_run(a, u),
        None => Ok(vec![u]),
    }
}

fn repeat(bytes: &[u8], n: usize) -> Vec<u8> {
    bytes.repeat(n)
}

fn http_run(a: &Action, u: Unit) -> Result<Vec<Unit>, EvasionError> {
    match &a.primitive {
        Primitive::Drop => Ok(Vec::new()),
        Primitive::Duplicate => {
            let copy = match &u {
                Unit::Line(l) => Unit::Line(l.clone()),
                Unit::Token(t) => Unit::Token(t.clone()),
            };
            let mut out = http_slot(&a.left, u)?;
            out.extend(http_slot(&a.right, copy)?);
            Ok(out)
        }
        Primitive::Insert {
            bytes,
            position,
            part,
            count,
        } => {
            let ins = repeat(bytes, *count);
            let u = match u {
                Unit::Token(mut t) if *part == Part::Value => {
                    splice(&mut t, &ins, *position);
                    Unit::Token(t)
                }
                Unit::Line(mut l) => {
                    let target = if *part == Part::Name { &mut l.name } else { &mut l.value };
                    splice(target, &ins, *position);
                    Unit::Line(l)
                }
                Unit::Token(_) => return Err(EvasionError::Unsupported("request-line tokens have no name".into())),
            };
            http_slot(&a.left, u)
        }
        Primitive::Replace { bytes, part, count } => {
            let new = repeat(bytes, *count);
            let u = match u {
                Unit::Token(_) if *part == Part::Value => Unit::Token(new),
                Unit::Line(mut l) => {
                    if *part == Part::Name {
                        l.name = new;
                    } else {
                        l.value = new;
                    }
                    Unit::Line(l)
                }
                Unit::Token(_) => return Err(EvasionError::Unsupported("request-line tokens have no name".into())),
            };
            http_slot(&a.left, u)
        }
        Primitive::Tamper { .. } | Primitive::Fragment { .. } => Err(EvasionError::Unsupported(
            "packet-level actions under an HTTP trigger".into(),
        )),
    }
}

fn splice(target: &mut Vec<u8>, ins: &[u8], position: Position) {
    match position {
        Position::Start => {
            target.splice(0..0, ins.iter().copied());
        }
        Position::End => target.extend_from_slice(ins),
    }
}
