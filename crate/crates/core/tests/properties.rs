mod common;

use std::collections::HashMap;
use std::net::Ipv4Addr;

use censorlab::blocklist::{BlockRule, Blocklists, CorpusMatcher, Protocol};
use censorlab::censorsim::CensorConfig;
use censorlab::evasion::{apply_outbound, builtin, builtin_names, parse_strategy, segmentation_at, strategy_text};
use censorlab::inference::{budget_for, infer_rule, WorldOracle};
use censorlab::netmodel::dns::{decode_dns_strict, encode_dns};
use censorlab::netmodel::http::http_get;
use censorlab::netmodel::tls::build_client_hello;
use censorlab::netmodel::{DnsMessage, DnsQuestion, DnsRecord, PacketEnvelope, TcpFlags, TcpSegment, UdpDatagram};
use censorlab::prober::{FlowAllocator, Prober, DEFAULT_QUARANTINE};
use censorlab::time::{millis, secs};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ab_string<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| *b"ab.".get(rng.gen_range(0..3)).unwrap() as char)
        .collect()
}

/// Rule matching, the multi-rule automaton and the regex reading of the
/// rule text agree on 10^5 names over a tiny alphabet that forces
/// overlapping and repeated occurrences.
#[test]
fn matcher_agrees_with_regex() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 100_000 {
        let rules: Vec<BlockRule> = (0..8)
            .map(|_| {
                let (p, s) = FORMS[rng.gen_range(0..4)];
                BlockRule::new(ab_string(&mut rng, 1, 4), p, s).unwrap()
            })
            .collect();
        let oracles: Vec<regex::Regex> = rules.iter().map(regex_oracle).collect();
        let matcher = CorpusMatcher::new(&rules);
        for _ in 0..500 {
            let name = ab_string(&mut rng, 0, 12);
            let want: Vec<usize> = (0..rules.len()).filter(|&i| oracles[i].is_match(&name)).collect();
            for (i, r) in rules.iter().enumerate() {
                assert_eq!(r.matches(&name), want.contains(&i), "{r} on {name:?}");
            }
            assert_eq!(matcher.matching(&name), want, "{name:?}");
            checked += 1;
        }
    }
}

#[test]
fn allocator_never_reuses_within_quarantine() {
    let sources: Vec<Ipv4Addr> = (1..=4).map(|i| Ipv4Addr::new(198, 51, 100, i)).collect();
    let mut alloc = FlowAllocator::new(sources, 3, DEFAULT_QUARANTINE);
    let mut last: HashMap<_, u64> = HashMap::new();
    let mut now = 0;
    let targets = [Ipv4Addr::new(95, 85, 96, 1), Ipv4Addr::new(95, 85, 96, 2)];
    for i in 0..100_000u64 {
        now += 700;
        let key = alloc.allocate(targets[(i % 2) as usize], 80, now, None).unwrap();
        if let Some(prev) = last.insert(key, now) {
            assert!(now - prev >= DEFAULT_QUARANTINE, "{key} reused after {} us", now - prev);
        }
    }
}

#[test]
fn builtin_texts_round_trip() {
    for name in builtin_names() {
        let s = builtin(name).unwrap();
        let text = strategy_text(&s);
        assert_eq!(parse_strategy(&text).unwrap().text(), text, "{name}");
    }
}

fn rule_strategy() -> impl Strategy<Value = BlockRule> {
    ("[a-z]{1,6}(\\.[a-z]{1,4}){0,2}\\.?", any::<bool>(), any::<bool>())
        .prop_map(|(core, p, s)| BlockRule::new(core, p, s).unwrap())
}

fn ip() -> impl Strategy<Value = Ipv4Addr> {
    any::<u32>().prop_map(Ipv4Addr::from)
}

fn name() -> impl Strategy<Value = String> {
    "[a-z0-9]{1,12}(\\.[a-z0-9-]{1,10}){0,3}\\.[a-z]{2,6}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rule_text_round_trips(rule in rule_strategy()) {
        prop_assert_eq!(BlockRule::parse(&rule.text()).unwrap(), rule);
    }

    /// Extending a matching name on an unanchored side keeps it matching.
    #[test]
    fn unanchored_sides_are_monotone(rule in rule_strategy(), head in "[a-z.]{0,6}", tail in "[a-z.]{0,6}") {
        let name = format!("{}{}", rule.core, if rule.suffix_anchored { "" } else { "x" });
        prop_assume!(rule.matches(&name));
        let h = if rule.prefix_anchored { String::new() } else { head };
        let t = if rule.suffix_anchored { String::new() } else { tail };
        let extended = format!("{h}{name}{t}");
        prop_assert!(rule.matches(&extended));
    }

    #[test]
    fn tcp_round_trip(src in ip(), dst in ip(), sp: u16, dp: u16, seq: u32, ack: u32, flags in 0u8..64,
                      id: u16, ttl: u8, payload in proptest::collection::vec(any::<u8>(), 0..300)) {
        let mut env = PacketEnvelope::tcp(src, dst, TcpSegment::new(sp, dp, seq, ack, TcpFlags(flags)).with_payload(payload));
        env.ip.identification = id;
        env.ip.ttl = ttl;
        env.finalize();
        prop_assert!(env.checksums_valid());
        prop_assert_eq!(PacketEnvelope::decode(&env.encode()).unwrap(), env);
    }

    #[test]
    fn udp_bit_flip_is_detected(src in ip(), dst in ip(), sp: u16, dp: u16,
                                payload in proptest::collection::vec(any::<u8>(), 0..200), bit: usize) {
        let env = PacketEnvelope::udp(src, dst, UdpDatagram::new(sp, dp, payload));
        let mut bytes = env.encode();
        let bit = bit % (bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        prop_assert!(!PacketEnvelope::decode(&bytes).is_ok_and(|e| e.checksums_valid()));
    }

    #[test]
    fn dns_round_trip(id: u16, qs in proptest::collection::vec(name(), 1..4),
                      ans in proptest::collection::vec((name(), ip(), any::<u32>()), 0..4)) {
        let mut m = DnsMessage {
            id,
            flags: Default::default(),
            counts: Default::default(),
            questions: qs.iter().map(|q| DnsQuestion { qname: q.clone(), qtype: 1, qclass: 1 }).collect(),
            answers: ans.iter().map(|(n, a, t)| DnsRecord::a(n, *a, *t)).collect(),
        };
        m.sync_counts();
        prop_assert_eq!(decode_dns_strict(&encode_dns(&m).unwrap()), Some(m));
    }

    /// Fragmentation preserves the byte stream and sequence numbering.
    #[test]
    fn fragment_preserves_stream(host in name(), index in 1usize..120) {
        let raw = http_get(&host).raw;
        let seg = TcpSegment::new(40000, 80, 1000, 1, TcpFlags::PSH_ACK).with_payload(raw.clone());
        let env = PacketEnvelope::tcp(Ipv4Addr::new(1, 2, 3, 4), Ipv4Addr::new(5, 6, 7, 8), seg);
        let out = apply_outbound(&segmentation_at(index), &env, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut stream = Vec::new();
        for p in &out {
            let t = p.env.as_tcp().unwrap();
            prop_assert_eq!(t.seq, 1000 + stream.len() as u32);
            prop_assert!(p.env.checksums_valid());
            stream.extend_from_slice(&t.payload);
        }
        prop_assert_eq!(out.len(), if index < raw.len() { 2 } else { 1 });
        prop_assert_eq!(stream, raw);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Inference against a world holding only the generated rule returns
    /// that rule within budget.
    #[test]
    fn inference_closure(seed: u64, form in 0usize..4, proto in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rule, domain) = rule_and_seed(&mut rng, FORMS[form]);
        let p = Protocol::ALL[proto];
        let mut bl = Blocklists::default();
        bl.get_mut(p).insert(rule.clone());
        let mut w = world_with(CensorConfig::with_blocklists(bl), standard_hops(), 3);
        let mut prober = Prober::new(vec![SOURCE], seed);
        let mut oracle = WorldOracle::new(&mut w, &mut prober, p, TARGET);
        let got = infer_rule(&domain, p, &mut oracle, None, seed).unwrap();
        prop_assert_eq!(&got.rule, &rule);
        prop_assert!(got.probes_used <= budget_for(&domain));
    }

    /// Every forged packet in a random probe mix carries the signature.
    #[test]
    fn injections_carry_signature(seed: u64, after in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = CensorConfig::with_blocklists(Blocklists::uniform([BlockRule::parse(r".*twitter\.com.*").unwrap()]));
        let mut w = world_with(cfg, standard_hops(), after);
        let src = Ipv4Addr::new(198, 51, 100, 20);
        for k in 0..20u16 {
            let host = if rng.gen_bool(0.5) { "twitter.com" } else { "example.org" };
            let payload = if rng.gen_bool(0.5) { http_get(host).raw } else { build_client_hello(host) };
            let seg = TcpSegment::new(30000 + k, 80, rng.gen(), rng.gen(), TcpFlags::PSH_ACK).with_payload(payload);
            let env = PacketEnvelope::tcp(src, TARGET, seg);
            w.send_at(env.clone(), secs(1) + millis(u64::from(k)));
            w.send_at(env, secs(1 + rng.gen_range(1..35)));
        }
        w.run_until(secs(60));
        for inj in w.injections() {
            prop_assert_eq!(inj.env.ip.identification, 30000);
            prop_assert_eq!(usize::from(inj.env.ip.ttl), 128 - after);
        }
    }
}
