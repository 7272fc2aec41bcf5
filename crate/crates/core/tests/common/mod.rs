//! Shared test support: reference implementations, generators and a
//! line-protocol client. The reference implementations are deliberately
//! naive and share no code with the library.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use codetations::{Anchor, ReattachConfig, TagRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const CONTEXT: usize = 64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Reference implementations
// ---------------------------------------------------------------------------

/// Full-matrix edit distance.
pub struct Lev {
    buf: Vec<usize>,
}

impl Lev {
    pub fn new() -> Self {
        Lev { buf: Vec::new() }
    }

    pub fn distance(&mut self, a: &[char], b: &[char]) -> usize {
        let w = b.len() + 1;
        self.buf.clear();
        self.buf.resize((a.len() + 1) * w, 0);
        let d = &mut self.buf;
        for i in 0..=a.len() {
            d[i * w] = i;
        }
        for j in 0..=b.len() {
            d[j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i * w + j] = (d[(i - 1) * w + j] + 1)
                    .min(d[i * w + j - 1] + 1)
                    .min(d[(i - 1) * w + j - 1] + cost);
            }
        }
        d[a.len() * w + b.len()]
    }

    pub fn similarity(&mut self, a: &[char], b: &[char]) -> f64 {
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        1.0 - self.distance(a, b) as f64 / a.len().max(b.len()) as f64
    }
}

pub fn oracle_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    Lev::new().distance(&a, &b)
}

/// Reference offset mapping, written case by case from the rules.
pub fn oracle_map(x: usize, p: usize, d: usize, i: usize, right: bool) -> usize {
    if x < p {
        x
    } else if x == p {
        if right {
            p + i
        } else {
            p
        }
    } else if x < p + d {
        if right {
            p + i
        } else {
            p
        }
    } else if x == p + d {
        p + i
    } else {
        x - d + i
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleResult {
    Hit { anchor: Anchor, score: f64, exact: bool },
    Orphaned { best: Option<(Anchor, f64)> },
}

/// Exhaustive search: exact scan, then every window of every allowed length
/// scored from scratch.
pub fn oracle_reattach(tag: &TagRecord, doc: &str, cfg: &ReattachConfig) -> OracleResult {
    let doc: Vec<char> = doc.chars().collect();
    let anchor: Vec<char> = tag.context.anchor_text.chars().collect();
    let prefix: Vec<char> = tag.context.prefix.chars().collect();
    let suffix: Vec<char> = tag.context.suffix.chars().collect();
    let old = tag.anchor.start.0;
    let n = doc.len();
    let m = anchor.len();

    let mut exact: Vec<usize> = (0..n.saturating_sub(m).saturating_add(1))
        .filter(|&s| m > 0 && s + m <= n && doc[s..s + m] == anchor[..])
        .collect();
    exact.sort_by_key(|&s| (s.abs_diff(old), s));
    if let Some(&s) = exact.first() {
        return OracleResult::Hit {
            anchor: Anchor::new(s, s + m),
            score: 1.0,
            exact: true,
        };
    }

    let lo = if m > cfg.max_window_slack { m - cfg.max_window_slack } else { 0 }.max(1);
    let hi = m + cfg.max_window_slack;
    let mut lev = Lev::new();
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for s in 0..=n {
        for len in lo..=hi {
            let e = s + len;
            if e > n {
                break;
            }
            let a = lev.similarity(&anchor, &doc[s..e]);
            let p = lev.similarity(&prefix, &doc[s.saturating_sub(CONTEXT)..s]);
            let x = lev.similarity(&suffix, &doc[e..(e + CONTEXT).min(n)]);
            let score = cfg.weight_anchor * a + cfg.weight_prefix * p + cfg.weight_suffix * x;
            all.push((score, s, len));
        }
    }
    all.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.abs_diff(old).cmp(&b.1.abs_diff(old)))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    match all.first() {
        Some(&(score, s, len)) if score >= cfg.threshold => OracleResult::Hit {
            anchor: Anchor::new(s, s + len),
            score,
            exact: false,
        },
        Some(&(score, s, len)) => OracleResult::Orphaned {
            best: Some((Anchor::new(s, s + len), score)),
        },
        None => OracleResult::Orphaned { best: None },
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

const WORDS: &[&str] = &[
    "let", "fn", "return", "if", "else", "match", "value", "count", "index", "buffer", "parse",
    "render", "config", "state", "total", "offset", "len", "next", "self", "item", "result", "ok",
];
const PUNCT: &[&str] = &["(", ")", "{", "}", ";", ",", ".", " = ", " + ", " < ", "::", "&", "[", "]"];
const EXOTIC: &[char] = &['é', 'ß', 'λ', 'Ж', '中', '文', '🙂', '∑', '\t'];

/// Code-flavoured text of exactly `len` scalars.
pub fn code_text(rng: &mut impl Rng, len: usize) -> String {
    let mut out: Vec<char> = Vec::with_capacity(len + 16);
    while out.len() < len {
        match rng.random_range(0..20) {
            0..=9 => out.extend(WORDS[rng.random_range(0..WORDS.len())].chars()),
            10..=13 => out.extend(PUNCT[rng.random_range(0..PUNCT.len())].chars()),
            14 => out.push(EXOTIC[rng.random_range(0..EXOTIC.len())]),
            15 => {
                let digits = rng.random_range(0..100_000u32);
                out.extend(digits.to_string().chars());
            }
            16 => {
                out.push('\n');
                let indent = rng.random_range(0..4) * 4;
                out.extend(std::iter::repeat_n(' ', indent));
            }
            _ => out.push(' '),
        }
    }
    out.truncate(len);
    out.into_iter().collect()
}

/// Short insertion text, sometimes non-ASCII.
pub fn insert_text(rng: &mut impl Rng, max: usize) -> String {
    let len = rng.random_range(0..=max);
    code_text(rng, len)
}

/// Changes `count` random scalars of `s` (substitute, insert or delete).
pub fn mutate(rng: &mut impl Rng, s: &[char], count: usize) -> Vec<char> {
    let mut out = s.to_vec();
    for _ in 0..count {
        let pos = rng.random_range(0..=out.len());
        let c = (b'a' + rng.random_range(0..26u8)) as char;
        match rng.random_range(0..3) {
            0 if pos < out.len() => out[pos] = c,
            1 if pos < out.len() && out.len() > 1 => {
                out.remove(pos);
            }
            _ => out.insert(pos, c),
        }
    }
    out
}

pub fn non_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

// ---------------------------------------------------------------------------
// Line-protocol client
// ---------------------------------------------------------------------------

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next: u64,
    pub events: Vec<Value>,
}

impl Client {
    pub fn connect(addr: std::net::SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).expect("connect");
        stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
        Client {
            reader: BufReader::new(stream.try_clone().unwrap()),
            writer: stream,
            next: 1,
            events: Vec::new(),
        }
    }

    pub fn send_raw(&mut self, line: &str) {
        writeln!(self.writer, "{line}").unwrap();
        self.writer.flush().unwrap();
    }

    pub fn read_message(&mut self) -> Value {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).expect("read");
        assert!(n > 0, "connection closed");
        serde_json::from_str(&line).expect("response is JSON")
    }

    /// Next response, stashing any events that arrive first.
    pub fn read_response(&mut self) -> Value {
        loop {
            let msg = self.read_message();
            if msg.get("event").is_some() {
                self.events.push(msg);
            } else {
                return msg;
            }
        }
    }

    /// Full response envelope for `op`.
    pub fn call(&mut self, op: &str, params: Value) -> Value {
        let mut req = params.as_object().cloned().unwrap_or_default();
        req.insert("op".into(), json!(op));
        req.insert("requestId".into(), json!(self.next));
        self.next += 1;
        self.send_raw(&Value::Object(req).to_string());
        self.read_response()
    }

    /// `result` of a call that must succeed.
    pub fn ok(&mut self, op: &str, params: Value) -> Value {
        let r = self.call(op, params);
        assert_eq!(r["ok"], true, "{op} failed: {r}");
        r["result"].clone()
    }

    /// Error code of a call that must fail.
    pub fn err(&mut self, op: &str, params: Value) -> String {
        let r = self.call(op, params);
        assert_eq!(r["ok"], false, "{op} unexpectedly succeeded: {r}");
        r["error"]["code"].as_str().unwrap().to_string()
    }

    /// Waits until an event named `name` has been received.
    pub fn wait_event(&mut self, name: &str) -> Value {
        if let Some(i) = self.events.iter().position(|e| e["event"] == name) {
            return self.events.remove(i);
        }
        loop {
            let msg = self.read_message();
            if msg["event"] == name {
                return msg;
            }
            if msg.get("event").is_some() {
                self.events.push(msg);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Service harness
// ---------------------------------------------------------------------------

pub fn start_service(
    repo: &std::path::Path,
    provider: Option<std::sync::Arc<dyn codetations::provider::CompletionProvider>>,
) -> codetations::service::Server {
    let host = codetations::service::Host::new(
        codetations::StoreRoot::new(repo),
        ReattachConfig::default(),
        provider,
    )
    .unwrap();
    codetations::service::start(std::sync::Arc::new(host), &codetations::service::ServeOptions::default())
        .expect("bind loopback")
}

/// Char offset range of the single occurrence of `needle` in `text`.
pub fn range_of(text: &str, needle: &str) -> (usize, usize) {
    let byte = text.find(needle).expect("needle present");
    assert!(text[byte + 1..].find(needle).is_none(), "needle {needle:?} is not unique");
    let start = text[..byte].chars().count();
    (start, start + needle.chars().count())
}

pub fn slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}
