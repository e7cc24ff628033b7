//! Append-only log of every bus, boot-interface, reset-control and network
//! event in a scenario run.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::IpId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    SystemBus,
    BootIface,
    AmiNet,
    /// Enclave-driven reset gating of IP wrappers.
    ResetCtl,
}

/// A party that can send or receive an event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Endpoint {
    Enclave,
    Host,
    Hsm,
    Oem,
    Ami,
    Adversary,
    Ip(IpId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Enclave => f.write_str("enclave"),
            Endpoint::Host => f.write_str("host"),
            Endpoint::Hsm => f.write_str("hsm"),
            Endpoint::Oem => f.write_str("oem"),
            Endpoint::Ami => f.write_str("ami"),
            Endpoint::Adversary => f.write_str("adversary"),
            Endpoint::Ip(id) => write!(f, "ip:{id}"),
        }
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> String {
        e.to_string()
    }
}

impl TryFrom<String> for Endpoint {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Ok(match s.as_str() {
            "enclave" => Endpoint::Enclave,
            "host" => Endpoint::Host,
            "hsm" => Endpoint::Hsm,
            "oem" => Endpoint::Oem,
            "ami" => Endpoint::Ami,
            "adversary" => Endpoint::Adversary,
            other => match other.strip_prefix("ip:") {
                Some(id) => Endpoint::Ip(IpId::new(id)),
                None => return Err(format!("unknown endpoint {other:?}")),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub t: u64,
    pub channel: Channel,
    pub from: Endpoint,
    pub to: Endpoint,
    pub label: String,
    #[serde(with = "hex::serde")]
    pub payload: Vec<u8>,
    /// Payload carries unencrypted asset material.
    pub plaintext: bool,
}

impl Event {
    pub fn involves(&self, e: &Endpoint) -> bool {
        &self.from == e || &self.to == e
    }
}

/// Logical clock plus the event log. Timestamps start at 1 and strictly
/// increase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    events: Vec<Event>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        channel: Channel,
        from: Endpoint,
        to: Endpoint,
        label: impl Into<String>,
        payload: impl Into<Vec<u8>>,
        plaintext: bool,
    ) -> usize {
        let t = self.events.last().map_or(1, |e| e.t + 1);
        self.events.push(Event {
            t,
            channel,
            from,
            to,
            label: label.into(),
            payload: payload.into(),
            plaintext,
        });
        self.events.len() - 1
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Event> {
        self.events.get(index)
    }

    pub fn last_index(&self) -> Option<usize> {
        self.events.len().checked_sub(1)
    }

    /// Indices of events whose label matches.
    pub fn find(&self, label: &str) -> Vec<usize> {
        self.indices_where(|e| e.label == label)
    }

    pub fn indices_where(&self, pred: impl Fn(&Event) -> bool) -> Vec<usize> {
        self.events
            .iter()
            .enumerate()
            .filter(|(_, e)| pred(e))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

/// Returns true if `needle` occurs in `haystack` as raw bytes or as its
/// lowercase hex encoding.
pub fn contains_asset(haystack: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() {
        return false;
    }
    let hexed = hex::encode(needle);
    haystack.windows(needle.len()).any(|w| w == needle)
        || haystack.windows(hexed.len()).any(|w| w == hexed.as_bytes())
}
