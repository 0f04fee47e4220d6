//! Execution traces and their JSON Lines form.
//!
//! Besides every sent and delivered signal, a trace records the events each
//! federate processed (`EVENT`), snapshots of RTI state taken whenever a
//! DNET is emitted (`DUMP`) and protocol faults (`FAULT`).

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::federate::{Action, Event};
use crate::rti::RtiDump;
use crate::signal::{Actor, FederateId, SignalKind};
use crate::tag::Tag;

/// Note attached to the delivery record of a signal.
pub const DELIVERED: &str = "recv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RecordKind {
    Msg,
    Ltc,
    Net,
    Tag,
    Dnet,
    Event,
    Dump,
    Fault,
}

impl From<SignalKind> for RecordKind {
    fn from(kind: SignalKind) -> Self {
        match kind {
            SignalKind::Msg => RecordKind::Msg,
            SignalKind::Ltc => RecordKind::Ltc,
            SignalKind::Net => RecordKind::Net,
            SignalKind::Tag => RecordKind::Tag,
            SignalKind::Dnet => RecordKind::Dnet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub step: u64,
    pub src: Actor,
    pub dst: Actor,
    pub kind: RecordKind,
    pub tag: Tag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TraceRecord {
    pub fn is_delivery(&self) -> bool {
        self.note.as_deref() == Some(DELIVERED)
    }

    /// A signal as it left its sender.
    pub fn is_send(&self, kind: SignalKind) -> bool {
        self.kind == RecordKind::from(kind) && !self.is_delivery()
    }

    /// Decodes an `EVENT` record back into the processed event.
    pub fn processed_event(&self) -> Option<Event> {
        if self.kind != RecordKind::Event {
            return None;
        }
        let (action, body) = self.note.as_deref()?.split_once(':')?;
        Some(Event { tag: self.tag, action: action.parse().ok()?, body: hex::decode(body).ok()? })
    }

    pub fn dump(&self) -> Option<RtiDump> {
        if self.kind != RecordKind::Dump {
            return None;
        }
        serde_json::from_str(self.note.as_deref()?).ok()
    }
}

pub fn event_note(action: Action, body: &[u8]) -> String {
    format!("{action}:{}", hex::encode(body))
}

/// Sent-signal counts, per sending actor and in total.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalCounts {
    pub per_actor: BTreeMap<Actor, u64>,
    pub total: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        step: u64,
        src: Actor,
        dst: Actor,
        kind: RecordKind,
        tag: Tag,
        note: Option<String>,
    ) {
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord { seq, step, src, dst, kind, tag, note });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    /// Counts sent signals of `kind`. A message counts once per hop, so the
    /// federate entries give the number of messages and the `rti` entry the
    /// number of forwards.
    pub fn count_signals(&self, kind: SignalKind) -> SignalCounts {
        let mut counts = SignalCounts::default();
        for r in self.records.iter().filter(|r| r.is_send(kind)) {
            *counts.per_actor.entry(r.src).or_default() += 1;
            counts.total += 1;
        }
        counts
    }

    /// Events processed by `id`, in processing order.
    pub fn processed_events(&self, id: FederateId) -> Vec<Event> {
        self.records
            .iter()
            .filter(|r| r.src == Actor::Federate(id))
            .filter_map(TraceRecord::processed_event)
            .collect()
    }

    pub fn faults(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.kind == RecordKind::Fault)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Parses JSON Lines; malformed lines are returned with their 1-based
    /// line numbers instead of aborting the parse.
    pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<(Trace, Vec<(usize, String)>)> {
        let mut trace = Trace::new();
        let mut malformed = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TraceRecord>(&line) {
                Ok(r) => trace.records.push(r),
                Err(e) => malformed.push((n + 1, e.to_string())),
            }
        }
        Ok((trace, malformed))
    }
}
