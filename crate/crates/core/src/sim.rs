//! Deterministic simulated transport coupling one RTI and its federates.
//!
//! Transport time is an integer step counter, unrelated to logical tags.
//! Every signal hop is delivered `latency` steps after it was sent; ties are
//! broken by send order, so each channel is FIFO. A federate that may
//! advance processes one tag per step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::federate::{Federate, FederateError};
use crate::rti::Rti;
use crate::scenario::Scenario;
use crate::signal::{Actor, FederateId, Signal, SignalKind};
use crate::tag::Tag;
use crate::topology::TopologyError;
use crate::trace::{event_note, RecordKind, Trace, DELIVERED};

/// Safety net against runaway runs.
const MAX_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum LatencyModel {
    #[default]
    Zero,
    Fixed(u64),
    /// Per-hop latencies keyed by (sender, receiver); other hops use `default`.
    PerChannel { default: u64, channels: BTreeMap<(Actor, Actor), u64> },
}

impl LatencyModel {
    pub fn latency(&self, src: Actor, dst: Actor) -> u64 {
        match self {
            LatencyModel::Zero => 0,
            LatencyModel::Fixed(k) => *k,
            LatencyModel::PerChannel { default, channels } => {
                channels.get(&(src, dst)).copied().unwrap_or(*default)
            }
        }
    }
}

impl fmt::Display for LatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatencyModel::Zero => f.write_str("zero"),
            LatencyModel::Fixed(k) => write!(f, "fixed:{k}"),
            LatencyModel::PerChannel { default, channels } => {
                write!(f, "channels:{default}")?;
                for ((a, b), k) in channels {
                    write!(f, ",{a}>{b}={k}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for LatencyModel {
    type Err = String;

    /// `zero`, `fixed:K`, or `channels:DEFAULT,src>dst=K,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad latency model {s:?} (expected zero, fixed:K or channels:D,a>b=K,...)");
        if s == "zero" {
            return Ok(LatencyModel::Zero);
        }
        if let Some(k) = s.strip_prefix("fixed:") {
            return k.parse().map(LatencyModel::Fixed).map_err(|_| bad());
        }
        let rest = s.strip_prefix("channels:").ok_or_else(bad)?;
        let mut parts = rest.split(',');
        let default = parts.next().and_then(|d| d.parse().ok()).ok_or_else(bad)?;
        let mut channels = BTreeMap::new();
        for part in parts {
            let (pair, k) = part.split_once('=').ok_or_else(bad)?;
            let (a, b) = pair.split_once('>').ok_or_else(bad)?;
            let key = (a.parse::<Actor>()?, b.parse::<Actor>()?);
            channels.insert(key, k.parse().map_err(|_| bad())?);
        }
        Ok(LatencyModel::PerChannel { default, channels })
    }
}

impl Serialize for LatencyModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LatencyModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub dnet: bool,
    pub latency: LatencyModel,
    /// Events and messages later than this tag are not processed.
    pub until: Tag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// No signal in flight and nobody able to advance, all events up to the
    /// horizon processed.
    Completed,
    /// Quiescent with events still queued.
    Stalled(Vec<FederateId>),
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace: Trace,
    pub outcome: Outcome,
    pub steps: u64,
}

impl RunReport {
    pub fn count(&self, kind: SignalKind) -> u64 {
        self.trace.count_signals(kind).total
    }
}

#[derive(Debug)]
enum Item {
    Deliver { to: Actor, signal: Signal },
    Advance(FederateId),
}

struct Harness {
    rti: Rti,
    federates: Vec<Federate>,
    queue: BTreeMap<(u64, u64), Item>,
    seq: u64,
    advancing: BTreeSet<FederateId>,
    latency: LatencyModel,
    trace: Trace,
}

impl Harness {
    fn enqueue(&mut self, at: u64, item: Item) {
        self.queue.insert((at, self.seq), item);
        self.seq += 1;
    }

    /// Federate-originated signals all go to the RTI first.
    fn send(&mut self, step: u64, signal: Signal) {
        let from = signal.src;
        self.send_hop(step, from, Actor::Rti, signal);
    }

    fn send_hop(&mut self, step: u64, from: Actor, to: Actor, signal: Signal) {
        self.trace.push(step, from, to, signal.kind.into(), signal.tag, None);
        let at = step + self.latency.latency(from, to);
        self.enqueue(at, Item::Deliver { to, signal });
    }

    fn wake(&mut self, step: u64, id: FederateId) {
        if self.federates[id.index()].can_advance() && self.advancing.insert(id) {
            self.enqueue(step + 1, Item::Advance(id));
        }
    }

    fn fault(&mut self, step: u64, at: Actor, tag: Tag, message: String) -> Outcome {
        self.trace.push(step, at, at, RecordKind::Fault, tag, Some(message.clone()));
        Outcome::Aborted(message)
    }

    fn deliver(&mut self, step: u64, to: Actor, signal: Signal) -> Result<(), Outcome> {
        let from = if to == Actor::Rti { signal.src } else { Actor::Rti };
        self.trace.push(step, from, to, signal.kind.into(), signal.tag, Some(DELIVERED.into()));
        match to {
            Actor::Rti => {
                let tag = signal.tag;
                let out = match self.rti.handle(signal) {
                    Ok(out) => out,
                    Err(e) => return Err(self.fault(step, Actor::Rti, tag, e.to_string())),
                };
                if out.iter().any(|s| s.kind == SignalKind::Dnet) {
                    let dump = serde_json::to_string(&self.rti.dump()).expect("dump serializes");
                    self.trace.push(step, Actor::Rti, Actor::Rti, RecordKind::Dump, Tag::NEVER, Some(dump));
                }
                for s in out {
                    let dst = s.dst;
                    self.send_hop(step, Actor::Rti, dst, s);
                }
                Ok(())
            }
            Actor::Federate(id) => {
                let fed = &mut self.federates[id.index()];
                let tag = signal.tag;
                let result: Result<Vec<Signal>, FederateError> = match signal.kind {
                    SignalKind::Msg => fed.on_receive_msg(signal.tag, signal.body).map(|_| Vec::new()),
                    SignalKind::Tag => fed.on_tag_grant(signal.tag).map(|_| Vec::new()),
                    SignalKind::Dnet => Ok(fed.on_dnet(signal.tag)),
                    kind => return Err(self.fault(step, to, tag, format!("{id} cannot receive {kind}"))),
                };
                match result {
                    Ok(out) => {
                        for s in out {
                            self.send(step, s);
                        }
                        self.wake(step, id);
                        Ok(())
                    }
                    Err(e) => Err(self.fault(step, to, tag, e.to_string())),
                }
            }
        }
    }

    fn advance(&mut self, step: u64, id: FederateId) -> Result<(), Outcome> {
        self.advancing.remove(&id);
        let out = match self.federates[id.index()].step() {
            Ok(out) => out,
            Err(e) => return Err(self.fault(step, id.into(), Tag::NEVER, e.to_string())),
        };
        let me = Actor::Federate(id);
        for event in &out.processed {
            let note = event_note(event.action, &event.body);
            self.trace.push(step, me, me, RecordKind::Event, event.tag, Some(note));
        }
        for s in out.signals {
            self.send(step, s);
        }
        self.wake(step, id);
        Ok(())
    }
}

/// Runs `scenario` to quiescence and returns the full trace. Identical
/// inputs give identical traces.
pub fn run(scenario: &Scenario, config: &RunConfig) -> Result<RunReport, TopologyError> {
    let matrix = scenario.topology.analyze()?;
    let mut federates = Vec::with_capacity(matrix.federate_count());
    for id in matrix.federates() {
        let behavior = scenario.behaviors.get(id.index()).cloned().unwrap_or_default();
        let outputs = matrix.downstream(id).iter().map(|&d| (d, matrix.immediate(d, id))).collect();
        let mut fed = Federate::new(
            id,
            !matrix.upstream(id).is_empty(),
            outputs,
            config.dnet,
            config.until,
            behavior.reactions(id),
        );
        for event in behavior.initial_events() {
            fed.schedule(event).expect("initial events are at or after (0,0)");
        }
        federates.push(fed);
    }
    let mut h = Harness {
        rti: Rti::new(matrix, config.dnet),
        federates,
        queue: BTreeMap::new(),
        seq: 0,
        advancing: BTreeSet::new(),
        latency: config.latency.clone(),
        trace: Trace::new(),
    };

    for i in 0..h.federates.len() {
        let signals = h.federates[i].startup();
        for s in signals {
            h.send(0, s);
        }
    }
    for i in 0..h.federates.len() {
        h.wake(0, FederateId::from(i));
    }

    let mut step = 0;
    let mut outcome = None;
    while let Some(((at, _), item)) = h.queue.pop_first() {
        step = at;
        if step > MAX_STEPS {
            outcome = Some(h.fault(step, Actor::Rti, Tag::NEVER, format!("exceeded {MAX_STEPS} steps")));
            break;
        }
        let result = match item {
            Item::Deliver { to, signal } => h.deliver(step, to, signal),
            Item::Advance(id) => h.advance(step, id),
        };
        if let Err(o) = result {
            outcome = Some(o);
            break;
        }
    }
    let outcome = outcome.unwrap_or_else(|| {
        let stuck: Vec<FederateId> = h
            .federates
            .iter()
            .filter(|f| f.pending_events() > 0)
            .map(Federate::id)
            .collect();
        if stuck.is_empty() {
            Outcome::Completed
        } else {
            let msg = format!("stalled with pending events at {stuck:?}");
            h.trace.push(step, Actor::Rti, Actor::Rti, RecordKind::Fault, Tag::NEVER, Some(msg));
            Outcome::Stalled(stuck)
        }
    });
    Ok(RunReport { trace: h.trace, outcome, steps: step })
}
