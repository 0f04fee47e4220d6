//! The federate side of the protocol.
//!
//! A [`Federate`] owns an event queue and decides which signals to send the
//! RTI as it completes tags. Application behavior is injected through
//! [`Reactions`], a table of callbacks keyed by [`Action`].
//!
//! With DNET enabled the federate tracks two extra tags:
//!
//! * `dn`: the latest DNET received (lowered locally when it sends a message
//!   whose tag is earlier);
//! * `sn`: the next event tag it decided not to report, kept so it can still
//!   be reported if a later DNET shows it is needed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{FederateId, Signal};
use crate::tag::Tag;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FederateError {
    #[error("{id} received MSG{tag} at or before its completed tag {current}")]
    TardyMessage { id: FederateId, tag: Tag, current: Tag },
    #[error("{id} received TAG{tag} not later than previous grant {granted}")]
    GrantRegression { id: FederateId, tag: Tag, granted: Tag },
    #[error("{id} has no connection to {dst}")]
    UnknownDestination { id: FederateId, dst: FederateId },
    #[error("{id} scheduled an event at {tag}, not after the current tag {current}")]
    ScheduleInPast { id: FederateId, tag: Tag, current: Tag },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    TimerFire,
    MessageArrival,
    Detection,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TimerFire" => Ok(Action::TimerFire),
            "MessageArrival" => Ok(Action::MessageArrival),
            "Detection" => Ok(Action::Detection),
            _ => Err(format!("unknown action {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub tag: Tag,
    pub action: Action,
    pub body: Vec<u8>,
}

/// What a reaction may do: schedule local events and send messages.
pub struct ReactionContext {
    tag: Tag,
    scheduled: Vec<Event>,
    sends: Vec<(FederateId, Vec<u8>)>,
}

impl ReactionContext {
    pub fn tag(&self) -> Tag {
        self.tag
    }

    pub fn schedule(&mut self, tag: Tag, action: Action, body: Vec<u8>) {
        self.scheduled.push(Event { tag, action, body });
    }

    /// Sends over the connection to `dst`; the message tag is the current
    /// tag delayed by the connection's minimum delay.
    pub fn send(&mut self, dst: FederateId, body: Vec<u8>) {
        self.sends.push((dst, body));
    }
}

type Reaction = Box<dyn FnMut(&Event, &mut ReactionContext) + Send>;

/// Callback table keyed by action. Actions without a callback are no-ops.
#[derive(Default)]
pub struct Reactions {
    table: HashMap<Action, Reaction>,
}

impl Reactions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(
        mut self,
        action: Action,
        f: impl FnMut(&Event, &mut ReactionContext) + Send + 'static,
    ) -> Self {
        self.table.insert(action, Box::new(f));
        self
    }

    fn run(&mut self, event: &Event, ctx: &mut ReactionContext) {
        if let Some(f) = self.table.get_mut(&event.action) {
            f(event, ctx);
        }
    }
}

/// Protocol-relevant state, exposed for dumps and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FederateState {
    pub id: FederateId,
    /// Latest completed tag.
    pub current: Tag,
    /// Latest DNET tag, possibly lowered by outgoing messages.
    pub dn: Tag,
    /// Last next event tag skipped; `NEVER` after any NET is sent.
    pub sn: Tag,
    /// Latest TAG received.
    pub granted: Tag,
    pub has_upstream: bool,
    pub dnet_enabled: bool,
}

/// Result of processing one tag.
#[derive(Debug, Default)]
pub struct StepOutput {
    pub tag: Option<Tag>,
    pub processed: Vec<Event>,
    pub signals: Vec<Signal>,
}

pub struct Federate {
    state: FederateState,
    /// Keyed so that events sharing a tag run in a fixed order (action,
    /// then payload) regardless of when they were queued.
    events: BTreeMap<(Tag, Action, Vec<u8>, u64), Event>,
    next_seq: u64,
    /// Minimum delay tag per directly connected downstream federate.
    outputs: Vec<(FederateId, Tag)>,
    horizon: Tag,
    reactions: Reactions,
}

impl Federate {
    /// `outputs` lists direct downstream federates with the minimum delay
    /// tag of the connection; events and messages after `horizon` are
    /// dropped.
    pub fn new(
        id: FederateId,
        has_upstream: bool,
        outputs: Vec<(FederateId, Tag)>,
        dnet_enabled: bool,
        horizon: Tag,
        reactions: Reactions,
    ) -> Self {
        Federate {
            state: FederateState {
                id,
                current: Tag::NEVER,
                dn: Tag::NEVER,
                sn: Tag::NEVER,
                granted: Tag::NEVER,
                has_upstream,
                dnet_enabled,
            },
            events: BTreeMap::new(),
            next_seq: 0,
            outputs,
            horizon,
            reactions,
        }
    }

    pub fn id(&self) -> FederateId {
        self.state.id
    }

    pub fn state(&self) -> &FederateState {
        &self.state
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }

    /// Queues an event. Events after the horizon are dropped.
    pub fn schedule(&mut self, event: Event) -> Result<(), FederateError> {
        if event.tag <= self.state.current || event.tag < Tag::ZERO {
            return Err(FederateError::ScheduleInPast {
                id: self.state.id,
                tag: event.tag,
                current: self.state.current,
            });
        }
        if event.tag > self.horizon {
            return Ok(());
        }
        self.events.insert((event.tag, event.action, event.body.clone(), self.next_seq), event);
        self.next_seq += 1;
        Ok(())
    }

    /// Tag of the earliest queued event, `FOREVER` if none.
    pub fn next_event_tag(&self) -> Tag {
        self.events.keys().next().map_or(Tag::FOREVER, |k| k.0)
    }

    /// Whether the next event may be processed without waiting for a grant.
    pub fn can_advance(&self) -> bool {
        let next = self.next_event_tag();
        !next.is_forever() && (!self.state.has_upstream || self.state.granted >= next)
    }

    /// Initial report of the next event tag.
    pub fn startup(&mut self) -> Vec<Signal> {
        self.state.sn = Tag::NEVER;
        vec![Signal::net(self.state.id, self.next_event_tag())]
    }

    /// Processes every event at the next event tag, if allowed, and
    /// completes that tag.
    pub fn step(&mut self) -> Result<StepOutput, FederateError> {
        if !self.can_advance() {
            return Ok(StepOutput::default());
        }
        let tag = self.next_event_tag();
        self.state.current = tag;
        let mut out = StepOutput { tag: Some(tag), ..StepOutput::default() };
        while let Some(entry) = self.events.first_entry() {
            if entry.key().0 != tag {
                break;
            }
            let event = entry.remove();
            let mut ctx = ReactionContext { tag, scheduled: Vec::new(), sends: Vec::new() };
            self.reactions.run(&event, &mut ctx);
            for e in ctx.scheduled {
                self.schedule(e)?;
            }
            for (dst, body) in ctx.sends {
                let delay = self
                    .outputs
                    .iter()
                    .find(|(d, _)| *d == dst)
                    .map(|(_, delay)| *delay)
                    .ok_or(FederateError::UnknownDestination { id: self.state.id, dst })?;
                let dest_tag = tag.delayed_by(delay);
                if dest_tag <= self.horizon {
                    out.signals.extend(self.on_send_message(dst, dest_tag, body));
                }
            }
            out.processed.push(event);
        }
        out.signals.extend(self.on_tag_complete());
        Ok(out)
    }

    /// Processes every tag up to the latest grant (or as far as possible
    /// for a federate without upstream).
    pub fn drain(&mut self) -> Result<Vec<StepOutput>, FederateError> {
        let mut steps = Vec::new();
        while self.can_advance() {
            steps.push(self.step()?);
        }
        Ok(steps)
    }

    /// Signals sent after finishing the current tag: LTC, then NET unless
    /// the in-force DNET says nobody downstream needs it.
    pub fn on_tag_complete(&mut self) -> Vec<Signal> {
        let st = &mut self.state;
        let mut out = vec![Signal::ltc(st.id, st.current)];
        let next = self.events.keys().next().map_or(Tag::FOREVER, |k| k.0);
        let blocked = st.has_upstream && st.granted < next;
        if blocked || !st.dnet_enabled || st.dn < next {
            out.push(Signal::net(st.id, next));
            st.sn = Tag::NEVER;
        } else {
            st.sn = next;
        }
        out
    }

    pub fn on_dnet(&mut self, tag: Tag) -> Vec<Signal> {
        let st = &mut self.state;
        let mut out = Vec::new();
        if tag < st.sn {
            out.push(Signal::net(st.id, st.sn));
            st.sn = Tag::NEVER;
        }
        st.dn = tag;
        out
    }

    pub fn on_send_message(&mut self, dst: FederateId, dest_tag: Tag, body: Vec<u8>) -> Vec<Signal> {
        if dest_tag < self.state.dn {
            self.state.dn = dest_tag;
        }
        vec![Signal::msg(self.state.id, dst, dest_tag, body)]
    }

    pub fn on_tag_grant(&mut self, tag: Tag) -> Result<(), FederateError> {
        if tag <= self.state.granted {
            return Err(FederateError::GrantRegression {
                id: self.state.id,
                tag,
                granted: self.state.granted,
            });
        }
        self.state.granted = tag;
        Ok(())
    }

    pub fn on_receive_msg(&mut self, tag: Tag, body: Vec<u8>) -> Result<(), FederateError> {
        if tag <= self.state.current {
            return Err(FederateError::TardyMessage {
                id: self.state.id,
                tag,
                current: self.state.current,
            });
        }
        self.schedule(Event { tag, action: Action::MessageArrival, body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalKind;

    const MS: i64 = 1_000_000;
    const S: i64 = 1_000_000_000;

    fn f(i: u32) -> FederateId {
        FederateId(i)
    }

    fn timer(period: i64) -> Reactions {
        Reactions::new().on(Action::TimerFire, move |_, ctx| {
            let next = Tag::at(ctx.tag().time().as_ns() + period, 0);
            ctx.schedule(next, Action::TimerFire, Vec::new());
        })
    }

    fn sender(dnet: bool) -> Federate {
        let reactions = timer(20 * MS).on(Action::Detection, |_, ctx| ctx.send(f(1), b"hit".to_vec()));
        let mut fed = Federate::new(f(0), false, vec![(f(1), Tag::ZERO)], dnet, Tag::at(S, 0), reactions);
        fed.schedule(Event { tag: Tag::ZERO, action: Action::TimerFire, body: Vec::new() }).unwrap();
        fed.schedule(Event { tag: Tag::at(100 * MS, 0), action: Action::Detection, body: Vec::new() })
            .unwrap();
        fed
    }

    fn nets(signals: &[Signal]) -> Vec<Tag> {
        signals.iter().filter(|s| s.kind == SignalKind::Net).map(|s| s.tag).collect()
    }

    #[test]
    fn baseline_sender_reports_every_tag() {
        let mut fed = sender(false);
        assert_eq!(nets(&fed.startup()), vec![Tag::ZERO]);
        let steps: Vec<_> = (0..5).map(|_| fed.step().unwrap()).collect();
        for (k, step) in steps.iter().enumerate() {
            assert_eq!(step.signals[0], Signal::ltc(f(0), Tag::at(k as i64 * 20 * MS, 0)));
            assert_eq!(nets(&step.signals), vec![Tag::at((k as i64 + 1) * 20 * MS, 0)]);
        }
    }

    #[test]
    fn dnet_sender_stays_silent_until_detection() {
        let mut fed = sender(true);
        fed.startup();
        assert!(fed.on_dnet(Tag::at(S, 0)).is_empty());
        for _ in 0..5 {
            let step = fed.step().unwrap();
            assert!(nets(&step.signals).is_empty());
        }
        assert_eq!(fed.state().sn, Tag::at(100 * MS, 0));
        assert!(fed.state().sn <= fed.state().dn);
        // The detection at 100 ms sends a message and lowers dn.
        let step = fed.step().unwrap();
        assert_eq!(step.signals[0], Signal::msg(f(0), f(1), Tag::at(100 * MS, 0), b"hit".to_vec()));
        assert_eq!(fed.state().dn, Tag::at(100 * MS, 0));
        assert_eq!(nets(&step.signals), vec![Tag::at(120 * MS, 0)]);
        assert_eq!(fed.state().sn, Tag::NEVER);
    }

    #[test]
    fn dnet_below_skipped_tag_flushes() {
        let mut fed = sender(true);
        fed.startup();
        fed.on_dnet(Tag::FOREVER);
        fed.step().unwrap();
        assert_eq!(fed.state().sn, Tag::at(20 * MS, 0));
        // Equal: nothing.
        assert!(fed.on_dnet(Tag::at(20 * MS, 0)).is_empty());
        assert_eq!(fed.state().dn, Tag::at(20 * MS, 0));
        let out = fed.on_dnet(Tag::at(10 * MS, 0));
        assert_eq!(out, vec![Signal::net(f(0), Tag::at(20 * MS, 0))]);
        assert_eq!(fed.state().sn, Tag::NEVER);
        assert_eq!(fed.state().dn, Tag::at(10 * MS, 0));
    }

    #[test]
    fn message_at_or_after_dn_leaves_it() {
        let mut fed = sender(true);
        fed.on_dnet(Tag::at(50 * MS, 0));
        fed.on_send_message(f(1), Tag::at(60 * MS, 0), Vec::new());
        assert_eq!(fed.state().dn, Tag::at(50 * MS, 0));
    }

    #[test]
    fn after_delay_drops_sender_microstep() {
        let reactions = Reactions::new().on(Action::Detection, |_, ctx| ctx.send(f(1), Vec::new()));
        let delay = Tag::from_delay(crate::tag::TimeValue::ms(10));
        let mut fed = Federate::new(f(0), false, vec![(f(1), delay)], false, Tag::FOREVER, reactions);
        fed.schedule(Event { tag: Tag::at(100 * MS, 2), action: Action::Detection, body: Vec::new() })
            .unwrap();
        let step = fed.step().unwrap();
        assert_eq!(step.signals[0].tag, Tag::at(110 * MS, 0));
    }

    #[test]
    fn empty_source_reports_forever() {
        let mut fed = Federate::new(f(0), false, Vec::new(), false, Tag::FOREVER, Reactions::new());
        assert_eq!(fed.startup(), vec![Signal::net(f(0), Tag::FOREVER)]);
        assert!(!fed.can_advance());
    }

    fn receiver(dnet: bool) -> Federate {
        Federate::new(f(1), true, Vec::new(), dnet, Tag::FOREVER, Reactions::new())
    }

    #[test]
    fn receiver_waits_for_grant() {
        let mut fed = receiver(true);
        assert_eq!(nets(&fed.startup()), vec![Tag::FOREVER]);
        fed.on_receive_msg(Tag::at(100 * MS, 0), b"a".to_vec()).unwrap();
        fed.on_receive_msg(Tag::at(100 * MS, 0), b"b".to_vec()).unwrap();
        fed.on_receive_msg(Tag::at(200 * MS, 0), b"c".to_vec()).unwrap();
        assert!(!fed.can_advance());
        fed.on_tag_grant(Tag::at(100 * MS, 0)).unwrap();
        let steps = fed.drain().unwrap();
        assert_eq!(steps.len(), 1);
        let bodies: Vec<_> = steps[0].processed.iter().map(|e| e.body.clone()).collect();
        assert_eq!(bodies, vec![b"a".to_vec(), b"b".to_vec()]);
        // Blocked on the next event: NET is sent even with dn >= next.
        assert_eq!(nets(&steps[0].signals), vec![Tag::at(200 * MS, 0)]);
        fed.on_tag_grant(Tag::FOREVER).unwrap();
        assert_eq!(fed.drain().unwrap().len(), 1);
        assert_eq!(fed.pending_events(), 0);
    }

    #[test]
    fn protocol_faults() {
        let mut fed = receiver(false);
        fed.on_tag_grant(Tag::at(5, 0)).unwrap();
        assert!(matches!(fed.on_tag_grant(Tag::at(5, 0)), Err(FederateError::GrantRegression { .. })));
        fed.on_receive_msg(Tag::at(5, 0), Vec::new()).unwrap();
        fed.drain().unwrap();
        assert!(matches!(
            fed.on_receive_msg(Tag::at(5, 0), Vec::new()),
            Err(FederateError::TardyMessage { .. })
        ));
    }

    #[test]
    fn events_after_horizon_are_dropped() {
        let mut fed = Federate::new(f(0), false, Vec::new(), false, Tag::at(10, 0), Reactions::new());
        fed.schedule(Event { tag: Tag::at(11, 0), action: Action::TimerFire, body: Vec::new() }).unwrap();
        assert_eq!(fed.pending_events(), 0);
    }
}
