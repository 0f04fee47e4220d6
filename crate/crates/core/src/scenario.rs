//! Scenario definitions: a topology plus data-driven federate behavior.
//!
//! Behavior is limited to what the experiments need: periodic timers,
//! periodic detections that send a message to some downstream federates,
//! and relaying received messages.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::federate::{Action, Event, Reactions};
use crate::signal::FederateId;
use crate::tag::{Tag, TimeValue};
use crate::topology::{Connection, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?} (expected sparse, chain, fanin, zdc or random)")]
    UnknownKind(String),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// A periodic source of events starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Periodic {
    pub offset_ns: i64,
    pub period_ns: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederateBehavior {
    /// Timer reactions; they only reschedule themselves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timer: Option<Periodic>,
    /// Detection reactions; each sends one message to every target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<Periodic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detection_targets: Vec<FederateId>,
    /// Every received message is forwarded to these federates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relay_to: Vec<FederateId>,
}

impl FederateBehavior {
    pub fn initial_events(&self) -> Vec<Event> {
        let mut events = Vec::new();
        if let Some(p) = self.timer {
            events.push(Event { tag: Tag::at(p.offset_ns, 0), action: Action::TimerFire, body: Vec::new() });
        }
        if let Some(p) = self.detection {
            events.push(Event { tag: Tag::at(p.offset_ns, 0), action: Action::Detection, body: Vec::new() });
        }
        events
    }

    pub fn reactions(&self, id: FederateId) -> Reactions {
        let mut reactions = Reactions::new();
        if let Some(p) = self.timer {
            reactions = reactions.on(Action::TimerFire, move |_, ctx| {
                let next = ctx.tag().time().as_ns().saturating_add(p.period_ns);
                if next < i64::MAX {
                    ctx.schedule(Tag::at(next, 0), Action::TimerFire, Vec::new());
                }
            });
        }
        if let Some(p) = self.detection {
            let targets = self.detection_targets.clone();
            reactions = reactions.on(Action::Detection, move |_, ctx| {
                let now = ctx.tag();
                for &dst in &targets {
                    ctx.send(dst, format!("det:{id}@{now}").into_bytes());
                }
                let next = now.time().as_ns().saturating_add(p.period_ns);
                if next < i64::MAX {
                    ctx.schedule(Tag::at(next, 0), Action::Detection, Vec::new());
                }
            });
        }
        if !self.relay_to.is_empty() {
            let targets = self.relay_to.clone();
            reactions = reactions.on(Action::MessageArrival, move |event, ctx| {
                for &dst in &targets {
                    let mut body = format!("{id}>").into_bytes();
                    body.extend_from_slice(&event.body);
                    ctx.send(dst, body);
                }
            });
        }
        reactions
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    pub behaviors: Vec<FederateBehavior>,
}

impl Scenario {
    /// One timer-driven sender that detects something every
    /// `detection_ns` and tells a downstream receiver.
    pub fn sparse_sender(period_ns: i64, detection_ns: i64) -> Self {
        let sender = FederateBehavior {
            timer: Some(Periodic { offset_ns: 0, period_ns }),
            detection: Some(Periodic { offset_ns: detection_ns, period_ns: detection_ns }),
            detection_targets: vec![FederateId(1)],
            relay_to: Vec::new(),
        };
        Scenario {
            name: "sparse".into(),
            topology: Topology::new(2, vec![Connection::new(0, 1, TimeValue::NEVER)]),
            behaviors: vec![sender, FederateBehavior::default()],
        }
    }

    /// Three federates in a line with after-delays of 10 ms and 0; the
    /// middle one relays.
    pub fn chain(period_ns: i64, detection_ns: i64) -> Self {
        let head = FederateBehavior {
            timer: Some(Periodic { offset_ns: 0, period_ns }),
            detection: Some(Periodic { offset_ns: detection_ns, period_ns: detection_ns }),
            detection_targets: vec![FederateId(1)],
            relay_to: Vec::new(),
        };
        let middle = FederateBehavior { relay_to: vec![FederateId(2)], ..FederateBehavior::default() };
        Scenario {
            name: "chain".into(),
            topology: Topology::new(
                3,
                vec![Connection::new(0, 1, TimeValue::ms(10)), Connection::new(1, 2, TimeValue::ZERO)],
            ),
            behaviors: vec![head, middle, FederateBehavior::default()],
        }
    }

    /// Two senders with interleaved detections feeding one receiver.
    pub fn fan_in(period_ns: i64, detection_ns: i64) -> Self {
        let sender = |offset_ns| FederateBehavior {
            timer: Some(Periodic { offset_ns: 0, period_ns }),
            detection: Some(Periodic { offset_ns, period_ns: detection_ns }),
            detection_targets: vec![FederateId(2)],
            relay_to: Vec::new(),
        };
        Scenario {
            name: "fanin".into(),
            topology: Topology::new(
                3,
                vec![Connection::new(0, 2, TimeValue::NEVER), Connection::new(1, 2, TimeValue::NEVER)],
            ),
            behaviors: vec![
                sender(detection_ns),
                sender(detection_ns + detection_ns / 2),
                FederateBehavior::default(),
            ],
        }
    }

    /// The sparse sender pair next to two idle federates connected to each
    /// other without after-delays.
    pub fn zero_delay_cycle(period_ns: i64, detection_ns: i64) -> Self {
        let mut s = Self::sparse_sender(period_ns, detection_ns);
        s.name = "zdc".into();
        s.topology = Topology::new(
            4,
            vec![
                Connection::new(0, 1, TimeValue::NEVER),
                Connection::new(2, 3, TimeValue::NEVER),
                Connection::new(3, 2, TimeValue::NEVER),
            ],
        );
        s.behaviors.extend([FederateBehavior::default(), FederateBehavior::default()]);
        s
    }

    /// A random topology of 2..=6 federates. Forward connections (lower to
    /// higher id) use delays from {none, 0, 1 ms, 10 ms}; occasional back
    /// connections always carry a declared delay so no zero-delay cycle
    /// arises. Relays only follow forward connections, so message chains
    /// stay finite.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=6usize);
        let forward_delays = [TimeValue::NEVER, TimeValue::ZERO, TimeValue::ms(1), TimeValue::ms(10)];
        let back_delays = [TimeValue::ZERO, TimeValue::ms(1), TimeValue::ms(10)];
        let mut connections = Vec::new();
        for from in 0..n {
            for to in from + 1..n {
                if rng.gen_bool(0.45) {
                    connections.push(Connection::new(from, to, *forward_delays.choose(&mut rng).unwrap()));
                }
                if rng.gen_bool(0.12) {
                    connections.push(Connection::new(to, from, *back_delays.choose(&mut rng).unwrap()));
                }
            }
        }
        let periods = [1_000_000i64, 2_000_000, 5_000_000];
        let detections = [3_000_000i64, 7_000_000, 11_000_000];
        let behaviors = (0..n)
            .map(|me| {
                let outs: Vec<FederateId> = connections
                    .iter()
                    .filter(|c| c.from.index() == me)
                    .map(|c| c.to)
                    .collect();
                let has_upstream = connections.iter().any(|c| c.to.index() == me);
                let mut b = FederateBehavior::default();
                if !has_upstream || rng.gen_bool(0.3) {
                    let period_ns = *periods.choose(&mut rng).unwrap();
                    b.timer = Some(Periodic { offset_ns: rng.gen_range(0..3) * 1_000_000, period_ns });
                }
                if !outs.is_empty() && rng.gen_bool(0.7) {
                    let period_ns = *detections.choose(&mut rng).unwrap();
                    b.detection = Some(Periodic { offset_ns: rng.gen_range(1..period_ns / 1_000_000) * 1_000_000, period_ns });
                    b.detection_targets = outs.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
                    if b.detection_targets.is_empty() {
                        b.detection_targets.push(outs[0]);
                    }
                    b.detection_targets.sort();
                    b.detection_targets.dedup();
                }
                let forward: Vec<FederateId> = outs.iter().copied().filter(|d| d.index() > me).collect();
                if rng.gen_bool(0.5) {
                    b.relay_to = forward.into_iter().filter(|_| rng.gen_bool(0.6)).collect();
                    b.relay_to.sort();
                    b.relay_to.dedup();
                }
                b
            })
            .collect();
        Scenario { name: format!("random-{seed}"), topology: Topology::new(n, connections), behaviors }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Sparse,
    Chain,
    Fanin,
    Zdc,
    Random,
}

impl FromStr for ScenarioKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparse" => Ok(ScenarioKind::Sparse),
            "chain" => Ok(ScenarioKind::Chain),
            "fanin" => Ok(ScenarioKind::Fanin),
            "zdc" => Ok(ScenarioKind::Zdc),
            "random" => Ok(ScenarioKind::Random),
            other => Err(ScenarioError::UnknownKind(other.to_string())),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScenarioKind::Sparse => "sparse",
            ScenarioKind::Chain => "chain",
            ScenarioKind::Fanin => "fanin",
            ScenarioKind::Zdc => "zdc",
            ScenarioKind::Random => "random",
        };
        f.write_str(s)
    }
}

/// The scenario config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub period_ns: i64,
    pub detection_period_ns: i64,
    pub duration_ns: i64,
    pub dnet: bool,
    #[serde(default)]
    pub latency: crate::sim::LatencyModel,
    /// Only used by the random scenario.
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        if self.period_ns <= 0 {
            return Err(ScenarioError::NonPositive("period"));
        }
        if self.detection_period_ns <= 0 {
            return Err(ScenarioError::NonPositive("detection period"));
        }
        if self.duration_ns < 0 {
            return Err(ScenarioError::NonPositive("duration"));
        }
        let (p, d) = (self.period_ns, self.detection_period_ns);
        Ok(match self.scenario {
            ScenarioKind::Sparse => Scenario::sparse_sender(p, d),
            ScenarioKind::Chain => Scenario::chain(p, d),
            ScenarioKind::Fanin => Scenario::fan_in(p, d),
            ScenarioKind::Zdc => Scenario::zero_delay_cycle(p, d),
            ScenarioKind::Random => Scenario::random(self.seed),
        })
    }

    pub fn run_config(&self) -> crate::sim::RunConfig {
        crate::sim::RunConfig {
            dnet: self.dnet,
            latency: self.latency.clone(),
            until: Tag::at(self.duration_ns, 0),
        }
    }
}
