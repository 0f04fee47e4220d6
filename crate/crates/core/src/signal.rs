//! Signals exchanged between federates and the RTI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::tag::Tag;

/// Dense index of a federate within its topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FederateId(pub u32);

impl FederateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for FederateId {
    fn from(i: usize) -> Self {
        FederateId(i as u32)
    }
}

impl fmt::Display for FederateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// Either endpoint of a signal hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Rti,
    Federate(FederateId),
}

impl Actor {
    pub fn federate(self) -> Option<FederateId> {
        match self {
            Actor::Federate(id) => Some(id),
            Actor::Rti => None,
        }
    }
}

impl From<FederateId> for Actor {
    fn from(id: FederateId) -> Self {
        Actor::Federate(id)
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Rti => f.write_str("rti"),
            Actor::Federate(id) => id.fmt(f),
        }
    }
}

impl FromStr for Actor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "rti" {
            return Ok(Actor::Rti);
        }
        s.strip_prefix('f')
            .and_then(|n| n.parse::<u32>().ok())
            .map(|n| Actor::Federate(FederateId(n)))
            .ok_or_else(|| format!("unknown actor {s:?}"))
    }
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignalKind {
    /// Tagged message, routed through the RTI.
    Msg,
    /// Latest tag complete.
    Ltc,
    /// Next event tag.
    Net,
    /// Tag advance grant.
    Tag,
    /// Downstream next event tag.
    Dnet,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SignalKind::Msg => "MSG",
            SignalKind::Ltc => "LTC",
            SignalKind::Net => "NET",
            SignalKind::Tag => "TAG",
            SignalKind::Dnet => "DNET",
        };
        f.write_str(s)
    }
}

/// One signal. For `Msg`, `src` and `dst` are the originating and
/// destination federates; every other kind has the RTI on one side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signal {
    pub kind: SignalKind,
    pub tag: Tag,
    pub src: Actor,
    pub dst: Actor,
    pub body: Vec<u8>,
}

impl Signal {
    pub fn net(from: FederateId, tag: Tag) -> Self {
        Self::to_rti(SignalKind::Net, from, tag)
    }

    pub fn ltc(from: FederateId, tag: Tag) -> Self {
        Self::to_rti(SignalKind::Ltc, from, tag)
    }

    pub fn grant(to: FederateId, tag: Tag) -> Self {
        Self::from_rti(SignalKind::Tag, to, tag)
    }

    pub fn dnet(to: FederateId, tag: Tag) -> Self {
        Self::from_rti(SignalKind::Dnet, to, tag)
    }

    pub fn msg(from: FederateId, to: FederateId, tag: Tag, body: Vec<u8>) -> Self {
        Signal { kind: SignalKind::Msg, tag, src: from.into(), dst: to.into(), body }
    }

    fn to_rti(kind: SignalKind, from: FederateId, tag: Tag) -> Self {
        Signal { kind, tag, src: from.into(), dst: Actor::Rti, body: Vec::new() }
    }

    fn from_rti(kind: SignalKind, to: FederateId, tag: Tag) -> Self {
        Signal { kind, tag, src: Actor::Rti, dst: to.into(), body: Vec::new() }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{} {}->{}", self.kind, self.tag, self.src, self.dst)
    }
}
