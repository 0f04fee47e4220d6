//! The centralized coordinator.
//!
//! For every federate `j` the RTI keeps the latest reported next event tag
//! `N_j`, the latest completed tag `L_j` and a min-queue `Q_j` of tags of
//! messages forwarded to `j` that `j` has not yet completed. From these it
//! decides when a federate may advance (TAG) and, with DNET enabled, tells
//! each federate how far its next-event reports are irrelevant downstream.
//!
//! The RTI is a plain state machine: one input signal in, a list of output
//! signals out.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Actor, FederateId, Signal, SignalKind};
use crate::tag::Tag;
use crate::topology::DelayMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RtiError {
    #[error("unknown federate {0}")]
    UnknownFederate(Actor),
    #[error("no connection {src} -> {dst} for message at {tag}")]
    NoConnection { src: FederateId, dst: FederateId, tag: Tag },
    #[error("the RTI does not accept {0} signals")]
    UnexpectedSignal(SignalKind),
}

/// Per-federate bookkeeping.
#[derive(Debug, Clone)]
pub struct RtiFederateState {
    /// Latest reported next event tag.
    pub net: Tag,
    /// Latest completed tag.
    pub ltc: Tag,
    in_transit: BinaryHeap<Reverse<Tag>>,
    pub last_granted: Tag,
    pub last_dnet: Option<Tag>,
}

impl RtiFederateState {
    fn new() -> Self {
        RtiFederateState {
            net: Tag::NEVER,
            ltc: Tag::NEVER,
            in_transit: BinaryHeap::new(),
            last_granted: Tag::NEVER,
            last_dnet: None,
        }
    }

    /// Earliest in-transit tag; `FOREVER` when nothing is in flight.
    pub fn head(&self) -> Tag {
        self.in_transit.peek().map_or(Tag::FOREVER, |Reverse(t)| *t)
    }

    /// `min(N, H(Q))`: the earliest tag this federate may need to process.
    pub fn earliest_pending(&self) -> Tag {
        self.net.min(self.head())
    }

    pub fn in_transit(&self) -> Vec<Tag> {
        let mut tags: Vec<Tag> = self.in_transit.iter().map(|Reverse(t)| *t).collect();
        tags.sort();
        tags
    }
}

/// Snapshot of one federate's RTI state, as written into traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederateDump {
    pub id: FederateId,
    pub net: Tag,
    pub ltc: Tag,
    pub head: Tag,
    pub in_transit: Vec<Tag>,
    pub last_granted: Tag,
    pub last_dnet: Option<Tag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtiDump {
    pub federates: Vec<FederateDump>,
}

pub struct Rti {
    matrix: DelayMatrix,
    federates: Vec<RtiFederateState>,
    dnet_enabled: bool,
    diagnostics: Vec<String>,
}

impl Rti {
    pub fn new(matrix: DelayMatrix, dnet_enabled: bool) -> Self {
        let federates = (0..matrix.federate_count()).map(|_| RtiFederateState::new()).collect();
        Rti { matrix, federates, dnet_enabled, diagnostics: Vec::new() }
    }

    pub fn matrix(&self) -> &DelayMatrix {
        &self.matrix
    }

    pub fn dnet_enabled(&self) -> bool {
        self.dnet_enabled
    }

    pub fn state(&self, id: FederateId) -> &RtiFederateState {
        &self.federates[id.index()]
    }

    /// Drains notes about ignored inputs (stale NET, regressing LTC, tardy messages).
    pub fn take_diagnostics(&mut self) -> Vec<String> {
        std::mem::take(&mut self.diagnostics)
    }

    pub fn dump(&self) -> RtiDump {
        let federates = self
            .federates
            .iter()
            .enumerate()
            .map(|(i, s)| FederateDump {
                id: FederateId::from(i),
                net: s.net,
                ltc: s.ltc,
                head: s.head(),
                in_transit: s.in_transit(),
                last_granted: s.last_granted,
                last_dnet: s.last_dnet,
            })
            .collect();
        RtiDump { federates }
    }

    /// Dispatches one incoming signal.
    pub fn handle(&mut self, signal: Signal) -> Result<Vec<Signal>, RtiError> {
        let src = match signal.src {
            Actor::Federate(id) if id.index() < self.federates.len() => id,
            other => return Err(RtiError::UnknownFederate(other)),
        };
        match signal.kind {
            SignalKind::Net => Ok(self.handle_net(src, signal.tag)),
            SignalKind::Ltc => Ok(self.handle_ltc(src, signal.tag)),
            SignalKind::Msg => {
                let dst = match signal.dst {
                    Actor::Federate(id) if id.index() < self.federates.len() => id,
                    other => return Err(RtiError::UnknownFederate(other)),
                };
                self.handle_msg(src, dst, signal.tag, signal.body)
            }
            kind => Err(RtiError::UnexpectedSignal(kind)),
        }
    }

    pub fn handle_net(&mut self, j: FederateId, tag: Tag) -> Vec<Signal> {
        let st = &mut self.federates[j.index()];
        if tag == st.net {
            return Vec::new();
        }
        if !st.ltc.is_never() && tag <= st.ltc {
            self.diagnostics.push(format!("ignored stale NET{tag} from {j}: already completed {}", st.ltc));
            return Vec::new();
        }
        st.net = tag;

        let mut affected = vec![j];
        affected.extend_from_slice(self.matrix.downstream_closure(j));
        affected.sort();
        affected.dedup();
        let mut out = self.grant_pass(&affected);
        let upstream = self.matrix.upstream_closure(j).to_vec();
        out.extend(upstream.into_iter().filter_map(|k| self.refresh_dnet(k)));
        out
    }

    pub fn handle_ltc(&mut self, j: FederateId, tag: Tag) -> Vec<Signal> {
        let st = &mut self.federates[j.index()];
        if tag <= st.ltc {
            self.diagnostics.push(format!("ignored non-increasing LTC{tag} from {j}"));
            return Vec::new();
        }
        st.ltc = tag;
        let before = st.head();
        while matches!(st.in_transit.peek(), Some(Reverse(t)) if *t <= tag) {
            st.in_transit.pop();
        }
        let head_changed = st.head() != before;

        // `j` itself may now be grantable: its queue head moved past `tag`.
        let mut affected = vec![j];
        affected.extend_from_slice(self.matrix.downstream_closure(j));
        affected.sort();
        affected.dedup();
        let mut out = self.grant_pass(&affected);
        if head_changed {
            let upstream = self.matrix.upstream_closure(j).to_vec();
            out.extend(upstream.into_iter().filter_map(|k| self.refresh_dnet(k)));
        }
        out
    }

    /// Records and forwards a message. The forwarded MSG is always the first
    /// output so that it precedes any grant on the channel to `dst`.
    pub fn handle_msg(
        &mut self,
        src: FederateId,
        dst: FederateId,
        tag: Tag,
        body: Vec<u8>,
    ) -> Result<Vec<Signal>, RtiError> {
        if self.matrix.immediate(dst, src).is_forever() {
            return Err(RtiError::NoConnection { src, dst, tag });
        }
        let st = &mut self.federates[dst.index()];
        if tag <= st.last_granted {
            self.diagnostics.push(format!(
                "tardy MSG{tag} {src}->{dst}: already granted {}",
                st.last_granted
            ));
        }
        st.in_transit.push(Reverse(tag));

        let mut out = vec![Signal::msg(src, dst, tag, body)];
        out.extend(self.grant_pass(&[dst]));
        let upstream = self.matrix.upstream_closure(dst).to_vec();
        out.extend(upstream.into_iter().filter_map(|k| self.refresh_dnet(k)));
        Ok(out)
    }

    /// Grants a tag advance to `i` if it is safe and new.
    pub fn try_grant_tag(&mut self, i: FederateId) -> Option<Signal> {
        let eimt = self.eimt_all();
        self.try_grant_with(i, &eimt)
    }

    fn grant_pass(&mut self, targets: &[FederateId]) -> Vec<Signal> {
        if targets.is_empty() {
            return Vec::new();
        }
        let eimt = self.eimt_all();
        targets.iter().filter_map(|&i| self.try_grant_with(i, &eimt)).collect()
    }

    fn try_grant_with(&mut self, i: FederateId, eimt: &[Tag]) -> Option<Signal> {
        if self.matrix.upstream(i).is_empty() {
            return None;
        }
        let st = &self.federates[i.index()];
        // Nothing reported yet.
        if st.net.is_never() {
            return None;
        }
        let bound = self.completion_bound(i);
        let grant = if bound >= st.net {
            bound
        } else {
            let target = st.earliest_pending();
            if eimt[i.index()] > target {
                target
            } else {
                return None;
            }
        };
        let st = &mut self.federates[i.index()];
        if grant <= st.last_granted {
            return None;
        }
        st.last_granted = grant;
        Some(Signal::grant(i, grant))
    }

    /// Latest tag `g` such that no upstream federate can still produce a
    /// message for `i` at or before `g`, judged from completed tags alone.
    ///
    /// An upstream `j` that completed `L_j` next acts at `L_j.successor()` at
    /// the earliest, so its messages carry at least that tag delayed by
    /// `D_ij`. Adding a positive-time delay drops the microstep, so the bound
    /// is taken strictly below that earliest message tag.
    fn completion_bound(&self, i: FederateId) -> Tag {
        self.matrix
            .upstream(i)
            .iter()
            .map(|&j| {
                let earliest = self.federates[j.index()].ltc.successor();
                earliest.delayed_by(self.matrix.immediate(i, j)).predecessor()
            })
            .min()
            .unwrap_or(Tag::FOREVER)
    }

    /// Earliest possible tag of a future incoming message for `i`.
    pub fn compute_eimt(&self, i: FederateId) -> Tag {
        self.eimt_all()[i.index()]
    }

    /// Solves `B_i = min_{j in U_i} A(min(B_j, N_j, H(Q_j)), D_ij)` for all
    /// federates by descending iteration from `FOREVER`. Members of
    /// zero-delay cycles are pinned to `NEVER`.
    fn eimt_all(&self) -> Vec<Tag> {
        let n = self.federates.len();
        let mut eimt: Vec<Tag> = self
            .matrix
            .federates()
            .map(|f| if self.matrix.in_zero_delay_cycle(f) { Tag::NEVER } else { Tag::FOREVER })
            .collect();
        for _ in 0..=n {
            let mut changed = false;
            for i in self.matrix.federates() {
                if self.matrix.in_zero_delay_cycle(i) {
                    continue;
                }
                let b = self
                    .matrix
                    .upstream(i)
                    .iter()
                    .map(|&j| {
                        let up = eimt[j.index()].min(self.federates[j.index()].earliest_pending());
                        up.delayed_by(self.matrix.immediate(i, j))
                    })
                    .min()
                    .unwrap_or(Tag::FOREVER);
                if b != eimt[i.index()] {
                    eimt[i.index()] = b;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        eimt
    }

    /// Upper bound of next-event tags of `j` that no downstream federate
    /// needs. `None` when `j` has no downstream federates or sits in a
    /// zero-delay cycle.
    pub fn compute_dnet_tag(&self, j: FederateId) -> Option<Tag> {
        if self.matrix.in_zero_delay_cycle(j) {
            return None;
        }
        dnet_bound(&self.matrix, j, |i| self.federates[i.index()].earliest_pending())
    }

    /// Sends a DNET to `j` when its value changed since the last one sent.
    pub fn refresh_dnet(&mut self, j: FederateId) -> Option<Signal> {
        if !self.dnet_enabled {
            return None;
        }
        let tag = self.compute_dnet_tag(j)?;
        let st = &mut self.federates[j.index()];
        match st.last_dnet {
            Some(prev) if prev == tag => return None,
            // Federates start out assuming NEVER.
            None if tag.is_never() => return None,
            _ => {}
        }
        st.last_dnet = Some(tag);
        Some(Signal::dnet(j, tag))
    }
}

/// `min over i downstream of j of S(min(N_i, H(Q_i)), D_ij)`, with the
/// pending tag of each federate supplied by `pending`. Shared with the trace
/// checker, which feeds it values from state dumps.
pub fn dnet_bound(
    matrix: &DelayMatrix,
    j: FederateId,
    pending: impl Fn(FederateId) -> Tag,
) -> Option<Tag> {
    matrix
        .downstream_closure(j)
        .iter()
        .map(|&i| {
            pending(i)
                .retreat_by(matrix.transitive(i, j))
                .expect("reachable delay is neither NEVER nor FOREVER")
        })
        .min()
}
