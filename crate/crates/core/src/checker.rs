//! Post-hoc trace verification.

use std::collections::BTreeMap;

use crate::federate::Event;
use crate::signal::{Actor, FederateId};
use crate::tag::Tag;
use crate::topology::DelayMatrix;
use crate::trace::{RecordKind, Trace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub seq: Option<u64>,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, rule: &'static str, seq: Option<u64>, description: String) {
        self.violations.push(Violation { rule, seq, description });
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    /// One line per violation.
    pub fn report(&self) -> String {
        self.violations
            .iter()
            .map(|v| match v.seq {
                Some(seq) => format!("{} seq={}: {}\n", v.rule, seq, v.description),
                None => format!("{}: {}\n", v.rule, v.description),
            })
            .collect()
    }
}

/// Turns malformed-line reports from [`Trace::read_jsonl`] into violations.
pub fn malformed_lines(lines: &[(usize, String)]) -> Verdict {
    let mut v = Verdict::default();
    for (n, e) in lines {
        v.flag("malformed", None, format!("line {n}: {e}"));
    }
    v
}

/// Checks that no federate sees a message at or before a tag it completed
/// or was granted, and that completions and grants strictly increase.
pub fn check_safety(trace: &Trace) -> Verdict {
    let mut v = Verdict::default();
    let mut completed: BTreeMap<FederateId, Tag> = BTreeMap::new();
    let mut granted: BTreeMap<FederateId, Tag> = BTreeMap::new();
    let mut last_seq = None;
    for r in trace.iter() {
        if last_seq.is_some_and(|s| r.seq <= s) {
            v.flag("malformed", Some(r.seq), "sequence numbers not increasing".into());
        }
        last_seq = Some(r.seq);
        match r.kind {
            RecordKind::Fault => {
                v.flag("fault", Some(r.seq), r.note.clone().unwrap_or_default());
            }
            RecordKind::Ltc if !r.is_delivery() => {
                let Some(id) = r.src.federate() else {
                    v.flag("malformed", Some(r.seq), "LTC not sent by a federate".into());
                    continue;
                };
                let prev = completed.insert(id, r.tag).unwrap_or(Tag::NEVER);
                if r.tag <= prev {
                    v.flag("ltc-regression", Some(r.seq), format!("{id} completed {} after {prev}", r.tag));
                }
            }
            RecordKind::Tag if !r.is_delivery() => {
                let Some(id) = r.dst.federate() else {
                    v.flag("malformed", Some(r.seq), "TAG not addressed to a federate".into());
                    continue;
                };
                let prev = granted.insert(id, r.tag).unwrap_or(Tag::NEVER);
                if r.tag <= prev {
                    v.flag("tag-regression", Some(r.seq), format!("{id} granted {} after {prev}", r.tag));
                }
            }
            RecordKind::Msg if r.src == Actor::Rti => {
                let Some(id) = r.dst.federate() else {
                    v.flag("malformed", Some(r.seq), "MSG forwarded to the RTI".into());
                    continue;
                };
                let done = completed.get(&id).copied().unwrap_or(Tag::NEVER);
                if r.is_delivery() && r.tag <= done {
                    v.flag("tardy-msg", Some(r.seq), format!("MSG{} reached {id} after it completed {done}", r.tag));
                }
                let grant = granted.get(&id).copied().unwrap_or(Tag::NEVER);
                if !r.is_delivery() && r.tag <= grant {
                    v.flag("msg-after-tag", Some(r.seq), format!("MSG{} forwarded to {id} after TAG{grant}", r.tag));
                }
            }
            _ => {}
        }
    }
    v
}

fn events_by_federate(trace: &Trace) -> BTreeMap<FederateId, Vec<(u64, Event)>> {
    let mut map: BTreeMap<FederateId, Vec<(u64, Event)>> = BTreeMap::new();
    for r in trace.iter() {
        if let (Some(id), Some(e)) = (r.src.federate(), r.processed_event()) {
            map.entry(id).or_default().push((r.seq, e));
        }
    }
    map
}

/// Compares the per-federate sequences of processed events. Signal traffic
/// is ignored.
pub fn check_equivalence(a: &Trace, b: &Trace) -> Verdict {
    let mut v = Verdict::default();
    let ea = events_by_federate(a);
    let eb = events_by_federate(b);
    let ids: std::collections::BTreeSet<_> = ea.keys().chain(eb.keys()).copied().collect();
    let empty = Vec::new();
    for id in ids {
        let xa = ea.get(&id).unwrap_or(&empty);
        let xb = eb.get(&id).unwrap_or(&empty);
        let diverge = xa.iter().zip(xb).position(|((_, x), (_, y))| x != y);
        match diverge {
            Some(k) => {
                let ((sa, x), (sb, y)) = (&xa[k], &xb[k]);
                v.flag(
                    "divergence",
                    Some(*sa),
                    format!(
                        "{id} event #{k}: {}:{:?}@{} (a seq {sa}) vs {}:{:?}@{} (b seq {sb})",
                        x.action,
                        String::from_utf8_lossy(&x.body),
                        x.tag,
                        y.action,
                        String::from_utf8_lossy(&y.body),
                        y.tag
                    ),
                );
            }
            None if xa.len() != xb.len() => {
                v.flag(
                    "divergence",
                    None,
                    format!("{id} processed {} events in a but {} in b", xa.len(), xb.len()),
                );
            }
            None => {}
        }
    }
    v
}

/// Smallest accumulated delay from `j` to every federate it reaches, by
/// relaxation over immediate connections.
fn reach_delays(matrix: &DelayMatrix, j: FederateId) -> Vec<Option<Tag>> {
    let n = matrix.federate_count();
    let mut best: Vec<Option<Tag>> = vec![None; n];
    let mut changed = true;
    while changed {
        changed = false;
        for from in 0..n {
            let base = if from == j.index() { Some(Tag::ZERO) } else { best[from] };
            let Some(base) = base else { continue };
            for (to, slot) in best.iter_mut().enumerate() {
                let d = matrix.immediate(FederateId::from(to), FederateId::from(from));
                if d.is_forever() {
                    continue;
                }
                let via = base.delayed_by(d);
                if slot.is_none_or(|b| via < b) {
                    *slot = Some(via);
                    changed = true;
                }
            }
        }
    }
    best
}

/// The DNET value for `j` given each federate's earliest pending tag, or
/// `None` when `j` has nothing downstream.
pub fn expected_dnet(matrix: &DelayMatrix, j: FederateId, pending: impl Fn(FederateId) -> Tag) -> Option<Tag> {
    reach_delays(matrix, j)
        .into_iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|d| (FederateId::from(i), d)))
        .map(|(i, d)| pending(i).retreat_by(d).unwrap_or(Tag::NEVER))
        .min()
}

/// Recomputes every emitted DNET from the RTI dump recorded with it.
pub fn check_dnet_consistency(trace: &Trace, matrix: &DelayMatrix) -> Verdict {
    let mut v = Verdict::default();
    let mut dump = None;
    for r in trace.iter() {
        match r.kind {
            RecordKind::Dump => match r.dump() {
                Some(d) if d.federates.len() == matrix.federate_count() => dump = Some(d),
                _ => {
                    v.flag("bad-dump", Some(r.seq), "unreadable RTI state dump".into());
                    dump = None;
                }
            },
            RecordKind::Dnet if !r.is_delivery() => {
                let Some(j) = r.dst.federate().filter(|j| j.index() < matrix.federate_count()) else {
                    v.flag("malformed", Some(r.seq), "DNET not addressed to a known federate".into());
                    continue;
                };
                if matrix.in_zero_delay_cycle(j) {
                    v.flag("dnet-to-cycle", Some(r.seq), format!("DNET sent to {j} inside a zero-delay cycle"));
                    continue;
                }
                let Some(d) = &dump else {
                    v.flag("dnet-value", Some(r.seq), format!("DNET to {j} without a state dump"));
                    continue;
                };
                let expected = expected_dnet(matrix, j, |i| {
                    let f = &d.federates[i.index()];
                    f.net.min(f.head)
                });
                if expected != Some(r.tag) {
                    let shown = expected.map_or("none".to_string(), |t| t.to_string());
                    v.flag("dnet-value", Some(r.seq), format!("DNET{} to {j}, recomputed {shown}", r.tag));
                }
            }
            _ => {}
        }
    }
    v
}
