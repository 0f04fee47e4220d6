//! Federate connection graph and minimum-delay analysis.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::FederateId;
use crate::tag::{Tag, TimeValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("connection {from} -> {to} references a federate outside 0..{count}")]
    OutOfRange { from: FederateId, to: FederateId, count: usize },
    #[error("connection {0} -> {0} connects a federate to itself")]
    SelfLoop(FederateId),
    #[error("after-delay {0} is negative")]
    NegativeDelay(TimeValue),
}

/// A directed connection carrying messages `from` → `to` with an after-delay.
/// `TimeValue::NEVER` means no after-delay was declared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub from: FederateId,
    pub to: FederateId,
    #[serde(rename = "delay_ns", with = "delay_repr")]
    pub delay: TimeValue,
}

impl Connection {
    pub fn new(from: impl Into<FederateId>, to: impl Into<FederateId>, delay: TimeValue) -> Self {
        Connection { from: from.into(), to: to.into(), delay }
    }
}

mod delay_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::tag::TimeValue;

    pub fn serialize<S: Serializer>(d: &TimeValue, s: S) -> Result<S::Ok, S::Error> {
        if d.is_never() {
            s.serialize_str("never")
        } else if d.is_forever() {
            s.serialize_str("forever")
        } else {
            s.serialize_i64(d.as_ns())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TimeValue, D::Error> {
        TimeValue::deserialize(d)
    }
}

/// The topology config file: `{"federates": N, "connections": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub federates: usize,
    pub connections: Vec<Connection>,
}

impl Topology {
    pub fn new(federates: usize, connections: Vec<Connection>) -> Self {
        Topology { federates, connections }
    }

    pub fn analyze(&self) -> Result<DelayMatrix, TopologyError> {
        DelayMatrix::build(self.federates, &self.connections)
    }
}

/// Derived delay structure of a topology. Immutable once built.
///
/// Indexing convention follows the protocol: `immediate(i, j)` is the
/// minimum delay tag from `j` *to* `i`.
#[derive(Debug, Clone)]
pub struct DelayMatrix {
    n: usize,
    immediate: Vec<Tag>,
    transitive: Vec<Tag>,
    upstream: Vec<Vec<FederateId>>,
    downstream: Vec<Vec<FederateId>>,
    downstream_closure: Vec<Vec<FederateId>>,
    upstream_closure: Vec<Vec<FederateId>>,
    zero_delay_cycle: Vec<bool>,
}

impl DelayMatrix {
    pub fn build(federates: usize, connections: &[Connection]) -> Result<Self, TopologyError> {
        let n = federates;
        let mut immediate = vec![Tag::FOREVER; n * n];
        let mut zero_edges = vec![Vec::new(); n];
        for c in connections {
            if c.from.index() >= n || c.to.index() >= n {
                return Err(TopologyError::OutOfRange { from: c.from, to: c.to, count: n });
            }
            if c.from == c.to {
                return Err(TopologyError::SelfLoop(c.from));
            }
            if c.delay < TimeValue::ZERO && !c.delay.is_never() {
                return Err(TopologyError::NegativeDelay(c.delay));
            }
            let hop = Tag::from_delay(c.delay);
            let slot = &mut immediate[c.to.index() * n + c.from.index()];
            *slot = (*slot).min(hop);
            if hop == Tag::ZERO {
                zero_edges[c.from.index()].push(c.to.index());
            }
        }

        // Shortest paths under the tag order. Every hop is >= (0,0), so a
        // walk through a cycle is never shorter than the walk without it and
        // n rounds of relaxation reach the fixpoint.
        let mut transitive = immediate.clone();
        for _ in 0..=n {
            let mut changed = false;
            for j in 0..n {
                for k in 0..n {
                    let to_k = transitive[k * n + j];
                    if to_k.is_forever() {
                        continue;
                    }
                    for i in 0..n {
                        let hop = immediate[i * n + k];
                        if hop.is_forever() {
                            continue;
                        }
                        let candidate = to_k.delayed_by(hop);
                        if candidate < transitive[i * n + j] {
                            transitive[i * n + j] = candidate;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let ids = |pred: &dyn Fn(usize) -> bool| -> Vec<FederateId> {
            (0..n).filter(|&x| pred(x)).map(FederateId::from).collect()
        };
        let upstream = (0..n).map(|i| ids(&|j| !immediate[i * n + j].is_forever())).collect();
        let downstream = (0..n).map(|j| ids(&|i| !immediate[i * n + j].is_forever())).collect();
        let downstream_closure =
            (0..n).map(|j| ids(&|i| !transitive[i * n + j].is_forever())).collect();
        let upstream_closure =
            (0..n).map(|i| ids(&|j| !transitive[i * n + j].is_forever())).collect();

        let zero_delay_cycle = (0..n).map(|start| reaches_itself(&zero_edges, start)).collect();

        Ok(DelayMatrix {
            n,
            immediate,
            transitive,
            upstream,
            downstream,
            downstream_closure,
            upstream_closure,
            zero_delay_cycle,
        })
    }

    pub fn federate_count(&self) -> usize {
        self.n
    }

    pub fn federates(&self) -> impl Iterator<Item = FederateId> {
        (0..self.n).map(FederateId::from)
    }

    /// Minimum delay tag over direct connections `j` → `i`.
    pub fn immediate(&self, i: FederateId, j: FederateId) -> Tag {
        self.immediate[i.index() * self.n + j.index()]
    }

    /// Minimum delay tag over all paths `j` → … → `i`.
    pub fn transitive(&self, i: FederateId, j: FederateId) -> Tag {
        self.transitive[i.index() * self.n + j.index()]
    }

    /// Federates with a direct connection into `i`.
    pub fn upstream(&self, i: FederateId) -> &[FederateId] {
        &self.upstream[i.index()]
    }

    /// Federates with a direct connection from `j`.
    pub fn downstream(&self, j: FederateId) -> &[FederateId] {
        &self.downstream[j.index()]
    }

    /// Federates reachable from `j` through one or more connections.
    pub fn downstream_closure(&self, j: FederateId) -> &[FederateId] {
        &self.downstream_closure[j.index()]
    }

    /// Federates that reach `i` through one or more connections.
    pub fn upstream_closure(&self, i: FederateId) -> &[FederateId] {
        &self.upstream_closure[i.index()]
    }

    pub fn in_zero_delay_cycle(&self, i: FederateId) -> bool {
        self.zero_delay_cycle[i.index()]
    }

    /// Federates on a cycle made only of connections without an after-delay.
    pub fn zero_delay_cycle_members(&self) -> BTreeSet<FederateId> {
        self.federates().filter(|&f| self.in_zero_delay_cycle(f)).collect()
    }
}

fn reaches_itself(edges: &[Vec<usize>], start: usize) -> bool {
    let mut seen = vec![false; edges.len()];
    let mut stack: Vec<usize> = edges[start].clone();
    while let Some(v) = stack.pop() {
        if v == start {
            return true;
        }
        if !std::mem::replace(&mut seen[v], true) {
            stack.extend(&edges[v]);
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MS: i64 = 1_000_000;

    fn f(i: u32) -> FederateId {
        FederateId(i)
    }

    #[test]
    fn undeclared_delay_is_zero_tag() {
        let m = DelayMatrix::build(2, &[Connection::new(0, 1, TimeValue::NEVER)]).unwrap();
        assert_eq!(m.immediate(f(1), f(0)), Tag::ZERO);
        assert_eq!(m.transitive(f(1), f(0)), Tag::ZERO);
        assert_eq!(m.upstream(f(1)), &[f(0)]);
        assert!(m.upstream(f(0)).is_empty());
    }

    #[test]
    fn chain_folds_hops_in_path_order() {
        let m = DelayMatrix::build(
            3,
            &[Connection::new(0, 1, TimeValue::ms(10)), Connection::new(1, 2, TimeValue::ZERO)],
        )
        .unwrap();
        assert_eq!(m.transitive(f(2), f(0)), Tag::at(10 * MS, 1));
        assert_eq!(m.immediate(f(2), f(0)), Tag::FOREVER);
        assert_eq!(m.downstream_closure(f(0)), &[f(1), f(2)]);
        assert_eq!(m.upstream_closure(f(2)), &[f(0), f(1)]);
    }

    #[test]
    fn no_path_is_forever() {
        let m = DelayMatrix::build(3, &[Connection::new(0, 1, TimeValue::ZERO)]).unwrap();
        assert_eq!(m.transitive(f(2), f(0)), Tag::FOREVER);
        assert_eq!(m.transitive(f(0), f(1)), Tag::FOREVER);
    }

    #[test]
    fn parallel_connections_take_the_minimum() {
        let m = DelayMatrix::build(
            2,
            &[Connection::new(0, 1, TimeValue::ms(5)), Connection::new(0, 1, TimeValue::ZERO)],
        )
        .unwrap();
        assert_eq!(m.immediate(f(1), f(0)), Tag::at(0, 1));
    }

    #[test]
    fn zero_delay_cycles() {
        let zdc = DelayMatrix::build(
            2,
            &[Connection::new(0, 1, TimeValue::NEVER), Connection::new(1, 0, TimeValue::NEVER)],
        )
        .unwrap();
        assert_eq!(zdc.zero_delay_cycle_members(), [f(0), f(1)].into_iter().collect());

        // Each zero after-delay still advances one microstep.
        let micro = DelayMatrix::build(
            2,
            &[Connection::new(0, 1, TimeValue::ZERO), Connection::new(1, 0, TimeValue::ZERO)],
        )
        .unwrap();
        assert!(micro.zero_delay_cycle_members().is_empty());
        assert_eq!(micro.transitive(f(0), f(0)), Tag::at(0, 2));

        let chain = DelayMatrix::build(
            3,
            &[Connection::new(0, 1, TimeValue::NEVER), Connection::new(1, 2, TimeValue::NEVER)],
        )
        .unwrap();
        assert!(chain.zero_delay_cycle_members().is_empty());
    }

    #[test]
    fn rejects_bad_connections() {
        assert!(matches!(
            DelayMatrix::build(2, &[Connection::new(0, 2, TimeValue::ZERO)]),
            Err(TopologyError::OutOfRange { .. })
        ));
        assert!(matches!(
            DelayMatrix::build(2, &[Connection::new(1, 1, TimeValue::ZERO)]),
            Err(TopologyError::SelfLoop(_))
        ));
    }

    #[test]
    fn config_json_shape() {
        let json = r#"{"federates":3,"connections":[
            {"from":0,"to":1,"delay_ns":"never"},
            {"from":1,"to":2,"delay_ns":10000000},
            {"from":2,"to":0,"delay_ns":"forever"}]}"#;
        let topo: Topology = serde_json::from_str(json).unwrap();
        assert_eq!(topo.connections[0].delay, TimeValue::NEVER);
        assert_eq!(topo.connections[1].delay, TimeValue::ms(10));
        assert_eq!(topo.connections[2].delay, TimeValue::FOREVER);
        let out = serde_json::to_string(&topo).unwrap();
        assert!(out.contains(r#""delay_ns":"never""#));
        assert_eq!(serde_json::from_str::<Topology>(&out).unwrap(), topo);
    }

    /// Minimum over every walk of length 1..=n from `j` to `i`, by exhaustive
    /// enumeration.
    fn all_paths_oracle(n: usize, edges: &[Connection], i: usize, j: usize) -> Tag {
        fn walk(
            n: usize,
            edges: &[Connection],
            at: usize,
            acc: Tag,
            depth: usize,
            target: usize,
            best: &mut Tag,
        ) {
            if depth == n {
                return;
            }
            for e in edges.iter().filter(|e| e.from.index() == at) {
                let next = acc.delayed_by(Tag::from_delay(e.delay));
                if e.to.index() == target && next < *best {
                    *best = next;
                }
                walk(n, edges, e.to.index(), next, depth + 1, target, best);
            }
        }
        let mut best = Tag::FOREVER;
        // The first hop starts from (0,0), which is the identity for A on delays.
        walk(n, edges, j, Tag::ZERO, 0, i, &mut best);
        best
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<Connection>)> {
        (2usize..=5).prop_flat_map(|n| {
            let delay = prop_oneof![
                Just(TimeValue::NEVER),
                Just(TimeValue::ZERO),
                Just(TimeValue::ms(1)),
                Just(TimeValue::ms(10)),
            ];
            let edge = (0..n, 0..n, delay)
                .prop_filter("no self loops", |(a, b, _)| a != b)
                .prop_map(|(a, b, d)| Connection::new(a, b, d));
            (Just(n), prop::collection::vec(edge, 0..8))
        })
    }

    proptest! {
        #[test]
        fn transitive_matches_all_paths((n, edges) in arb_graph()) {
            let m = DelayMatrix::build(n, &edges).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let (fi, fj) = (FederateId::from(i), FederateId::from(j));
                    prop_assert_eq!(m.transitive(fi, fj), all_paths_oracle(n, &edges, i, j));
                    prop_assert!(m.transitive(fi, fj) <= m.immediate(fi, fj));
                    let reachable = !m.transitive(fi, fj).is_forever();
                    prop_assert_eq!(reachable, m.downstream_closure(fj).contains(&fi));
                    if reachable {
                        prop_assert!(m.transitive(fi, fj) >= Tag::ZERO);
                    }
                    for k in 0..n {
                        let fk = FederateId::from(k);
                        let via = m.transitive(fk, fj).delayed_by(m.immediate(fi, fk));
                        prop_assert!(m.transitive(fi, fj) <= via);
                    }
                }
            }
        }

        #[test]
        fn adding_an_edge_never_increases_delays((n, edges) in arb_graph(), extra in 0usize..25) {
            let (a, b) = (extra % n, (extra / n) % n);
            prop_assume!(a != b);
            let before = DelayMatrix::build(n, &edges).unwrap();
            let mut more = edges.clone();
            more.push(Connection::new(a, b, TimeValue::ms(1)));
            let after = DelayMatrix::build(n, &more).unwrap();
            for i in before.federates() {
                for j in before.federates() {
                    prop_assert!(after.transitive(i, j) <= before.transitive(i, j));
                }
            }
        }
    }
}
