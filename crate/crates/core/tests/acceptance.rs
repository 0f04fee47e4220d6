//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use fedtime::checker::{check_dnet_consistency, check_equivalence, check_safety};
use fedtime::scenario::Scenario;
use fedtime::sim::{run, LatencyModel, Outcome, RunConfig, RunReport};
use fedtime::trace::{RecordKind, Trace, TraceRecord, DELIVERED};
use fedtime::{Actor, FederateId, SignalKind, Tag, TimeValue, MICROSTEP_MAX};

const MS: i64 = 1_000_000;
const S: i64 = 1_000_000_000;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn f(i: u32) -> Actor {
    Actor::Federate(FederateId(i))
}

fn small_times() -> Vec<TimeValue> {
    let mut v = vec![TimeValue::NEVER];
    v.extend((0..=4).map(TimeValue::ns));
    v.push(TimeValue::FOREVER);
    v
}

fn small_tags() -> Vec<Tag> {
    let mut tags = Vec::new();
    for t in small_times() {
        for m in [0, 1, 2, 3, MICROSTEP_MAX] {
            if let Ok(tag) = Tag::new(t, m) {
                tags.push(tag);
            }
        }
    }
    tags
}

/// Every tag that can be the answer for operands from the small domain:
/// times up to 4 and microsteps near either end of the range.
fn answer_candidates() -> Vec<Tag> {
    let mut tags = vec![Tag::NEVER, Tag::FOREVER];
    let micro: Vec<u32> = (0..=3).chain(MICROSTEP_MAX - 3..=MICROSTEP_MAX).collect();
    for t in 0..=4 {
        for &m in &micro {
            tags.push(Tag::at(t, m));
        }
    }
    tags.sort();
    tags
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let domain = small_tags();
    let candidates = answer_candidates();
    let mut pairs = 0;
    let mut mismatches = Vec::new();
    for &a in &domain {
        for &b in domain.iter().filter(|b| b.time().is_finite()) {
            let oracle = candidates.iter().copied().filter(|&g| g.delayed_by(b) <= a).max().unwrap();
            let got = a.retreat_by(b).map_err(|e| e.to_string())?;
            pairs += 1;
            if got != oracle {
                mismatches.push(format!("S({a},{b}) = {got}, brute force {oracle}"));
            }
        }
    }
    for &a in &domain {
        ensure(a.retreat_by(Tag::NEVER).is_err() && a.retreat_by(Tag::FOREVER).is_err(), || {
            format!("S({a}, limit) accepted")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(mismatches.is_empty(), || format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{pairs} pairs, 0 mismatches, {elapsed:?}"))
}

fn run_sparse(dnet: bool, period: i64, detection: i64, until: i64) -> RunReport {
    let s = Scenario::sparse_sender(period, detection);
    run(&s, &RunConfig { dnet, latency: LatencyModel::Zero, until: Tag::at(until, 0) }).unwrap()
}

fn sends(t: &Trace, kind: RecordKind, src: Actor) -> impl Iterator<Item = &TraceRecord> {
    t.iter().filter(move |r| r.kind == kind && r.src == src && !r.is_delivery())
}

fn first_seq(t: &Trace, pred: impl Fn(&TraceRecord) -> bool) -> Option<u64> {
    t.iter().find(|r| pred(r)).map(|r| r.seq)
}

fn criterion_2() -> Check {
    let r = run_sparse(false, 20 * MS, 100 * MS, 120 * MS);
    let t = &r.trace;
    ensure(r.outcome == Outcome::Completed, || format!("outcome {:?}", r.outcome))?;
    let first_r = sends(t, RecordKind::Net, f(1)).next().map(|r| r.tag);
    ensure(first_r == Some(Tag::FOREVER), || format!("receiver's first NET is {first_r:?}"))?;
    let sender_nets: Vec<Tag> = sends(t, RecordKind::Net, f(0)).map(|r| r.tag).collect();
    for k in 0..=6 {
        let tag = Tag::at(k * 20 * MS, 0);
        ensure(sender_nets.contains(&tag), || format!("sender never sent NET{tag}"))?;
    }
    let at100 = Tag::at(100 * MS, 0);
    let ltc = first_seq(t, |r| r.kind == RecordKind::Ltc && r.src == f(0) && !r.is_delivery() && r.tag == at100);
    let fwd = first_seq(t, |r| r.kind == RecordKind::Msg && r.src == Actor::Rti && !r.is_delivery() && r.tag == at100);
    let grant = first_seq(t, |r| r.kind == RecordKind::Tag && r.dst == f(1) && !r.is_delivery() && r.tag == at100);
    let (Some(ltc), Some(fwd), Some(grant)) = (ltc, fwd, grant) else {
        return Err(format!("missing records: LTC {ltc:?} MSG {fwd:?} TAG {grant:?}"));
    };
    ensure(grant > ltc && grant > fwd, || format!("TAG at seq {grant}, LTC {ltc}, MSG {fwd}"))?;
    Ok(format!("{} sender NETs, TAG_r(100ms) after LTC_s and MSG", sender_nets.len()))
}

fn criterion_3() -> Check {
    let r = run_sparse(true, 20 * MS, 100 * MS, 120 * MS);
    let t = &r.trace;
    ensure(r.outcome == Outcome::Completed, || format!("outcome {:?}", r.outcome))?;
    let startup_r = first_seq(t, |r| r.kind == RecordKind::Net && r.src == f(1) && !r.is_delivery())
        .ok_or("receiver sent no NET")?;
    let dnet_in = first_seq(t, |r| r.kind == RecordKind::Dnet && r.dst == f(0) && r.is_delivery())
        .ok_or("no DNET reached the sender")?;
    ensure(dnet_in > startup_r, || "DNET reached the sender before the receiver's startup NET".into())?;

    let startup_s = first_seq(t, |r| r.kind == RecordKind::Net && r.src == f(0) && !r.is_delivery())
        .ok_or("sender sent no NET")?;
    let detection = first_seq(t, |r| {
        r.kind == RecordKind::Event && r.src == f(0) && r.note.as_deref().is_some_and(|n| n.starts_with("Detection"))
    })
    .ok_or("no detection event")?;
    let between = sends(t, RecordKind::Net, f(0)).filter(|r| r.seq > startup_s && r.seq < detection).count();
    ensure(between == 0, || format!("{between} sender NETs before the first detection"))?;

    let at100 = Tag::at(100 * MS, 0);
    let msg = first_seq(t, |r| r.kind == RecordKind::Msg && r.src == f(0) && !r.is_delivery() && r.tag == at100)
        .ok_or("no MSG(100ms)")?;
    let dnet100 = t
        .iter()
        .any(|r| r.seq > msg && r.kind == RecordKind::Dnet && r.dst == f(0) && !r.is_delivery() && r.tag == at100);
    ensure(dnet100, || "no DNET(100ms) after MSG(100ms)".into())?;
    let net120 = sends(t, RecordKind::Net, f(0)).any(|r| r.seq > msg && r.tag == Tag::at(120 * MS, 0));
    ensure(net120, || "sender did not send NET(120ms) after MSG(100ms)".into())?;
    Ok("DNET after startup, silent sender, DNET(100ms) and NET(120ms) after MSG".into())
}

fn criterion_4() -> Check {
    let expected = [(5, 100_161u64), (10, 50_191), (20, 25_193), (50, 10_195), (100, 5_195)];
    let mut lines = Vec::new();
    for (period, target) in expected {
        let t0 = Instant::now();
        let base = run_sparse(false, period * MS, 5 * S, 500 * S);
        let base_time = t0.elapsed();
        let t1 = Instant::now();
        let dnet = run_sparse(true, period * MS, 5 * S, 500 * S);
        let dnet_time = t1.elapsed();
        ensure(base.outcome == Outcome::Completed && dnet.outcome == Outcome::Completed, || {
            format!("{period}ms outcomes {:?} {:?}", base.outcome, dnet.outcome)
        })?;
        let b = base.count(SignalKind::Net);
        let d = dnet.count(SignalKind::Net);
        let dev = (b as f64 - target as f64).abs() / target as f64;
        ensure(dev <= 0.02, || format!("{period}ms baseline NET {b}, target {target} ({:.2}% off)", dev * 100.0))?;
        ensure(d <= 1000, || format!("{period}ms DNET-mode NET {d}"))?;
        let limit = Duration::from_secs(30);
        ensure(base_time < limit && dnet_time < limit, || format!("{period}ms took {base_time:?}/{dnet_time:?}"))?;
        let ratio = b as f64 / d.max(1) as f64;
        if period == 5 {
            ensure(ratio >= 100.0, || format!("5ms reduction {ratio:.1}x"))?;
        }
        lines.push(format!("{period}ms {b}/{d}"));
    }
    Ok(lines.join(", "))
}

fn shipped() -> Vec<Scenario> {
    vec![
        Scenario::sparse_sender(20 * MS, 100 * MS),
        Scenario::chain(20 * MS, 100 * MS),
        Scenario::fan_in(20 * MS, 100 * MS),
        Scenario::zero_delay_cycle(20 * MS, 100 * MS),
    ]
}

fn checked_run(s: &Scenario, dnet: bool, latency: LatencyModel, until: Tag) -> Result<Trace, String> {
    let r = run(s, &RunConfig { dnet, latency: latency.clone(), until }).map_err(|e| e.to_string())?;
    let label = format!("{} dnet={dnet} latency={latency}", s.name);
    ensure(r.outcome == Outcome::Completed, || format!("{label}: {:?}", r.outcome))?;
    let safety = check_safety(&r.trace);
    ensure(safety.ok(), || format!("{label}: {}", safety.report()))?;
    let matrix = s.topology.analyze().unwrap();
    let dn = check_dnet_consistency(&r.trace, &matrix);
    ensure(dn.ok(), || format!("{label}: {}", dn.report()))?;
    Ok(r.trace)
}

fn equivalent_everywhere(s: &Scenario, until: Tag) -> Result<usize, String> {
    let reference = checked_run(s, false, LatencyModel::Zero, until)?;
    let events = reference.iter().filter(|r| r.kind == RecordKind::Event).count();
    for dnet in [false, true] {
        for latency in [LatencyModel::Zero, LatencyModel::Fixed(3)] {
            let other = checked_run(s, dnet, latency.clone(), until)?;
            let eq = check_equivalence(&reference, &other);
            ensure(eq.ok(), || format!("{} dnet={dnet} latency={latency}: {}", s.name, eq.report()))?;
        }
    }
    Ok(events)
}

fn criterion_5() -> Check {
    let mut events = 0;
    for s in shipped() {
        events += equivalent_everywhere(&s, Tag::at(S, 0))?;
    }
    for seed in 0..50 {
        let s = Scenario::random(seed);
        ensure(s.topology.federates <= 6, || format!("seed {seed} too large"))?;
        events += equivalent_everywhere(&s, Tag::at(60 * MS, 0))?;
    }
    Ok(format!("4 shipped + 50 random scenarios, {events} reference events"))
}

fn renumber(mut records: Vec<TraceRecord>) -> Trace {
    for (i, r) in records.iter_mut().enumerate() {
        r.seq = i as u64;
    }
    Trace { records }
}

/// Moves each delivered MSG after the receiver's completion of that tag.
fn tardy_mutants(t: &Trace) -> Vec<Trace> {
    let mut out = Vec::new();
    for (i, m) in t.records.iter().enumerate() {
        if m.kind != RecordKind::Msg || !m.is_delivery() {
            continue;
        }
        let done = t.records.iter().position(|r| r.kind == RecordKind::Ltc && r.src == m.dst && !r.is_delivery() && r.tag >= m.tag);
        if let Some(done) = done {
            let mut records = t.records.clone();
            let moved = records.remove(i);
            records.insert(done, moved);
            out.push(renumber(records));
        }
    }
    out
}

/// Follows each TAG after the first to a federate with a repeat of an
/// earlier grant.
fn regression_mutants(t: &Trace) -> Vec<Trace> {
    let mut out = Vec::new();
    let mut first: std::collections::BTreeMap<Actor, Tag> = Default::default();
    for (i, r) in t.records.iter().enumerate() {
        if r.kind != RecordKind::Tag || r.is_delivery() {
            continue;
        }
        match first.get(&r.dst) {
            None => {
                first.insert(r.dst, r.tag);
            }
            Some(&earlier) => {
                let mut records = t.records.clone();
                let mut copy = r.clone();
                copy.tag = earlier;
                records.insert(i + 1, copy);
                out.push(renumber(records));
            }
        }
    }
    out
}

fn dnet_value_mutants(t: &Trace) -> Vec<Trace> {
    let mut out = Vec::new();
    for (i, r) in t.records.iter().enumerate() {
        if r.kind != RecordKind::Dnet || r.is_delivery() {
            continue;
        }
        let mut records = t.records.clone();
        records[i].tag = if i % 2 == 0 && r.tag != Tag::FOREVER { r.tag.successor() } else { r.tag.predecessor() };
        if records[i].tag != r.tag {
            out.push(renumber(records));
        }
    }
    out
}

fn criterion_6() -> Check {
    let mut subjects = shipped();
    subjects.extend((0..10).map(Scenario::random));
    let (mut seeded, mut caught) = ([0usize; 3], [0usize; 3]);
    for s in &subjects {
        let matrix = s.topology.analyze().unwrap();
        let until = Tag::at(if s.name.starts_with("random") { 60 * MS } else { 300 * MS }, 0);
        let clean = checked_run(s, true, LatencyModel::Fixed(2), until)?;
        for m in tardy_mutants(&clean) {
            seeded[0] += 1;
            caught[0] += check_safety(&m).has_rule("tardy-msg") as usize;
        }
        for m in regression_mutants(&clean) {
            seeded[1] += 1;
            caught[1] += check_safety(&m).has_rule("tag-regression") as usize;
        }
        for m in dnet_value_mutants(&clean) {
            seeded[2] += 1;
            caught[2] += check_dnet_consistency(&m, &matrix).has_rule("dnet-value") as usize;
        }
    }
    ensure(seeded.iter().all(|&n| n > 0), || format!("no mutants seeded for some class: {seeded:?}"))?;
    ensure(seeded == caught, || format!("caught {caught:?} of {seeded:?}"))?;
    Ok(format!("caught {}/{} tardy, {}/{} regression, {}/{} DNET value", caught[0], seeded[0], caught[1], seeded[1], caught[2], seeded[2]))
}

fn criterion_7() -> Check {
    let domain = small_tags();
    let mut checked = 0;
    for &g1 in &domain {
        for &g2 in domain.iter().filter(|&&g2| g1 <= g2) {
            for &b in &domain {
                let (x, y) = (g1.delayed_by(b), g2.delayed_by(b));
                ensure(x <= y, || format!("A({g1},{b}) = {x} > A({g2},{b}) = {y}"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} ordered triples"))
}

fn criterion_8() -> Check {
    let s = Scenario::zero_delay_cycle(20 * MS, 100 * MS);
    let matrix = s.topology.analyze().unwrap();
    let members = matrix.zero_delay_cycle_members();
    ensure(members.len() == 2, || format!("cycle members {members:?}"))?;
    let trace = checked_run(&s, true, LatencyModel::Zero, Tag::at(S, 0))?;
    let to_cycle = trace
        .iter()
        .filter(|r| r.kind == RecordKind::Dnet && r.dst.federate().is_some_and(|j| members.contains(&j)))
        .count();
    ensure(to_cycle == 0, || format!("{to_cycle} DNET records for cycle members"))?;
    let elsewhere = trace.iter().filter(|r| r.kind == RecordKind::Dnet && r.dst == f(0)).count();
    ensure(elsewhere > 0, || "no DNET reached the acyclic sender".into())?;
    equivalent_everywhere(&s, Tag::at(S, 0))?;
    Ok(format!("{elsewhere} DNET records outside the cycle, none inside"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("1 retreat matches brute force", criterion_1),
        ("2 baseline sparse-sender exchange", criterion_2),
        ("3 DNET sparse-sender exchange", criterion_3),
        ("4 NET counts over a 500 s run", criterion_4),
        ("5 equivalence and safety", criterion_5),
        ("6 seeded violations caught", criterion_6),
        ("7 delay addition monotone", criterion_7),
        ("8 zero-delay cycle excluded", criterion_8),
    ];
    // Written to the raw handle so the lines show even when output is captured.
    let mut err = std::io::stderr();
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let line = match check() {
            Ok(detail) => format!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed.push(name);
                format!("FAIL criterion {name}: {why}")
            }
        };
        writeln!(err, "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}

#[test]
fn delivered_note_is_stable() {
    assert_eq!(DELIVERED, "recv");
}
