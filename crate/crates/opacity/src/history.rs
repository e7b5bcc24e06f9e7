//! Events, histories, external actions, and well-formedness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type Loc = u8;
pub type Val = u32;
pub type TxId = u32;
pub type ThreadId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Begin,
    Abort,
    Alloc(Loc),
    Read(Loc, Val),
    Write(Loc, Val),
    Commit,
    Success,
}

impl Label {
    pub fn loc(self) -> Option<Loc> {
        match self {
            Label::Alloc(x) | Label::Read(x, _) | Label::Write(x, _) => Some(x),
            _ => None,
        }
    }

    /// Value written by an allocation (always 0) or a write.
    pub fn wval(self) -> Option<Val> {
        match self {
            Label::Alloc(_) => Some(0),
            Label::Write(_, v) => Some(v),
            _ => None,
        }
    }

    pub fn is_update(self) -> bool {
        self.wval().is_some()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Begin => write!(f, "B"),
            Label::Abort => write!(f, "A"),
            Label::Alloc(x) => write!(f, "M{x}"),
            Label::Read(x, v) => write!(f, "R{x}={v}"),
            Label::Write(x, v) => write!(f, "W{x}={v}"),
            Label::Commit => write!(f, "C"),
            Label::Success => write!(f, "S"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub id: u32,
    pub tid: ThreadId,
    pub txid: TxId,
    pub label: Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Item {
    Ev(Event),
    Crash(u32),
}

/// A history: events and crash markers in total (real-time) order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct History {
    pub items: Vec<Item>,
}

impl History {
    pub fn new(items: Vec<Item>) -> Self {
        History { items }
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> + '_ {
        self.items.iter().filter_map(|i| match i {
            Item::Ev(e) => Some(e),
            Item::Crash(_) => None,
        })
    }

    /// The history with crash markers removed.
    pub fn without_crashes(&self) -> History {
        History { items: self.items.iter().copied().filter(|i| matches!(i, Item::Ev(_))).collect() }
    }

    pub fn prefix(&self, n: usize) -> History {
        History { items: self.items[..n].to_vec() }
    }

    /// Transaction identifiers in order of first appearance.
    pub fn txids(&self) -> Vec<TxId> {
        let mut seen = BTreeSet::new();
        self.events().map(|e| e.txid).filter(|t| seen.insert(*t)).collect()
    }
}

/// Completion status of a transaction within a history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Pending,
    CommitPending,
    Aborted,
    Committed,
}

/// Status of every transaction in `events`.
pub fn statuses<'a>(events: impl IntoIterator<Item = &'a Event>) -> BTreeMap<TxId, Status> {
    let mut out = BTreeMap::new();
    for e in events {
        let s = out.entry(e.txid).or_insert(Status::Pending);
        match e.label {
            Label::Success => *s = Status::Committed,
            Label::Abort => *s = Status::Aborted,
            Label::Commit if *s == Status::Pending => *s = Status::CommitPending,
            _ => {}
        }
    }
    out
}

/// Client order: `(t1, t2)` whenever `t1` has completed (success or abort)
/// before `t2` begins.
pub fn client_order(h: &History) -> BTreeSet<(TxId, TxId)> {
    let mut done = Vec::new();
    let mut out = BTreeSet::new();
    for e in h.events() {
        match e.label {
            Label::Begin => {
                for &t in &done {
                    if t != e.txid {
                        out.insert((t, e.txid));
                    }
                }
            }
            Label::Success | Label::Abort => done.push(e.txid),
            _ => {}
        }
    }
    out
}

/// Invocations of the transactional interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Inv {
    Begin,
    Read(Loc),
    Write(Loc, Val),
    Alloc,
    Commit,
}

/// Responses of the transactional interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Res {
    Begin,
    Read(Loc, Val),
    Write(Loc, Val),
    Alloc(Loc),
    Commit,
    Abort,
}

/// An externally visible action. Threads and transactions are conflated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Inv(TxId, Inv),
    Res(TxId, Res),
    Crash,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Inv(t, i) => write!(f, "inv{t}:{i:?}"),
            Action::Res(t, r) => write!(f, "res{t}:{r:?}"),
            Action::Crash => write!(f, "crash"),
        }
    }
}

/// The ordered history of a sequence of external actions: invocations other
/// than commit are dropped, responses (and commit invocations) become events
/// whose identifier is their position, crashes become markers.
pub fn ordered_history(actions: &[Action]) -> History {
    let mut items = Vec::new();
    for (i, a) in actions.iter().enumerate() {
        let id = i as u32;
        let ev = |t: TxId, label| Item::Ev(Event { id, tid: t, txid: t, label });
        match *a {
            Action::Crash => items.push(Item::Crash(id)),
            Action::Inv(t, Inv::Commit) => items.push(ev(t, Label::Commit)),
            Action::Inv(..) => {}
            Action::Res(t, r) => items.push(ev(
                t,
                match r {
                    Res::Begin => Label::Begin,
                    Res::Read(l, v) => Label::Read(l, v),
                    Res::Write(l, v) => Label::Write(l, v),
                    Res::Alloc(l) => Label::Alloc(l),
                    Res::Commit => Label::Success,
                    Res::Abort => Label::Abort,
                },
            )),
        }
    }
    History { items }
}

/// A violated well-formedness clause.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub clause: Clause,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Clause {
    /// A transaction's events share a thread and are contiguous in it.
    SameThread,
    /// Exactly one begin, first in its transaction.
    Begin,
    /// At most one abort, commit and success; abort and success come last.
    SingleTerminal,
    /// Only abort or success follow a commit, success immediately.
    AfterCommit,
    /// A live transaction is the last one of its thread.
    OneLive,
    /// A location is allocated at most once by successful transactions.
    SingleAlloc,
    /// Threads are not reused across a crash marker.
    DistinctThreads,
}

impl Clause {
    pub const ALL: [Clause; 7] = [
        Clause::SameThread,
        Clause::Begin,
        Clause::SingleTerminal,
        Clause::AfterCommit,
        Clause::OneLive,
        Clause::SingleAlloc,
        Clause::DistinctThreads,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Clause::SameThread => "wf:same-thread",
            Clause::Begin => "wf:begin",
            Clause::SingleTerminal => "wf:single-terminal",
            Clause::AfterCommit => "wf:after-commit",
            Clause::OneLive => "wf:one-live",
            Clause::SingleAlloc => "wf:single-alloc",
            Clause::DistinctThreads => "wf:distinct-threads",
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every violated clause, in clause order.
pub fn check_wellformed(h: &History) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |clause, detail: String| out.push(Violation { clause, detail });
    let evs: Vec<Event> = h.events().copied().collect();

    // per-thread event sequences (program order)
    let mut threads: BTreeMap<ThreadId, Vec<Event>> = BTreeMap::new();
    for e in &evs {
        threads.entry(e.tid).or_default().push(*e);
    }
    let mut txs: BTreeMap<TxId, Vec<Event>> = BTreeMap::new();
    for e in &evs {
        txs.entry(e.txid).or_default().push(*e);
    }

    for (&t, es) in &txs {
        let tids: BTreeSet<_> = es.iter().map(|e| e.tid).collect();
        if tids.len() > 1 {
            v(Clause::SameThread, format!("transaction {t} spans threads {tids:?}"));
        }
    }
    for (&tid, es) in &threads {
        let mut closed = BTreeSet::new();
        let mut cur = None;
        for e in es {
            if cur != Some(e.txid) {
                if closed.contains(&e.txid) {
                    v(Clause::SameThread, format!("transaction {} interleaved on thread {tid}", e.txid));
                }
                if let Some(c) = cur {
                    closed.insert(c);
                }
                cur = Some(e.txid);
            }
        }
    }

    for (&t, es) in &txs {
        let begins = es.iter().filter(|e| e.label == Label::Begin).count();
        if begins != 1 {
            v(Clause::Begin, format!("transaction {t} has {begins} begin events"));
        } else if es[0].label != Label::Begin {
            v(Clause::Begin, format!("transaction {t} does not start with its begin"));
        }
        for (lab, name) in [(Label::Abort, "abort"), (Label::Commit, "commit"), (Label::Success, "success")] {
            let n = es.iter().filter(|e| e.label == lab).count();
            if n > 1 {
                v(Clause::SingleTerminal, format!("transaction {t} has {n} {name} events"));
            }
        }
        for (i, e) in es.iter().enumerate() {
            if matches!(e.label, Label::Abort | Label::Success) && i + 1 != es.len() {
                v(Clause::SingleTerminal, format!("transaction {t} continues after {}", e.label));
            }
        }
        if let Some(ci) = es.iter().position(|e| e.label == Label::Commit) {
            if es[ci + 1..].iter().any(|e| !matches!(e.label, Label::Abort | Label::Success)) {
                v(Clause::AfterCommit, format!("transaction {t} has an operation after commit"));
            }
        }
    }
    for (&tid, es) in &threads {
        for (i, e) in es.iter().enumerate() {
            if e.label == Label::Success {
                let imm = i > 0 && es[i - 1].label == Label::Commit && es[i - 1].txid == e.txid;
                if !imm {
                    v(Clause::AfterCommit, format!("success of {} on thread {tid} not right after its commit", e.txid));
                }
            }
        }
    }

    let st = statuses(&evs);
    for (&tid, es) in &threads {
        let order: Vec<TxId> = {
            let mut seen = BTreeSet::new();
            es.iter().map(|e| e.txid).filter(|t| seen.insert(*t)).collect()
        };
        for (i, t) in order.iter().enumerate() {
            let live = matches!(st[t], Status::Pending | Status::CommitPending);
            if live && i + 1 != order.len() {
                v(Clause::OneLive, format!("live transaction {t} is not the last on thread {tid}"));
            }
        }
    }

    let mut allocs: BTreeMap<Loc, usize> = BTreeMap::new();
    for e in &evs {
        if let Label::Alloc(x) = e.label {
            if st[&e.txid] == Status::Committed {
                *allocs.entry(x).or_default() += 1;
            }
        }
    }
    for (x, n) in allocs {
        if n > 1 {
            v(Clause::SingleAlloc, format!("location {x} allocated by {n} successful transactions"));
        }
    }

    let mut before: BTreeSet<ThreadId> = BTreeSet::new();
    let mut era: BTreeSet<ThreadId> = BTreeSet::new();
    for i in &h.items {
        match i {
            Item::Crash(_) => {
                before.extend(std::mem::take(&mut era));
            }
            Item::Ev(e) => {
                if before.contains(&e.tid) && era.insert(e.tid) {
                    v(Clause::DistinctThreads, format!("thread {} reused after a crash", e.tid));
                }
                era.insert(e.tid);
            }
        }
    }
    out
}
