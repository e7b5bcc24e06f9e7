//! Execution graphs and the axiomatic checks over them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::history::{statuses, Event, Label, Loc, Status, TxId};

/// An execution graph. Program order is the order of `events` restricted to
/// each thread; `clo` relates transactions; `rf` maps each read to its
/// source by event index; `mo` lists, per location, its updates in order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Graph {
    pub events: Vec<Event>,
    pub clo: BTreeSet<(TxId, TxId)>,
    pub rf: BTreeMap<usize, usize>,
    pub mo: BTreeMap<Loc, Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Axiom {
    /// `rf`/`mo` do not have the expected shape.
    Typing(String),
    VisRf,
    Int,
    Ext,
    Dyn,
    /// Serialisability is only defined for fully committed graphs.
    Incomplete,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axiom::Typing(s) => write!(f, "ill-typed: {s}"),
            Axiom::VisRf => f.write_str("vis-rf"),
            Axiom::Int => f.write_str("int"),
            Axiom::Ext => f.write_str("ext"),
            Axiom::Dyn => f.write_str("dyn"),
            Axiom::Incomplete => f.write_str("incomplete"),
        }
    }
}

/// Program-order position of each event within its thread.
fn po_index(g: &Graph) -> Vec<usize> {
    let mut next: BTreeMap<u32, usize> = BTreeMap::new();
    g.events
        .iter()
        .map(|e| {
            let n = next.entry(e.tid).or_default();
            *n += 1;
            *n
        })
        .collect()
}

struct Ctx<'a> {
    g: &'a Graph,
    po: Vec<usize>,
    /// position of each update in its location's `mo`
    mo_pos: Vec<usize>,
    status: BTreeMap<TxId, Status>,
}

impl<'a> Ctx<'a> {
    fn new(g: &'a Graph) -> Result<Self, Axiom> {
        let typ = |s: String| Err(Axiom::Typing(s));
        let n = g.events.len();
        for (&r, &w) in &g.rf {
            if w >= n || r >= n {
                return typ(format!("rf edge {w}->{r} out of range"));
            }
            let (we, re) = (g.events[w].label, g.events[r].label);
            match (we.loc(), we.wval(), re) {
                (Some(x), Some(v), Label::Read(y, u)) if x == y && v == u => {}
                _ => return typ(format!("rf edge {we} -> {re}")),
            }
        }
        for (i, e) in g.events.iter().enumerate() {
            if matches!(e.label, Label::Read(..)) && !g.rf.contains_key(&i) {
                return typ(format!("read {i} ({}) has no rf source", e.label));
            }
        }
        let mut mo_pos = vec![usize::MAX; n];
        for (&x, order) in &g.mo {
            for (p, &i) in order.iter().enumerate() {
                if i >= n || g.events[i].label.loc() != Some(x) || !g.events[i].label.is_update() {
                    return typ(format!("mo on {x} lists non-update {i}"));
                }
                if mo_pos[i] != usize::MAX {
                    return typ(format!("event {i} repeated in mo"));
                }
                mo_pos[i] = p;
            }
        }
        for (i, e) in g.events.iter().enumerate() {
            if e.label.is_update() && mo_pos[i] == usize::MAX {
                return typ(format!("update {i} ({}) missing from mo", e.label));
            }
        }
        Ok(Ctx { g, po: po_index(g), mo_pos, status: statuses(&g.events) })
    }

    fn tx(&self, i: usize) -> TxId {
        self.g.events[i].txid
    }

    fn po_before(&self, a: usize, b: usize) -> bool {
        self.g.events[a].tid == self.g.events[b].tid && self.po[a] < self.po[b]
    }

    fn mo_before(&self, a: usize, b: usize) -> bool {
        self.g.events[a].label.loc() == self.g.events[b].label.loc() && self.mo_pos[a] < self.mo_pos[b]
    }

    /// `(read, update)` pairs of `rb = rf⁻¹;mo`.
    fn rb(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (&r, &w) in &self.g.rf {
            for (i, e) in self.g.events.iter().enumerate() {
                if e.label.is_update() && self.mo_before(w, i) {
                    out.push((r, i));
                }
            }
        }
        out
    }

    fn mo_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for order in self.g.mo.values() {
            for (p, &a) in order.iter().enumerate() {
                for &b in &order[p + 1..] {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn visible(&self) -> BTreeSet<TxId> {
        let mut vis: BTreeSet<TxId> =
            self.status.iter().filter(|(_, s)| **s == Status::Committed).map(|(t, _)| *t).collect();
        for (&r, &w) in &self.g.rf {
            if self.tx(w) != self.tx(r) && self.status[&self.tx(w)] == Status::CommitPending {
                vis.insert(self.tx(w));
            }
        }
        vis
    }

    fn int(&self) -> bool {
        let same = |&(a, b): &(usize, usize)| self.tx(a) == self.tx(b);
        let rf: Vec<_> = self.g.rf.iter().map(|(&r, &w)| (w, r)).collect();
        rf.iter()
            .chain(self.mo_pairs().iter())
            .chain(self.rb().iter())
            .filter(|p| same(p))
            .all(|&(a, b)| self.po_before(a, b))
    }

    /// Transaction-level edges of `clo ∪ rf_t ∪ mo_t ∪ rb_t;[to]`.
    fn ext_edges(&self, rb_to: impl Fn(TxId) -> bool) -> BTreeSet<(TxId, TxId)> {
        let mut e: BTreeSet<(TxId, TxId)> = self.g.clo.clone();
        let mut lift = |a: usize, b: usize, ok: bool| {
            if ok && self.tx(a) != self.tx(b) {
                e.insert((self.tx(a), self.tx(b)));
            }
        };
        for (&r, &w) in &self.g.rf {
            lift(w, r, true);
        }
        for (a, b) in self.mo_pairs() {
            lift(a, b, true);
        }
        for (r, w) in self.rb() {
            lift(r, w, rb_to(self.tx(w)));
        }
        e
    }
}

/// True if the relation has no cycle.
pub fn acyclic<T: Ord + Copy>(edges: &BTreeSet<(T, T)>) -> bool {
    let mut succ: BTreeMap<T, Vec<T>> = BTreeMap::new();
    for &(a, b) in edges {
        if a == b {
            return false;
        }
        succ.entry(a).or_default().push(b);
    }
    // 0 new, 1 on stack, 2 done
    let mut mark: BTreeMap<T, u8> = BTreeMap::new();
    fn dfs<T: Ord + Copy>(n: T, succ: &BTreeMap<T, Vec<T>>, mark: &mut BTreeMap<T, u8>) -> bool {
        mark.insert(n, 1);
        for &m in succ.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            match mark.get(&m).copied().unwrap_or(0) {
                1 => return false,
                0 if !dfs(m, succ, mark) => return false,
                _ => {}
            }
        }
        mark.insert(n, 2);
        true
    }
    let nodes: Vec<T> = succ.keys().copied().collect();
    nodes.into_iter().all(|n| mark.get(&n).copied().unwrap_or(0) != 0 || dfs(n, &succ, &mut mark))
}

fn opacity(g: &Graph, dynamic: bool) -> Result<(), Axiom> {
    let cx = Ctx::new(g)?;
    let vis = cx.visible();
    for (&r, &w) in &g.rf {
        if cx.tx(w) != cx.tx(r) && !vis.contains(&cx.tx(w)) {
            return Err(Axiom::VisRf);
        }
    }
    if !cx.int() {
        return Err(Axiom::Int);
    }
    if !acyclic(&cx.ext_edges(|t| vis.contains(&t))) {
        return Err(Axiom::Ext);
    }
    if dynamic {
        for (i, e) in g.events.iter().enumerate() {
            if let Label::Write(x, _) = e.label {
                if !vis.contains(&e.txid) {
                    continue;
                }
                let covered = g.events.iter().enumerate().any(|(a, ea)| {
                    ea.label == Label::Alloc(x) && vis.contains(&ea.txid) && cx.mo_before(a, i)
                });
                if !covered {
                    return Err(Axiom::Dyn);
                }
            }
        }
    }
    Ok(())
}

/// Opacity of an execution graph.
pub fn check_opacity_execution(g: &Graph) -> Result<(), Axiom> {
    opacity(g, false)
}

/// Opacity plus: every visible write is preceded in `mo` by a visible
/// allocation of its location.
pub fn check_dynamic_opacity_execution(g: &Graph) -> Result<(), Axiom> {
    opacity(g, true)
}

/// Serialisability of a graph whose transactions all succeeded.
pub fn check_serializability_execution(g: &Graph) -> Result<(), Axiom> {
    let cx = Ctx::new(g)?;
    if cx.status.values().any(|s| *s != Status::Committed) {
        return Err(Axiom::Incomplete);
    }
    if !cx.int() {
        return Err(Axiom::Int);
    }
    if !acyclic(&cx.ext_edges(|_| true)) {
        return Err(Axiom::Ext);
    }
    Ok(())
}

/// A litmus graph together with its expected opacity verdict.
#[derive(Clone, Debug)]
pub struct Litmus {
    pub name: &'static str,
    pub graph: Graph,
    pub expect: Result<(), Axiom>,
}

fn ev(id: u32, txid: TxId, label: Label) -> Event {
    Event { id, tid: txid, txid, label }
}

/// The three litmus graphs of the opacity illustration: a read from an
/// aborted write, a pair of aborted transactions reading from committed ones,
/// and a commit-pending transaction observed half-overwritten.
pub fn fig4() -> Vec<Litmus> {
    use Label::*;
    let (x, y) = (0, 1);

    // (a): T writes x=1 and aborts; T' reads x=1
    let a = Graph {
        events: vec![
            ev(0, 1, Begin),
            ev(1, 1, Write(x, 1)),
            ev(2, 1, Abort),
            ev(3, 2, Begin),
            ev(4, 2, Read(x, 1)),
            ev(5, 2, Commit),
            ev(6, 2, Success),
        ],
        clo: [(1, 2)].into(),
        rf: [(4, 1)].into(),
        mo: [(x, vec![1])].into(),
    };

    // (b): Tx=1, Ty=2 commit; T=3 reads y from Ty, T'=4 reads x from Tx
    let b = Graph {
        events: vec![
            ev(0, 1, Begin),
            ev(1, 1, Write(x, 1)),
            ev(2, 1, Commit),
            ev(3, 1, Success),
            ev(4, 2, Begin),
            ev(5, 2, Write(y, 1)),
            ev(6, 2, Commit),
            ev(7, 2, Success),
            ev(8, 3, Begin),
            ev(9, 3, Read(y, 1)),
            ev(10, 3, Write(x, 2)),
            ev(11, 3, Abort),
            ev(12, 4, Begin),
            ev(13, 4, Read(x, 1)),
            ev(14, 4, Write(y, 2)),
            ev(15, 4, Abort),
        ],
        clo: [(1, 3), (1, 4), (2, 3), (2, 4)].into(),
        rf: [(9, 5), (13, 1)].into(),
        mo: [(x, vec![1, 10]), (y, vec![5, 14])].into(),
    };

    // (c): T=1 commit-pending writes x,y; T'=2 writes x=0; Tr=3 reads x=0, y=1
    let c = Graph {
        events: vec![
            ev(0, 2, Begin),
            ev(1, 2, Write(x, 0)),
            ev(2, 2, Commit),
            ev(3, 2, Success),
            ev(4, 1, Begin),
            ev(5, 1, Write(x, 1)),
            ev(6, 1, Write(y, 1)),
            ev(7, 1, Commit),
            ev(8, 3, Begin),
            ev(9, 3, Read(x, 0)),
            ev(10, 3, Read(y, 1)),
            ev(11, 3, Abort),
        ],
        clo: BTreeSet::new(),
        rf: [(9, 1), (10, 6)].into(),
        mo: [(x, vec![1, 5]), (y, vec![6])].into(),
    };

    vec![
        Litmus { name: "fig4a", graph: a, expect: Err(Axiom::VisRf) },
        Litmus { name: "fig4b", graph: b, expect: Ok(()) },
        Litmus { name: "fig4c", graph: c, expect: Err(Axiom::Ext) },
    ]
}
