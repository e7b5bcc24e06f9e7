//! DDTMS-Seq: sequential, crash-free, fault-free DDTMS histories.

use std::collections::{BTreeMap, BTreeSet};

use crate::{Action, DState, Inv, Loc, Res, Step, TxId, Val};

/// Transaction `k` has identifier `k`, locations are `0..locs`, values are
/// `0..vals`, and each transaction performs at most `ops` operations between
/// begin and commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeqBounds {
    pub txns: usize,
    pub locs: usize,
    pub vals: usize,
    pub ops: usize,
}

type Hist = Vec<Action>;

fn ext(d: &DState, a: Action) -> Vec<DState> {
    d.step(Step::Ext(a))
}

/// Histories of DDTMS in which one transaction runs at a time from begin to
/// commit, with no crash, no fault and no environment abort, and allocation
/// returns only locations unallocated in the latest memory. Every prefix that
/// ends between transactions is included.
pub fn ddtms_seq_generate(b: SeqBounds) -> BTreeSet<Hist> {
    let mut out = BTreeSet::new();
    between(b, 0, &DState::initial(), &mut vec![], &mut out);
    out
}

fn between(b: SeqBounds, k: usize, d: &DState, h: &mut Hist, out: &mut BTreeSet<Hist>) {
    out.insert(h.clone());
    if k == b.txns {
        return;
    }
    let t = k as TxId;
    let seq = [Action::Inv(t, Inv::Begin), Action::Res(t, Res::Begin)];
    for d1 in ext(d, seq[0]) {
        for d2 in ext(&d1, seq[1]) {
            h.extend(seq);
            inside(b, k, 0, &d2, h, out);
            h.truncate(h.len() - 2);
        }
    }
}

fn inside(b: SeqBounds, k: usize, n: usize, d: &DState, h: &mut Hist, out: &mut BTreeSet<Hist>) {
    let t = k as TxId;
    let inv = Action::Inv(t, Inv::Commit);
    for d1 in ext(d, inv) {
        let committed: Vec<DState> = d1.commit_steps().into_iter().map(|(_, s)| s).collect();
        h.push(inv);
        if committed.is_empty() {
            // the only way out
            let a = Action::Res(t, Res::Abort);
            for d2 in ext(&d1, a) {
                h.push(a);
                between(b, k + 1, &d2, h, out);
                h.pop();
            }
        }
        let a = Action::Res(t, Res::Commit);
        for d2 in committed.iter().flat_map(|c| ext(c, a)) {
            h.push(a);
            between(b, k + 1, &d2, h, out);
            h.pop();
        }
        h.pop();
    }
    if n == b.ops {
        return;
    }
    let mut ops: Vec<(Inv, Vec<Res>)> = vec![];
    ops.push((Inv::Alloc, (0..b.locs as Loc).filter(|&l| d.last()[l as usize].is_none()).map(Res::Alloc).collect()));
    for l in 0..b.locs as Loc {
        ops.push((Inv::Read(l), (0..b.vals as Val).map(|v| Res::Read(l, v)).collect()));
        for v in 0..b.vals as Val {
            ops.push((Inv::Write(l, v), vec![Res::Write(l, v)]));
        }
    }
    for (i, rs) in ops {
        let ia = Action::Inv(t, i);
        for d1 in ext(d, ia) {
            for r in &rs {
                let ra = Action::Res(t, *r);
                for d2 in ext(&d1, ra) {
                    h.extend([ia, ra]);
                    inside(b, k, n + 1, &d2, h, out);
                    h.truncate(h.len() - 2);
                }
            }
        }
    }
}

/// The same set computed directly from sequential semantics.
pub fn naive_seq_generate(b: SeqBounds) -> BTreeSet<Hist> {
    let mut out = BTreeSet::new();
    naive_between(b, 0, &BTreeMap::new(), vec![], &mut out);
    out
}

fn naive_between(b: SeqBounds, k: usize, mem: &BTreeMap<Loc, Val>, h: Hist, out: &mut BTreeSet<Hist>) {
    out.insert(h.clone());
    if k < b.txns {
        let t = k as TxId;
        let mut h = h;
        h.push(Action::Inv(t, Inv::Begin));
        h.push(Action::Res(t, Res::Begin));
        naive_inside(b, k, 0, mem, &BTreeSet::new(), &BTreeMap::new(), h, out);
    }
}

#[allow(clippy::too_many_arguments)]
fn naive_inside(
    b: SeqBounds,
    k: usize,
    n: usize,
    mem: &BTreeMap<Loc, Val>,
    allocs: &BTreeSet<Loc>,
    writes: &BTreeMap<Loc, Val>,
    h: Hist,
    out: &mut BTreeSet<Hist>,
) {
    let t = k as TxId;
    {
        let mut m = mem.clone();
        for &l in allocs {
            m.insert(l, 0);
        }
        m.extend(writes.iter().map(|(&l, &v)| (l, v)));
        let mut h = h.clone();
        h.push(Action::Inv(t, Inv::Commit));
        h.push(Action::Res(t, Res::Commit));
        naive_between(b, k + 1, &m, h, out);
    }
    if n == b.ops {
        return;
    }
    let go = |i: Inv, r: Res, a: &BTreeSet<Loc>, w: &BTreeMap<Loc, Val>, out: &mut BTreeSet<Hist>| {
        let mut h = h.clone();
        h.push(Action::Inv(t, i));
        h.push(Action::Res(t, r));
        naive_inside(b, k, n + 1, mem, a, w, h, out);
    };
    for l in 0..b.locs as Loc {
        if !mem.contains_key(&l) && !allocs.contains(&l) {
            let mut a = allocs.clone();
            a.insert(l);
            go(Inv::Alloc, Res::Alloc(l), &a, writes, out);
        }
        let seen = writes.get(&l).copied().or(allocs.contains(&l).then_some(0)).or(mem.get(&l).copied());
        if let Some(v) = seen {
            go(Inv::Read(l), Res::Read(l, v), allocs, writes, out);
        }
        if allocs.contains(&l) || mem.contains_key(&l) {
            for v in 0..b.vals as Val {
                let mut w = writes.clone();
                w.insert(l, v);
                go(Inv::Write(l, v), Res::Write(l, v), allocs, &w, out);
            }
        }
    }
}
