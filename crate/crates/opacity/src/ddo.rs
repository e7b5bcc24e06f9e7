//! Opacity of histories: existence of a witnessing `rf`/`mo`.
//!
//! A witness is determined by a serialisation of the transactions plus the
//! set of commit-pending transactions made visible: every external read then
//! reads from the latest visible writer serialised before it, so the search
//! is over serialisations only, memoised on the set already placed.

use std::collections::{BTreeMap, HashSet};

use crate::graph::Graph;
use crate::history::{client_order, statuses, Event, History, Label, Loc, Status, TxId, Val};

struct TxInfo {
    id: TxId,
    status: Status,
    /// external reads: (event index, location, value)
    ext_reads: Vec<(usize, Loc, Val)>,
    /// last update per location: (event index, value)
    last: BTreeMap<Loc, (usize, Val)>,
    /// locations written before being allocated by this transaction
    needs_alloc: Vec<Loc>,
    allocs: Vec<Loc>,
    preds: u64,
}

/// Why a single history has no witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoWitness {
    /// An internal read does not return the transaction's latest own update.
    Internal(usize),
    /// No serialisation works.
    Search,
}

const MAX_TXNS: usize = 64;

/// Search for a graph over the events of `h` (crash markers ignored) that is
/// opaque, and dynamically opaque when `dynamic` is set.
pub fn witness(h: &History, dynamic: bool) -> Result<Graph, NoWitness> {
    search(h, dynamic, true)
}

fn search(h: &History, dynamic: bool, cp_read_from: bool) -> Result<Graph, NoWitness> {
    let h = h.without_crashes();
    let events: Vec<Event> = h.events().copied().collect();
    let status = statuses(&events);
    let ids = h.txids();
    assert!(ids.len() <= MAX_TXNS, "at most {MAX_TXNS} transactions");
    let idx: BTreeMap<TxId, usize> = ids.iter().enumerate().map(|(i, t)| (*t, i)).collect();

    let mut txs: Vec<TxInfo> = ids
        .iter()
        .map(|&id| TxInfo {
            id,
            status: status[&id],
            ext_reads: vec![],
            last: BTreeMap::new(),
            needs_alloc: vec![],
            allocs: vec![],
            preds: 0,
        })
        .collect();
    let mut rf = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        let t = &mut txs[idx[&e.txid]];
        match e.label {
            Label::Read(x, v) => match t.last.get(&x) {
                Some(&(w, u)) if u == v => {
                    rf.insert(i, w);
                }
                Some(_) => return Err(NoWitness::Internal(i)),
                None => t.ext_reads.push((i, x, v)),
            },
            Label::Alloc(x) => {
                t.allocs.push(x);
                t.last.insert(x, (i, 0));
            }
            Label::Write(x, v) => {
                if !t.allocs.contains(&x) && !t.needs_alloc.contains(&x) {
                    t.needs_alloc.push(x);
                }
                t.last.insert(x, (i, v));
            }
            _ => {}
        }
    }
    let clo = client_order(&h);
    for &(a, b) in &clo {
        txs[idx[&b]].preds |= 1 << idx[&a];
    }

    let cp: Vec<usize> = (0..txs.len()).filter(|&i| txs[i].status == Status::CommitPending).collect();
    let committed: u64 = (0..txs.len()).filter(|&i| txs[i].status == Status::Committed).fold(0, |m, i| m | 1 << i);
    let nlocs = events.iter().filter_map(|e| e.label.loc()).max().map_or(0, |x| x as usize + 1);

    for choice in 0u64..1 << cp.len() {
        let v_mask = cp.iter().enumerate().filter(|(k, _)| choice >> k & 1 == 1).fold(0, |m, (_, &i)| m | 1 << i);
        let mut s = Search {
            txs: &txs,
            vis: committed | v_mask,
            want: if cp_read_from { v_mask } else { 0 },
            dynamic,
            failed: HashSet::new(),
            order: vec![],
        };
        if s.dfs(0, 0, &mut vec![None; nlocs]) {
            let order: Vec<usize> = s.order.iter().rev().copied().collect();
            return Ok(build(&events, &txs, &order, s.vis, rf, clo));
        }
    }
    Err(NoWitness::Search)
}

struct Search<'a> {
    txs: &'a [TxInfo],
    vis: u64,
    want: u64,
    dynamic: bool,
    failed: HashSet<(u64, u64, Vec<Option<u8>>)>,
    /// filled in reverse on success
    order: Vec<usize>,
}

impl Search<'_> {
    fn dfs(&mut self, placed: u64, read_from: u64, last: &mut Vec<Option<u8>>) -> bool {
        let n = self.txs.len();
        if placed.count_ones() as usize == n {
            return read_from & self.want == self.want;
        }
        let key = (placed, read_from, last.clone());
        if self.failed.contains(&key) {
            return false;
        }
        for i in 0..n {
            let t = &self.txs[i];
            if placed >> i & 1 == 1 || t.preds & !placed != 0 {
                continue;
            }
            let mut rf = read_from;
            let ok = t.ext_reads.iter().all(|&(_, x, v)| match last[x as usize] {
                Some(s) => {
                    let src = &self.txs[s as usize];
                    rf |= (1 << s) & self.want;
                    src.last[&x].1 == v
                }
                None => false,
            });
            if !ok {
                continue;
            }
            let visible = self.vis >> i & 1 == 1;
            if visible && self.dynamic {
                let prior = placed & self.vis;
                let covered = t.needs_alloc.iter().all(|x| {
                    (0..n).any(|j| prior >> j & 1 == 1 && self.txs[j].allocs.contains(x))
                });
                if !covered {
                    continue;
                }
            }
            let saved: Vec<(Loc, Option<u8>)> = if visible {
                t.last.keys().map(|&x| (x, std::mem::replace(&mut last[x as usize], Some(i as u8)))).collect()
            } else {
                vec![]
            };
            let found = self.dfs(placed | 1 << i, rf, last);
            for (x, old) in saved {
                last[x as usize] = old;
            }
            if found {
                self.order.push(i);
                return true;
            }
        }
        self.failed.insert(key);
        false
    }
}

fn build(
    events: &[Event],
    txs: &[TxInfo],
    order: &[usize],
    vis: u64,
    mut rf: BTreeMap<usize, usize>,
    clo: std::collections::BTreeSet<(TxId, TxId)>,
) -> Graph {
    let mut last: BTreeMap<Loc, usize> = BTreeMap::new();
    let mut mo: BTreeMap<Loc, Vec<usize>> = BTreeMap::new();
    for &i in order {
        let t = &txs[i];
        for &(r, x, _) in &t.ext_reads {
            let src = txs[last[&x]].last[&x].0;
            rf.insert(r, src);
        }
        for (e, ev) in events.iter().enumerate() {
            if ev.txid == t.id && ev.label.is_update() {
                mo.entry(ev.label.loc().unwrap()).or_default().push(e);
            }
        }
        if vis >> i & 1 == 1 {
            for &x in t.last.keys() {
                last.insert(x, i);
            }
        }
    }
    Graph { events: events.to_vec(), clo, rf: rf.into_iter().collect(), mo }
}

/// Outcome of checking every prefix of a history.
#[derive(Clone, Debug)]
pub struct Verdict {
    /// Length (in events, crash markers removed) of the shortest prefix with
    /// no witness.
    pub failing_prefix: Option<usize>,
    /// Witness for the whole history, when it exists.
    pub witness: Option<Graph>,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.failing_prefix.is_none()
    }
}

fn check_prefixes(h: &History, dynamic: bool, cp_read_from: bool) -> Verdict {
    let h = h.without_crashes();
    for n in 0..h.items.len() {
        if search(&h.prefix(n), dynamic, cp_read_from).is_err() {
            return Verdict { failing_prefix: Some(n), witness: None };
        }
    }
    match search(&h, dynamic, cp_read_from) {
        Ok(g) => Verdict { failing_prefix: None, witness: Some(g) },
        Err(_) => Verdict { failing_prefix: Some(h.items.len()), witness: None },
    }
}

/// Dynamic durable opacity: every prefix of the crash-free history has a
/// dynamically opaque witness.
pub fn check_history_ddo(h: &History) -> Verdict {
    check_prefixes(h, true, true)
}

/// As [`check_history_ddo`], except that any commit-pending transaction may
/// be counted visible, read from or not.
pub fn check_history_ddo_any_pending(h: &History) -> Verdict {
    check_prefixes(h, true, false)
}

/// Durable opacity without the allocation requirement.
pub fn check_history_durable_opacity(h: &History) -> Verdict {
    check_prefixes(h, false, true)
}
