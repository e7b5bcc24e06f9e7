//! The DDTMS operational specification: a transition system over a sequence
//! of memory snapshots with per-transaction read, write and allocation sets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

pub use opacity::{Action, Inv, Loc, Res, TxId, Val};

mod seq;
pub use seq::{ddtms_seq_generate, naive_seq_generate, SeqBounds};

pub const MAX_LOCS: usize = 8;

/// One memory snapshot; `None` is unallocated.
pub type Mem = [Option<Val>; MAX_LOCS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pc {
    NotStarted,
    Ready,
    Aborted,
    Committed,
    /// Invoked, awaiting the response.
    Delta(Inv),
    /// Commit took effect, awaiting the response.
    Pi,
}

impl Pc {
    fn live(self) -> bool {
        matches!(self, Pc::Ready | Pc::Delta(_) | Pc::Pi)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxState {
    pub pc: Pc,
    pub bidx: usize,
    pub rset: BTreeMap<Loc, Val>,
    pub wset: BTreeMap<Loc, Val>,
    pub aset: BTreeSet<Loc>,
}

impl TxState {
    fn new(pc: Pc) -> Self {
        TxState { pc, bidx: 0, rset: BTreeMap::new(), wset: BTreeMap::new(), aset: BTreeSet::new() }
    }
}

/// A DDTMS state. `chaos` stands for every program counter being Chaos.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DState {
    pub mems: Vec<Mem>,
    pub txs: BTreeMap<TxId, TxState>,
    pub chaos: bool,
}

/// A transition label: external actions plus the hidden commit and fault steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    Ext(Action),
    Commit(TxId),
    Fault(TxId),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Ext(a) => write!(f, "{a}"),
            Step::Commit(t) => write!(f, "do-commit{t}"),
            Step::Fault(t) => write!(f, "fault{t}"),
        }
    }
}

impl Default for DState {
    fn default() -> Self {
        DState::initial()
    }
}

impl DState {
    pub fn initial() -> Self {
        DState { mems: vec![[None; MAX_LOCS]], txs: BTreeMap::new(), chaos: false }
    }

    fn chaotic() -> Self {
        DState { mems: vec![], txs: BTreeMap::new(), chaos: true }
    }

    pub fn last(&self) -> &Mem {
        self.mems.last().expect("mems is never empty")
    }

    pub fn pc(&self, t: TxId) -> Pc {
        self.txs.get(&t).map_or(Pc::NotStarted, |s| s.pc)
    }

    pub fn valid(&self, s: &TxState, n: usize) -> bool {
        let m = &self.mems[n];
        s.bidx <= n
            && n < self.mems.len()
            && s.rset.iter().all(|(&l, &v)| m[l as usize] == Some(v))
            && s.aset.iter().all(|&l| m[l as usize].is_none())
    }

    fn valid_idxs<'a>(&'a self, s: &'a TxState) -> impl Iterator<Item = usize> + 'a {
        (s.bidx..self.mems.len()).filter(move |&n| self.valid(s, n))
    }

    /// Drop state that no future transition can observe.
    fn normalize(mut self) -> Self {
        if self.chaos {
            return DState::chaotic();
        }
        for s in self.txs.values_mut() {
            if !s.pc.live() {
                *s = TxState::new(s.pc);
            }
        }
        let lo = self.txs.values().filter(|s| s.pc.live()).map(|s| s.bidx).min().unwrap_or(usize::MAX);
        let lo = lo.min(self.mems.len() - 1);
        if lo > 0 {
            self.mems.drain(..lo);
            for s in self.txs.values_mut().filter(|s| s.pc.live()) {
                s.bidx -= lo;
            }
        }
        self
    }

    fn with(&self, t: TxId, s: TxState) -> Self {
        let mut d = self.clone();
        d.txs.insert(t, s);
        d.normalize()
    }

    /// Transactions that can fault right now.
    pub fn faulting(&self) -> Vec<TxId> {
        if self.chaos {
            return vec![];
        }
        let mut out = vec![];
        for (&t, s) in &self.txs {
            let f = match s.pc {
                Pc::Delta(Inv::Read(l)) => {
                    !s.aset.contains(&l)
                        && !s.wset.contains_key(&l)
                        && self.valid_idxs(s).any(|n| self.mems[n][l as usize].is_none())
                }
                Pc::Delta(Inv::Write(l, _)) => !s.aset.contains(&l) && self.last()[l as usize].is_none(),
                _ => false,
            };
            if f {
                out.push(t);
            }
        }
        out
    }

    /// Successor states under one transition.
    pub fn step(&self, step: Step) -> Vec<DState> {
        if self.chaos {
            return match step {
                Step::Ext(_) => vec![self.clone()],
                _ => vec![],
            };
        }
        match step {
            Step::Fault(t) => {
                if self.faulting().contains(&t) {
                    vec![DState::chaotic()]
                } else {
                    vec![]
                }
            }
            Step::Commit(t) => self.do_commit(t),
            Step::Ext(Action::Crash) => {
                let mut d = self.clone();
                for s in d.txs.values_mut() {
                    if s.pc.live() {
                        s.pc = Pc::Aborted;
                    }
                }
                d.mems = vec![*self.last()];
                vec![d.normalize()]
            }
            Step::Ext(Action::Inv(t, inv)) => {
                let pc = self.pc(t);
                match (pc, inv) {
                    (Pc::NotStarted, Inv::Begin) => {
                        let mut s = TxState::new(Pc::Delta(Inv::Begin));
                        s.bidx = self.mems.len() - 1;
                        vec![self.with(t, s)]
                    }
                    (Pc::Ready, Inv::Begin) => vec![],
                    (Pc::Ready, _) => {
                        if inv.loc_in_range() {
                            let mut s = self.txs[&t].clone();
                            s.pc = Pc::Delta(inv);
                            vec![self.with(t, s)]
                        } else {
                            vec![]
                        }
                    }
                    _ => vec![],
                }
            }
            Step::Ext(Action::Res(t, res)) => self.respond(t, res).into_iter().collect(),
        }
    }

    fn do_commit(&self, t: TxId) -> Vec<DState> {
        let Some(s) = self.txs.get(&t) else { return vec![] };
        if s.pc != Pc::Delta(Inv::Commit) {
            return vec![];
        }
        let mut out = vec![];
        let mut s2 = s.clone();
        s2.pc = Pc::Pi;
        if s.aset.is_empty() && s.wset.is_empty() {
            out.push(self.with(t, s2.clone()));
        }
        if self.valid(s, self.mems.len() - 1) {
            let mut m = *self.last();
            for &l in &s.aset {
                m[l as usize] = Some(0);
            }
            for (&l, &v) in &s.wset {
                m[l as usize] = Some(v);
            }
            let mut d = self.clone();
            d.mems.push(m);
            d.txs.insert(t, s2);
            let d = d.normalize();
            if !out.contains(&d) {
                out.push(d);
            }
        }
        out
    }

    fn respond(&self, t: TxId, res: Res) -> Option<DState> {
        let s = self.txs.get(&t)?;
        let mut s2 = s.clone();
        s2.pc = Pc::Ready;
        match (s.pc, res) {
            (Pc::Delta(Inv::Begin), Res::Begin) => {}
            (Pc::Delta(Inv::Read(l)), Res::Read(l2, v)) if l == l2 => {
                if let Some(&w) = s.wset.get(&l) {
                    (w == v).then_some(())?;
                } else if s.aset.contains(&l) {
                    (v == 0).then_some(())?;
                } else {
                    self.valid_idxs(s).any(|n| self.mems[n][l as usize] == Some(v)).then_some(())?;
                    s2.rset.insert(l, v);
                }
            }
            (Pc::Delta(Inv::Write(l, v)), Res::Write(l2, v2)) if (l, v) == (l2, v2) => {
                (s.aset.contains(&l) || self.last()[l as usize].is_some()).then_some(())?;
                s2.wset.insert(l, v);
            }
            (Pc::Delta(Inv::Alloc), Res::Alloc(l)) => {
                ((l as usize) < MAX_LOCS && !s.aset.contains(&l)).then_some(())?;
                s2.aset.insert(l);
            }
            (Pc::Pi, Res::Commit) => s2.pc = Pc::Committed,
            (Pc::Delta(_), Res::Abort) => s2.pc = Pc::Aborted,
            _ => return None,
        }
        Some(self.with(t, s2))
    }

    /// Hidden commit steps available now.
    pub fn commit_steps(&self) -> Vec<(TxId, DState)> {
        self.txs.keys().flat_map(|&t| self.do_commit(t).into_iter().map(move |d| (t, d))).collect()
    }
}

trait LocRange {
    fn loc_in_range(&self) -> bool;
}

impl LocRange for Inv {
    fn loc_in_range(&self) -> bool {
        match *self {
            Inv::Read(l) | Inv::Write(l, _) => (l as usize) < MAX_LOCS,
            _ => true,
        }
    }
}

/// The set of DDTMS states consistent with a history so far.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tracker {
    /// States reached without any fault, closed under hidden commits.
    pub states: BTreeSet<DState>,
    /// A fault was possible at some point, so every extension is accepted.
    pub faulted: bool,
}

impl Default for Tracker {
    fn default() -> Self {
        Tracker::new()
    }
}

impl Tracker {
    pub fn new() -> Self {
        Tracker::close(BTreeSet::from([DState::initial()]), false)
    }

    fn close(mut states: BTreeSet<DState>, mut faulted: bool) -> Self {
        let mut todo: Vec<DState> = states.iter().cloned().collect();
        while let Some(d) = todo.pop() {
            faulted |= !d.faulting().is_empty();
            for (_, n) in d.commit_steps() {
                if states.insert(n.clone()) {
                    todo.push(n);
                }
            }
        }
        Tracker { states, faulted }
    }

    pub fn advance(&self, a: Action) -> Tracker {
        let next: BTreeSet<DState> = self.states.iter().flat_map(|d| d.step(Step::Ext(a))).collect();
        Tracker::close(next, self.faulted)
    }

    /// Drop committed and aborted transactions from every state. This
    /// changes only how a finished transaction's identifier may be reused,
    /// so it is harmless for clients whose identifiers are fresh.
    pub fn forget_finished(&self) -> Tracker {
        let states = self
            .states
            .iter()
            .map(|d| {
                let mut d = d.clone();
                d.txs.retain(|_, s| !matches!(s.pc, Pc::Committed | Pc::Aborted));
                d
            })
            .collect();
        Tracker { states, faulted: self.faulted }
    }

    /// Accepted, possibly relying on a hidden fault.
    pub fn accepted(&self) -> bool {
        self.faulted || !self.states.is_empty()
    }

    /// Accepted by a fault-free run.
    pub fn strict(&self) -> bool {
        !self.states.is_empty()
    }
}

/// Result of a history membership query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Acceptance {
    pub accepted: bool,
    /// A fault-free run produces the whole history.
    pub strict: bool,
    /// Transitions of an accepting run; a fault step ends it.
    pub witness: Option<Vec<Step>>,
}

struct Search<'a> {
    h: &'a [Action],
    faults: bool,
    failed: HashSet<(usize, DState)>,
    path: Vec<Step>,
}

impl Search<'_> {
    fn dfs(&mut self, pos: usize, d: &DState) -> bool {
        if pos == self.h.len() || d.chaos {
            return true;
        }
        if self.failed.contains(&(pos, d.clone())) {
            return false;
        }
        if self.faults {
            if let Some(&t) = d.faulting().first() {
                self.path.push(Step::Fault(t));
                return true;
            }
        }
        let a = Step::Ext(self.h[pos]);
        for n in d.step(a) {
            self.path.push(a);
            if self.dfs(pos + 1, &n) {
                return true;
            }
            self.path.pop();
        }
        for (t, n) in d.commit_steps() {
            self.path.push(Step::Commit(t));
            if self.dfs(pos, &n) {
                return true;
            }
            self.path.pop();
        }
        self.failed.insert((pos, d.clone()));
        false
    }
}

/// Is `h` a history of DDTMS (faults hidden)? Searches for a fault-free run
/// first, then for one that faults and continues chaotically.
pub fn accepts_history(h: &[Action]) -> Acceptance {
    for faults in [false, true] {
        let mut s = Search { h, faults, failed: HashSet::new(), path: vec![] };
        if s.dfs(0, &DState::initial()) {
            return Acceptance { accepted: true, strict: !faults, witness: Some(s.path) };
        }
    }
    Acceptance { accepted: false, strict: false, witness: None }
}

/// Replay a witness, checking each transition is enabled and the external
/// actions spell out `h` (a fault step ends the run).
pub fn replay(h: &[Action], witness: &[Step]) -> bool {
    fn go(h: &[Action], w: &[Step], d: &DState, pos: usize) -> bool {
        if d.chaos {
            return true;
        }
        let Some((&st, rest)) = w.split_first() else { return pos == h.len() };
        let pos = match st {
            Step::Ext(a) if h.get(pos) == Some(&a) => pos + 1,
            Step::Ext(_) => return false,
            _ => pos,
        };
        d.step(st).iter().any(|n| go(h, rest, n, pos))
    }
    go(h, witness, &DState::initial(), 0)
}
