//! Persistent TML and NOrec, and plain sequential PMDK, as step machines.
//!
//! A transaction is a [`Tx`]; the operation it is executing is a [`Pc`]. The
//! explorer creates the `Pc` at invocation time and calls [`step`] until it
//! reports [`Step::Done`]. Every step performs at most one shared-memory
//! action (persistent memory or `glb`); blocked and spinning steps report
//! [`Step::Blocked`].

use std::fmt;
use std::str::FromStr;

use pmdk_core::{palloc, Cx, Flow, Layout, Loc, Mutation, POp, PTx, Ret, TxId};
use pmem_sim::{Blocked, PMem, ScCell, ThreadId, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    /// PMDK transactions run one after another.
    Seq,
    Tml,
    Norec,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Seq, Algo::Tml, Algo::Norec];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Seq => "pmdk-seq",
            Algo::Tml => "pmdk-tml",
            Algo::Norec => "pmdk-norec",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algo::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// Shared state: persistent memory, the volatile free list and `glb`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Sys {
    pub mem: PMem,
    pub free: u32,
    pub glb: ScCell,
}

impl Sys {
    pub fn new(mem: PMem, layout: &Layout) -> Self {
        Sys { mem, free: layout.all_locs(), glb: ScCell(0) }
    }
}

/// Fixed parameters of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub algo: Algo,
    pub layout: Layout,
    pub mutation: Option<Mutation>,
    /// Maximum number of failed validation or CAS rounds per transaction.
    /// `None` leaves loops unbounded.
    pub retry_bound: Option<u16>,
}

/// A transaction's volatile state.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Tx {
    pub ptx: PTx,
    pub loc: Word,
    /// Sorted by location.
    pub rd: Vec<(Loc, Word)>,
    /// Sorted by location.
    pub wr: Vec<(Loc, Word)>,
    pub retries: u16,
}

impl Tx {
    pub fn new(txid: TxId) -> Self {
        Tx { ptx: PTx::new(txid), loc: 0, rd: Vec::new(), wr: Vec::new(), retries: 0 }
    }

    pub fn wr_get(&self, x: Loc) -> Option<Word> {
        self.wr.iter().find(|e| e.0 == x).map(|e| e.1)
    }
}

fn set_put(set: &mut Vec<(Loc, Word)>, x: Loc, v: Word) {
    match set.binary_search_by_key(&x, |e| e.0) {
        Ok(i) => set[i].1 = v,
        Err(i) => set.insert(i, (x, v)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValPc {
    Time,
    Entry { time: Word, idx: u8 },
    Recheck { time: Word },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReadPc {
    First(POp),
    Check(Word),
    Validate(ValPc),
    Again(POp),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WritePc {
    Lock,
    P(POp),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CommitPc {
    Start,
    Cas,
    Validate(ValPc),
    WriteBack(u8, POp),
    P(POp),
    Release,
}

/// The operation a transaction is executing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pc {
    Begin(Option<POp>),
    Alloc(Loc),
    Read(Loc, ReadPc),
    Write(Loc, Word, WritePc),
    Commit(CommitPc),
    /// Running `PAbort`; the operation then returns abort.
    Aborting(POp),
}

impl Pc {
    pub fn begin() -> Self {
        Pc::Begin(None)
    }

    /// `choice` must come from the free list at invocation time.
    pub fn alloc(choice: Loc) -> Self {
        Pc::Alloc(choice)
    }

    pub fn read(x: Loc) -> Self {
        Pc::Read(x, ReadPc::First(POp::read(x)))
    }

    pub fn write(x: Loc, v: Word) -> Self {
        Pc::Write(x, v, WritePc::Lock)
    }

    pub fn commit() -> Self {
        Pc::Commit(CommitPc::Start)
    }
}

/// Value an operation responds with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Resp {
    Ok,
    Val(Word),
    Loc(Loc),
    Commit,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// Not enabled; nothing changed.
    Blocked,
    /// The retry bound was exceeded; the schedule should be pruned.
    Cut,
    Ran,
    Done(Resp),
}

/// Internal control flow: `Err(Blocked)` discards the step, `Yield` ends it.
enum E {
    Blocked,
    Cut,
}

impl From<Blocked> for E {
    fn from(_: Blocked) -> Self {
        E::Blocked
    }
}

type R<T> = Result<Flow<T>, E>;

macro_rules! act {
    ($acted:expr, $e:expr) => {{
        if *$acted {
            return Ok(Flow::Yield);
        }
        let r = $e?;
        *$acted = true;
        r
    }};
}

struct Ctx<'a> {
    cfg: &'a Cfg,
    sys: &'a mut Sys,
    tid: ThreadId,
    acted: bool,
}

impl Ctx<'_> {
    /// Step a nested PMDK operation, sharing this step's action budget.
    fn p(&mut self, op: &mut POp, tx: &mut Tx) -> R<Ret> {
        let mut cx = Cx {
            mem: &mut self.sys.mem,
            free: &mut self.sys.free,
            layout: &self.cfg.layout,
            tid: self.tid,
            mutation: self.cfg.mutation,
        };
        Ok(op.step_with(&mut cx, &mut tx.ptx, &mut self.acted)?)
    }

    fn glb(&mut self) -> Word {
        self.acted = true;
        self.sys.glb.load()
    }

    fn retry(&self, tx: &mut Tx) -> Result<(), E> {
        if let Some(b) = self.cfg.retry_bound {
            tx.retries += 1;
            if tx.retries > b {
                return Err(E::Cut);
            }
        }
        Ok(())
    }
}

/// Read `glb` as this step's action; yields if the step already acted.
macro_rules! glb {
    ($c:expr) => {{
        if $c.acted {
            return Ok(Flow::Yield);
        }
        $c.glb()
    }};
}

/// Run one step of `pc` for transaction `tx` on thread `tid`.
///
/// After `Blocked` or `Cut` the arguments may be half-updated; callers step a
/// copy and drop it.
pub fn step(cfg: &Cfg, sys: &mut Sys, tid: ThreadId, tx: &mut Tx, pc: &mut Pc) -> Step {
    let mut c = Ctx { cfg, sys, tid, acted: false };
    match run(&mut c, tx, pc) {
        Ok(Flow::Yield) => Step::Ran,
        Ok(Flow::Done(resp)) => Step::Done(resp),
        Err(E::Blocked) => Step::Blocked,
        Err(E::Cut) => Step::Cut,
    }
}

fn run(c: &mut Ctx, tx: &mut Tx, pc: &mut Pc) -> R<Resp> {
    let algo = c.cfg.algo;
    loop {
        match pc {
            Pc::Begin(None) => {
                if algo != Algo::Seq {
                    let g = glb!(c);
                    if g % 2 != 0 {
                        return Err(E::Blocked);
                    }
                    tx.loc = g;
                }
                *pc = Pc::Begin(Some(POp::begin()));
            }
            Pc::Begin(Some(op)) => {
                if let Flow::Yield = c.p(op, tx)? {
                    return Ok(Flow::Yield);
                }
                return Ok(Flow::Done(Resp::Ok));
            }
            Pc::Alloc(x) => {
                let x = *x;
                act!(&mut c.acted, Ok::<(), E>(()));
                let mut cx = Cx {
                    mem: &mut c.sys.mem,
                    free: &mut c.sys.free,
                    layout: &c.cfg.layout,
                    tid: c.tid,
                    mutation: c.cfg.mutation,
                };
                palloc(&mut cx, &mut tx.ptx, x)?;
                return Ok(Flow::Done(Resp::Loc(x)));
            }
            Pc::Read(x, rpc) => {
                let x = *x;
                if algo == Algo::Norec {
                    if let (Some(v), ReadPc::First(_)) = (tx.wr_get(x), &rpc) {
                        return Ok(Flow::Done(Resp::Val(v)));
                    }
                }
                match rpc {
                    ReadPc::First(op) | ReadPc::Again(op) => {
                        let Flow::Done(Ret::Val(v)) = c.p(op, tx)? else { return Ok(Flow::Yield) };
                        match algo {
                            Algo::Seq => return Ok(Flow::Done(Resp::Val(v))),
                            Algo::Tml if tx.loc % 2 != 0 => return Ok(Flow::Done(Resp::Val(v))),
                            _ => *rpc = ReadPc::Check(v),
                        }
                    }
                    ReadPc::Check(v) => {
                        let v = *v;
                        let g = glb!(c);
                        match algo {
                            Algo::Tml => {
                                if g == tx.loc {
                                    return Ok(Flow::Done(Resp::Val(v)));
                                }
                                *pc = Pc::Aborting(POp::abort());
                            }
                            _ => {
                                if g == tx.loc {
                                    set_put(&mut tx.rd, x, v);
                                    return Ok(Flow::Done(Resp::Val(v)));
                                }
                                *rpc = ReadPc::Validate(ValPc::Time);
                            }
                        }
                    }
                    ReadPc::Validate(vpc) => match validate(c, tx, vpc)? {
                        Flow::Yield => return Ok(Flow::Yield),
                        Flow::Done(Some(time)) => {
                            tx.loc = time;
                            *rpc = ReadPc::Again(POp::read(x));
                        }
                        Flow::Done(None) => *pc = Pc::Aborting(POp::abort()),
                    },
                }
            }
            Pc::Write(x, v, wpc) => {
                let (x, v) = (*x, *v);
                match (algo, &mut *wpc) {
                    (Algo::Norec, _) => {
                        set_put(&mut tx.wr, x, v);
                        return Ok(Flow::Done(Resp::Ok));
                    }
                    (Algo::Seq, WritePc::Lock) => *wpc = WritePc::P(POp::write(x, v)),
                    (_, WritePc::Lock) => {
                        if tx.loc % 2 == 0 {
                            act!(&mut c.acted, Ok::<(), E>(()));
                            if c.sys.glb.cas(tx.loc, tx.loc + 1) {
                                tx.loc += 1;
                                *wpc = WritePc::P(POp::write(x, v));
                            } else {
                                *pc = Pc::Aborting(POp::abort());
                            }
                        } else {
                            *wpc = WritePc::P(POp::write(x, v));
                        }
                    }
                    (_, WritePc::P(op)) => {
                        if let Flow::Yield = c.p(op, tx)? {
                            return Ok(Flow::Yield);
                        }
                        return Ok(Flow::Done(Resp::Ok));
                    }
                }
            }
            Pc::Commit(cpc) => match cpc {
                CommitPc::Start => {
                    if c.cfg.mutation == Some(Mutation::AbortAll) {
                        *pc = Pc::Aborting(POp::abort());
                    } else if algo == Algo::Norec && !tx.wr.is_empty() {
                        *cpc = CommitPc::Cas;
                    } else {
                        *cpc = CommitPc::P(POp::commit());
                    }
                }
                CommitPc::Cas => {
                    act!(&mut c.acted, Ok::<(), E>(()));
                    if c.sys.glb.cas(tx.loc, tx.loc + 1) {
                        *cpc = CommitPc::WriteBack(0, next_write_back(tx, 0));
                    } else {
                        c.retry(tx)?;
                        if c.cfg.mutation == Some(Mutation::SkipValidate) {
                            // take the new time without checking rdSet
                            let g = c.sys.glb.load();
                            if g % 2 != 0 {
                                return Err(E::Blocked);
                            }
                            tx.loc = g;
                        } else {
                            *cpc = CommitPc::Validate(ValPc::Time);
                        }
                    }
                }
                CommitPc::Validate(vpc) => match validate(c, tx, vpc)? {
                    Flow::Yield => return Ok(Flow::Yield),
                    Flow::Done(Some(time)) => {
                        tx.loc = time;
                        *cpc = CommitPc::Cas;
                    }
                    Flow::Done(None) => *pc = Pc::Aborting(POp::abort()),
                },
                CommitPc::WriteBack(i, op) => {
                    if *i as usize >= tx.wr.len() {
                        *cpc = CommitPc::P(POp::commit());
                        continue;
                    }
                    if let Flow::Yield = c.p(op, tx)? {
                        return Ok(Flow::Yield);
                    }
                    let n = *i + 1;
                    *cpc = CommitPc::WriteBack(n, next_write_back(tx, n));
                }
                CommitPc::P(op) => {
                    if let Flow::Yield = c.p(op, tx)? {
                        return Ok(Flow::Yield);
                    }
                    let release = match algo {
                        Algo::Seq => false,
                        Algo::Tml => tx.loc % 2 != 0,
                        Algo::Norec => !tx.wr.is_empty(),
                    };
                    if !release {
                        return Ok(Flow::Done(Resp::Commit));
                    }
                    *cpc = CommitPc::Release;
                }
                CommitPc::Release => {
                    act!(&mut c.acted, Ok::<(), E>(()));
                    let v = if algo == Algo::Tml { tx.loc + 1 } else { tx.loc + 2 };
                    c.sys.glb.store(v);
                    return Ok(Flow::Done(Resp::Commit));
                }
            },
            Pc::Aborting(op) => {
                if let Flow::Yield = c.p(op, tx)? {
                    return Ok(Flow::Yield);
                }
                return Ok(Flow::Done(Resp::Abort));
            }
        }
    }
}

fn next_write_back(tx: &Tx, i: u8) -> POp {
    match tx.wr.get(i as usize) {
        Some(&(x, v)) => POp::write(x, v),
        None => POp::commit(),
    }
}

/// NOrec's `Validate`. Returns the validated time, or `None` once `PAbort`
/// has been started by the caller.
fn validate(c: &mut Ctx, tx: &mut Tx, vpc: &mut ValPc) -> R<Option<Word>> {
    loop {
        match *vpc {
            ValPc::Time => {
                let g = glb!(c);
                if g % 2 != 0 {
                    return Err(E::Blocked);
                }
                *vpc = ValPc::Entry { time: g, idx: 0 };
            }
            ValPc::Entry { time, idx } => {
                let Some(&(x, v)) = tx.rd.get(idx as usize) else {
                    *vpc = ValPc::Recheck { time };
                    continue;
                };
                let mut op = POp::read(x);
                let Flow::Done(Ret::Val(w)) = c.p(&mut op, tx)? else { return Ok(Flow::Yield) };
                if w != v {
                    return Ok(Flow::Done(None));
                }
                *vpc = ValPc::Entry { time, idx: idx + 1 };
            }
            ValPc::Recheck { time } => {
                let g = glb!(c);
                if g == time {
                    return Ok(Flow::Done(Some(time)));
                }
                c.retry(tx)?;
                *vpc = ValPc::Time;
            }
        }
    }
}

/// Would a read or write of `x` by `tx` touch an unallocated location? The
/// harness checks this at invocation, before the algorithm runs.
pub fn faults(cfg: &Cfg, sys: &Sys, tid: ThreadId, tx: &Tx, x: Loc) -> bool {
    tx.ptx.tredo.allocs & (1 << x) == 0
        && tx.wr_get(x).is_none()
        && sys.mem.load(tid, cfg.layout.meta(x)) == 0
}

/// `Recovery`: `PRecovery` for every transaction identifier below `upto`,
/// then `glb := 0`. Run to completion on thread 0.
pub fn recovery_all(cfg: &Cfg, sys: &mut Sys, upto: TxId) {
    let mut cx = Cx {
        mem: &mut sys.mem,
        free: &mut sys.free,
        layout: &cfg.layout,
        tid: 0,
        mutation: cfg.mutation,
    };
    pmdk_core::recover(&mut cx, upto);
    sys.glb.store(0);
}
