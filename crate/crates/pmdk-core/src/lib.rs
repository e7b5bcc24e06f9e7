//! Step-level model of undo/redo-logged persistent transactions.
//!
//! Every operation (`PBegin`, `PRead`, `PWrite`, `PCommit`, `PAbort`,
//! `PRecovery`) is a resumable state machine over [`pmem_sim::PMem`]. One call
//! to [`POp::step`] performs exactly one memory action (a store, a flush, or a
//! load of shared data) together with any purely local bookkeeping that
//! surrounds it, so the explorer can interleave other threads and crashes
//! between any two pseudo-code lines.
//!
//! Transaction metadata lives in reserved persistent cells described by
//! [`Layout`]. The volatile parts (`tRedo`, the free list) are plain values
//! owned by the caller.

use std::fmt;
use std::str::FromStr;

use pmem_sim::{Blocked, Cell, PMem, ThreadId, Word};

pub mod recovery;

pub use recovery::{recover, RecPc, Recovery};

/// A client-addressable data location.
pub type Loc = u8;
/// Transaction identifier. Identifiers are never reused, even across crashes.
pub type TxId = usize;

/// Placement of data and metadata cells.
///
/// Data cell `x` and its allocation flag come first; each transaction then
/// owns `locs` undo-log cells followed by its three `pRedo` fields and its
/// `undoValid` flag. An undo cell holds 0 when empty and `w + 1` when it
/// records old value `w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    pub locs: usize,
    pub txids: usize,
}

impl Layout {
    pub fn new(locs: usize, txids: usize) -> Self {
        assert!(locs >= 1 && locs <= 16, "location bound out of range");
        Layout { locs, txids }
    }

    pub fn cells(&self) -> usize {
        2 * self.locs + self.txids * (self.locs + 4)
    }

    pub fn val(&self, x: Loc) -> Cell {
        x as Cell
    }

    pub fn meta(&self, x: Loc) -> Cell {
        self.locs + x as Cell
    }

    fn base(&self, t: TxId) -> Cell {
        assert!(t < self.txids, "transaction id {t} outside the layout");
        2 * self.locs + t * (self.locs + 4)
    }

    pub fn undo(&self, t: TxId, x: Loc) -> Cell {
        self.base(t) + x as Cell
    }

    pub fn redo_allocs(&self, t: TxId) -> Cell {
        self.base(t) + self.locs
    }

    pub fn redo_undo_valid(&self, t: TxId) -> Cell {
        self.base(t) + self.locs + 1
    }

    pub fn redo_checksum(&self, t: TxId) -> Cell {
        self.base(t) + self.locs + 2
    }

    pub fn undo_valid(&self, t: TxId) -> Cell {
        self.base(t) + self.locs + 3
    }

    /// Every cell owned by transaction `t`.
    pub fn log_cells(&self, t: TxId) -> std::ops::Range<Cell> {
        self.base(t)..self.base(t) + self.locs + 4
    }

    /// NVM contents before anything runs. Data and allocation flags are 0;
    /// every `undoValid` flag starts out true.
    pub fn initial_nvm(&self) -> Vec<Word> {
        let mut nvm = vec![0; self.cells()];
        for t in 0..self.txids {
            nvm[self.undo_valid(t)] = 1;
        }
        nvm
    }

    /// Every data location, as a bitmask.
    pub fn all_locs(&self) -> u32 {
        (1u32 << self.locs) - 1
    }
}

/// A redo log record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Redo {
    pub undo_valid: bool,
    pub checksum: Word,
    /// Bitmask of allocated locations.
    pub allocs: u32,
}

impl Redo {
    pub const FRESH: Redo = Redo { undo_valid: true, checksum: -1, allocs: 0 };
}

/// Checksum over the undo-valid flag and the allocation set. Injective and
/// never equal to the invalid marker `-1` (or to the zero an untouched cell
/// holds).
pub fn calc_checksum(undo_valid: bool, allocs: u32) -> Word {
    1 + (((allocs as Word) << 1) | undo_valid as Word)
}

/// Deliberate bugs used to check that the checker notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mutation {
    /// Commit does not flush `pRedo` after copying it.
    SkipFlushCommit5,
    /// Commit persists the data writes only after applying the redo log.
    ReorderCommit,
    /// NOrec's commit loop re-reads the version counter without validating.
    SkipValidate,
    /// A write does not flush its undo entry before overwriting.
    SkipUndoFlush,
    /// Recovery never rolls back.
    NoRecoveryRollback,
    /// Every commit aborts instead. Only useful against the lower bound.
    AbortAll,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::SkipFlushCommit5,
        Mutation::ReorderCommit,
        Mutation::SkipValidate,
        Mutation::SkipUndoFlush,
        Mutation::NoRecoveryRollback,
        Mutation::AbortAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::SkipFlushCommit5 => "skip-flush-commit5",
            Mutation::ReorderCommit => "reorder-commit",
            Mutation::SkipValidate => "skip-validate",
            Mutation::SkipUndoFlush => "skip-undo-flush",
            Mutation::NoRecoveryRollback => "no-recovery-rollback",
            Mutation::AbortAll => "abort-all",
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownMutation(pub String);

impl fmt::Display for UnknownMutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown mutation `{}`", self.0)
    }
}

impl std::error::Error for UnknownMutation {}

impl FromStr for Mutation {
    type Err = UnknownMutation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMutation(s.to_string()))
    }
}

/// Everything a step may touch besides the operation's own control state.
pub struct Cx<'a> {
    pub mem: &'a mut PMem,
    /// Volatile free list as a bitmask of locations.
    pub free: &'a mut u32,
    pub layout: &'a Layout,
    pub tid: ThreadId,
    pub mutation: Option<Mutation>,
}

impl Cx<'_> {
    fn has(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }

    fn load(&self, c: Cell) -> Word {
        self.mem.load(self.tid, c)
    }
}

/// Volatile per-transaction state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PTx {
    pub txid: TxId,
    pub tredo: Redo,
}

impl PTx {
    pub fn new(txid: TxId) -> Self {
        PTx { txid, tredo: Redo::FRESH }
    }
}

/// Outcome of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow<T> {
    /// One action was performed and the operation continues.
    Yield,
    Done(T),
}

pub type StepResult<T> = Result<Flow<T>, Blocked>;

/// Perform one memory action. If this step already acted, stop here and let
/// the next step retry from the same control point.
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
pub(crate) use act;

fn loaded(v: Word) -> Result<Word, Blocked> {
    Ok(v)
}

/// Lowest location in `set` that is at least `from`.
pub fn next_loc(set: u32, from: Loc) -> Option<Loc> {
    if from >= 32 {
        return None;
    }
    let rest = set >> from;
    if rest == 0 {
        None
    } else {
        Some(from + rest.trailing_zeros() as Loc)
    }
}

/// Locations an allocation may return: the lowest free one, or every free one
/// when branching over allocation choices.
pub fn alloc_choices(free: u32, branch: bool) -> Vec<Loc> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(x) = next_loc(free, from) {
        out.push(x);
        if !branch {
            break;
        }
        from = x + 1;
    }
    out
}

/// `PAlloc` as one atomic step: take `x` from the free list and record it in
/// `tRedo.allocs`.
pub fn palloc(cx: &mut Cx, ptx: &mut PTx, x: Loc) -> Result<Loc, Blocked> {
    if *cx.free & (1 << x) == 0 {
        return Err(Blocked);
    }
    *cx.free &= !(1 << x);
    ptx.tredo.allocs |= 1 << x;
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WritePc {
    Check,
    StoreUndo(Word),
    FlushUndo,
    StoreVal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ApplyPc {
    Scan(Loc),
    FlushMeta(Loc),
    CheckUndoValid,
    FlushUndoValid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RollBackPc {
    Restore(Loc),
    Persist(Loc),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CommitPc {
    Persist(Loc),
    StoreRedo(u8),
    FlushRedo,
    Apply(ApplyPc),
    PersistLate(Loc),
    Invalidate,
    FlushChecksum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AbortPc {
    RollBack(RollBackPc),
    StoreUndoValid,
    FlushUndoValid,
}

/// An in-progress persistent-transaction operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum POp {
    Begin(u8),
    Read(Loc),
    Write { x: Loc, v: Word, pc: WritePc },
    Commit(CommitPc),
    Abort(AbortPc),
}

/// Value returned by a finished operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ret {
    Unit,
    Val(Word),
}

impl POp {
    pub fn begin() -> Self {
        POp::Begin(0)
    }

    pub fn read(x: Loc) -> Self {
        POp::Read(x)
    }

    pub fn write(x: Loc, v: Word) -> Self {
        POp::Write { x, v, pc: WritePc::Check }
    }

    pub fn commit() -> Self {
        POp::Commit(CommitPc::Persist(0))
    }

    pub fn abort() -> Self {
        POp::Abort(AbortPc::RollBack(RollBackPc::Restore(0)))
    }

    /// Run up to one memory action.
    pub fn step(&mut self, cx: &mut Cx, ptx: &mut PTx) -> StepResult<Ret> {
        let mut acted = false;
        self.step_with(cx, ptx, &mut acted)
    }

    /// Like [`POp::step`] but sharing the caller's action budget, so that an
    /// enclosing algorithm can fold its own local work into the same step.
    pub fn step_with(&mut self, cx: &mut Cx, ptx: &mut PTx, acted: &mut bool) -> StepResult<Ret> {
        let t = ptx.txid;
        let l = *cx.layout;
        let tid = cx.tid;
        match self {
            POp::Begin(i) => loop {
                match *i {
                    0 => {
                        ptx.tredo = Redo::FRESH;
                        act!(acted, cx.mem.store(tid, l.redo_allocs(t), 0));
                        *i = 1;
                    }
                    1 => {
                        act!(acted, cx.mem.store(tid, l.redo_undo_valid(t), 1));
                        *i = 2;
                    }
                    2 => {
                        act!(acted, cx.mem.store(tid, l.redo_checksum(t), -1));
                        *i = 3;
                    }
                    _ => {
                        // undo := {} is already true of a fresh identifier
                        debug_assert!((0..l.locs as Loc).all(|x| cx.load(l.undo(t, x)) == 0));
                        act!(acted, cx.mem.store(tid, l.undo_valid(t), 1));
                        return Ok(Flow::Done(Ret::Unit));
                    }
                }
            },
            POp::Read(x) => {
                let v = act!(acted, loaded(cx.load(l.val(*x))));
                Ok(Flow::Done(Ret::Val(v)))
            }
            POp::Write { x, v, pc } => loop {
                let (x, v) = (*x, *v);
                match *pc {
                    WritePc::Check => {
                        if cx.load(l.undo(t, x)) == 0 {
                            let w = act!(acted, loaded(cx.load(l.val(x))));
                            *pc = WritePc::StoreUndo(w);
                        } else {
                            *pc = WritePc::StoreVal;
                        }
                    }
                    WritePc::StoreUndo(w) => {
                        act!(acted, cx.mem.store(tid, l.undo(t, x), w + 1));
                        *pc = if cx.has(Mutation::SkipUndoFlush) { WritePc::StoreVal } else { WritePc::FlushUndo };
                    }
                    WritePc::FlushUndo => {
                        act!(acted, cx.mem.flush(tid, l.undo(t, x)));
                        *pc = WritePc::StoreVal;
                    }
                    WritePc::StoreVal => {
                        act!(acted, cx.mem.store(tid, l.val(x), v));
                        return Ok(Flow::Done(Ret::Unit));
                    }
                }
            },
            POp::Commit(pc) => loop {
                match pc {
                    CommitPc::Persist(cur) => {
                        if cx.has(Mutation::ReorderCommit) {
                            *pc = CommitPc::StoreRedo(0);
                            continue;
                        }
                        if let Flow::Yield = persist_writes(cur, cx, t, acted)? {
                            return Ok(Flow::Yield);
                        }
                        *pc = CommitPc::StoreRedo(0);
                    }
                    CommitPc::StoreRedo(0) => {
                        if !*acted {
                            ptx.tredo.undo_valid = false;
                            ptx.tredo.checksum = calc_checksum(false, ptx.tredo.allocs);
                        }
                        act!(acted, cx.mem.store(tid, l.redo_allocs(t), ptx.tredo.allocs as Word));
                        *pc = CommitPc::StoreRedo(1);
                    }
                    CommitPc::StoreRedo(1) => {
                        act!(acted, cx.mem.store(tid, l.redo_undo_valid(t), ptx.tredo.undo_valid as Word));
                        *pc = CommitPc::StoreRedo(2);
                    }
                    CommitPc::StoreRedo(_) => {
                        act!(acted, cx.mem.store(tid, l.redo_checksum(t), ptx.tredo.checksum));
                        *pc = if cx.has(Mutation::SkipFlushCommit5) {
                            CommitPc::Apply(ApplyPc::Scan(0))
                        } else {
                            CommitPc::FlushRedo
                        };
                    }
                    CommitPc::FlushRedo => {
                        let cells = [l.redo_allocs(t), l.redo_undo_valid(t), l.redo_checksum(t)];
                        act!(acted, flush_all(cx, &cells));
                        *pc = CommitPc::Apply(ApplyPc::Scan(0));
                    }
                    CommitPc::Apply(apc) => {
                        if let Flow::Yield = apply_redo(apc, cx, t, acted)? {
                            return Ok(Flow::Yield);
                        }
                        *pc = if cx.has(Mutation::ReorderCommit) {
                            CommitPc::PersistLate(0)
                        } else {
                            CommitPc::Invalidate
                        };
                    }
                    CommitPc::PersistLate(cur) => {
                        if let Flow::Yield = persist_writes(cur, cx, t, acted)? {
                            return Ok(Flow::Yield);
                        }
                        *pc = CommitPc::Invalidate;
                    }
                    CommitPc::Invalidate => {
                        act!(acted, cx.mem.store(tid, l.redo_checksum(t), -1));
                        *pc = CommitPc::FlushChecksum;
                    }
                    CommitPc::FlushChecksum => {
                        act!(acted, cx.mem.flush(tid, l.redo_checksum(t)));
                        return Ok(Flow::Done(Ret::Unit));
                    }
                }
            },
            POp::Abort(pc) => loop {
                match pc {
                    AbortPc::RollBack(rpc) => {
                        if let Flow::Yield = roll_back(rpc, cx, t, acted)? {
                            return Ok(Flow::Yield);
                        }
                        *pc = AbortPc::StoreUndoValid;
                    }
                    AbortPc::StoreUndoValid => {
                        act!(acted, cx.mem.store(tid, l.undo_valid(t), 0));
                        *pc = AbortPc::FlushUndoValid;
                    }
                    AbortPc::FlushUndoValid => {
                        act!(acted, cx.mem.flush(tid, l.undo_valid(t)));
                        *cx.free |= ptx.tredo.allocs;
                        return Ok(Flow::Done(Ret::Unit));
                    }
                }
            },
        }
    }
}

fn flush_all(cx: &mut Cx, cells: &[Cell]) -> Result<(), Blocked> {
    if !cells.iter().all(|&c| cx.mem.can_flush(cx.tid, c)) {
        return Err(Blocked);
    }
    for &c in cells {
        cx.mem.flush(cx.tid, c)?;
    }
    Ok(())
}

/// Locations with an undo entry for `t`, as a bitmask.
pub fn undo_domain(mem: &PMem, tid: ThreadId, layout: &Layout, t: TxId) -> u32 {
    (0..layout.locs as Loc)
        .filter(|&x| mem.load(tid, layout.undo(t, x)) != 0)
        .fold(0, |m, x| m | 1 << x)
}

/// `persist_writes`: flush every location in the undo log, lowest first.
pub(crate) fn persist_writes(cur: &mut Loc, cx: &mut Cx, t: TxId, acted: &mut bool) -> StepResult<()> {
    let l = *cx.layout;
    loop {
        let dom = undo_domain(cx.mem, cx.tid, &l, t);
        match next_loc(dom, *cur) {
            Some(x) => {
                act!(acted, cx.mem.flush(cx.tid, l.val(x)));
                *cur = x + 1;
            }
            None => return Ok(Flow::Done(())),
        }
    }
}

/// `apply_pRedo`: persist the allocation flags recorded in `pRedo`, then
/// clear `undoValid` if the record says so.
pub(crate) fn apply_redo(pc: &mut ApplyPc, cx: &mut Cx, t: TxId, acted: &mut bool) -> StepResult<()> {
    let l = *cx.layout;
    let tid = cx.tid;
    loop {
        match *pc {
            ApplyPc::Scan(from) => {
                let allocs = cx.load(l.redo_allocs(t)) as u32;
                match next_loc(allocs & l.all_locs(), from) {
                    Some(x) => {
                        act!(acted, cx.mem.store(tid, l.meta(x), 1));
                        *pc = ApplyPc::FlushMeta(x);
                    }
                    None => *pc = ApplyPc::CheckUndoValid,
                }
            }
            ApplyPc::FlushMeta(x) => {
                act!(acted, cx.mem.flush(tid, l.meta(x)));
                *pc = ApplyPc::Scan(x + 1);
            }
            ApplyPc::CheckUndoValid => {
                if cx.load(l.redo_undo_valid(t)) == 0 {
                    act!(acted, cx.mem.store(tid, l.undo_valid(t), 0));
                    *pc = ApplyPc::FlushUndoValid;
                } else {
                    return Ok(Flow::Done(()));
                }
            }
            ApplyPc::FlushUndoValid => {
                act!(acted, cx.mem.flush(tid, l.undo_valid(t)));
                return Ok(Flow::Done(()));
            }
        }
    }
}

/// `roll_back`: restore every undo entry, then `persist_writes`.
pub(crate) fn roll_back(pc: &mut RollBackPc, cx: &mut Cx, t: TxId, acted: &mut bool) -> StepResult<()> {
    let l = *cx.layout;
    loop {
        match pc {
            RollBackPc::Restore(cur) => {
                let dom = undo_domain(cx.mem, cx.tid, &l, t);
                match next_loc(dom, *cur) {
                    Some(x) => {
                        let w = cx.load(l.undo(t, x)) - 1;
                        act!(acted, cx.mem.store(cx.tid, l.val(x), w));
                        *cur = x + 1;
                    }
                    None => *pc = RollBackPc::Persist(0),
                }
            }
            RollBackPc::Persist(cur) => return persist_writes(cur, cx, t, acted),
        }
    }
}

/// Drive `op` to completion, running system steps (lowest first) whenever it
/// is blocked. Meant for tests and scripted scenarios.
pub fn run_to_end(op: &mut POp, cx: &mut Cx, ptx: &mut PTx) -> Ret {
    loop {
        let before = (*op, cx.mem.clone(), *cx.free, *ptx);
        match op.step(cx, ptx) {
            Ok(Flow::Done(r)) => return r,
            Ok(Flow::Yield) => {}
            Err(Blocked) => {
                *op = before.0;
                *cx.mem = before.1;
                *cx.free = before.2;
                *ptx = before.3;
                let s = *cx.mem.sys_steps().first().expect("blocked with nothing buffered");
                cx.mem.sys_step(s).unwrap();
            }
        }
    }
}
