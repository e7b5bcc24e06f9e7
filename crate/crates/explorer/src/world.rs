//! The explored system: shared memory, client threads and their transactions.

use std::fmt;

use opacity::{Action, Inv, Res, TxId, Val};
use pmdk_core::{alloc_choices, Layout, Loc};
use pmem_sim::{PMem, SysStep};
use stm_concurrent::{faults, recovery_all, step, Algo, Pc, Resp, Step, Sys, Tx};

use crate::Config;

/// A client operation with its arguments fixed at invocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Begin,
    Read(Loc),
    Write(Loc, Val),
    /// Allocation returning the given free location.
    Alloc(Loc),
    Commit,
}

impl Op {
    fn inv(self) -> Inv {
        match self {
            Op::Begin => Inv::Begin,
            Op::Read(x) => Inv::Read(x),
            Op::Write(x, v) => Inv::Write(x, v),
            Op::Alloc(_) => Inv::Alloc,
            Op::Commit => Inv::Commit,
        }
    }

    fn pc(self) -> Pc {
        match self {
            Op::Begin => Pc::begin(),
            Op::Read(x) => Pc::read(x),
            Op::Write(x, v) => Pc::write(x, v as i32),
            Op::Alloc(x) => Pc::alloc(x),
            Op::Commit => Pc::commit(),
        }
    }

    fn res(self, r: Resp) -> Res {
        match (self, r) {
            (_, Resp::Abort) => Res::Abort,
            (Op::Begin, _) => Res::Begin,
            (Op::Read(x), Resp::Val(v)) => Res::Read(x, v as Val),
            (Op::Write(x, v), _) => Res::Write(x, v),
            (Op::Alloc(_), Resp::Loc(l)) => Res::Alloc(l),
            (Op::Commit, _) => Res::Commit,
            (op, r) => unreachable!("{op:?} answered {r:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TState {
    /// This era's transaction has not begun.
    Idle,
    /// Between operations.
    Ready,
    Running(Op, Pc),
    /// Committed, aborted or faulted.
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Thread {
    pub state: TState,
    pub tx: Tx,
    /// Operations invoked since begin, commit excluded.
    pub ops: u8,
}

impl Thread {
    fn idle() -> Self {
        Thread { state: TState::Idle, tx: Tx::new(0), ops: 0 }
    }
}

/// One explorer step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Sys(SysStep),
    /// Invoke an operation and run its first step.
    Invoke(u8, Op),
    Step(u8),
    /// Crash into the given post-crash image, then recover.
    Crash(u16),
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Sys(SysStep::Propagate(t)) => write!(f, "propagate {t}"),
            Move::Sys(SysStep::Persist(x)) => write!(f, "persist {x}"),
            Move::Invoke(t, op) => write!(f, "thread {t} invokes {op:?}"),
            Move::Step(t) => write!(f, "thread {t} steps"),
            Move::Crash(i) => write!(f, "crash (image {i}) and recover"),
        }
    }
}

/// Outcome of a move.
#[derive(Clone, Debug)]
pub struct Succ {
    pub mv: Move,
    /// External actions, in order (at most an invocation and a response).
    pub acts: Vec<Action>,
    /// The invoked read or write touches unallocated memory; the run ends.
    pub fault: bool,
    pub world: World,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct World {
    pub sys: Sys,
    pub threads: Vec<Thread>,
    pub era: u8,
}

impl World {
    pub fn initial(cfg: &Config) -> Self {
        let layout = cfg.layout();
        let mem = PMem::with_nvm(cfg.model, layout.initial_nvm(), cfg.txns, cfg.buf).lazy();
        World { sys: Sys::new(mem, &layout), threads: vec![Thread::idle(); cfg.txns], era: 0 }
    }

    pub fn txid(&self, cfg: &Config, slot: usize) -> TxId {
        (self.era as usize * cfg.txns + slot) as TxId
    }

    /// Canonical form: forget what no future step can observe.
    fn normalize(&mut self, cfg: &Config) {
        self.sys.mem.drop_redundant_heads();
        if self.era as usize == cfg.crashes {
            // no crash is left to observe persistence or old logs
            self.sys.mem.persist_all();
            let layout = cfg.layout();
            let init = layout.initial_nvm();
            for t in 0..self.era as usize * cfg.txns {
                for c in layout.log_cells(t) {
                    self.sys.mem.set_nvm(c, init[c]);
                }
            }
        }
        for t in &mut self.threads {
            if matches!(t.state, TState::Idle | TState::Done) {
                t.tx = Tx::new(0);
                t.ops = 0;
            }
        }
    }

    /// Run one step of `slot`'s current operation.
    fn run(&self, cfg: &Config, slot: usize, op: Op, mut pc: Pc, mv: Move, mut acts: Vec<Action>) -> Option<Succ> {
        let mut w = self.clone();
        let txid = w.txid(cfg, slot);
        let th = &mut w.threads[slot];
        match step(&cfg.stm(), &mut w.sys, slot, &mut th.tx, &mut pc) {
            Step::Blocked | Step::Cut => return None,
            Step::Ran => th.state = TState::Running(op, pc),
            Step::Done(r) => {
                th.state = match r {
                    Resp::Commit | Resp::Abort => TState::Done,
                    _ => TState::Ready,
                };
                acts.push(Action::Res(txid, op.res(r)));
            }
        }
        w.normalize(cfg);
        Some(Succ { mv, acts, fault: false, world: w })
    }

    /// Would stepping `slot` be cut by the retry bound?
    pub fn is_cut(&self, cfg: &Config, slot: usize) -> bool {
        let TState::Running(_, mut pc) = self.threads[slot].state.clone() else { return false };
        let mut w = self.clone();
        step(&cfg.stm(), &mut w.sys, slot, &mut w.threads[slot].tx, &mut pc) == Step::Cut
    }

    /// Every move enabled here, in a fixed order.
    pub fn successors(&self, cfg: &Config) -> Vec<Succ> {
        self.successors_with(cfg, &|w: &World, slot| w.client_ops(cfg, slot))
    }

    /// As [`World::successors`], with `client` choosing the operations a
    /// ready thread may invoke.
    pub fn successors_with(&self, cfg: &Config, client: &dyn Fn(&World, usize) -> Vec<Op>) -> Vec<Succ> {
        let mut out = vec![];
        for s in self.sys.mem.sys_steps() {
            let mut w = self.clone();
            w.sys.mem.sys_step(s).expect("offered step");
            w.normalize(cfg);
            out.push(Succ { mv: Move::Sys(s), acts: vec![], fault: false, world: w });
        }
        let busy = self.threads.iter().any(|t| matches!(t.state, TState::Ready | TState::Running(..)));
        for slot in 0..self.threads.len() {
            let th = &self.threads[slot];
            let txid = self.txid(cfg, slot);
            match &th.state {
                TState::Done => {}
                TState::Running(op, pc) => out.extend(self.run(cfg, slot, *op, *pc, Move::Step(slot as u8), vec![])),
                TState::Idle => {
                    if cfg.algo == Algo::Seq && busy {
                        continue;
                    }
                    let mut w = self.clone();
                    w.threads[slot].tx = Tx::new(txid as usize);
                    let mv = Move::Invoke(slot as u8, Op::Begin);
                    out.extend(w.run(cfg, slot, Op::Begin, Op::Begin.pc(), mv, vec![Action::Inv(txid, Inv::Begin)]));
                }
                TState::Ready => {
                    for op in client(self, slot) {
                        let inv = Action::Inv(txid, op.inv());
                        let mv = Move::Invoke(slot as u8, op);
                        let x = match op {
                            Op::Read(x) | Op::Write(x, _) => Some(x),
                            _ => None,
                        };
                        if x.is_some_and(|x| faults(&cfg.stm(), &self.sys, slot, &th.tx, x)) {
                            let mut w = self.clone();
                            w.threads[slot].state = TState::Done;
                            w.normalize(cfg);
                            out.push(Succ { mv, acts: vec![inv], fault: true, world: w });
                            continue;
                        }
                        let mut w = self.clone();
                        if op != Op::Commit {
                            w.threads[slot].ops += 1;
                        }
                        out.extend(w.run(cfg, slot, op, op.pc(), mv, vec![inv]));
                    }
                }
            }
        }
        if (self.era as usize) < cfg.crashes {
            for (i, mem) in self.sys.mem.crash_states().into_iter().enumerate() {
                out.push(Succ { mv: Move::Crash(i as u16), acts: vec![Action::Crash], fault: false, world: self.crashed(cfg, mem) });
            }
        }
        out
    }

    fn crashed(&self, cfg: &Config, mem: PMem) -> World {
        let mut sys = Sys { mem, free: 0, glb: self.sys.glb };
        recovery_all(&cfg.stm(), &mut sys, (self.era as usize + 1) * cfg.txns);
        let threads = self
            .threads
            .iter()
            .map(|t| match t.state {
                TState::Idle => Thread::idle(),
                _ if cfg.per_era => Thread::idle(),
                _ => Thread { state: TState::Done, tx: Tx::new(0), ops: 0 },
            })
            .collect();
        let mut w = World { sys, threads, era: self.era + 1 };
        w.normalize(cfg);
        w
    }

    /// The most general client: any read, write or allocation while under the
    /// operation bound, and commit.
    pub fn client_ops(&self, cfg: &Config, slot: usize) -> Vec<Op> {
        let mut ops = vec![];
        if (self.threads[slot].ops as usize) < cfg.ops {
            for x in 0..cfg.locs as Loc {
                ops.push(Op::Read(x));
                for v in 0..cfg.vals as Val {
                    ops.push(Op::Write(x, v));
                }
            }
            for x in alloc_choices(self.sys.free, cfg.branch_alloc) {
                ops.push(Op::Alloc(x));
            }
        }
        ops.push(Op::Commit);
        ops
    }

    /// No move is possible and nothing is running.
    pub fn is_final(&self) -> bool {
        self.threads.iter().all(|t| matches!(t.state, TState::Done | TState::Idle))
    }
}

pub(crate) fn layout(cfg: &Config) -> Layout {
    Layout::new(cfg.locs, (cfg.crashes + 1) * cfg.txns)
}
